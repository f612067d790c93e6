"""Contrastive structural encoders.

Both encoders maximize agreement between a node representation and the
average-pooled summary of its k-hop subgraph.  The self-supervised variant
pairs every node with its own subgraph and uses a random other node as the
negative; the supervised variant takes labeled BMAs as positives and labeled
non-BMAs as negatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import (
    ConfigError,
    EncoderConfig,
    _dense,
    check_both_classes,
    encoder_backward,
    encoder_forward,
    graph_plan,
    init_encoder,
    scatter_add,
    scatter_matrix,
)
from .graph import Graph, SubgraphIndex
from .numeric import PROB_CLAMP, Adam, DimensionError, sigmoid
from .rng import stream
from .training import fit_with_probe

SSS, SS = "SSS", "SS"
DISC_KEYS = ("d1.W", "d1.b", "d2.w", "d2.b")


@dataclass(frozen=True, eq=False)
class PairBatch:
    """Positive nodes, their negatives, and the subgraph index used for readout."""

    pos: np.ndarray
    neg: np.ndarray
    index: SubgraphIndex
    epoch: int = 0

    def __len__(self):
        return len(self.pos)


def init_discriminator(f1, rng, dtype=np.float32) -> dict:
    return {
        "d1.W": _dense(rng, f1, 2 * f1, dtype),
        "d1.b": np.zeros(f1, dtype),
        "d2.w": _dense(rng, 1, f1, dtype).reshape(f1),
        "d2.b": np.zeros(1, dtype),
    }


def discriminator_params(params: dict) -> dict:
    return {k: params[k] for k in DISC_KEYS}


def readout(H: np.ndarray, members) -> np.ndarray:
    members = np.asarray(members)
    if members.size == 0:
        raise ValueError("readout over an empty subgraph")
    return H[members].mean(axis=0)


def readout_all(H: np.ndarray, index: SubgraphIndex) -> np.ndarray:
    """Mean-pooled summary of every node's subgraph."""
    return np.asarray(index.mean_matrix @ H).astype(H.dtype, copy=False)


def _disc_hidden(dparams, h, s):
    c = np.concatenate([h, s], axis=-1)
    u = c @ dparams["d1.W"].T + dparams["d1.b"]
    return c, u, np.maximum(u, 0)


def discriminate(dparams: dict, h, s):
    """Probability that ``h`` belongs to the subgraph summarized by ``s``.

    ``sigmoid(w2 . relu(W1 (h ⊕ s) + b1) + b2)``; accepts single vectors or
    row batches.
    """
    h, s = np.asarray(h), np.asarray(s)
    f1 = dparams["d2.w"].shape[0]
    if h.shape[-1] != f1 or s.shape[-1] != f1:
        raise DimensionError(f"discriminator expects width {f1}, got {h.shape} and {s.shape}")
    _, _, a = _disc_hidden(dparams, h, s)
    return sigmoid(a @ dparams["d2.w"] + dparams["d2.b"][0])


def sample_pairs_sss(graph: Graph, index: SubgraphIndex, rng, nodes=None, epoch=0) -> PairBatch:
    """Every node is a positive; its negative is drawn uniformly from all
    other nodes.  ``nodes`` restricts both roles to a subset."""
    pos = np.arange(graph.n) if nodes is None else np.sort(np.asarray(nodes, dtype=np.int64))
    m = len(pos)
    if m < 2:
        raise ConfigError("self-supervised pairs need at least 2 nodes")
    # draw a position other than the node's own slot in the pool
    r = rng.integers(0, m - 1, size=m)
    neg = pos[r + (r >= np.arange(m))]
    return PairBatch(pos, neg, index, epoch)


def sample_pairs_ss(graph: Graph, index: SubgraphIndex, labels, rng, epoch=0) -> PairBatch:
    """Labeled BMAs are positives; negatives come uniformly from labeled non-BMAs.
    ``labels`` is a per-node vector with -1 for unlabeled nodes."""
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    pool = np.flatnonzero(labels == 0)
    if len(pos) == 0 or len(pool) == 0:
        raise ConfigError("supervised pairs need at least one labeled node of each class")
    neg = pool[rng.integers(0, len(pool), size=len(pos))]
    return PairBatch(pos, neg, index, epoch)


def _bce_terms(d_pos, d_neg):
    dp = np.clip(d_pos, PROB_CLAMP, 1 - PROB_CLAMP)
    dn = np.clip(d_neg, PROB_CLAMP, 1 - PROB_CLAMP)
    return -(np.log(dp) + np.log1p(-dn))


def mi_loss(dparams: dict, H: np.ndarray, batch: PairBatch) -> float:
    """``-(1/N_pos) * sum[log D(h_i, s_i) + log(1 - D(h_i', s_i))]``."""
    if len(batch) == 0:
        raise ValueError("empty pair batch")
    S = np.stack([readout(H, batch.index[i]) for i in batch.pos])
    d_pos = discriminate(dparams, H[batch.pos], S)
    d_neg = discriminate(dparams, H[batch.neg], S)
    return float(np.mean(_bce_terms(d_pos, d_neg)))


def mi_loss_and_grad(params: dict, plan, batch: PairBatch):
    H, cache = encoder_forward(params, plan)
    n, f1 = H.shape
    S = readout_all(H, batch.index)[batch.pos]
    w2, b2 = params["d2.w"], params["d2.b"]
    c_pos, u_pos, a_pos = _disc_hidden(params, H[batch.pos], S)
    c_neg, u_neg, a_neg = _disc_hidden(params, H[batch.neg], S)
    d_pos = sigmoid(a_pos @ w2 + b2[0])
    d_neg = sigmoid(a_neg @ w2 + b2[0])
    n_pos = len(batch.pos)
    loss = float(np.mean(_bce_terms(d_pos, d_neg)))

    g_pos = (d_pos - 1) / n_pos
    g_neg = d_neg / n_pos
    grads = {
        "d2.w": a_pos.T @ g_pos + a_neg.T @ g_neg,
        "d2.b": np.array([g_pos.sum() + g_neg.sum()], dtype=H.dtype),
    }
    du_pos = np.outer(g_pos, w2) * (u_pos > 0)
    du_neg = np.outer(g_neg, w2) * (u_neg > 0)
    grads["d1.W"] = du_pos.T @ c_pos + du_neg.T @ c_neg
    grads["d1.b"] = du_pos.sum(axis=0) + du_neg.sum(axis=0)
    dc_pos = du_pos @ params["d1.W"]
    dc_neg = du_neg @ params["d1.W"]

    to_pos = scatter_matrix(batch.pos, n, n_pos)
    dH = scatter_add(to_pos, dc_pos[:, :f1], n)
    dH += scatter_add(scatter_matrix(batch.neg, n, n_pos), dc_neg[:, :f1], n)
    dS_all = scatter_add(to_pos, dc_pos[:, f1:] + dc_neg[:, f1:], n)
    dH += np.asarray(batch.index.mean_matrix.T @ dS_all).astype(H.dtype, copy=False)
    grads.update(encoder_backward(params, plan, cache, dH))
    return loss, grads


def init_contrastive(cfg: EncoderConfig, rng, dtype=np.float32) -> dict:
    params = init_encoder(cfg, rng, head=None, dtype=dtype)
    params.update(init_discriminator(cfg.f1, rng, dtype))
    return params


def train_contrastive(
    mode: str,
    graph: Graph,
    index: SubgraphIndex,
    cfg: EncoderConfig,
    seed: int,
    labels=None,
    epochs: int = 100,
    lr: float = 1e-3,
    probe=None,
    probe_every: int = 1,
    min_epochs: int = 0,
    nodes=None,
):
    """Jointly train an encoder and its discriminator with Adam.

    ``labels`` (per-node, -1 = unlabeled) is required for ``mode="SS"``.
    ``nodes`` restricts the self-supervised positives, which lets callers hold
    nodes out for evaluation.  Negatives are redrawn every epoch from a stream
    keyed by (seed, epoch).  Returns ``(params, history)``; the discriminator
    lives under the ``d1.*`` / ``d2.*`` keys.
    """
    if mode not in (SSS, SS):
        raise ValueError(f"mode must be 'SSS' or 'SS', got {mode!r}")
    if mode == SS:
        if labels is None:
            raise ConfigError("the supervised structural encoder needs labels")
        labels = np.asarray(labels)
        check_both_classes(labels[labels >= 0], "labels for the supervised structural encoder")
    params = init_contrastive(cfg, stream(seed, mode, "init"))
    plan = graph_plan(graph)

    def step(params, epoch):
        rng = stream(seed, mode, "pairs", epoch)
        if mode == SSS:
            batch = sample_pairs_sss(graph, index, rng, nodes, epoch)
        else:
            batch = sample_pairs_ss(graph, index, labels, rng, epoch)
        return mi_loss_and_grad(params, plan, batch)

    return fit_with_probe(params, step, Adam(lr=lr), epochs, probe, probe_every, min_epochs)


def representations(params: dict, graph: Graph) -> np.ndarray:
    H, _ = encoder_forward(params, graph_plan(graph))
    return H


def discriminator_accuracy(params: dict, graph: Graph, index: SubgraphIndex, nodes, rng) -> float:
    """Share of correct decisions at 0.5 on fresh pairs with ``nodes`` as positives."""
    H = representations(params, graph)
    batch = sample_pairs_sss(graph, index, rng, nodes)
    S = readout_all(H, index)[batch.pos]
    dp = discriminate(params, H[batch.pos], S)
    dn = discriminate(params, H[batch.neg], S)
    return float((np.sum(dp > 0.5) + np.sum(dn < 0.5)) / (2 * len(batch)))
