"""Inductive GNN encoder: attribute encoding, two aggregation layers and the
suspicious-score head, with hand-derived reverse-mode gradients.

All forward passes run over a :class:`Plan`, a two-level description of
which input rows feed which outputs.  The ordinary full-graph pass and the
per-target masked views used by the attribute encoder are both plans, so one
forward/backward implementation serves every encoder.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .graph import N_ATTRS, Graph
from .numeric import (
    NORM_EPS,
    PROB_CLAMP,
    Adam,
    DimensionError,
    l2_normalize,
    l2_normalize_backward,
    sigmoid,
)

PRESENT, ABSENT, MASKED = 0, 1, 2
N_LAYERS = 2


class ConfigError(ValueError):
    """Invalid training configuration (e.g. a missing label class)."""


@dataclass(frozen=True)
class EncoderConfig:
    """Widths of one encoder.

    ``f2`` is the width of the initial representation.  For encoders fed only
    by attribute encoding it is ``7 * f``; the detection encoder prepends a
    constant block, so ``f2 - 7 * f`` columns come from upstream encoders.
    """

    f: int = 8
    f1: int = 32
    f2: int | None = None
    rho: float = 0.5
    layers: int = N_LAYERS

    def __post_init__(self):
        if self.f2 is None:
            object.__setattr__(self, "f2", N_ATTRS * self.f)
        if self.layers != N_LAYERS:
            raise ConfigError(f"the encoder stacks exactly {N_LAYERS} layers")
        if self.f2 < N_ATTRS * self.f:
            raise ConfigError(f"f2={self.f2} is narrower than the attribute encoding 7*f")
        if not 0 < self.rho < 1:
            raise ConfigError(f"rho must lie in (0, 1), got {self.rho}")

    @property
    def prefix_width(self) -> int:
        return self.f2 - N_ATTRS * self.f


# ------------------------------------------------------------ attribute coding


def attribute_states(attrs: np.ndarray, masked=None) -> np.ndarray:
    """Map binary attributes to table states; ``masked`` columns use MASKED."""
    states = np.where(np.asarray(attrs) == 1, PRESENT, ABSENT).astype(np.int8)
    if masked is not None:
        masked = sorted(masked)
        states[..., masked] = MASKED
    return states


def encode_attributes(table: np.ndarray, a, masked_idx=()) -> np.ndarray:
    """Concatenate the per-attribute state vectors of one node (width 7f)."""
    states = attribute_states(np.asarray(a), masked_idx or None)
    return table[np.arange(N_ATTRS), states].reshape(-1)


def encode_rows(table: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Batch version of :func:`encode_attributes` over a state matrix."""
    return table[np.arange(N_ATTRS), states].reshape(len(states), -1)


# ------------------------------------------------------------ parameters


def _dense(rng, out_dim, in_dim, dtype):
    return (rng.standard_normal((out_dim, in_dim)) / np.sqrt(in_dim)).astype(dtype)


def init_encoder(cfg: EncoderConfig, rng, head: str | None = "score", dtype=np.float32) -> dict:
    """Fresh parameters: weights ~ N(0, 1/fan_in), biases 0, table ~ N(0, 1).

    ``head`` is ``"score"`` for the suspicious-score head, ``"ssa"`` for the
    two pseudo-label head, or ``None``.
    """
    f1, f2 = cfg.f1, cfg.f2
    p = {"table": rng.standard_normal((N_ATTRS, 3, cfg.f)).astype(dtype)}
    width = f2
    for t in (1, 2):
        p[f"l{t}.Wg"] = _dense(rng, f1, 3 * width, dtype)
        p[f"l{t}.bg"] = np.zeros(f1, dtype)
        p[f"l{t}.Ws"] = _dense(rng, f1, f2, dtype)
        p[f"l{t}.bs"] = np.zeros(f1, dtype)
        p[f"l{t}.Wq"] = _dense(rng, f1, 2 * f1, dtype)
        p[f"l{t}.bq"] = np.zeros(f1, dtype)
        width = f1
    if head == "score":
        p.update(init_score_head(f1, rng, dtype))
    elif head == "ssa":
        p.update(init_ssa_head(f1, rng, dtype))
    elif head is not None:
        raise ValueError(f"unknown head {head!r}")
    return p


def init_score_head(f1, rng, dtype=np.float32) -> dict:
    return {
        "p1.W": _dense(rng, 2 * f1, f1, dtype),
        "p1.b": np.zeros(2 * f1, dtype),
        "p2.W": _dense(rng, f1, 2 * f1, dtype),
        "p2.b": np.zeros(f1, dtype),
        "p3.w": _dense(rng, 1, f1, dtype).reshape(f1),
        "p3.b": np.zeros(1, dtype),
    }


def init_ssa_head(f1, rng, dtype=np.float32) -> dict:
    if f1 % 2:
        raise ConfigError(f"the pseudo-label head needs an even f1, got {f1}")
    h = f1 // 2
    return {
        "r1.W": _dense(rng, h, f1, dtype),
        "r1.b": np.zeros(h, dtype),
        "r2.W": _dense(rng, 2, h, dtype),
        "r2.b": np.zeros(2, dtype),
    }


def expected_shapes(cfg: EncoderConfig, head: str | None) -> dict:
    rng = np.random.default_rng(0)
    small = init_encoder(cfg, rng, head)
    return {k: v.shape for k, v in small.items()}


def param_count(l: int, f1: int, f2: int) -> int:
    """Closed-form model size of an l-layer encoder with its score head:
    ``l * (3 f1 + 2 f2 + 4) f1`` for the layers plus ``(4 f1 + 4) f1 + 1``."""
    if l < 2 or f1 < 1 or f2 < 1:
        raise ValueError("param_count needs l >= 2 and positive widths")
    return (3 * l * f1 + 2 * l * f2 + 4 * f1 + 4 * l + 4) * f1 + 1


def count_parameters(params: dict) -> int:
    """Trainable scalars excluding the attribute table."""
    return int(sum(v.size for k, v in params.items() if k != "table"))


# ------------------------------------------------------------ plans


@dataclass(frozen=True, eq=False)
class Hop:
    """One aggregation layer: output ``r`` takes its self-connection from
    input row ``self_rows[r]`` and aggregates previous-level rows
    ``indices[indptr[r]:indptr[r+1]]``."""

    self_rows: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def size(self) -> int:
        return len(self.self_rows)

    @cached_property
    def counts(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def segment(self) -> np.ndarray:
        return np.repeat(np.arange(self.size), self.counts)

    @cached_property
    def n_prev(self) -> int:
        return int(self.indices.max()) + 1 if len(self.indices) else 0

    @cached_property
    def segment_sum(self):
        """(size x nnz) 0/1 matrix summing edge rows into their outputs."""
        nnz = len(self.indices)
        data = np.ones(nnz, dtype=np.float32)
        return sparse.csr_matrix((data, np.arange(nnz), self.indptr), shape=(self.size, nnz))

    @cached_property
    def adjacency(self):
        """(size x n_prev) 0/1 matrix; ``adjacency @ X`` is the neighbor sum."""
        data = np.ones(len(self.indices), dtype=np.float32)
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.size, max(self.n_prev, 1)))

    @cached_property
    def edge_scatter(self):
        """(n_prev x nnz) 0/1 matrix sending edge rows back to their sources."""
        nnz = len(self.indices)
        return scatter_matrix(self.indices, max(self.n_prev, 1), nnz)

    @cached_property
    def self_scatter(self):
        return scatter_matrix(self.self_rows, int(self.self_rows.max()) + 1 if self.size else 1, self.size)


def scatter_matrix(index, n_rows, n_cols):
    index = np.asarray(index, dtype=np.int64)
    data = np.ones(len(index), dtype=np.float32)
    return sparse.csr_matrix((data, (index, np.arange(len(index)))), shape=(n_rows, n_cols))


def scatter_add(M, values, n_rows):
    """``out[index[e]] += values[e]`` through a precomputed scatter matrix,
    padded or trimmed to ``n_rows``."""
    out = np.asarray(M @ values).astype(values.dtype, copy=False)
    if out.shape[0] < n_rows:
        out = np.concatenate([out, np.zeros((n_rows - out.shape[0],) + out.shape[1:], out.dtype)])
    return out[:n_rows]


@dataclass(frozen=True, eq=False)
class Plan:
    """Row states for the initial representation plus two hops."""

    states: np.ndarray
    hops: tuple
    prefix_rows: np.ndarray | None = None  # rows of the constant prefix block

    @property
    def n_out(self) -> int:
        return self.hops[-1].size


def graph_plan(g: Graph, attrs: np.ndarray | None = None) -> Plan:
    """Ordinary forward over every node of ``g``."""
    attrs = g.attributes if attrs is None else attrs
    hop = Hop(np.arange(g.n), g.indptr, g.indices)
    return Plan(attribute_states(attrs), (hop, hop), np.arange(g.n))


def _ranges(starts, counts):
    """Concatenation of ``arange(s, s + c)`` for each pair."""
    counts = np.asarray(counts, dtype=np.int64)
    offsets = np.cumsum(counts) - counts
    shift = np.repeat(np.asarray(starts, dtype=np.int64) - offsets, counts)
    return np.arange(int(counts.sum()), dtype=np.int64) + shift


def masked_plan(g: Graph, masked_attrs, targets=None, attrs=None, hide_in_neighbors: bool = False) -> Plan:
    """Per-target views in which only the target's ``masked_attrs`` are hidden.

    Output row ``t`` is the representation of ``targets[t]`` with that node's
    masked columns unknown in its own self-connections; every other node, and
    the target itself wherever it appears as somebody's neighbor, stays fully
    visible.  With ``hide_in_neighbors`` the target's columns are also hidden
    inside its neighbors' first-layer aggregations, so no two-hop path can
    carry them back (the receptive field is then rebuilt per target).
    """
    attrs = g.attributes if attrs is None else attrs
    n = g.n
    targets = np.arange(n) if targets is None else np.asarray(targets, dtype=np.int64)
    T = len(targets)
    deg = g.degrees
    base = attribute_states(attrs)
    hidden = attribute_states(attrs[targets], masked_attrs)
    states = np.concatenate([base, hidden])
    prefix_rows = np.concatenate([np.arange(n), targets])
    inst_count = deg[targets]
    ptr2 = np.zeros(T + 1, np.int64)
    np.cumsum(inst_count, out=ptr2[1:])
    inst_node = g.indices[_ranges(g.indptr[targets], inst_count)]

    if not hide_in_neighbors:
        hop1 = Hop(np.arange(n), g.indptr, g.indices)
        hop2 = Hop(n + np.arange(T), ptr2, inst_node)
        return Plan(states, (hop1, hop2), prefix_rows)

    # first-layer instances: (target t, neighbor j of the target)
    inst_target = np.repeat(np.arange(T), inst_count)
    sub_count = deg[inst_node]
    sub = g.indices[_ranges(g.indptr[inst_node], sub_count)]
    owner = np.repeat(np.arange(len(inst_node)), sub_count)
    own_target = inst_target[owner]
    hit = sub == targets[own_target]
    sub = np.where(hit, n + own_target, sub)
    ptr1 = np.zeros(len(inst_node) + 1, np.int64)
    np.cumsum(sub_count, out=ptr1[1:])
    hop1 = Hop(inst_node, ptr1, sub)
    hop2 = Hop(n + np.arange(T), ptr2, np.arange(len(inst_node)))
    return Plan(states, (hop1, hop2), prefix_rows)


# ------------------------------------------------------------ aggregation


def aggregate_neighbors(H_prev: np.ndarray, neighbors) -> np.ndarray:
    """mean ⊕ max ⊕ sum over the rows ``H_prev[neighbors]``; zeros if empty."""
    nb = np.sort(np.asarray(neighbors, dtype=np.int64))
    hop = Hop(np.zeros(1, np.int64), np.array([0, len(nb)]), nb)
    out, _ = _pool(H_prev, hop)
    return out[0]


def _pool(X, hop: Hop):
    indptr, indices = hop.indptr, hop.indices
    n, d = hop.size, X.shape[1]
    counts = hop.counts
    out = np.zeros((n, 3 * d), X.dtype)
    cache = None
    if len(indices):
        rows = X[indices]
        nz = counts > 0
        starts = indptr[:-1][nz]
        adj = hop.adjacency  # rows past the largest referenced index are never read
        s = np.asarray(adj @ X[: adj.shape[1]]).astype(X.dtype, copy=False)[nz]
        m = np.maximum.reduceat(rows, starts, axis=0)
        out[nz, :d] = s / counts[nz, None].astype(X.dtype)
        out[nz, d : 2 * d] = m
        out[nz, 2 * d :] = s
        cache = (rows, out[:, d : 2 * d])
    return out, cache


def _pool_backward(dA, hop: Hop, cache, n_rows, dtype):
    d = dA.shape[1] // 3
    if cache is None:
        return np.zeros((n_rows, d), dtype)
    rows, mx = cache
    counts, seg = hop.counts, hop.segment
    nz = counts > 0
    tied = (rows == mx[seg]).astype(dtype)
    # a max shared by several rows splits its gradient evenly among them
    n_tied = np.asarray(hop.segment_sum @ tied).astype(dtype, copy=False)
    n_tied[~nz] = 1
    per_row = dA[:, :d] / np.maximum(counts, 1)[:, None].astype(dtype) + dA[:, 2 * d :]
    d_rows = per_row[seg] + tied * (dA[:, d : 2 * d] / n_tied)[seg]
    return scatter_add(hop.edge_scatter, d_rows, n_rows)


# ------------------------------------------------------------ forward / backward


def _relu_mask(x):
    return x > 0


def gnn_layer(params: dict, t: int, H_prev, H0, hop: Hop):
    """One aggregation layer over ``hop``.  Returns ``(H_next, cache)``."""
    Wg, bg = params[f"l{t}.Wg"], params[f"l{t}.bg"]
    Ws, bs = params[f"l{t}.Ws"], params[f"l{t}.bs"]
    Wq, bq = params[f"l{t}.Wq"], params[f"l{t}.bq"]
    if Wg.shape[1] != 3 * H_prev.shape[1] or Ws.shape[1] != H0.shape[1]:
        raise DimensionError(
            f"layer {t}: Wg{Wg.shape} / Ws{Ws.shape} vs inputs "
            f"{H_prev.shape} / {H0.shape}"
        )
    A, pool_cache = _pool(H_prev, hop)
    X0s = H0[hop.self_rows]
    G = A @ Wg.T + bg
    S = X0s @ Ws.T + bs
    Epre = np.concatenate([G, S], axis=1)
    E = np.maximum(Epre, 0)
    Qpre = E @ Wq.T + bq
    Q = np.maximum(Qpre, 0)
    H = l2_normalize(Q, NORM_EPS)
    cache = (A, pool_cache, X0s, Epre, E, Qpre, Q, H, H_prev.shape[0])
    return H, cache


def _gnn_layer_backward(params, t, hop, cache, dH, grads):
    A, pool_cache, X0s, Epre, E, Qpre, Q, H, n_prev = cache
    Wg, Ws, Wq = params[f"l{t}.Wg"], params[f"l{t}.Ws"], params[f"l{t}.Wq"]
    f1 = Wq.shape[0]
    dQ = l2_normalize_backward(Q, H, dH, NORM_EPS)
    dQpre = dQ * _relu_mask(Qpre)
    grads[f"l{t}.Wq"] = dQpre.T @ E
    grads[f"l{t}.bq"] = dQpre.sum(axis=0)
    dEpre = (dQpre @ Wq) * _relu_mask(Epre)
    dG, dS = dEpre[:, :f1], dEpre[:, f1:]
    grads[f"l{t}.Wg"] = dG.T @ A
    grads[f"l{t}.bg"] = dG.sum(axis=0)
    grads[f"l{t}.Ws"] = dS.T @ X0s
    grads[f"l{t}.bs"] = dS.sum(axis=0)
    dH_prev = _pool_backward(dG @ Wg, hop, pool_cache, n_prev, dH.dtype)
    dX0s = dS @ Ws
    return dH_prev, dX0s


def initial_representation(params: dict, plan: Plan, prefix=None) -> np.ndarray:
    X = encode_rows(params["table"], plan.states)
    if prefix is not None:
        X = np.concatenate([np.asarray(prefix, X.dtype)[plan.prefix_rows], X], axis=1)
    return X


def encoder_forward(params: dict, plan: Plan, prefix=None):
    """Two layers over ``plan``.  Returns ``(H, cache)`` with H row-normalized."""
    H0 = initial_representation(params, plan, prefix)
    if params["l1.Ws"].shape[1] != H0.shape[1]:
        raise DimensionError(
            f"initial representation width {H0.shape[1]} does not match "
            f"encoder input width {params['l1.Ws'].shape[1]}"
        )
    H1, c1 = gnn_layer(params, 1, H0, H0, plan.hops[0])
    H2, c2 = gnn_layer(params, 2, H1, H0, plan.hops[1])
    return H2, (H0, c1, c2)


def encoder_backward(params: dict, plan: Plan, cache, dH) -> dict:
    H0, c1, c2 = cache
    grads = {}
    dH1, dX0s_2 = _gnn_layer_backward(params, 2, plan.hops[1], c2, dH, grads)
    dH0, dX0s_1 = _gnn_layer_backward(params, 1, plan.hops[0], c1, dH1, grads)
    n0 = dH0.shape[0]
    dH0 += scatter_add(plan.hops[1].self_scatter, dX0s_2, n0)
    dH0 += scatter_add(plan.hops[0].self_scatter, dX0s_1, n0)
    f = params["table"].shape[2]
    d_attr = dH0[:, dH0.shape[1] - N_ATTRS * f :]
    dtable = np.zeros_like(params["table"])
    for a in range(N_ATTRS):
        col = plan.states[:, a]
        block = d_attr[:, a * f : (a + 1) * f]
        for state in (PRESENT, ABSENT, MASKED):
            sel = col == state
            if sel.any():
                dtable[a, state] = block[sel].sum(axis=0)
    grads["table"] = dtable
    return grads


# ------------------------------------------------------------ score head


def score_head(params: dict, H):
    z1 = H @ params["p1.W"].T + params["p1.b"]
    z2 = z1 @ params["p2.W"].T + params["p2.b"]
    logit = z2 @ params["p3.w"] + params["p3.b"][0]
    return sigmoid(logit), (H, z1, z2)


def score_head_backward(params, cache, dlogit, grads):
    H, z1, z2 = cache
    grads["p3.w"] = z2.T @ dlogit
    grads["p3.b"] = np.array([dlogit.sum()], dtype=H.dtype)
    dz2 = np.outer(dlogit, params["p3.w"])
    grads["p2.W"] = dz2.T @ z1
    grads["p2.b"] = dz2.sum(axis=0)
    dz1 = dz2 @ params["p2.W"]
    grads["p1.W"] = dz1.T @ H
    grads["p1.b"] = dz1.sum(axis=0)
    return dz1 @ params["p1.W"]


def ig_forward(params: dict, graph: Graph, masked=None, prefix=None, attrs=None):
    """Final representations and suspicious scores for every node.

    ``masked`` optionally maps node -> attribute indices shown in the masked
    state for the whole pass.
    """
    plan = graph_plan(graph, attrs)
    if masked:
        states = plan.states.copy()
        for node, cols in masked.items():
            states[node, sorted(cols)] = MASKED
        plan = Plan(states, plan.hops, plan.prefix_rows)
    H, _ = encoder_forward(params, plan, prefix)
    p, _ = score_head(params, H)
    return H, p


def ig_loss_and_grad(params, plan: Plan, rows, y, prefix=None):
    """Mean BCE of the score head over output ``rows`` with targets ``y``."""
    H, cache = encoder_forward(params, plan, prefix)
    p, hc = score_head(params, H[rows])
    y = np.asarray(y, dtype=H.dtype)
    pc = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
    loss = float(-np.mean(y * np.log(pc) + (1 - y) * np.log1p(-pc)))
    grads = {}
    dH_rows = score_head_backward(params, hc, (p - y) / len(rows), grads)
    dH = scatter_add(scatter_matrix(rows, H.shape[0], len(rows)), dH_rows, H.shape[0])
    grads.update(encoder_backward(params, plan, cache, dH))
    return loss, grads


def check_both_classes(y, what="labels"):
    y = np.asarray(y)
    if not ((y == 1).any() and (y == 0).any()):
        raise ConfigError(f"{what} must contain both classes (got {np.unique(y).tolist()})")


def ig_train(
    graph: Graph,
    labeled,
    cfg: EncoderConfig,
    seed: int,
    epochs: int = 200,
    lr: float = 1e-3,
    prefix=None,
    probe=None,
    probe_every: int = 1,
    min_epochs: int = 0,
    attrs=None,
    name: str = "IG",
):
    """Adam on mean BCE over ``labeled`` nodes (labels read from ``graph``).

    ``attrs`` overrides the graph's attribute matrix and ``name`` keys the
    initialization stream, so differently named encoders never share draws.

    ``probe(params, epoch) -> auc`` drives early stopping; see
    :func:`sgrl.training.fit_with_probe`.  Returns ``(params, history)``.
    """
    from .rng import stream
    from .training import fit_with_probe

    labeled = np.asarray(labeled, dtype=np.int64)
    y = graph.labels[labeled]
    if (y < 0).any():
        raise ConfigError("training set contains unlabeled nodes")
    check_both_classes(y)
    params = init_encoder(cfg, stream(seed, name, "init"), head="score")
    plan = graph_plan(graph, attrs)

    def step(params, epoch):
        return ig_loss_and_grad(params, plan, labeled, y, prefix)

    return fit_with_probe(params, step, Adam(lr=lr), epochs, probe, probe_every, min_epochs)
