"""Self-supervised attribute encoder.

Two attributes chosen by a boosted-tree importance model act as pseudo
labels.  For each node the encoder sees a view where only that node's two
pseudo-label slots are hidden and learns to predict them back.  At detection
time the predictions replace the node's observed values in those slots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import (
    ConfigError,
    EncoderConfig,
    encoder_backward,
    encoder_forward,
    init_encoder,
    masked_plan,
)
from .gbdt import GbdtConfig, gbdt_fit, gbdt_importance
from .graph import N_ATTRS, Graph
from .numeric import PROB_CLAMP, Adam, sigmoid
from .rng import stream
from .training import fit_with_probe

DEFAULT_R_HAT = 0.5


@dataclass(frozen=True)
class PseudoLabelSpec:
    idx_a: int
    idx_b: int
    importance: tuple = ()

    def __post_init__(self):
        a, b = int(self.idx_a), int(self.idx_b)
        if not (0 <= a < b < N_ATTRS):
            raise ValueError(f"pseudo-label indices must satisfy 0 <= a < b < {N_ATTRS}, got ({a}, {b})")
        object.__setattr__(self, "idx_a", a)
        object.__setattr__(self, "idx_b", b)
        object.__setattr__(self, "importance", tuple(float(v) for v in self.importance))

    @property
    def indices(self) -> tuple:
        return (self.idx_a, self.idx_b)


def select_pseudo_labels(importance) -> PseudoLabelSpec:
    """Top-2 attributes by importance; ties go to the lower index."""
    imp = np.asarray(importance, dtype=np.float64)
    if imp.shape != (N_ATTRS,):
        raise ValueError(f"expected {N_ATTRS} importance scores, got shape {imp.shape}")
    if not np.all(np.isfinite(imp)) or (imp < 0).any():
        raise ValueError("importance scores must be finite and non-negative")
    order = np.lexsort((np.arange(N_ATTRS), -imp))
    a, b = sorted(order[:2].tolist())
    return PseudoLabelSpec(a, b, tuple(imp.tolist()))


def importance_spec(attributes, labels, gbdt_cfg: GbdtConfig | None = None, seed: int = 0, eval_set=None):
    ens = gbdt_fit(attributes, labels, gbdt_cfg, eval_set=eval_set, seed=seed)
    kind = gbdt_cfg.importance_type if gbdt_cfg else "gain"
    return select_pseudo_labels(gbdt_importance(ens, kind))


# ------------------------------------------------------------ head


def ssa_head(params: dict, H):
    # two affine maps with no activation in between, then a sigmoid per slot
    z1 = H @ params["r1.W"].T + params["r1.b"]
    logits = z1 @ params["r2.W"].T + params["r2.b"]
    return sigmoid(logits), (H, z1)


def ssa_head_backward(params, cache, dlogits, grads):
    H, z1 = cache
    grads["r2.W"] = dlogits.T @ z1
    grads["r2.b"] = dlogits.sum(axis=0)
    dz1 = dlogits @ params["r2.W"]
    grads["r1.W"] = dz1.T @ H
    grads["r1.b"] = dz1.sum(axis=0)
    return dz1 @ params["r1.W"]


def init_ssa(cfg: EncoderConfig, rng, dtype=np.float32) -> dict:
    return init_encoder(cfg, rng, head="ssa", dtype=dtype)


def ssa_predict(
    params: dict, graph: Graph, spec: PseudoLabelSpec, targets=None, attrs=None, hide_in_neighbors=False
) -> np.ndarray:
    """(T x 2) pseudo-label probabilities, each target in its own masked view."""
    plan = masked_plan(graph, spec.indices, targets, attrs, hide_in_neighbors)
    H, _ = encoder_forward(params, plan)
    r, _ = ssa_head(params, H)
    return r


def ssa_forward_one(params: dict, graph: Graph, spec: PseudoLabelSpec, i: int, hide_in_neighbors=False):
    graph._check_node(i)
    return ssa_predict(params, graph, spec, [int(i)], hide_in_neighbors=hide_in_neighbors)[0]


# ------------------------------------------------------------ loss


def gmml_loss(r, y) -> float:
    """``-1/2 * sum_i sum_j [y log r + (1 - y) log(1 - r)]`` over N x 2 arrays."""
    r = np.asarray(r, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if r.shape != y.shape or r.ndim != 2 or r.shape[1] != 2:
        raise ValueError(f"predictions {r.shape} and pseudo labels {y.shape} must both be N x 2")
    rc = np.clip(r, PROB_CLAMP, 1 - PROB_CLAMP)
    return float(-0.5 * np.sum(y * np.log(rc) + (1 - y) * np.log1p(-rc)))


def gmml_loss_and_grad(params: dict, plan, y):
    H, cache = encoder_forward(params, plan)
    r, hc = ssa_head(params, H)
    y = np.asarray(y, dtype=H.dtype)
    loss = gmml_loss(r, y)
    grads = {}
    dH = ssa_head_backward(params, hc, 0.5 * (r - y), grads)
    grads.update(encoder_backward(params, plan, cache, dH))
    return loss, grads


def train_ssa(
    graph: Graph,
    cfg: EncoderConfig,
    seed: int,
    labels=None,
    spec: PseudoLabelSpec | None = None,
    gbdt_cfg: GbdtConfig | None = None,
    importance_eval=None,
    epochs: int = 100,
    lr: float = 1e-3,
    probe=None,
    probe_every: int = 1,
    min_epochs: int = 0,
    hide_in_neighbors: bool = False,
):
    """Pick pseudo labels (unless ``spec`` is given) and fit the encoder on
    every node of ``graph``.

    ``labels`` is the per-node vector (-1 = unlabeled); the importance model is
    fit on the labeled rows, optionally early-stopped on ``importance_eval``
    (a node-index array with labels).  Returns ``(params, spec, history)``.
    """
    if spec is None:
        if labels is None:
            raise ConfigError("pseudo-label selection needs labels or an explicit spec")
        labels = np.asarray(labels)
        train = np.flatnonzero(labels >= 0)
        eval_set = None
        if importance_eval is not None:
            importance_eval = np.asarray(importance_eval)
            train = np.setdiff1d(train, importance_eval)
            eval_set = (graph.attributes[importance_eval], labels[importance_eval])
        y = labels[train]
        if not ((y == 1).any() and (y == 0).any()):
            raise ConfigError("pseudo-label selection needs labeled nodes of both classes")
        spec = importance_spec(graph.attributes[train], y, gbdt_cfg, seed, eval_set)

    params = init_ssa(cfg, stream(seed, "SSA", "init"))
    plan = masked_plan(graph, spec.indices, hide_in_neighbors=hide_in_neighbors)
    targets = graph.attributes[:, list(spec.indices)]

    def step(params, epoch):
        return gmml_loss_and_grad(params, plan, targets)

    params, hist = fit_with_probe(params, step, Adam(lr=lr), epochs, probe, probe_every, min_epochs)
    return params, spec, hist


def replace_attributes(a, spec: PseudoLabelSpec, r, threshold: float = DEFAULT_R_HAT) -> np.ndarray:
    """Overwrite the two pseudo-label slots with ``r >= threshold``.

    Works on one attribute vector (with ``r`` of length 2) or on N x 7 rows
    (with ``r`` N x 2).
    """
    a = np.array(a, dtype=np.int8, copy=True)
    r = np.asarray(r)
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if a.shape[-1] != N_ATTRS or r.shape[-1] != 2 or a.shape[:-1] != r.shape[:-1]:
        raise ValueError(f"attribute rows {a.shape} and predictions {r.shape} do not line up")
    a[..., list(spec.indices)] = (r >= threshold).astype(np.int8)
    return a
