"""Gradient-boosted regression trees for the binary logistic objective.

Splits are exact and greedy.  Each tree grows level by level: a single
stable sort per level orders every active sample by (node, feature value) for
all candidate features at once, so the split search is a few array passes
rather than a Python loop over thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import auc
from .numeric import sigmoid
from .rng import stream


class GbdtError(ValueError):
    pass


@dataclass(frozen=True)
class GbdtConfig:
    learning_rate: float = 0.2
    max_depth: int = 4
    n_estimators: int = 300
    subsample: float = 0.9
    colsample_bytree: float = 0.8
    early_stopping_rounds: int = 50
    l2_reg: float = 1.0
    min_child_weight: float = 1.0
    importance_type: str = "gain"  # or "weight": number of splits per feature

    def __post_init__(self):
        if self.max_depth < 1 or self.n_estimators < 0:
            raise GbdtError("max_depth must be >= 1 and n_estimators >= 0")
        for name in ("subsample", "colsample_bytree"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise GbdtError(f"{name} must lie in (0, 1]")
        if self.learning_rate <= 0 or self.l2_reg < 0:
            raise GbdtError("learning_rate must be > 0 and l2_reg >= 0")
        if self.importance_type not in ("gain", "weight"):
            raise GbdtError(f"unknown importance type {self.importance_type!r}")


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat node arrays; ``feature[k] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def depth(self) -> int:
        d = np.zeros(len(self.feature), dtype=np.int64)
        for k in range(len(self.feature)):
            if self.feature[k] >= 0:
                d[self.left[k]] = d[self.right[k]] = d[k] + 1
        return int(d.max())

    def apply(self, X) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        for _ in range(len(self.feature)):
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            idx = np.flatnonzero(inner)
            go_left = X[idx, f[idx]] < self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]


@dataclass(eq=False)
class TreeEnsemble:
    trees: list
    base_score: float
    n_features: int
    best_iteration: int = -1
    eval_history: list = field(default_factory=list)

    def __len__(self):
        return len(self.trees)


def _best_splits(X, g, h, node, n_nodes, cols, sorted_idx, cfg):
    """Best (gain, feature, threshold) for each of the ``n_nodes`` live nodes."""
    lam, mcw = cfg.l2_reg, cfg.min_child_weight
    live = node >= 0
    G_tot = np.bincount(node[live], weights=g[live], minlength=n_nodes)
    H_tot = np.bincount(node[live], weights=h[live], minlength=n_nodes)
    counts = np.bincount(node[live], minlength=n_nodes)

    O = sorted_idx[:, cols]  # (n, k) per-feature value order
    NID = node[O]
    # stable sort by node keeps value order inside each node; dead rows go first
    P = np.argsort(NID, axis=0, kind="stable")
    O = np.take_along_axis(O, P, axis=0)
    n_dead = int((~live).sum())
    O = O[n_dead:]
    nid = np.repeat(np.arange(n_nodes), counts)  # identical for every column
    Xs = X[O, cols[None, :]]

    GL = np.cumsum(g[O], axis=0)
    HL = np.cumsum(h[O], axis=0)
    start = np.r_[0, np.cumsum(counts)[:-1]]
    before_G = np.where((start > 0)[:, None], GL[np.maximum(start - 1, 0)], 0.0)
    before_H = np.where((start > 0)[:, None], HL[np.maximum(start - 1, 0)], 0.0)
    GL = GL - before_G[nid]
    HL = HL - before_H[nid]
    GR = G_tot[nid][:, None] - GL
    HR = H_tot[nid][:, None] - HL

    ok = np.zeros(GL.shape, dtype=bool)
    ok[:-1] = (nid[:-1] == nid[1:])[:, None] & (Xs[:-1] < Xs[1:])
    ok &= (HL >= mcw) & (HR >= mcw)
    parent = (G_tot**2 / (H_tot + lam))[nid][:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        gain = GL**2 / (HL + lam) + GR**2 / (HR + lam) - parent
    gain = np.where(ok, gain, -np.inf)

    out = []
    for k in range(n_nodes):
        s, e = start[k], start[k] + counts[k]
        if e - s < 2:
            out.append(None)
            continue
        block = gain[s:e]
        flat = int(np.argmax(block))
        r, c = divmod(flat, block.shape[1])
        best = block[r, c]
        if not np.isfinite(best) or best <= 0:
            out.append(None)
            continue
        thr = 0.5 * (Xs[s + r, c] + Xs[s + r + 1, c])
        out.append((float(best), int(cols[c]), float(thr)))
    return out, G_tot, H_tot


def _grow_tree(X, g, h, rows_mask, cols, sorted_idx, cfg) -> Tree:
    lam, lr = cfg.l2_reg, cfg.learning_rate
    feature, threshold, left, right, value, gains = [], [], [], [], [], []

    def new_node():
        for arr, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0), (gains, 0.0)):
            arr.append(v)
        return len(feature) - 1

    root = new_node()
    node = np.where(rows_mask, 0, -1)
    level_ids = [root]  # tree-node id of each live level slot
    for depth in range(cfg.max_depth + 1):
        n_live = len(level_ids)
        if depth < cfg.max_depth:
            splits, G_tot, H_tot = _best_splits(X, g, h, node, n_live, cols, sorted_idx, cfg)
        else:
            splits = [None] * n_live
            live = node >= 0
            G_tot = np.bincount(node[live], weights=g[live], minlength=n_live)
            H_tot = np.bincount(node[live], weights=h[live], minlength=n_live)
        next_ids, remap = [], np.full(n_live, -1, dtype=np.int64)
        for slot, tid in enumerate(level_ids):
            sp = splits[slot]
            if sp is None:
                value[tid] = float(-lr * G_tot[slot] / (H_tot[slot] + lam))
                continue
            gain, f, thr = sp
            feature[tid], threshold[tid], gains[tid] = f, thr, gain
            left[tid], right[tid] = new_node(), new_node()
            remap[slot] = len(next_ids) // 2
            next_ids += [left[tid], right[tid]]
        if not next_ids:
            break
        live = node >= 0
        new_node_arr = np.full_like(node, -1)
        idx = np.flatnonzero(live)
        slot = node[idx]
        base = remap[slot]
        split_here = base >= 0
        idx, slot, base = idx[split_here], slot[split_here], base[split_here]
        tids = np.asarray(level_ids)[slot]
        f = np.asarray(feature)[tids]
        thr = np.asarray(threshold)[tids]
        go_right = ~(X[idx, f] < thr)
        new_node_arr[idx] = 2 * base + go_right
        node = new_node_arr
        level_ids = next_ids

    as_arr = lambda a, dt: np.asarray(a, dtype=dt)  # noqa: E731
    return Tree(
        as_arr(feature, np.int64),
        as_arr(threshold, np.float64),
        as_arr(left, np.int64),
        as_arr(right, np.int64),
        as_arr(value, np.float64),
        as_arr(gains, np.float64),
    )


def _check_xy(X, y=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise GbdtError(f"feature matrix must be 2-D, got shape {X.shape}")
    if X.shape[1] == 0:
        raise GbdtError("feature matrix has no columns")
    if y is None:
        return X
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise GbdtError(f"labels shape {y.shape} does not match {X.shape[0]} rows")
    if not ((y == 1).any() and (y == 0).any()):
        raise GbdtError("gbdt needs both classes in the training labels")
    return X, y.astype(np.float64)


def gbdt_fit(X, y, config: GbdtConfig | None = None, eval_set=None, seed: int = 0) -> TreeEnsemble:
    """Newton boosting on logistic loss.

    With ``eval_set=(X_val, y_val)`` training stops after
    ``early_stopping_rounds`` rounds without a validation-AUC improvement
    and the ensemble is truncated to its best round.
    """
    cfg = config or GbdtConfig()
    X, y = _check_xy(X, y)
    n, d = X.shape
    prior = y.mean()
    base = float(np.log(prior / (1 - prior)))
    margin = np.full(n, base)
    sorted_idx = np.argsort(X, axis=0, kind="stable")
    rng = stream(seed, "gbdt")

    if eval_set is not None:
        Xv = _check_xy(eval_set[0])
        yv = np.asarray(eval_set[1])
        if Xv.shape[1] != d:
            raise GbdtError("eval set width differs from training width")
        can_eval = (yv == 1).any() and (yv == 0).any()
        margin_v = np.full(len(Xv), base)
    else:
        can_eval = False

    n_rows = max(1, int(round(cfg.subsample * n)))
    n_cols = max(1, int(round(cfg.colsample_bytree * d)))
    ens = TreeEnsemble([], base, d)
    best_auc, best_it = -np.inf, -1
    for it in range(cfg.n_estimators):
        p = sigmoid(margin)
        g, h = p - y, p * (1 - p)
        rows_mask = np.ones(n, dtype=bool)
        if n_rows < n:
            rows_mask[:] = False
            rows_mask[rng.choice(n, size=n_rows, replace=False)] = True
        cols = np.arange(d) if n_cols == d else np.sort(rng.choice(d, size=n_cols, replace=False))
        tree = _grow_tree(X, g, h, rows_mask, cols, sorted_idx, cfg)
        ens.trees.append(tree)
        margin += tree.predict(X)
        if not can_eval:
            continue
        margin_v += tree.predict(Xv)
        score = auc(margin_v, yv)
        ens.eval_history.append(score)
        if score > best_auc:
            best_auc, best_it = score, it
        elif it - best_it >= cfg.early_stopping_rounds:
            break
    if can_eval:
        ens.trees = ens.trees[: best_it + 1]
        ens.best_iteration = best_it
    return ens


def gbdt_margin(ens: TreeEnsemble, X) -> np.ndarray:
    X = np.atleast_2d(_check_xy(X) if np.ndim(X) == 2 else np.asarray(X, dtype=np.float64)[None, :])
    if X.shape[1] != ens.n_features:
        raise GbdtError(f"model expects {ens.n_features} features, got {X.shape[1]}")
    out = np.full(len(X), ens.base_score)
    for t in ens.trees:
        out += t.predict(X)
    return out


def gbdt_predict(ens: TreeEnsemble, X) -> np.ndarray:
    """Probabilities; a single feature vector gives a length-1 array."""
    return sigmoid(gbdt_margin(ens, X))


def gbdt_importance(ens: TreeEnsemble, importance_type: str = "gain") -> np.ndarray:
    """Per-feature total split gain (or split count with ``"weight"``)."""
    if importance_type not in ("gain", "weight"):
        raise GbdtError(f"unknown importance type {importance_type!r}")
    imp = np.zeros(ens.n_features)
    for t in ens.trees:
        inner = t.feature >= 0
        w = t.gain[inner] if importance_type == "gain" else np.ones(inner.sum())
        np.add.at(imp, t.feature[inner], w)
    return imp
