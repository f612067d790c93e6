"""Finite-difference verification of every training loss on small random graphs."""

from __future__ import annotations

import numpy as np

from .contrastive import _disc_hidden, init_contrastive, mi_loss_and_grad, readout_all, sample_pairs_ss, sample_pairs_sss
from .encoder import EncoderConfig, encoder_forward, graph_plan, ig_loss_and_grad, init_encoder, masked_plan
from .graph import N_ATTRS, build_graph, precompute_subgraphs
from .numeric import grad_check
from .rng import stream
from .ssa import PseudoLabelSpec, gmml_loss_and_grad, init_ssa

TOLERANCE = 1e-4
# central differences need the loss to be smooth within the step; points
# closer than this to a ReLU hinge or a max-pool switch are redrawn
KINK_MARGIN = 2e-4
MAX_DRAWS = 50


def random_graph(n: int, seed: int, p_edge: float = 0.3):
    """Erdos-Renyi graph with random binary attributes and both label classes."""
    rng = stream(seed, "gradcheck", "graph")
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p_edge
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    attrs = (rng.random((n, N_ATTRS)) < 0.5).astype(np.int8)
    labels = np.zeros(n, dtype=np.int8)
    labels[rng.permutation(n)[: max(2, n // 3)]] = 1
    return build_graph(edges, n, attrs, labels)


def _jitter_biases(params, rng, scale=0.1):
    # zero biases let a ReLU row die exactly, where the L2 normalization is
    # discontinuous; a small offset keeps the probe point differentiable
    for k, v in params.items():
        if k.rsplit(".", 1)[-1].startswith("b"):
            params[k] = v + scale * rng.standard_normal(v.shape)
    return params


def kink_margin(params, plan, batch=None) -> float:
    """Distance of the forward pass to its nearest non-smooth point: the
    smallest |ReLU pre-activation| and the smallest non-zero gap between a
    pooled maximum and another candidate."""
    H, (_, *layers) = encoder_forward(params, plan)
    gaps = []
    for hop, cache in zip(plan.hops, layers):
        _, pool_cache, _, Epre, _, Qpre, *_ = cache
        gaps += [np.abs(Epre).min(), np.abs(Qpre).min()]
        if pool_cache is not None:
            rows, mx = pool_cache
            d = mx[hop.segment] - rows
            d = d[d > 0]
            if d.size:
                gaps.append(d.min())
    if batch is not None:
        S = readout_all(H, batch.index)[batch.pos]
        for nodes in (batch.pos, batch.neg):
            _, u, _ = _disc_hidden(params, H[nodes], S)
            gaps.append(np.abs(u).min())
    return float(min(gaps))


def _smooth_point(make, plan, rng, batch_fn=None):
    for _ in range(MAX_DRAWS):
        params = make(rng)
        batch = batch_fn(rng) if batch_fn else None
        if kink_margin(params, plan, batch) > KINK_MARGIN:
            return params, batch
    raise RuntimeError("no parameter draw stayed clear of non-smooth points")


def check_all(seed: int = 0, n: int = 10, cfg: EncoderConfig | None = None, max_coords: int | None = 40) -> dict:
    """Max relative error of each loss's analytic gradient (float64)."""
    cfg = cfg or EncoderConfig()
    g = random_graph(n, seed)
    rng = stream(seed, "gradcheck", "params")
    plan = graph_plan(g)
    index = precompute_subgraphs(g, 1)
    rows = g.labeled()
    y = g.labels[rows].astype(np.float64)
    out = {}

    p, _ = _smooth_point(lambda r: _jitter_biases(init_encoder(cfg, r, head="score", dtype=np.float64), r), plan, rng)
    out["IG"] = grad_check(lambda q: ig_loss_and_grad(q, plan, rows, y), p, max_coords=max_coords, seed=seed)

    for mode in ("SSS", "SS"):
        if mode == "SSS":
            pairs = lambda r: sample_pairs_sss(g, index, r)  # noqa: E731
        else:
            pairs = lambda r: sample_pairs_ss(g, index, g.labels, r)  # noqa: E731
        p, batch = _smooth_point(
            lambda r: _jitter_biases(init_contrastive(cfg, r, dtype=np.float64), r), plan, rng, pairs
        )
        out[mode] = grad_check(lambda q: mi_loss_and_grad(q, plan, batch), p, max_coords=max_coords, seed=seed)

    spec = PseudoLabelSpec(1, 3)
    mplan = masked_plan(g, spec.indices)
    targets = g.attributes[:, list(spec.indices)]
    p, _ = _smooth_point(lambda r: _jitter_biases(init_ssa(cfg, r, dtype=np.float64), r), mplan, rng)
    out["SSA"] = grad_check(lambda q: gmml_loss_and_grad(q, mplan, targets), p, max_coords=max_coords, seed=seed)
    return out
