import math

import numpy as np
import pytest
from conftest import random_small_graph
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import adjacency_lists, bfs_ball, masked_view_row, ssa_head

from sgrl.encoder import ABSENT, MASKED, PRESENT, ConfigError, EncoderConfig, encode_rows, masked_plan
from sgrl.gradcheck import KINK_MARGIN, kink_margin
from sgrl.graph import build_graph
from sgrl.numeric import grad_check
from sgrl.ssa import (
    PseudoLabelSpec,
    gmml_loss,
    gmml_loss_and_grad,
    init_ssa,
    replace_attributes,
    select_pseudo_labels,
    ssa_forward_one,
    ssa_predict,
    train_ssa,
)

SMALL = EncoderConfig(f=2, f1=6)
SPEC = PseudoLabelSpec(1, 3)


def ssa_params64(cfg=SMALL, seed=0):
    p = init_ssa(cfg, np.random.default_rng(seed), dtype=np.float64)
    rng = np.random.default_rng(seed + 50)
    for k in p:
        if ".b" in k:
            p[k] = p[k] + 0.1 * rng.standard_normal(p[k].shape)
    return p


# ------------------------------------------------------------ selection


def test_select_examples():
    assert select_pseudo_labels([0.1, 0.3, 0.05, 0.25, 0.1, 0.1, 0.1]).indices == (1, 3)
    assert select_pseudo_labels([0.2] * 7).indices == (0, 1)
    assert select_pseudo_labels([0, 0, 0, 0, 0, 0.9, 0.8]).indices == (5, 6)


@pytest.mark.parametrize("bad", [[1] * 6, [1, 2, 3, 4, 5, 6, -1], [0, 0, 0, 0, 0, 0, float("nan")]])
def test_select_rejects_bad_scores(bad):
    with pytest.raises(ValueError):
        select_pseudo_labels(bad)


@given(arrays(np.float64, 7, elements=st.sampled_from([0.0, 0.1, 0.5, 1.0, 2.0])))
def test_select_is_top_two_with_low_index_ties(imp):
    a, b = select_pseudo_labels(imp).indices
    assert a < b
    chosen = {a, b}
    for j in range(7):
        if j in chosen:
            continue
        for c in chosen:
            assert imp[c] > imp[j] or (imp[c] == imp[j] and c < j)


def test_spec_validation():
    with pytest.raises(ValueError):
        PseudoLabelSpec(3, 3)
    with pytest.raises(ValueError):
        PseudoLabelSpec(3, 1)
    with pytest.raises(ValueError):
        PseudoLabelSpec(0, 7)


# ------------------------------------------------------------ forward


def test_zero_head_gives_half(star5):
    p = ssa_params64()
    for k in ("r1.W", "r1.b", "r2.W", "r2.b"):
        p[k] = np.zeros_like(p[k])
    assert np.allclose(ssa_forward_one(p, star5, SPEC, 2), [0.5, 0.5])


def test_mask_equal_to_true_state_changes_nothing():
    attrs = np.ones((5, 7), dtype=np.int8)
    g = build_graph([(0, 1), (0, 2), (0, 3), (0, 4)], 5, attrs)
    p = ssa_params64()
    for j in SPEC.indices:
        p["table"][j, MASKED] = p["table"][j, PRESENT]
    from sgrl.encoder import encoder_forward, graph_plan
    from sgrl.ssa import ssa_head as head

    H, _ = encoder_forward(p, graph_plan(g))
    unmasked, _ = head(p, H)
    for i in range(5):
        assert np.allclose(ssa_forward_one(p, g, SPEC, i), unmasked[i], atol=1e-12)


def test_star_matches_per_node_oracle(star5):
    p = ssa_params64(seed=7)
    adj = [star5.neighbors(i).tolist() for i in range(5)]
    for i in range(5):
        ref = ssa_head(p, masked_view_row(p, adj, star5.attributes, i, SPEC.indices))
        assert np.allclose(ssa_forward_one(p, star5, SPEC, i), ref, atol=1e-6)
    with pytest.raises(IndexError):
        ssa_forward_one(p, star5, SPEC, 5)


def test_only_the_target_is_masked():
    g, _, _ = random_small_graph(3)
    plan = masked_plan(g, SPEC.indices)
    n = g.n
    # ordinary rows carry no masked state at all
    assert not (plan.states[:n] == MASKED).any()
    masked_rows = plan.states[n:]
    assert (masked_rows[:, list(SPEC.indices)] == MASKED).all()
    others = [j for j in range(7) if j not in SPEC.indices]
    expected = np.where(g.attributes[:, others] == 1, PRESENT, ABSENT)
    assert np.array_equal(masked_rows[:, others], expected)
    # each target's self-connection reads its own masked row; neighbors read ordinary rows
    hop1, hop2 = plan.hops
    assert np.array_equal(hop2.self_rows, n + np.arange(n))
    assert np.array_equal(hop1.self_rows, np.arange(n))
    assert (hop1.indices < n).all()


def test_neighbors_see_target_unmasked():
    """The target's encoding seen by a neighbor equals the unmasked encoding."""
    g, _, _ = random_small_graph(5)
    p = ssa_params64()
    plan = masked_plan(g, SPEC.indices)
    X = encode_rows(p["table"], plan.states)
    unmasked = encode_rows(p["table"], np.where(g.attributes == 1, PRESENT, ABSENT))
    hop1 = plan.hops[0]
    for i in range(g.n):
        for j in g.neighbors(i):
            feeds_j = hop1.indices[hop1.indptr[j] : hop1.indptr[j + 1]]
            assert i in feeds_j
            assert np.array_equal(X[i], unmasked[i])
        assert not np.array_equal(X[g.n + i], unmasked[i])


@pytest.mark.parametrize("seed", range(3))
def test_locality_outside_receptive_field(seed):
    g, edges, attrs = random_small_graph(seed, n=12, p=0.15)
    p = ssa_params64(seed=seed)
    adj = adjacency_lists(edges, g.n)
    for i in range(g.n):
        field = set(bfs_ball(adj, i, 2))
        outside = [j for j in range(g.n) if j not in field]
        if not outside:
            continue
        changed = attrs.copy()
        changed[outside] = 1 - changed[outside]
        g2 = build_graph(edges, g.n, changed)
        assert np.array_equal(ssa_forward_one(p, g, SPEC, i), ssa_forward_one(p, g2, SPEC, i))


# ------------------------------------------------------------ loss


def test_gmml_examples():
    assert gmml_loss(np.full((4, 2), 0.5), np.zeros((4, 2))) == pytest.approx(4 * math.log(2))
    y = np.array([[1, 0], [0, 1]])
    assert gmml_loss(y.astype(float), y) < 1e-5 * 2
    assert gmml_loss(np.array([[0.8, 0.3]]), np.array([[1, 0]])) == pytest.approx(0.289909, abs=1e-6)
    with pytest.raises(ValueError):
        gmml_loss(np.zeros((2, 3)), np.zeros((2, 3)))


@given(
    arrays(np.float64, (5, 2), elements=st.floats(0, 1)),
    arrays(np.int8, (5, 2), elements=st.integers(0, 1)),
)
def test_gmml_nonnegative(r, y):
    assert gmml_loss(r, y) >= 0


@pytest.mark.parametrize("hide", [False, True])
@pytest.mark.parametrize("seed", range(3))
def test_gmml_gradient(seed, hide):
    g, _, _ = random_small_graph(seed)
    plan = masked_plan(g, SPEC.indices, hide_in_neighbors=hide)
    # central differences are only meaningful away from ReLU / max-pool switches
    draws = (ssa_params64(EncoderConfig(), seed=100 * seed + k) for k in range(50))
    p = next(q for q in draws if kink_margin(q, plan) > KINK_MARGIN)
    y = g.attributes[:, list(SPEC.indices)]
    assert grad_check(lambda q: gmml_loss_and_grad(q, plan, y), p, max_coords=25, seed=seed) < 1e-4


# ------------------------------------------------------------ training and replacement


def test_train_ssa_selects_reduces_and_repeats():
    from sgrl.synthgen import default_config, generate

    d = generate(default_config().with_(seed=0, n_normal=300, n_motifs=10))
    g = d.graph
    p1, spec1, hist = train_ssa(g, SMALL, 0, labels=g.labels, epochs=30, lr=1e-2)
    assert spec1.indices == (1, 3)
    assert hist.losses[-1][1] < hist.losses[0][1]
    p2, spec2, _ = train_ssa(g, SMALL, 0, labels=g.labels, epochs=30, lr=1e-2)
    assert spec1 == spec2
    assert all(p1[k].tobytes() == p2[k].tobytes() for k in p1)


def test_train_ssa_needs_two_classes():
    g = build_graph([(0, 1)], 2, labels={0: 1, 1: 1})
    with pytest.raises(ConfigError):
        train_ssa(g, SMALL, 0, labels=g.labels, epochs=1)
    with pytest.raises(ConfigError):
        train_ssa(g, SMALL, 0, epochs=1)


def test_replace_examples():
    out = replace_attributes(np.zeros(7, int), SPEC, np.array([0.9, 0.1]))
    assert out.tolist() == [0, 1, 0, 0, 0, 0, 0]
    out = replace_attributes(np.zeros(7, int), SPEC, np.array([0.5, 0.5]))
    assert out[[1, 3]].tolist() == [1, 1]
    a = np.array([1, 0, 1, 1, 0, 0, 1])
    assert np.array_equal(replace_attributes(a, SPEC, np.array([0.2, 0.7])), a)
    with pytest.raises(ValueError):
        replace_attributes(a, SPEC, np.array([0.2, 0.7]), threshold=1.0)


@given(
    arrays(np.int8, (6, 7), elements=st.integers(0, 1)),
    arrays(np.float64, (6, 2), elements=st.floats(0.001, 0.999)),
)
def test_replace_touches_only_spec_slots(a, r):
    out = replace_attributes(a, SPEC, r)
    others = [0, 2, 4, 5, 6]
    assert np.array_equal(out[:, others], a[:, others])
    assert np.array_equal(out[:, [1, 3]], (r >= 0.5).astype(np.int8))


def test_predictions_for_subset_match_full(star5):
    p = ssa_params64()
    full = ssa_predict(p, star5, SPEC)
    assert np.allclose(ssa_predict(p, star5, SPEC, targets=[4, 0]), full[[4, 0]])
