import numpy as np
import pytest
from conftest import random_small_graph
from hypothesis import given
from hypothesis import strategies as st
from oracles import MASKED, adjacency_lists, encode, encoder_rows, masked_view_row, score

from sgrl.encoder import (
    ConfigError,
    EncoderConfig,
    aggregate_neighbors,
    count_parameters,
    encode_attributes,
    encoder_forward,
    expected_shapes,
    gnn_layer,
    graph_plan,
    ig_forward,
    ig_loss_and_grad,
    ig_train,
    init_encoder,
    masked_plan,
    param_count,
)
from sgrl.graph import build_graph
from sgrl.numeric import grad_check
from sgrl.rng import stream

SMALL = EncoderConfig(f=2, f1=6)


def params64(cfg=SMALL, seed=1, head="score"):
    p = init_encoder(cfg, np.random.default_rng(seed), head=head, dtype=np.float64)
    rng = np.random.default_rng(seed + 100)
    for k in p:
        if ".b" in k:
            p[k] = p[k] + 0.1 * rng.standard_normal(p[k].shape)
    return p


# ------------------------------------------------------------ attribute coding


def test_encode_attributes_states():
    table = np.arange(7 * 3 * 2, dtype=float).reshape(7, 3, 2)
    zeros = encode_attributes(table, np.zeros(7, int)).reshape(7, 2)
    ones = encode_attributes(table, np.ones(7, int)).reshape(7, 2)
    assert np.array_equal(zeros, table[:, 1])
    assert np.array_equal(ones, table[:, 0])
    a = np.array([1, 0, 1, 1, 0, 0, 1])
    m = encode_attributes(table, a, {1, 3}).reshape(7, 2)
    assert np.array_equal(m[[1, 3]], table[[1, 3], MASKED])
    assert np.array_equal(encode_attributes(table, a, {1, 3}), encode(table, a, {1, 3}))


# ------------------------------------------------------------ aggregation


def test_aggregate_examples():
    H = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 3.0]])
    assert np.allclose(aggregate_neighbors(H, [0, 1]), [0.5, 0.5, 1, 1, 1, 1])
    assert np.allclose(aggregate_neighbors(H, [2]), [2, 3, 2, 3, 2, 3])
    assert np.array_equal(aggregate_neighbors(H, []), np.zeros(6))


@given(st.lists(st.integers(0, 5), min_size=1, max_size=6, unique=True), st.randoms(use_true_random=False))
def test_aggregate_order_invariant(nb, rnd):
    H = np.random.default_rng(0).standard_normal((6, 3))
    shuffled = list(nb)
    rnd.shuffle(shuffled)
    assert np.array_equal(aggregate_neighbors(H, nb), aggregate_neighbors(H, shuffled))


def test_zero_params_give_zero_rows(path3):
    p = {k: np.zeros_like(v) for k, v in init_encoder(SMALL, np.random.default_rng(0)).items()}
    H, s = ig_forward(p, path3)
    assert np.array_equal(H, np.zeros_like(H))
    assert np.allclose(s, 0.5)


def test_isolated_node_uses_only_self_branch():
    p = params64()
    g1 = build_graph([(1, 2)], 3, np.eye(3, 7, dtype=np.int8))
    g2 = build_graph([(1, 2)], 3, np.eye(3, 7, dtype=np.int8)[[0, 2, 1]])
    H1, _ = ig_forward(p, g1)
    H2, _ = ig_forward(p, g2)
    assert np.array_equal(H1[0], H2[0])


def test_layer_shape_error():
    p = params64()
    H = np.zeros((3, 5))
    with pytest.raises(ValueError):
        gnn_layer(p, 1, H, H, graph_plan(build_graph([], 3)).hops[0])


# ------------------------------------------------------------ oracle agreement


@pytest.mark.parametrize("seed", range(5))
def test_forward_matches_straight_line_oracle(seed):
    g, edges, attrs = random_small_graph(seed)
    p = params64(seed=seed)
    H, scores = ig_forward(p, g)
    adj = adjacency_lists(edges, g.n)
    ref = encoder_rows(p, adj, attrs)
    assert np.allclose(H, np.array(ref), atol=1e-6)
    assert np.allclose(scores, [score(p, h) for h in ref], atol=1e-6)


def test_path3_seed1_matches_oracle(path3):
    p = params64(seed=1)
    H, _ = ig_forward(p, path3)
    ref = encoder_rows(p, adjacency_lists([(0, 1), (1, 2)], 3), np.zeros((3, 7), int))
    assert np.allclose(H, np.array(ref), atol=1e-6)


def test_prefix_enters_initial_representation():
    g, edges, attrs = random_small_graph(3)
    cfg = EncoderConfig(f=2, f1=6, f2=14 + 4)
    p = params64(cfg, seed=3)
    prefix = np.random.default_rng(9).standard_normal((g.n, 4))
    H, _ = ig_forward(p, g, prefix=prefix)
    ref = encoder_rows(p, adjacency_lists(edges, g.n), attrs, prefix=prefix)
    assert np.allclose(H, np.array(ref), atol=1e-6)


@pytest.mark.parametrize("hide", [False, True])
@pytest.mark.parametrize("seed", range(3))
def test_masked_plan_matches_per_target_oracle(seed, hide):
    g, edges, attrs = random_small_graph(seed, n=8, p=0.35)
    p = params64(seed=seed, head=None)
    plan = masked_plan(g, (1, 3), hide_in_neighbors=hide)
    H, _ = encoder_forward(p, plan)
    adj = adjacency_lists(edges, g.n)
    for i in range(g.n):
        ref = masked_view_row(p, adj, attrs, i, (1, 3), hide_in_neighbors=hide)
        assert np.allclose(H[i], ref, atol=1e-6)


def test_masked_plan_subset_of_targets():
    g, _, _ = random_small_graph(4)
    p = params64(seed=4, head=None)
    full, _ = encoder_forward(p, masked_plan(g, (0, 5)))
    part, _ = encoder_forward(p, masked_plan(g, (0, 5), targets=[7, 2]))
    assert np.allclose(part, full[[7, 2]], atol=1e-12)


@given(st.integers(0, 50))
def test_representation_rows_are_unit_or_zero(seed):
    g, _, _ = random_small_graph(seed, n=7)
    H, p = ig_forward(init_encoder(SMALL, np.random.default_rng(seed)), g)
    norms = np.linalg.norm(H.astype(np.float64), axis=1)
    assert np.all((norms == 0) | (np.abs(norms - 1) <= 1e-5))
    assert np.all((p > 0) & (p < 1))


@given(st.integers(0, 30), st.randoms(use_true_random=False))
def test_edge_order_does_not_change_output(seed, rnd):
    _, edges, attrs = random_small_graph(seed)
    shuffled = [(v, u) if rnd.random() < 0.5 else (u, v) for u, v in edges]
    rnd.shuffle(shuffled)
    p = init_encoder(SMALL, np.random.default_rng(seed))
    H1, _ = ig_forward(p, build_graph(edges, 10, attrs))
    H2, _ = ig_forward(p, build_graph(shuffled, 10, attrs))
    assert np.array_equal(H1, H2)


def test_scoring_is_inductive():
    a, ea, xa = random_small_graph(0)
    b, eb, xb = random_small_graph(1)
    p = init_encoder(SMALL, np.random.default_rng(2))
    snapshot = {k: v.copy() for k, v in p.items()}
    _, sa = ig_forward(p, a)
    union = build_graph(ea + [(u + 10, v + 10) for u, v in eb], 20, np.vstack([xa, xb]))
    _, su = ig_forward(p, union)
    ig_forward(p, b)
    assert np.allclose(su[:10], sa, atol=1e-6)
    assert all(np.array_equal(p[k], snapshot[k]) for k in p)


# ------------------------------------------------------------ parameter counts


def test_param_count_closed_form():
    assert param_count(2, 32, 56) == 17793
    assert param_count(2, 1, 1) == 27
    assert param_count(2, 128, 448) == 394753
    with pytest.raises(ValueError):
        param_count(1, 32, 56)


def test_constructed_shapes_follow_layer_contract():
    shapes = expected_shapes(EncoderConfig(f=8, f1=32), "score")
    assert shapes["l1.Wg"] == (32, 3 * 56)
    assert shapes["l2.Wg"] == (32, 3 * 32)
    assert shapes["l1.Ws"] == shapes["l2.Ws"] == (32, 56)
    assert shapes["l1.Wq"] == (32, 64)
    assert shapes["p1.W"] == (64, 32) and shapes["p2.W"] == (32, 64) and shapes["p3.w"] == (32,)
    assert shapes["table"] == (7, 3, 8)
    p = init_encoder(EncoderConfig(f=8, f1=32), np.random.default_rng(0))
    assert count_parameters(p) == 20545


def test_init_statistics():
    p = init_encoder(EncoderConfig(f=16, f1=64), np.random.default_rng(0))
    assert np.all(p["l1.bg"] == 0) and np.all(p["p3.b"] == 0)
    assert abs(p["l1.Wg"].std() * np.sqrt(p["l1.Wg"].shape[1]) - 1) < 0.05
    assert abs(p["table"].std() - 1) < 0.1


def test_config_validation():
    with pytest.raises(ConfigError):
        EncoderConfig(layers=3)
    with pytest.raises(ConfigError):
        EncoderConfig(f=8, f2=10)
    with pytest.raises(ConfigError):
        EncoderConfig(rho=1.0)


# ------------------------------------------------------------ training


@pytest.mark.parametrize("seed", range(5))
def test_ig_loss_gradient(seed):
    g, _, _ = random_small_graph(seed)
    p = params64(EncoderConfig(), seed=seed)
    rows = g.labeled()
    y = g.labels[rows].astype(float)
    plan = graph_plan(g)
    assert grad_check(lambda q: ig_loss_and_grad(q, plan, rows, y), p, max_coords=25, seed=seed) < 1e-4


def test_ig_train_two_labels_reduces_loss():
    g = build_graph([(0, 1), (1, 2)], 3, np.eye(3, 7, dtype=np.int8), {0: 1, 2: 0})
    cfg = EncoderConfig(f=4, f1=8)
    params, hist = ig_train(g, [0, 2], cfg, seed=0, epochs=200, lr=1e-2)
    assert hist.losses[-1][1] < hist.losses[0][1]


def test_ig_train_rejects_single_class():
    g = build_graph([(0, 1)], 2, labels={0: 1, 1: 1})
    with pytest.raises(ConfigError):
        ig_train(g, [0, 1], SMALL, seed=0, epochs=1)


def test_ig_train_is_deterministic():
    g, _, _ = random_small_graph(0)
    a, _ = ig_train(g, g.labeled(), SMALL, seed=5, epochs=20)
    b, _ = ig_train(g, g.labeled(), SMALL, seed=5, epochs=20)
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    c, _ = ig_train(g, g.labeled(), SMALL, seed=6, epochs=20)
    assert any(a[k].tobytes() != c[k].tobytes() for k in a)


def test_named_streams_differ():
    assert stream(0, "IG", "init").random() != stream(0, "DET", "init").random()
