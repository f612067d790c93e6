import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import adjacency_lists, bfs_ball

from sgrl.graph import (
    GraphError,
    build_graph,
    khop_subgraph,
    precompute_subgraphs,
    read_dataset,
    write_dataset,
)


@st.composite
def edge_lists(draw, max_n=50):
    n = draw(st.integers(1, max_n))
    edges = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=3 * n))
    return n, edges


def test_duplicate_and_reversed_edges_merge():
    g = build_graph([(0, 1), (1, 0), (0, 1)], 2)
    assert g.n_edges == 1
    assert g.neighbors(0).tolist() == [1] and g.neighbors(1).tolist() == [0]


def test_isolated_nodes_and_path_degrees(path3):
    assert build_graph([], 3).degrees.tolist() == [0, 0, 0]
    assert path3.degrees.tolist() == [1, 2, 1]


def test_self_loops_dropped():
    g = build_graph([(0, 0), (0, 1)], 2)
    assert g.neighbors(0).tolist() == [1]


@pytest.mark.parametrize(
    "edges, n, attrs",
    [
        ([(0, 3)], 3, None),
        ([(-1, 0)], 3, None),
        ([(0, 1, 2)], 3, None),
        ([(0, 1)], 2, np.full((2, 7), 2)),
        ([(0, 1)], 2, np.zeros((2, 6))),
        ([(0.5, 1)], 2, None),
    ],
)
def test_bad_inputs_rejected(edges, n, attrs):
    with pytest.raises(GraphError):
        build_graph(edges, n, attrs)


def test_graph_arrays_are_read_only(path3):
    with pytest.raises(ValueError):
        path3.indices[0] = 2


@given(edge_lists())
def test_adjacency_symmetric_sorted_no_loops(case):
    n, edges = case
    g = build_graph(edges, n)
    ref = adjacency_lists(edges, n)
    for i in range(n):
        nb = g.neighbors(i).tolist()
        assert nb == ref[i]
        assert i not in nb
        for j in nb:
            assert i in g.neighbors(j)


@given(edge_lists())
def test_rebuild_is_byte_identical(case):
    n, edges = case
    a, b = build_graph(edges, n), build_graph(list(reversed(edges)), n)
    assert a.indptr.tobytes() == b.indptr.tobytes()
    assert a.indices.tobytes() == b.indices.tobytes()


def test_khop_examples(path3):
    assert khop_subgraph(path3, 1, 1).tolist() == [0, 1, 2]
    assert khop_subgraph(path3, 0, 2).tolist() == [0, 1, 2]
    assert khop_subgraph(path3, 0, 1).tolist() == [0, 1]
    iso = build_graph([], 2)
    assert khop_subgraph(iso, 1, 5).tolist() == [1]
    with pytest.raises(IndexError):
        khop_subgraph(path3, 3, 1)


@given(edge_lists(), st.integers(1, 3))
def test_khop_matches_bfs_oracle(case, k):
    n, edges = case
    g = build_graph(edges, n)
    adj = adjacency_lists(edges, n)
    index = precompute_subgraphs(g, k)
    for i in range(n):
        expected = bfs_ball(adj, i, k)
        assert khop_subgraph(g, i, k).tolist() == expected
        assert index[i].tolist() == expected


def test_precompute_star_and_complete():
    star = build_graph([(0, 1), (0, 2), (0, 3)], 4)
    idx = precompute_subgraphs(star, 1)
    assert len(idx[0]) == 4 and all(len(idx[i]) == 2 for i in (1, 2, 3))
    k4 = build_graph([(i, j) for i in range(4) for j in range(i + 1, 4)], 4)
    assert all(precompute_subgraphs(k4, 1)[i].tolist() == [0, 1, 2, 3] for i in range(4))


def test_mean_matrix_averages_subgraph_rows(path3):
    idx = precompute_subgraphs(path3, 1)
    H = np.arange(6, dtype=np.float32).reshape(3, 2)
    out = idx.mean_matrix @ H
    assert np.allclose(out[0], H[[0, 1]].mean(axis=0))
    assert np.allclose(out[1], H.mean(axis=0))


def test_dataset_round_trip(tmp_path):
    attrs = np.eye(3, 7, dtype=np.int8)
    g = build_graph([(0, 1), (1, 2)], 3, attrs, {0: 1, 2: 0})
    write_dataset(g, tmp_path, ground_truth=np.array([1, 0, 0]))
    back = read_dataset(tmp_path)
    assert back.indices.tolist() == g.indices.tolist()
    assert np.array_equal(back.attributes, attrs)
    assert back.labels.tolist() == [1, -1, 0]
    assert (tmp_path / "ground_truth.csv").read_text() == "node_id,label\n0,1\n1,0\n2,0\n"
    assert read_dataset(tmp_path, "ground_truth.csv").labels.tolist() == [1, 0, 0]


def test_external_ids_survive(tmp_path):
    (tmp_path / "attrs.csv").write_text("node_id,a0,a1,a2,a3,a4,a5,a6\nu7,1,0,0,0,0,0,0\nu3,0,1,0,0,0,0,0\n")
    (tmp_path / "edges.tsv").write_text("u7\tu3\n")
    (tmp_path / "labels.csv").write_text("node_id,label\nu3,1\n")
    g = read_dataset(tmp_path)
    assert g.external_id(0) == "u7" and g.labels.tolist() == [-1, 1]


@pytest.mark.parametrize(
    "fname, text",
    [
        ("edges.tsv", "0 1\n"),
        ("edges.tsv", "0\t9\n"),
        ("attrs.csv", "node_id,a0,a1,a2,a3,a4,a5,a6\n0,1,0,0,0,0,0,2\n1,0,0,0,0,0,0,0\n"),
        ("labels.csv", "node_id,label\n0,yes\n"),
    ],
)
def test_malformed_files(tmp_path, fname, text):
    write_dataset(build_graph([(0, 1)], 2), tmp_path)
    (tmp_path / fname).write_text(text)
    with pytest.raises(GraphError):
        read_dataset(tmp_path)
