"""Immutable undirected attributed graph in compressed-adjacency form."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse

N_ATTRS = 7


class GraphError(ValueError):
    """Malformed graph input."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph with sorted, duplicate-free neighbor lists.

    ``labels`` maps node -> {0, 1}, with -1 for unlabeled nodes.
    ``node_ids`` is the external-identifier side table (``None`` means the
    identity mapping).
    """

    indptr: np.ndarray
    indices: np.ndarray
    attributes: np.ndarray
    labels: np.ndarray
    node_ids: tuple | None = None

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def n_edges(self) -> int:
        return len(self.indices) // 2

    def neighbors(self, i: int) -> np.ndarray:
        self._check_node(i)
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def labeled(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= 0)

    def external_id(self, i: int) -> str:
        return str(i) if self.node_ids is None else self.node_ids[i]

    def edge_array(self) -> np.ndarray:
        """Each undirected edge once, as (u, v) with u < v, sorted."""
        src = np.repeat(np.arange(self.n), self.degrees)
        keep = src < self.indices
        return np.stack([src[keep], self.indices[keep]], axis=1)

    def with_labels(self, labels) -> "Graph":
        labels = _labels_array(labels, self.n)
        return Graph(self.indptr, self.indices, self.attributes, labels, self.node_ids)

    def _check_node(self, i):
        if not 0 <= int(i) < self.n:
            raise IndexError(f"node {i} out of range [0, {self.n})")


def _labels_array(labels, n):
    out = np.full(n, -1, dtype=np.int8)
    if labels is None:
        return out
    if isinstance(labels, dict):
        items = labels.items()
    else:
        arr = np.asarray(labels)
        if arr.shape != (n,):
            raise GraphError(f"label vector has shape {arr.shape}, expected ({n},)")
        items = enumerate(arr.tolist())
    for node, lab in items:
        if not 0 <= int(node) < n:
            raise GraphError(f"labeled node {node} out of range [0, {n})")
        if lab not in (0, 1, -1):
            raise GraphError(f"label {lab!r} for node {node} is not 0/1")
        out[int(node)] = lab
    return out


def build_graph(edges, n: int, attributes=None, labels=None, node_ids=None) -> Graph:
    """Merge duplicate and reversed edges, drop self-loops, build CSR."""
    if attributes is None:
        attributes = np.zeros((n, N_ATTRS), dtype=np.int8)
    attrs = np.asarray(attributes)
    if attrs.shape != (n, N_ATTRS):
        raise GraphError(f"attributes have shape {attrs.shape}, expected ({n}, {N_ATTRS})")
    if not np.isin(attrs, (0, 1)).all():
        raise GraphError("attributes must be binary 0/1")
    attrs = attrs.astype(np.int8)

    try:
        e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges)
    except ValueError as exc:
        raise GraphError(f"malformed edge list: {exc}") from exc
    if e.size == 0:
        e = np.zeros((0, 2), dtype=np.int64)
    if e.ndim != 2 or e.shape[1] != 2:
        raise GraphError(f"edge records must be pairs, got array of shape {e.shape}")
    if not np.issubdtype(e.dtype, np.integer):
        if not np.all(np.mod(e, 1) == 0):
            raise GraphError("edge endpoints must be integers")
        e = e.astype(np.int64)
    e = e.astype(np.int64)
    bad = (e < 0) | (e >= n)
    if bad.any():
        u, v = e[np.argmax(bad.any(axis=1))]
        raise GraphError(f"edge ({u}, {v}) has an endpoint outside [0, {n})")

    e = e[e[:, 0] != e[:, 1]]
    both = np.concatenate([e, e[:, ::-1]])
    keys = np.unique(both[:, 0] * n + both[:, 1]) if len(both) else np.zeros(0, np.int64)
    src, dst = keys // n, keys % n
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    indices = dst.astype(np.int64)
    if node_ids is not None:
        node_ids = tuple(str(x) for x in node_ids)
        if len(node_ids) != n:
            raise GraphError("node id table length differs from node count")
    for a in (indptr, indices, attrs):
        a.setflags(write=False)
    lab = _labels_array(labels, n)
    lab.setflags(write=False)
    return Graph(indptr, indices, attrs, lab, node_ids)


def _bfs(g: Graph, i: int, k: int) -> np.ndarray:
    seen = np.zeros(g.n, dtype=bool)
    seen[i] = True
    frontier = np.array([i])
    for _ in range(k):
        if frontier.size == 0:
            break
        nb = np.concatenate([g.indices[g.indptr[u] : g.indptr[u + 1]] for u in frontier])
        nb = np.unique(nb[~seen[nb]])
        seen[nb] = True
        frontier = nb
    return np.flatnonzero(seen)


def khop_subgraph(g: Graph, i: int, k: int) -> np.ndarray:
    """Sorted nodes within ``k`` hops of ``i``, including ``i``."""
    g._check_node(i)
    if k < 1:
        raise ValueError(f"hop count must be >= 1, got {k}")
    return _bfs(g, int(i), k)


@dataclass(frozen=True, eq=False)
class SubgraphIndex:
    """Per-node k-hop node sets, stored CSR style."""

    indptr: np.ndarray
    indices: np.ndarray
    k: int

    def __getitem__(self, i) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def __len__(self):
        return len(self.indptr) - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def mean_matrix(self):
        """Sparse (N x N) averaging operator: row i holds 1/|S_i| on S_i."""
        n = len(self)
        w = np.repeat(1.0 / self.sizes, self.sizes).astype(np.float32)
        return sparse.csr_matrix((w, self.indices, self.indptr), shape=(n, n))


def precompute_subgraphs(g: Graph, k: int = 1) -> SubgraphIndex:
    if k < 1:
        raise ValueError(f"hop count must be >= 1, got {k}")
    if k == 1:
        # closed 1-hop neighborhoods: splice each node into its sorted list
        deg = g.degrees
        indptr = np.zeros(g.n + 1, dtype=np.int64)
        np.cumsum(deg + 1, out=indptr[1:])
        src = np.concatenate([np.repeat(np.arange(g.n), deg), np.arange(g.n)])
        dst = np.concatenate([g.indices, np.arange(g.n)])
        order = np.lexsort((dst, src))
        return SubgraphIndex(indptr, dst[order], k)
    sets = [_bfs(g, i, k) for i in range(g.n)]
    indptr = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum([len(s) for s in sets], out=indptr[1:])
    indices = np.concatenate(sets) if sets else np.zeros(0, np.int64)
    return SubgraphIndex(indptr, indices, k)


# ---------------------------------------------------------------- file I/O

ATTR_HEADER = ["node_id"] + [f"a{j}" for j in range(N_ATTRS)]


def write_dataset(g: Graph, directory, ground_truth=None) -> None:
    """Write edges.tsv / attrs.csv / labels.csv (and ground_truth.csv)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ids = [g.external_id(i) for i in range(g.n)]
    with open(d / "edges.tsv", "w", newline="") as fh:
        for u, v in g.edge_array():
            fh.write(f"{ids[u]}\t{ids[v]}\n")
    with open(d / "attrs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ATTR_HEADER)
        for i in range(g.n):
            w.writerow([ids[i], *g.attributes[i].tolist()])
    _write_labels(d / "labels.csv", ids, g.labels)
    if ground_truth is not None:
        _write_labels(d / "ground_truth.csv", ids, np.asarray(ground_truth))


def _write_labels(path, ids, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "label"])
        for i, lab in enumerate(labels.tolist()):
            if lab >= 0:
                w.writerow([ids[i], lab])


def read_labels(path, id_map: dict) -> dict:
    """labels.csv -> {dense index: label}.  Unknown node ids are an error."""
    out = {}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["node_id", "label"]:
            raise GraphError(f"{path}: expected header 'node_id,label', got {header}")
        for line_no, row in enumerate(r, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise GraphError(f"{path}:{line_no}: expected 2 fields, got {len(row)}")
            node, lab = row
            if node not in id_map:
                raise GraphError(f"{path}:{line_no}: unknown node id {node!r}")
            if lab not in ("0", "1"):
                raise GraphError(f"{path}:{line_no}: label must be 0 or 1, got {lab!r}")
            out[id_map[node]] = int(lab)
    return out


def read_dataset(directory, labels_file: str = "labels.csv") -> Graph:
    """Load the file triple.  Node order follows attrs.csv."""
    d = Path(directory)
    ids, rows = [], []
    with open(d / "attrs.csv", newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ATTR_HEADER:
            raise GraphError(f"{d / 'attrs.csv'}: bad header {header}")
        for line_no, row in enumerate(r, start=2):
            if not row:
                continue
            if len(row) != len(ATTR_HEADER):
                raise GraphError(f"attrs.csv:{line_no}: expected {len(ATTR_HEADER)} fields")
            if any(v not in ("0", "1") for v in row[1:]):
                raise GraphError(f"attrs.csv:{line_no}: attribute values must be 0/1")
            ids.append(row[0])
            rows.append([int(v) for v in row[1:]])
    id_map = {nid: i for i, nid in enumerate(ids)}
    if len(id_map) != len(ids):
        raise GraphError("attrs.csv: duplicate node ids")
    edges = []
    with open(d / "edges.tsv") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise GraphError(f"edges.tsv:{line_no}: expected 'u<TAB>v', got {line!r}")
            try:
                edges.append((id_map[parts[0]], id_map[parts[1]]))
            except KeyError as exc:
                raise GraphError(f"edges.tsv:{line_no}: unknown node id {exc.args[0]!r}") from None
    labels = {}
    if labels_file and (d / labels_file).exists():
        labels = read_labels(d / labels_file, id_map)
    identity = all(nid == str(i) for i, nid in enumerate(ids))
    attrs = np.array(rows, dtype=np.int8).reshape(len(ids), N_ATTRS)
    return build_graph(edges, len(ids), attrs, labels, None if identity else ids)
