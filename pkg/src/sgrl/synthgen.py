"""Seeded desk-scale graphs with planted black-market motifs.

Each motif is one seller hub wired to its transaction, service and
camouflage accounts.  Fraudster buyers connect to every transaction and
service account of the motif; camouflage accounts also befriend two random
normal users.  Seller, transaction and service accounts are the positives.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .graph import N_ATTRS, Graph, build_graph
from .rng import stream


@dataclass(frozen=True)
class SynthConfig:
    n_normal: int = 1800
    n_motifs: int = 20
    n_transaction: int = 3
    n_service: int = 2
    n_camouflage: int = 2
    n_buyers: int = 2
    m: int = 3
    informative: tuple = (1, 3)
    p_informative_bma: float = 0.8
    p_informative_other: float = 0.1
    p_background_attr: float = 0.3
    observed_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        counts = ("n_normal", "n_motifs", "n_transaction", "n_service", "n_camouflage", "n_buyers", "m")
        for name in counts:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("p_informative_bma", "p_informative_other", "p_background_attr", "observed_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        inf = tuple(int(i) for i in self.informative)
        if len(set(inf)) != len(inf) or any(not 0 <= i < N_ATTRS for i in inf):
            raise ValueError(f"informative indices must be distinct values in [0, 7), got {inf}")
        object.__setattr__(self, "informative", inf)

    @property
    def motif_size(self) -> int:
        return 1 + self.n_transaction + self.n_service + self.n_camouflage + self.n_buyers

    @property
    def n_nodes(self) -> int:
        return self.n_normal + self.n_motifs * self.motif_size

    def with_(self, **kw) -> "SynthConfig":
        return replace(self, **kw)


def default_config() -> SynthConfig:
    return SynthConfig()


CONFIG_FIELDS = {f.name: f for f in fields(SynthConfig)}


@dataclass(frozen=True, eq=False)
class SynthData:
    """Generated graph (observed labels only), full ground truth, and roles."""

    graph: Graph
    truth: np.ndarray
    observed: np.ndarray
    roles: np.ndarray  # role code per node, see ROLES
    sellers: np.ndarray


ROLES = ("normal", "seller", "transaction", "service", "camouflage", "buyer")


def generate(cfg: SynthConfig) -> SynthData:
    rng = stream(cfg.seed, "synth", "structure")
    n0 = cfg.n_normal
    edges = []
    # uniform attachment: node t links to min(m, t) distinct earlier nodes
    for t in range(1, n0):
        k = min(cfg.m, t)
        for u in rng.choice(t, size=k, replace=False):
            edges.append((t, int(u)))

    n = cfg.n_nodes
    roles = np.zeros(n, dtype=np.int8)
    sellers = []
    nxt = n0
    for _ in range(cfg.n_motifs):
        seller = nxt
        nxt += 1
        trans = list(range(nxt, nxt + cfg.n_transaction))
        nxt += cfg.n_transaction
        serv = list(range(nxt, nxt + cfg.n_service))
        nxt += cfg.n_service
        camo = list(range(nxt, nxt + cfg.n_camouflage))
        nxt += cfg.n_camouflage
        buyers = list(range(nxt, nxt + cfg.n_buyers))
        nxt += cfg.n_buyers
        sellers.append(seller)
        roles[seller] = 1
        roles[trans] = 2
        roles[serv] = 3
        roles[camo] = 4
        roles[buyers] = 5
        edges += [(seller, v) for v in trans + serv + camo]
        edges += [(b, v) for b in buyers for v in trans + serv]
        for c in camo:
            k = min(2, n0)
            for u in rng.choice(n0, size=k, replace=False) if k else ():
                edges.append((c, int(u)))

    truth = np.isin(roles, (1, 2, 3)).astype(np.int8)

    arng = stream(cfg.seed, "synth", "attributes")
    attrs = (arng.random((n, N_ATTRS)) < cfg.p_background_attr).astype(np.int8)
    inf = list(cfg.informative)
    p_inf = np.where(truth[:, None] == 1, cfg.p_informative_bma, cfg.p_informative_other)
    attrs[:, inf] = (arng.random((n, len(inf))) < p_inf).astype(np.int8)

    lrng = stream(cfg.seed, "synth", "observed")
    observed = np.zeros(n, dtype=bool)
    for cls in (0, 1):
        members = np.flatnonzero(truth == cls)
        k = int(round(cfg.observed_fraction * len(members)))
        observed[np.sort(lrng.choice(members, size=k, replace=False))] = True
    labels = np.where(observed, truth, -1)

    g = build_graph(np.array(edges, dtype=np.int64).reshape(-1, 2), n, attrs, labels)
    return SynthData(g, truth, observed, roles, np.array(sellers, dtype=np.int64))
