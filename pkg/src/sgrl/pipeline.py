"""Pretraining, checkpointing and detection.

Pretraining fits three representation encoders (self-supervised structural,
supervised structural, self-supervised attribute), freezes them, and then
trains the detection encoder on their concatenated outputs.  Each encoder
stops at the epoch before its holdout probe AUC first drops.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field, fields

import numpy as np

from .config import ConfigKeyError, build_dataclass, dataclass_items, format_value, parse_lines
from .contrastive import SS, SSS, representations, train_contrastive
from .encoder import (
    ConfigError,
    EncoderConfig,
    encode_rows,
    attribute_states,
    expected_shapes,
    ig_forward,
    ig_train,
)
from .gbdt import GbdtConfig, gbdt_fit, gbdt_predict
from .graph import N_ATTRS, Graph, precompute_subgraphs
from .metrics import auc
from .rng import stream
from .ssa import PseudoLabelSpec, replace_attributes, ssa_predict, train_ssa

MAGIC = b"SGRL"
FORMAT_VERSION = 1
SSA, DET = "SSA", "DET"
PARTS = (SSS, SS, SSA, DET)


@dataclass(frozen=True)
class PipelineConfig:
    f: int = 8
    f1: int = 32
    f_det: int = 64
    f1_det: int = 128
    k: int = 1
    rho: float = 0.5
    r_hat: float = 0.5
    max_epochs: int = 200
    det_epochs: int = 200
    lr: float = 3e-3
    det_lr: float = 1e-3
    probe_every: int = 10
    min_epochs: int = 30
    probe_holdout: float = 0.1
    seed: int = 0
    sgrl_sa: bool = False
    pseudo_labels: tuple = ()
    ssa_hide_in_neighbors: bool = False

    def __post_init__(self):
        for name in ("rho", "r_hat", "probe_holdout"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)")
        for name in ("f", "f1", "f_det", "f1_det", "k", "probe_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.f1 % 2:
            raise ConfigError("f1 must be even (the pseudo-label head halves it)")
        if self.max_epochs < 0 or self.det_epochs < 0 or self.min_epochs < 0:
            raise ConfigError("epoch counts must be >= 0")
        pl = tuple(int(x) for x in self.pseudo_labels)
        if pl:
            if len(pl) != 2:
                raise ConfigError("pseudo_labels takes exactly two attribute indices")
            try:
                PseudoLabelSpec(*sorted(pl))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        object.__setattr__(self, "pseudo_labels", tuple(sorted(pl)))

    @property
    def f2(self) -> int:
        return N_ATTRS * self.f

    @property
    def prefix_width(self) -> int:
        return self.f1 if self.sgrl_sa else 2 * self.f1

    @property
    def f2_det(self) -> int:
        return self.prefix_width + N_ATTRS * self.f_det

    @property
    def parts(self) -> tuple:
        return (SSS, SSA, DET) if self.sgrl_sa else PARTS

    def encoder_config(self, part: str) -> EncoderConfig:
        if part == DET:
            return EncoderConfig(self.f_det, self.f1_det, self.f2_det, rho=self.rho)
        return EncoderConfig(self.f, self.f1, rho=self.rho)

    def head(self, part: str):
        return {SSS: "disc", SS: "disc", SSA: "ssa", DET: "score"}[part]


# ------------------------------------------------------------ bundle


@dataclass(eq=False)
class CheckpointBundle:
    """Everything detection needs.  ``history`` is informational only and is
    neither serialized nor compared."""

    config: PipelineConfig
    encoders: dict
    spec: PseudoLabelSpec
    version: int = FORMAT_VERSION
    history: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, CheckpointBundle):
            return NotImplemented
        return to_bytes(self) == to_bytes(other)

    def checksum(self) -> str:
        return hashlib.sha256(to_bytes(self)).hexdigest()

    @property
    def has_detector(self) -> bool:
        return DET in self.encoders


# ------------------------------------------------------------ splits and probes


class ProbeError(ValueError):
    pass


def split_holdout(labels, fraction: float, seed: int):
    """Stratified (train, holdout) split of the labeled nodes."""
    labels = np.asarray(labels)
    rng = stream(seed, "holdout")
    train, hold = [], []
    for cls in (0, 1):
        members = np.flatnonzero(labels == cls)
        k = int(round(fraction * len(members)))
        if len(members) >= 2:
            k = min(max(k, 1), len(members) - 1)
        else:
            k = 0
        chosen = rng.permutation(members)
        hold.append(chosen[:k])
        train.append(chosen[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(hold))


def probe_auc(features, labels, train, holdout, gbdt_cfg: GbdtConfig | None = None, seed: int = 0) -> float:
    """Holdout AUC of a boosted-tree classifier fit on ``features[train]``."""
    labels = np.asarray(labels)
    yh = labels[holdout]
    if not ((yh == 1).any() and (yh == 0).any()):
        raise ProbeError("probe holdout needs both classes")
    X = np.asarray(features, dtype=np.float64)
    ens = gbdt_fit(X[train], labels[train], gbdt_cfg, eval_set=(X[holdout], yh), seed=seed)
    return auc(gbdt_predict(ens, X[holdout]), yh)


def _restrict(labels, rows):
    out = np.full(len(labels), -1, dtype=np.int8)
    out[rows] = labels[rows]
    return out


# ------------------------------------------------------------ pretrain


def pretrain(graph: Graph, config: PipelineConfig | None = None, gbdt_cfg: GbdtConfig | None = None, log=None):
    """Train all encoders in order and return a :class:`CheckpointBundle`."""
    cfg = config or PipelineConfig()
    say = log or (lambda msg: None)
    labels = np.asarray(graph.labels)
    has_labels = bool((labels == 1).any() and (labels == 0).any())
    if not has_labels and not cfg.sgrl_sa:
        raise ConfigError("pretraining needs labeled nodes of both classes (or sgrl_sa=true)")
    if not has_labels and not cfg.pseudo_labels:
        raise ConfigError("without labels the pseudo-label attributes must be set explicitly")
    seed = cfg.seed
    train = hold = None
    if has_labels:
        train, hold = split_holdout(labels, cfg.probe_holdout, seed)
        if not ((labels[hold] == 1).any() and (labels[hold] == 0).any()):
            raise ConfigError("too few labels to hold out a probe set with both classes")
    index = precompute_subgraphs(graph, cfg.k)
    attrs = graph.attributes.astype(np.float64)
    enc = cfg.encoder_config(SSS)
    encoders, history = {}, {}
    common = dict(probe_every=cfg.probe_every, min_epochs=cfg.min_epochs)

    def rep_probe(params, epoch):
        H = representations(params, graph)
        return probe_auc(np.hstack([H, attrs]), labels, train, hold, gbdt_cfg, seed)

    probe = rep_probe if has_labels else None
    say("training SSS")
    encoders[SSS], history[SSS] = train_contrastive(
        SSS, graph, index, enc, seed, epochs=cfg.max_epochs, lr=cfg.lr, probe=probe, **common
    )
    if not cfg.sgrl_sa:
        say("training SS")
        encoders[SS], history[SS] = train_contrastive(
            SS, graph, index, enc, seed, labels=_restrict(labels, train),
            epochs=cfg.max_epochs, lr=cfg.lr, probe=probe, **common,
        )

    spec = PseudoLabelSpec(*cfg.pseudo_labels) if cfg.pseudo_labels else None

    def ssa_probe(params, epoch):
        a2 = replace_attributes(graph.attributes, spec_box[0], ssa_predict(params, graph, spec_box[0], hide_in_neighbors=cfg.ssa_hide_in_neighbors), cfg.r_hat)
        return probe_auc(a2, labels, train, hold, gbdt_cfg, seed)

    spec_box = [spec]
    if spec is None:
        from .ssa import importance_spec

        spec = importance_spec(
            graph.attributes[train], labels[train], gbdt_cfg, seed,
            eval_set=(graph.attributes[hold], labels[hold]),
        )
        spec_box[0] = spec
    say(f"training SSA on pseudo labels {spec.indices}")
    encoders[SSA], _, history[SSA] = train_ssa(
        graph, enc, seed, spec=spec, epochs=cfg.max_epochs, lr=cfg.lr,
        probe=ssa_probe if has_labels else None, hide_in_neighbors=cfg.ssa_hide_in_neighbors, **common,
    )
    bundle = CheckpointBundle(cfg, encoders, spec, history=history)
    if not has_labels:
        return bundle

    say("training detector")
    prefix, a2 = detection_features(bundle, graph)

    def det_probe(params, epoch):
        _, p = ig_forward(params, graph, prefix=prefix, attrs=a2)
        return auc(p[hold], labels[hold])

    encoders[DET], history[DET] = ig_train(
        graph, train, cfg.encoder_config(DET), seed, epochs=cfg.det_epochs, lr=cfg.det_lr,
        prefix=prefix, probe=det_probe, attrs=a2, name=DET, **common,
    )
    return bundle


# ------------------------------------------------------------ detection


def _check_graph(bundle: CheckpointBundle, graph: Graph):
    width = graph.attributes.shape[1]
    table_rows = bundle.encoders[SSS]["table"].shape[0]
    if width != table_rows:
        raise ConfigError(f"graph has {width} attributes per node but the model expects {table_rows}")


def detection_features(bundle: CheckpointBundle, graph: Graph):
    """(prefix, replaced attributes): the frozen encoders' contribution."""
    _check_graph(bundle, graph)
    parts = [representations(bundle.encoders[SSS], graph)]
    if SS in bundle.encoders:
        parts.append(representations(bundle.encoders[SS], graph))
    prefix = np.hstack(parts)
    r = ssa_predict(bundle.encoders[SSA], graph, bundle.spec, hide_in_neighbors=bundle.config.ssa_hide_in_neighbors)
    a2 = replace_attributes(graph.attributes, bundle.spec, r, bundle.config.r_hat)
    return prefix, a2


def build_detection_input(bundle: CheckpointBundle, graph: Graph, i: int) -> np.ndarray:
    """Initial representation of node ``i`` for the detection encoder."""
    graph._check_node(i)
    if not bundle.has_detector:
        raise ConfigError("this checkpoint has no detection encoder (trained without labels)")
    prefix, a2 = detection_features(bundle, graph)
    table = bundle.encoders[DET]["table"]
    return np.concatenate([prefix[i], encode_rows(table, attribute_states(a2[i : i + 1]))[0]])


@dataclass(frozen=True, eq=False)
class ScoreReport:
    node_ids: tuple
    scores: np.ndarray
    flags: np.ndarray
    rho: float

    def to_tsv(self) -> str:
        out = io.StringIO()
        out.write("node_id\tscore\tflag\n")
        for nid, s, f in zip(self.node_ids, self.scores.tolist(), self.flags.tolist()):
            out.write(f"{nid}\t{s:.6f}\t{int(f)}\n")
        return out.getvalue()


def detect(bundle: CheckpointBundle, graph: Graph, rho: float | None = None) -> ScoreReport:
    """Score every node of ``graph``; flags are ``score > rho``."""
    if not bundle.has_detector:
        raise ConfigError("this checkpoint has no detection encoder (trained without labels)")
    rho = bundle.config.rho if rho is None else rho
    if not 0.0 < rho < 1.0:
        raise ConfigError(f"threshold must lie in (0, 1), got {rho}")
    prefix, a2 = detection_features(bundle, graph)
    _, p = ig_forward(bundle.encoders[DET], graph, prefix=prefix, attrs=a2)
    p = np.asarray(p, dtype=np.float64)
    ids = tuple(graph.external_id(i) for i in range(graph.n))
    return ScoreReport(ids, p, p > rho, rho)


# ------------------------------------------------------------ baselines


def ig_only_scores(graph: Graph, config: PipelineConfig | None = None) -> np.ndarray:
    """Single encoder at detection width, trained on the same labels and
    probe split as the full pipeline."""
    cfg = config or PipelineConfig()
    labels = np.asarray(graph.labels)
    train, hold = split_holdout(labels, cfg.probe_holdout, cfg.seed)
    ecfg = EncoderConfig(cfg.f_det, cfg.f1_det, rho=cfg.rho)

    def probe(params, epoch):
        _, p = ig_forward(params, graph)
        return auc(p[hold], labels[hold])

    params, _ = ig_train(
        graph, train, ecfg, cfg.seed, epochs=cfg.det_epochs, lr=cfg.det_lr, probe=probe,
        probe_every=cfg.probe_every, min_epochs=cfg.min_epochs, name="IG-only",
    )
    _, p = ig_forward(params, graph)
    return np.asarray(p, dtype=np.float64)


def attribute_gbdt_scores(graph: Graph, config: PipelineConfig | None = None, gbdt_cfg=None) -> np.ndarray:
    cfg = config or PipelineConfig()
    labels = np.asarray(graph.labels)
    train, hold = split_holdout(labels, cfg.probe_holdout, cfg.seed)
    X = graph.attributes.astype(np.float64)
    ens = gbdt_fit(X[train], labels[train], gbdt_cfg, eval_set=(X[hold], labels[hold]), seed=cfg.seed)
    return gbdt_predict(ens, X)


# ------------------------------------------------------------ checkpoint file


class CheckpointError(ValueError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedTensorError(CheckpointError):
    pass


class ShapeConfigError(CheckpointError):
    pass


def _config_lines(b: CheckpointBundle) -> list:
    items = dataclass_items(b.config, "pipeline")
    items += [
        ("spec.idx_a", str(b.spec.idx_a)),
        ("spec.idx_b", str(b.spec.idx_b)),
        ("spec.importance", format_value(b.spec.importance)),
        ("bundle.parts", ",".join(p for p in PARTS if p in b.encoders)),
    ]
    return [f"{k}={v}" for k, v in items]


def _tensors(b: CheckpointBundle):
    for part in PARTS:
        if part in b.encoders:
            for key in sorted(b.encoders[part]):
                yield f"{part}/{key}", b.encoders[part][key]


def to_bytes(b: CheckpointBundle) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", b.version))
    cfg = "\n".join(_config_lines(b)).encode("utf-8")
    out.write(struct.pack("<I", len(cfg)))
    out.write(cfg)
    tensors = list(_tensors(b))
    out.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        out.write(struct.pack("<H", len(raw)))
        out.write(raw)
        out.write(struct.pack("<B", arr.ndim))
        out.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.write(arr.tobytes())
    return out.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n, what, exc=CheckpointError):
        if self.pos + n > len(self.data):
            raise exc(f"file ends inside {what} (needs {n} bytes at offset {self.pos})")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what, exc=CheckpointError):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what, exc))


def _bundle_from_config(lines: dict):
    pipe = {k: v for k, v in lines.items() if k.startswith("pipeline.")}
    try:
        cfg = build_dataclass(PipelineConfig, pipe, "pipeline")
        imp = tuple(float(x) for x in lines.get("spec.importance", "").split(",") if x)
        spec = PseudoLabelSpec(int(lines["spec.idx_a"]), int(lines["spec.idx_b"]), imp)
        parts = tuple(p for p in lines["bundle.parts"].split(",") if p)
    except (KeyError, ValueError, ConfigKeyError) as exc:
        raise CheckpointError(f"unreadable config block: {exc}") from None
    return cfg, spec, parts


def from_bytes(data: bytes) -> CheckpointBundle:
    r = _Reader(data)
    if r.take(4, "magic", BadMagicError) != MAGIC:
        raise BadMagicError("bad magic: not a checkpoint file")
    (version,) = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, this build reads {FORMAT_VERSION}")
    (n_cfg,) = r.unpack("<I", "config length")
    try:
        text = r.take(n_cfg, "config block").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"config block is not UTF-8: {exc}") from None
    cfg, spec, parts = _bundle_from_config(parse_lines(text.splitlines(), "checkpoint"))
    (count,) = r.unpack("<I", "tensor count")
    encoders = {p: {} for p in parts}
    for t in range(count):
        what = f"tensor #{t}"
        (n_name,) = r.unpack("<H", what, TruncatedTensorError)
        name = r.take(n_name, what, TruncatedTensorError).decode("utf-8")
        (rank,) = r.unpack("<B", what, TruncatedTensorError)
        dims = r.unpack(f"<{rank}I", what, TruncatedTensorError)
        size = int(np.prod(dims, dtype=np.int64))
        payload = r.take(4 * size, f"tensor {name!r}", TruncatedTensorError)
        part, _, key = name.partition("/")
        if part not in encoders:
            raise ShapeConfigError(f"tensor {name!r} belongs to no encoder listed in the config")
        encoders[part][key] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after the last tensor")
    _check_shapes(cfg, encoders)
    return CheckpointBundle(cfg, encoders, spec, version)


def _expected(cfg: PipelineConfig, part: str) -> dict:
    ecfg = cfg.encoder_config(part)
    head = cfg.head(part)
    shapes = expected_shapes(ecfg, head if head != "disc" else None)
    if head == "disc":
        f1 = ecfg.f1
        shapes.update({"d1.W": (f1, 2 * f1), "d1.b": (f1,), "d2.w": (f1,), "d2.b": (1,)})
    return shapes


def _check_shapes(cfg: PipelineConfig, encoders: dict):
    need = set(cfg.parts) - {DET}
    if not need <= set(encoders):
        raise ShapeConfigError(f"checkpoint lacks encoders {sorted(need - set(encoders))}")
    for part, params in encoders.items():
        exp = _expected(cfg, part)
        if set(exp) != set(params):
            missing, extra = sorted(set(exp) - set(params)), sorted(set(params) - set(exp))
            raise ShapeConfigError(f"{part}: missing tensors {missing}, unexpected {extra}")
        for key, shape in exp.items():
            if tuple(params[key].shape) != tuple(shape):
                raise ShapeConfigError(
                    f"{part}/{key} has shape {params[key].shape}, config implies {tuple(shape)}"
                )


def save_checkpoint(bundle: CheckpointBundle, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(bundle))


def load_checkpoint(path) -> CheckpointBundle:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def bundle_fields() -> list:
    return [f.name for f in fields(PipelineConfig)]
