"""Command-line entry point: ``sgrl <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 failed check.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigKeyError,
    build_dataclass,
    dataclass_items,
    parse_lines,
    split_sections,
)
from .encoder import ConfigError, param_count
from .gbdt import GbdtConfig, GbdtError
from .graph import GraphError, read_dataset, read_labels, write_dataset
from .gradcheck import TOLERANCE, check_all
from .metrics import MetricError, evaluate, format_lines, format_table
from .pipeline import CheckpointError, PipelineConfig, detect, load_checkpoint, pretrain, save_checkpoint
from .synthgen import SynthConfig, generate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3
SECTIONS = {"pipeline": PipelineConfig, "synth": SynthConfig, "gbdt": GbdtConfig}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ------------------------------------------------------------ configuration


def load_run_config(path=None, seed=None) -> dict:
    """Parsed ``{"pipeline": PipelineConfig, "synth": ..., "gbdt": ...}``."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
        values = parse_lines(text.splitlines(), str(path))
    groups = split_sections(values, SECTIONS)
    out = {name: build_dataclass(cls, groups[name], name) for name, cls in SECTIONS.items()}
    if seed is not None:
        out["pipeline"] = dataclasses.replace(out["pipeline"], seed=seed)
        out["synth"] = dataclasses.replace(out["synth"], seed=seed)
    return out


def config_echo(cfgs: dict) -> str:
    lines = []
    for name, obj in cfgs.items():
        lines += [f"{k}={v}" for k, v in dataclass_items(obj, name)]
    return "\n".join(lines) + "\n"


def _keys_help() -> str:
    lines = ["configuration keys (key=value lines, '#' starts a comment):"]
    for name, cls in SECTIONS.items():
        for k, v in dataclass_items(cls(), name):
            lines.append(f"  {k} (default {v or 'unset'})")
    return "\n".join(lines)


# ------------------------------------------------------------ commands


def cmd_generate(args) -> int:
    cfgs = load_run_config(args.config, args.seed)
    data = generate(cfgs["synth"])
    try:
        write_dataset(data.graph, args.out, ground_truth=data.truth)
        (Path(args.out) / "run_config.txt").write_text(config_echo({"synth": cfgs["synth"]}))
    except OSError as exc:
        raise DataError(f"cannot write dataset: {exc}") from None
    print(f"wrote {data.graph.n} nodes, {data.graph.n_edges} edges to {args.out}")
    return EXIT_OK


def _read_graph(directory):
    d = Path(directory)
    for name in ("edges.tsv", "attrs.csv"):
        if not (d / name).is_file():
            raise DataError(f"missing {d / name}")
    return read_dataset(d)


def cmd_pretrain(args) -> int:
    cfgs = load_run_config(args.config, args.seed)
    graph = _read_graph(args.data)
    log = (lambda m: print(m, file=sys.stderr)) if args.verbose else None
    bundle = pretrain(graph, cfgs["pipeline"], cfgs["gbdt"], log=log)
    out = Path(args.out)
    try:
        save_checkpoint(bundle, out)
        with open(out.parent / "probe_history.tsv", "w") as fh:
            fh.write("encoder\tepoch\tauc\tselected\n")
            for part, hist in bundle.history.items():
                for epoch, value in hist.probes:
                    fh.write(f"{part}\t{epoch}\t{value:.6f}\t{int(epoch == hist.stopped_epoch)}\n")
        (out.parent / "run_config.txt").write_text(config_echo({k: cfgs[k] for k in ("pipeline", "gbdt")}))
    except OSError as exc:
        raise DataError(f"cannot write outputs: {exc}") from None
    print(f"checkpoint {out} ({bundle.checksum()[:16]}), pseudo labels {bundle.spec.indices}")
    return EXIT_OK


def cmd_detect(args) -> int:
    bundle = load_checkpoint(args.model)
    graph = _read_graph(args.data)
    report = detect(bundle, graph, args.threshold)
    try:
        Path(args.out).write_text(report.to_tsv())
    except OSError as exc:
        raise DataError(f"cannot write scores: {exc}") from None
    print(f"scored {graph.n} nodes, flagged {int(report.flags.sum())} at threshold {report.rho}")
    return EXIT_OK


def read_scores(path):
    ids, scores = [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header.split("\t")[:2] != ["node_id", "score"]:
            raise DataError(f"{path}: expected a 'node_id<TAB>score' header, got {header!r}")
        for n, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            try:
                ids.append(parts[0])
                scores.append(float(parts[1]))
            except (IndexError, ValueError):
                raise DataError(f"{path}:{n}: malformed score row {line!r}") from None
    return ids, np.asarray(scores)


def cmd_eval(args) -> int:
    ids, scores = read_scores(args.scores)
    id_map = {nid: i for i, nid in enumerate(ids)}
    labels = read_labels(args.labels, id_map)
    if not labels:
        raise DataError(f"{args.labels}: no labeled nodes")
    rows = np.array(sorted(labels))
    y = np.array([labels[i] for i in rows])
    report = evaluate(scores[rows], y, args.threshold)
    print(format_lines(report) if args.format == "lines" else format_table(report))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    worst = 0.0
    for seed in range(args.seed, args.seed + args.seeds):
        for loss, err in check_all(seed, n=args.nodes).items():
            worst = max(worst, err)
            print(f"seed={seed} loss={loss} max_rel_err={err:.3e}")
    ok = worst < TOLERANCE
    print(f"max relative error {worst:.3e}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_paramcount(args) -> int:
    if min(args.l, args.f1, args.f2) < 1:
        raise UsageError("dimensions must be positive")
    print(param_count(args.l, args.f1, args.f2))
    return EXIT_OK


# ------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="sgrl",
        description="Black-market account detection with self-supervised graph encoders.",
        epilog=_keys_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, description=help_, epilog=_keys_help(),
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(fn=fn)
        return sp

    g = add("generate", cmd_generate, "write a synthetic dataset with planted motifs")
    g.add_argument("--config", help="key=value configuration file")
    g.add_argument("--seed", type=int, help="master seed (overrides synth.seed)")
    g.add_argument("--out", required=True, help="output directory")

    t = add("pretrain", cmd_pretrain, "train all encoders and write a checkpoint")
    t.add_argument("--data", required=True, help="dataset directory")
    t.add_argument("--config", help="key=value configuration file")
    t.add_argument("--seed", type=int, help="master seed (overrides pipeline.seed)")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    d = add("detect", cmd_detect, "score every node of a dataset")
    d.add_argument("--model", required=True, help="checkpoint path")
    d.add_argument("--data", required=True, help="dataset directory")
    d.add_argument("--threshold", type=float, default=None, help="flag threshold (default: the checkpoint's rho)")
    d.add_argument("--out", required=True, help="scores.tsv path")

    e = add("eval", cmd_eval, "metrics of a score file against labels")
    e.add_argument("--scores", required=True)
    e.add_argument("--labels", required=True, help="labels.csv or ground_truth.csv")
    e.add_argument("--threshold", type=float, default=0.5)
    e.add_argument("--format", choices=("table", "lines"), default="table")

    c = add("gradcheck", cmd_gradcheck, "finite-difference check of every training loss")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    c.add_argument("--nodes", type=int, default=10)

    k = add("paramcount", cmd_paramcount, "closed-form encoder model size")
    k.add_argument("--l", type=int, default=2)
    k.add_argument("--f1", type=int, default=32)
    k.add_argument("--f2", type=int, default=56)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"sgrl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigKeyError, GbdtError) as exc:
        print(f"sgrl: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, GraphError, CheckpointError, MetricError, ConfigError, FileNotFoundError) as exc:
        print(f"sgrl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
