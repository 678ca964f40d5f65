"""Command-line entry point: ``repsense synth|segment|train|evaluate|ablate``.

Every command writes a ``run_manifest.txt`` (key=value) next to its outputs
recording the command, the seed, the inputs and any overrides.  Output files
are written atomically.  Exit codes: 0 success, 1 data or runtime error,
2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Sequence

from repsense import __version__, classify, dsp, evalkit, synthgen
from repsense.errors import RepsenseError
from repsense.recording import (
    DEFAULT_COMMON_RATE,
    Session,
    _atomic_write,
    load_session,
    parse_key_values,
    write_session_dir,
)
from repsense.segmentation import SegmentationConfig, count_repetitions, segment

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2

_PROFILES = {p.value: p for p in synthgen.RateProfile}
_SEG_KEYS = {f.name: f.type for f in dataclasses.fields(SegmentationConfig)}


class UsageError(Exception):
    """Bad command-line input discovered after argument parsing."""


# --- argument types ---------------------------------------------------------------------


def _config_names(text: str) -> list[evalkit.ConfigName]:
    names = []
    for item in text.split(","):
        item = item.strip().upper()
        try:
            names.append(evalkit.ConfigName(item))
        except ValueError:
            valid = ",".join(n.value for n in evalkit.ConfigName)
            raise argparse.ArgumentTypeError(f"unknown config {item!r}; choose from {valid}") from None
    return names


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError("must lie in [0, 1)")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


# --- config overrides ------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class Overrides:
    segmentation: SegmentationConfig = SegmentationConfig()
    common_rate: float = DEFAULT_COMMON_RATE
    items: tuple[tuple[str, str], ...] = ()


def load_overrides(path: str | None) -> Overrides:
    """Parse an optional key=value file of segmentation and sampling overrides."""
    if path is None:
        return Overrides()
    try:
        kv = parse_key_values(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    except RepsenseError as exc:
        raise UsageError(f"config file {path}: {exc}") from None
    seg = {}
    rate = DEFAULT_COMMON_RATE
    for key, value in kv.items():
        try:
            if key == "common_rate":
                rate = float(value)
            elif key == "filter_mode":
                seg[key] = dsp.FilterMode(value)
            elif key == "initial_period":
                seg[key] = None if value in ("", "none") else float(value)
            elif key in ("filter_order", "min_frames"):
                seg[key] = int(value)
            elif key in _SEG_KEYS:
                seg[key] = float(value)
            else:
                raise UsageError(f"config file {path}: unknown key {key!r}")
        except ValueError:
            raise UsageError(f"config file {path}: bad value for {key!r}: {value!r}") from None
    try:
        config = SegmentationConfig(**seg)
        config.filter_spec(rate)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config file {path}: {exc}") from None
    return Overrides(config, rate, tuple(sorted(kv.items())))


# --- shared helpers --------------------------------------------------------------------------


def write_run_manifest(out: Path, command: str, args: argparse.Namespace, overrides: Overrides) -> None:
    lines = [
        f"command={command}",
        f"version={__version__}",
        f"seed={args.seed}",
        f"out={args.out}",
    ]
    for key in ("corpus", "athletes", "dropout", "rate_profile", "protocol", "configs", "cpu"):
        if hasattr(args, key):
            value = getattr(args, key)
            if key == "configs" and value is not None:
                value = ",".join(n.value for n in value)
            lines.append(f"{key}={value}")
    lines += [f"override.{k}={v}" for k, v in overrides.items]
    _atomic_write(out / "run_manifest.txt", "\n".join(lines) + "\n")


def _session_dirs(root: Path) -> list[Path]:
    base = root / "sessions" if (root / "sessions").is_dir() else root
    dirs = sorted(p for p in base.iterdir() if (p / "manifest.txt").is_file())
    if not dirs:
        raise RepsenseError(f"no session directories under {root}")
    return dirs


def load_corpus(args: argparse.Namespace, overrides: Overrides) -> list[Session]:
    """Sessions from ``--corpus`` or, without it, a freshly generated synthetic corpus."""
    if args.corpus is not None:
        root = Path(args.corpus)
        if not root.is_dir():
            raise RepsenseError(f"corpus directory {root} does not exist")
        return [load_session(d, overrides.common_rate) for d in _session_dirs(root)]
    corpus = synthgen.generate_corpus(
        args.athletes,
        seed=args.seed,
        dropout=args.dropout,
        rate_profile=_PROFILES[args.rate_profile],
        common_rate=overrides.common_rate,
    )
    return list(corpus.sessions)


def selected_configs(names: Sequence[evalkit.ConfigName], cpu: str) -> list[evalkit.SensorConfig]:
    variants = {"with": (True,), "without": (False,), "both": (True, False)}[cpu]
    out = []
    for name in names:
        if name is evalkit.ConfigName.CPU_ONLY:
            out.append(evalkit.SensorConfig(name, True))
            continue
        out.extend(evalkit.SensorConfig(name, v) for v in variants)
    return out


def report_name(report: evalkit.EvaluationReport) -> str:
    cfg = report.config
    return f"{report.protocol.value}_{cfg.name.value}_{'cpu' if cfg.include_cpu else 'nocpu'}.txt"


# --- commands ----------------------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace, overrides: Overrides) -> int:
    out = Path(args.out)
    spec = synthgen.CorpusSpec(
        n_athletes=args.athletes,
        seed=args.seed,
        dropout=args.dropout,
        rate_profile=_PROFILES[args.rate_profile],
    )
    truth_lines = []
    n_reps = 0
    for recordings, truth in synthgen.iter_corpus(spec):
        write_session_dir(
            out / "sessions" / truth.session_id,
            recordings,
            truth.session_id,
            truth.athlete_id,
            truth.label,
        )
        truth_lines.append(truth.format_lines())
        n_reps += len(truth.reps)
    _atomic_write(out / "ground_truth.csv", "".join(truth_lines))
    write_run_manifest(out, "synth", args, overrides)
    print(f"wrote {args.athletes * len(spec.labels)} sessions, {n_reps} repetitions to {out}")
    return EXIT_OK


def cmd_segment(args: argparse.Namespace, overrides: Overrides) -> int:
    out = Path(args.out)
    sessions = load_corpus(args, overrides)
    rows = ["session_id,exercise,sets,frames,anchor"]
    for session in sessions:
        result = segment(session, overrides.segmentation)
        counts = count_repetitions(result)
        _atomic_write(out / "segments" / f"{session.session_id}.txt", result.format_report())
        label = session.exercise.name if session.exercise is not None else "unlabeled"
        anchor = result.anchor_channel.name if result.anchor_channel is not None else "none"
        rows.append(f"{session.session_id},{label},{len(counts.per_set)},{counts.total},{anchor}")
    _atomic_write(out / "counts.csv", "\n".join(rows) + "\n")
    write_run_manifest(out, "segment", args, overrides)
    print(f"segmented {len(sessions)} sessions into {out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace, overrides: Overrides) -> int:
    out = Path(args.out)
    configs = selected_configs(args.configs, args.cpu)
    table = evalkit.frame_table(load_corpus(args, overrides), overrides.segmentation)
    restricted = [table.restrict(cfg) for cfg in configs]
    for cfg, (X, layout) in zip(configs, restricted):
        model = classify.fit(X, table.labels, layout)
        model.save(out / f"model_{cfg.name.value}_{'cpu' if cfg.include_cpu else 'nocpu'}.txt")
    write_run_manifest(out, "train", args, overrides)
    print(f"trained {len(configs)} models on {len(table)} frames")
    return EXIT_OK


def _write_reports(out: Path, reports: Sequence[evalkit.EvaluationReport]) -> None:
    for report in reports:
        _atomic_write(out / report_name(report), report.format())
    _atomic_write(out / "summary.csv", evalkit.summary_csv(reports))
    for report in reports:
        print(f"{report.config.label:>10} {report.protocol.value:>5} accuracy {report.overall_accuracy:.4f}")


def cmd_evaluate(args: argparse.Namespace, overrides: Overrides) -> int:
    out = Path(args.out)
    configs = selected_configs(args.configs, args.cpu)
    table = evalkit.frame_table(load_corpus(args, overrides), overrides.segmentation)
    restricted = [table.restrict(cfg) for cfg in configs]
    reports = []
    if args.protocol == "split":
        split = evalkit.split_80_20(table.labels, args.seed)
        for cfg, (X, layout) in zip(configs, restricted):
            reports.append(evalkit.evaluate_split(X, table.labels, layout, args.seed, cfg, split))
    else:
        train, _ = evalkit.split_80_20(table.labels, args.seed)
        labels = [table.labels[i] for i in train]
        for cfg, (X, layout) in zip(configs, restricted):
            reports.append(evalkit.cross_validate(X[train], labels, layout, 4, args.seed, cfg))
    _write_reports(out, reports)
    write_run_manifest(out, "evaluate", args, overrides)
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace, overrides: Overrides) -> int:
    out = Path(args.out)
    table = evalkit.frame_table(load_corpus(args, overrides), overrides.segmentation)
    reports = evalkit.run_ablation(table, seed=args.seed)
    _write_reports(out, reports)
    write_run_manifest(out, "ablate", args, overrides)
    return EXIT_OK


# --- parser --------------------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="key=value file with segmentation overrides")


def _add_corpus(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", help="directory written by 'synth'; omitted: generate one in memory")
    p.add_argument("--athletes", type=_positive_int, default=20)
    p.add_argument("--dropout", type=_fraction, default=0.0)
    p.add_argument("--rate-profile", choices=sorted(_PROFILES), default="lg")


def _add_configs(p: argparse.ArgumentParser, default: str) -> None:
    p.add_argument("--configs", type=_config_names, default=_config_names(default),
                   help="comma-separated sensor groups, e.g. ALL,TR,CPU_ONLY")
    cpu = p.add_mutually_exclusive_group()
    cpu.add_argument("--with-cpu", dest="cpu", action="store_const", const="with")
    cpu.add_argument("--without-cpu", dest="cpu", action="store_const", const="without")
    cpu.add_argument("--both", dest="cpu", action="store_const", const="both")
    p.set_defaults(cpu="with")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repsense", description="exercise recognition from body-worn IMUs")
    parser.add_argument("--version", action="version", version=f"repsense {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic corpus with ground truth")
    _add_common(p)
    p.add_argument("--athletes", type=_positive_int, default=20)
    p.add_argument("--dropout", type=_fraction, default=0.0)
    p.add_argument("--rate-profile", choices=sorted(_PROFILES), default="lg")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("segment", help="cut sessions into repetition frames")
    _add_common(p)
    _add_corpus(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", help="train one classifier per sensor config")
    _add_common(p)
    _add_corpus(p)
    _add_configs(p, "ALL")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate sensor configs under one protocol")
    _add_common(p)
    _add_corpus(p)
    _add_configs(p, "ALL")
    p.add_argument("--protocol", choices=[m.value for m in evalkit.Protocol], default="split")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="all 19 sensor configs on one shared split")
    _add_common(p)
    _add_corpus(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = load_overrides(args.config)
        return args.func(args, overrides)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"repsense: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RepsenseError, OSError, ValueError) as exc:
        print(f"repsense: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
