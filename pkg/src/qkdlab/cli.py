"""Command line entry point: ``qkdlab run|reproduce|ingest|report``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from qkdlab import experiments, logio
from qkdlab.config import ConfigError, load_config


def _emit(text: str, out: Path | None, filename: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / filename).write_text(text)
    sys.stdout.write(f"wrote {out / filename}\n")


def _ext(fmt: str) -> str:
    return "json" if fmt == "json" else "txt"


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = Path(args.out) / cfg.name if args.out else None
    report = experiments.run_scenario(cfg, out)
    text = experiments.dumps_report(report, args.format)
    if out is not None and args.format == "table":
        (out / "report.txt").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_reproduce(args) -> int:
    names = list(experiments.SUITE) if args.name == "all" else [args.name]
    unknown = [n for n in names if n not in experiments.SUITE]
    if unknown:
        raise SystemExit(f"unknown experiment {unknown[0]!r}; choose from {', '.join(experiments.SUITE)} or all")
    ok = True
    for name in names:
        rep = experiments.reproduce(name, args.seed)
        ok &= rep["passed"]
        text = experiments.dumps_report(rep, args.format)
        out = Path(args.out) if args.out else None
        _emit(text, out, f"{name}.{_ext(args.format)}")
    return 0 if ok else 1


def cmd_ingest(args) -> int:
    path = Path(args.path)
    files = sorted(path.glob("*.log")) if path.is_dir() else [path]
    sessions = [logio.ingest(p) for p in files]
    if args.out:
        store = logio.PartitionStore(args.out)
        for s in sessions:
            store.add(s)
    summary = [
        {"session": s.session_id, "relays": s.n, "N": s.N, "T": s.T, "participants": list(s.participants)}
        for s in sessions
    ]
    if args.format == "json":
        sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    else:
        for row in summary:
            sys.stdout.write(f"{row['session']}  relays={row['relays']}  N={row['N']}  T={row['T']}\n")
    return 0


def cmd_report(args) -> int:
    report = experiments.report_from_logs(Path(args.logs))
    text = experiments.dumps_report(report, args.format)
    _emit(text, Path(args.out) if args.out else None, f"report.{_ext(args.format)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the configured or pinned seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--format", choices=("json", "table"), default="table")

    parser = argparse.ArgumentParser(prog="qkdlab", description="Relay-chain QKD post-processing simulator")
    sub = parser.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("run", parents=[common], help="run a scenario config")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("reproduce", parents=[common], help="run a built-in experiment")
    p.add_argument("name", help=f"one of: {', '.join(experiments.SUITE)}, all")
    p.set_defaults(func=cmd_reproduce)
    p = sub.add_parser("ingest", parents=[common], help="validate session logs; with --out, add them to a partition store")
    p.add_argument("path")
    p.set_defaults(func=cmd_ingest)
    p = sub.add_parser("report", parents=[common], help="recompute a report from a run directory")
    p.add_argument("logs")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, logio.LogFormatError, FileNotFoundError) as exc:
        sys.stderr.write(f"qkdlab: error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
