"""Run the whole reproduction suite and write JSON and table reports.

    python scripts/reproduce_all.py --out results/
"""
import argparse
import sys
import time
from pathlib import Path

from qkdlab.experiments import SUITE, dumps_report, reproduce


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failed = []
    for name in SUITE:
        t0 = time.perf_counter()
        rep = reproduce(name, args.seed)
        (out / f"{name}.json").write_text(dumps_report(rep, "json"))
        table = dumps_report(rep, "table")
        (out / f"{name}.txt").write_text(table)
        sys.stdout.write(table + f"  ({time.perf_counter() - t0:.1f}s)\n\n")
        if not rep["passed"]:
            failed.append(name)
    print("experiments with failing rows:", ", ".join(failed) or "none")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
