"""Predicted against measured useful fraction for drop-out relays over p.

    python scripts/dropout_sweep.py --n 4 --N 200000
"""
import argparse
from fractions import Fraction

import numpy as np

from qkdlab.dropout import DropoutParams, predict_open, predict_useful
from qkdlab.network import ChannelSpec, run_session


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--N", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    print(f"{'p':>5} {'open pred':>10} {'open meas':>10} {'f pred':>10} {'f meas':>10}")
    for k in range(0, 11):
        p = Fraction(k, 10)
        params = DropoutParams(args.n, p)
        s = run_session(ChannelSpec.dropout(args.n, float(p)), args.N, args.seed + k)
        up = (~s.dropout[:, : s.N]).sum(axis=0)
        print(
            f"{float(p):>5.1f} {float(predict_open(params)):>10.5f} {np.mean(up >= args.n - 1):>10.5f} "
            f"{float(predict_useful(params)):>10.5f} {np.mean(up == args.n - 1):>10.5f}"
        )


if __name__ == "__main__":
    main()
