"""Key rate against relay count for each transport pairing strategy.

Compares the measured rate with the derived asymptotic rate of
equal-pivot-bit pairing and with N/2.

    python scripts/rate_vs_relays.py --N 100000 --max-relays 8
"""
import argparse

from qkdlab.experiments import match_mode_rate
from qkdlab.network import ChannelSpec, run_session
from qkdlab.transport import TransportOptions, assemble_key

STRATEGIES = {
    "parity+pool+recover": TransportOptions(),
    "parity (strict duals)": TransportOptions.strict("parity"),
    "parity+pool": TransportOptions("parity", True, False),
    "equal pivot bits": TransportOptions.strict("match"),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, default=100_000)
    ap.add_argument("--max-relays", type=int, default=6)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    print(f"{'n':>2}  " + "  ".join(f"{k:>22}" for k in STRATEGIES) + f"  {'equal-bit oracle':>16}")
    for n in range(1, args.max_relays + 1):
        s = run_session(ChannelSpec.ideal(n), args.N, args.seed + n)
        rates = [assemble_key(s, opt).length / args.N for opt in STRATEGIES.values()]
        print(f"{n:>2}  " + "  ".join(f"{r:>22.4f}" for r in rates) + f"  {float(match_mode_rate(n)):>16.4f}")


if __name__ == "__main__":
    main()
