"""Asynchronous key establishment across recorded sessions.

Records several short sessions into a partition store, then assembles one
key from all of them and compares the rate with a single long session.

    python scripts/async_sessions.py --store /tmp/store --sessions 4 --N 25000
"""
import argparse
import shutil
from pathlib import Path

from qkdlab.logio import PartitionStore
from qkdlab.network import ChannelSpec, run_session
from qkdlab.rng import derive_seed
from qkdlab.transport import assemble_key, async_assemble


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--store", default="async-store")
    ap.add_argument("--sessions", type=int, default=4)
    ap.add_argument("--N", type=int, default=25_000)
    ap.add_argument("--relays", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    root = Path(args.store)
    if root.exists():
        shutil.rmtree(root)
    store = PartitionStore(root)
    spec = ChannelSpec.ideal(args.relays)
    for k in range(args.sessions):
        store.add(run_session(spec, args.N, derive_seed(args.seed, "async", k), session_id=f"s{k + 1}"))
    asm = async_assemble(store)
    cross = sum(p.t1.session != p.t2.session for p in asm.pairs)
    total = args.sessions * args.N
    single = assemble_key(run_session(spec, total, derive_seed(args.seed, "single")))
    print(f"store: {len(store)} sessions, {total} slots")
    print(f"async key: {asm.length} bits, rate {asm.length / total:.4f}, {cross} pairs span two sessions")
    print(f"single session: rate {single.length / total:.4f}")
    print(f"keys equal: {asm.alice == asm.bob}")


if __name__ == "__main__":
    main()
