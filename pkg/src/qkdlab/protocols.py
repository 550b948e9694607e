"""Classical post-processing variants over recorded (t, c, b) logs.

* standard BB84 sifting with sampled error estimation
* bit revelation: bits are published and basis bits become the key
* duplex checking without public bit comparison, by parity tuples
* per-slot random choice between the first two
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from qkdlab.network import ChannelSpec, SessionData, SlotRecord, run_session
from qkdlab.rng import derive_seed
from qkdlab.transport import KeyShare

DEFAULT_SAMPLE_FRACTION = 0.1


class LogArrays(NamedTuple):
    t: np.ndarray
    c: np.ndarray
    b: np.ndarray


def log_arrays(session: SessionData, participant: str) -> LogArrays:
    k = session.index(participant)
    idx = np.flatnonzero(session.present[k])
    return LogArrays(idx + 1, session.bases[k, idx], session.bits[k, idx])


def _as_arrays(log) -> LogArrays:
    if isinstance(log, LogArrays):
        return log
    recs: Sequence[SlotRecord] = list(log)
    return LogArrays(
        np.array([r.t for r in recs], dtype=np.int64),
        np.array([int(r.c) for r in recs], dtype=np.int8),
        np.array([int(r.b) for r in recs], dtype=np.int8),
    )


def _common(alice, bob):
    a, b = _as_arrays(alice), _as_arrays(bob)
    t, ia, ib = np.intersect1d(a.t, b.t, assume_unique=True, return_indices=True)
    return t, a.c[ia], a.b[ia], b.c[ib], b.b[ib]


@dataclass(frozen=True, eq=False)
class SiftedKey:
    """Key material kept by one party.

    ``slots`` holds the key slot ids (renumbered for bit revelation, with the
    original ids in ``origin``); ``sample_slots`` were published for error
    estimation and are disjoint from the key.
    """

    slots: np.ndarray
    bits: np.ndarray
    qber_estimate: float
    sample_slots: np.ndarray
    origin: np.ndarray
    kept: int
    qber_defined: bool = True

    def pairs(self) -> list[tuple[int, int]]:
        return [(int(t), int(b)) for t, b in zip(self.slots, self.bits)]

    def __len__(self) -> int:
        return int(self.bits.shape[0])

    def share(self, **provenance) -> KeyShare:
        return KeyShare(self.bits, provenance)


def _sample_and_split(
    t: np.ndarray,
    a_key: np.ndarray,
    b_key: np.ndarray,
    sample_fraction: float,
    rng: np.random.Generator,
    renumber: bool,
) -> tuple[SiftedKey, SiftedKey]:
    if not 0.0 <= sample_fraction <= 1.0:
        raise ValueError("sample_fraction must be in [0, 1]")
    kept = t.size
    m = int(round(sample_fraction * kept))
    sample_idx = np.sort(rng.choice(kept, size=m, replace=False)) if m else np.zeros(0, dtype=np.int64)
    mask = np.ones(kept, dtype=bool)
    mask[sample_idx] = False
    if m:
        qber, defined = float(np.mean(a_key[sample_idx] != b_key[sample_idx])), True
    else:
        qber, defined = float("nan"), False
    origin = t[mask]
    slots = np.arange(1, origin.size + 1) if renumber else origin
    sample_slots = t[sample_idx]

    def make(bits):
        return SiftedKey(slots, bits[mask].astype(np.int8), qber, sample_slots, origin, kept, defined)

    return make(a_key), make(b_key)


def sift_bb84(
    alice_log, bob_log, sample_fraction: float = DEFAULT_SAMPLE_FRACTION, rng: np.random.Generator = None
) -> tuple[SiftedKey, SiftedKey]:
    """Keep matching-basis slots and estimate the error rate on a sample."""
    t, ca, ba, cb, bb = _common(alice_log, bob_log)
    keep = ca == cb
    return _sample_and_split(t[keep], ba[keep], bb[keep], sample_fraction, rng, renumber=False)


def bit_revelation(
    alice_log, bob_log, sample_fraction: float = DEFAULT_SAMPLE_FRACTION, rng: np.random.Generator = None
) -> tuple[SiftedKey, SiftedKey]:
    """Publish bits, keep slots where they differ, use basis bits as key.

    On a kept slot Bob knows Alice's basis was the complement of his, so
    Alice's key bit is ``c_A`` and Bob's is ``1 - c_B``. Surviving slots are
    renumbered 1..k after sampling.
    """
    t, ca, ba, cb, bb = _common(alice_log, bob_log)
    keep = ba != bb
    return _sample_and_split(t[keep], ca[keep], (1 - cb[keep]).astype(np.int8), sample_fraction, rng, renumber=True)


# --- duplex ---------------------------------------------------------------


class Pairing(str, Enum):
    SEQUENTIAL = "SEQUENTIAL"
    MATCH_EQUAL = "MATCH_EQUAL"


class ParityTuple(NamedTuple):
    t: int
    t_tilde: int
    f: int


@dataclass(frozen=True, eq=False)
class DuplexLogs:
    """Interleaved two-way transmission; slot ``t`` is at index ``t - 1``.

    Odd slots: Alice sends ``(alice_c, alice_b)`` and Bob measures
    ``(bob_c, bob_b)``. Even slots: Bob sends and Alice measures, with the
    same arrays holding each party's own basis and bit. ``eve_bits``
    optionally holds an eavesdropper's measured bit per slot.
    """

    alice_c: np.ndarray
    alice_b: np.ndarray
    bob_c: np.ndarray
    bob_b: np.ndarray
    eve_bits: np.ndarray | None = None
    eve_present: np.ndarray | None = None

    @property
    def T(self) -> int:
        return int(self.alice_c.shape[0])

    @classmethod
    def from_table(cls, rows: Sequence[tuple[str, int | None, str, int | None]]) -> "DuplexLogs":
        """Rows of ``(alice basis, alice bit, bob basis, bob bit)`` per slot.

        Bits may be None where the bases differ (they are never used).
        """
        conv = lambda s: "XY".index(s) if isinstance(s, str) else int(s)
        arr = lambda xs: np.array(xs, dtype=np.int8)
        return cls(
            arr([conv(r[0]) for r in rows]),
            arr([r[1] or 0 for r in rows]),
            arr([conv(r[2]) for r in rows]),
            arr([r[3] or 0 for r in rows]),
        )

    @classmethod
    def from_sessions(cls, ab: SessionData, ba: SessionData) -> "DuplexLogs":
        """Merge an A->B session (odd slots) with a B->A session (even slots).

        Both are direct links; in ``ba`` the sender 'A' is Bob.
        """
        if ab.n != 0 or ba.n != 0:
            raise ValueError("duplex sessions must be direct links")
        T = ab.N + ba.N
        if not ab.N - 1 <= ba.N <= ab.N:
            raise ValueError("odd/even session sizes must interleave")
        out = {k: np.zeros(T, dtype=np.int8) for k in ("ac", "ab", "bc", "bb")}
        odd = slice(0, T, 2)
        even = slice(1, T, 2)
        for sess, sl, sender, receiver in ((ab, odd, "a", "b"), (ba, even, "b", "a")):
            k = sess.N
            out[sender + "c"][sl] = sess.bases[0, :k]
            out[sender + "b"][sl] = sess.bits[0, :k]
            out[receiver + "c"][sl] = sess.bases[1, :k]
            out[receiver + "b"][sl] = sess.bits[1, :k]
        eve_bits = eve_present = None
        if "E0" in ab.eve or "E0" in ba.eve:
            eve_bits = np.zeros(T, dtype=np.int8)
            eve_present = np.zeros(T, dtype=bool)
            for sess, sl in ((ab, odd), (ba, even)):
                if "E0" in sess.eve:
                    eve_bits[sl] = sess.eve["E0"].bits[: sess.N]
                    eve_present[sl] = sess.eve["E0"].present[: sess.N]
        return cls(out["ac"], out["ab"], out["bc"], out["bb"], eve_bits, eve_present)


def run_duplex(T: int, seed: int, eve: bool = False) -> DuplexLogs:
    """Simulate ``T`` interleaved slots over a direct link, Eve on both ways."""
    if T < 2:
        raise ValueError("a duplex run needs at least two slots")
    spec = ChannelSpec.ideal(0, eve_links=[0] if eve else [])
    ab = run_session(spec, (T + 1) // 2, derive_seed(seed, "duplex-ab"), session_id="ab")
    ba = run_session(spec, T // 2, derive_seed(seed, "duplex-ba"), session_id="ba")
    return DuplexLogs.from_sessions(ab, ba)


def duplex_filter(duplex: DuplexLogs) -> tuple[list[int], list[int], list[int]]:
    """Split slots into (mismatched bases, remaining odd, remaining even)."""
    t = np.arange(1, duplex.T + 1)
    mismatch = duplex.alice_c != duplex.bob_c
    odd = t % 2 == 1
    set1 = t[mismatch].tolist()
    set2 = t[~mismatch & odd].tolist()
    set3 = t[~mismatch & ~odd].tolist()
    return set1, set2, set3


@dataclass
class DuplexResult:
    tuples: list[ParityTuple]
    alice_failures: int
    alice_key: KeyShare
    bob_key: KeyShare
    stats: dict = field(default_factory=dict)

    @property
    def failure_rate(self) -> float:
        return self.alice_failures / len(self.tuples) if self.tuples else float("nan")

    @property
    def key(self) -> tuple[KeyShare, KeyShare]:
        return self.alice_key, self.bob_key


def duplex_parity(duplex: DuplexLogs, pairing: Pairing | str = Pairing.SEQUENTIAL) -> DuplexResult:
    """Bob pairs set-2 and set-3 slots and announces ``(t, t~, f)``.

    Alice checks ``b_A(t) == b~_A(t~) xor f``. Pairs that pass give one key
    bit each, ``b`` from the odd slot (the (b, b~) -> b rule).
    """
    pairing = Pairing(pairing)
    _, set2, set3 = duplex_filter(duplex)
    bb, ab = duplex.bob_b, duplex.alice_b
    tuples: list[ParityTuple] = []
    if pairing is Pairing.SEQUENTIAL:
        for t, tt in zip(set2, set3):
            tuples.append(ParityTuple(t, tt, int(bb[t - 1] ^ bb[tt - 1])))
        leftovers = abs(len(set2) - len(set3))
    else:
        waiting = {0: deque(), 1: deque()}
        for tt in set3:
            waiting[int(bb[tt - 1])].append(tt)
        used = 0
        for t in set2:
            q = waiting[int(bb[t - 1])]
            if q:
                tuples.append(ParityTuple(t, q.popleft(), 0))
                used += 1
        leftovers = len(set2) + len(set3) - 2 * used

    ok = [ab[t - 1] == (ab[tt - 1] ^ f) for t, tt, f in tuples]
    failures = int(len(ok) - sum(ok))
    surviving = [tp for tp, good in zip(tuples, ok) if good]
    alice_bits = np.array([ab[tp.t - 1] for tp in surviving], dtype=np.int8)
    bob_bits = np.array([bb[tp.t - 1] for tp in surviving], dtype=np.int8)
    stats = {
        "slots": duplex.T,
        "set1": duplex.T - len(set2) - len(set3),
        "set2": len(set2),
        "set3": len(set3),
        "tuples": len(tuples),
        "failures": failures,
        "unpaired": leftovers,
        "key_length": len(surviving),
    }
    if duplex.eve_bits is not None and surviving:
        # fraction of final key bits the eavesdropper holds from her own measurement
        eve_guess = np.array([duplex.eve_bits[tp.t - 1] for tp in surviving], dtype=np.int8)
        stats["eve_key_agreement"] = float(np.mean(eve_guess == alice_bits))
    prov = {"variant": "duplex", "pairing": pairing.value}
    return DuplexResult(
        tuples, failures, KeyShare(alice_bits, dict(prov, party="A")), KeyShare(bob_bits, dict(prov, party="B")), stats
    )


# --- protocol randomization ----------------------------------------------

STREAMS = ("standard", "bit_revelation")


@dataclass
class RandomizedResult:
    assignment: np.ndarray  # 0 -> standard, 1 -> bit revelation, per common slot
    outputs: dict[str, tuple[SiftedKey, SiftedKey]]
    slots: int

    @property
    def kept(self) -> int:
        return sum(a.kept for a, _ in self.outputs.values())

    @property
    def kept_fraction(self) -> float:
        return self.kept / self.slots if self.slots else float("nan")

    def combined(self) -> tuple[KeyShare, KeyShare]:
        a = np.concatenate([self.outputs[s][0].bits for s in STREAMS])
        b = np.concatenate([self.outputs[s][1].bits for s in STREAMS])
        prov = {"variant": "randomized", "streams": list(STREAMS)}
        return KeyShare(a, dict(prov, party="A")), KeyShare(b, dict(prov, party="B"))


def randomize_postprocessing(
    alice_log,
    bob_log,
    weights: tuple[float, float] = (0.5, 0.5),
    rng: np.random.Generator = None,
    sample_fraction: float = DEFAULT_SAMPLE_FRACTION,
) -> RandomizedResult:
    """Assign each slot to standard sifting or bit revelation at random.

    The assignment draw consumes ``rng.random(k)`` for the ``k`` common slots
    before either stream is processed.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (2,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be two non-negative numbers summing to 1")
    a, b = _as_arrays(alice_log), _as_arrays(bob_log)
    t = np.intersect1d(a.t, b.t, assume_unique=True)
    assignment = (rng.random(t.size) >= w[0]).astype(np.int8)
    outputs = {}
    for k, (name, fn) in enumerate(zip(STREAMS, (sift_bb84, bit_revelation))):
        keep_t = t[assignment == k]
        sub_a = _restrict(a, keep_t)
        sub_b = _restrict(b, keep_t)
        outputs[name] = fn(sub_a, sub_b, sample_fraction, rng)
    return RandomizedResult(assignment, outputs, int(t.size))


def _restrict(log: LogArrays, t: np.ndarray) -> LogArrays:
    mask = np.isin(log.t, t)
    return LogArrays(log.t[mask], log.c[mask], log.b[mask])
