"""Intermediary key distribution with GHZ-type triples.

The intermediary prepares ``(|B1,0> + |B3,1>)/sqrt2`` per triple, sends the
first qubit to Alice and the second to Bob, and keeps the third. Later it
measures its qubits and publishes the outcomes ``m`` together with the slot
associations. Alice keeps her bit ``a``; Bob corrects his to ``b xor m``.

Bob's particles may be shuffled across timeslots: Bob's slot ``s`` carries
the particle of triple ``shuffle[s]``. An eavesdropper doing the
meet-in-the-middle attack Bell-measures the two particles that share a
physical timeslot and forwards them; with a shuffle those come from
different triples and the published parities no longer match.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from qkdlab.statevector import (
    BellOutcome,
    ChshTally,
    CHSH_ALICE,
    CHSH_BOB,
    PureState,
    _pair_view,
    BELL_VECTORS,
    apply_x,
    bell_probabilities,
    joint_probabilities,
    measure_qubit,
    prepare_ghz_type,
)

ROLES = ("A", "B", "M")


class EveAttack(str, Enum):
    NONE = "NONE"
    BELL_RESEND = "BELL_RESEND"


def pairing_derangement(M: int, rng: np.random.Generator) -> np.ndarray:
    """Random fixed-point-free involution (pairs of swapped slots).

    Each attacked timeslot then mixes exactly two triples. With odd ``M``
    the last three slots form a 3-cycle.
    """
    if M < 2:
        raise ValueError("a derangement needs M >= 2")
    order = rng.permutation(M)
    perm = np.arange(M)
    stop = M - 3 if M % 2 else M
    for k in range(0, stop, 2):
        a, b = order[k], order[k + 1]
        perm[a], perm[b] = b, a
    if M % 2:
        a, b, c = order[-3:]
        perm[a], perm[b], perm[c] = b, c, a
    return perm


@dataclass
class _Block:
    state: PureState
    labels: list[tuple[str, int]]


class _Register:
    """Product of blocks; each qubit is addressed by (role, triple)."""

    def __init__(self, M: int):
        self.blocks: dict[int, _Block] = {}
        self.where: dict[tuple[str, int], int] = {}
        self._next = 0
        ghz = prepare_ghz_type()
        for i in range(M):
            self._add(ghz, [(r, i) for r in ROLES])

    def _add(self, state: PureState, labels: list[tuple[str, int]]) -> int:
        bid = self._next
        self._next += 1
        self.blocks[bid] = _Block(state, list(labels))
        for lab in labels:
            self.where[lab] = bid
        return bid

    def _drop(self, bid: int) -> _Block:
        return self.blocks.pop(bid)

    def locate(self, label) -> tuple[int, int]:
        bid = self.where[label]
        return bid, self.blocks[bid].labels.index(label)

    def merge(self, la, lb) -> int:
        ba, bb = self.where[la], self.where[lb]
        if ba == bb:
            return ba
        x, y = self._drop(ba), self._drop(bb)
        return self._add(x.state.kron(y.state), x.labels + y.labels)

    def measure(self, label, angle: float, rng) -> int:
        bid, q = self.locate(label)
        blk = self.blocks[bid]
        bit, blk.state = measure_qubit(blk.state, q, angle, rng)
        return bit

    def flip(self, label) -> None:
        bid, q = self.locate(label)
        blk = self.blocks[bid]
        blk.state = apply_x(blk.state, q)

    def bell_measure_and_split(self, la, lb, rng) -> BellOutcome:
        bid = self.merge(la, lb)
        blk = self.blocks[bid]
        i, j = blk.labels.index(la), blk.labels.index(lb)
        probs = bell_probabilities(blk.state, i, j)
        keys = list(probs)
        cum = np.cumsum([probs[k] for k in keys])
        k = min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), 3)
        outcome = keys[k]
        rest = BELL_VECTORS[outcome].conj() @ _pair_view(blk.state, i, j)
        rest = rest / np.linalg.norm(rest)
        self._drop(bid)
        # the projected pair is a product with the remaining qubits
        self._add(PureState(2, BELL_VECTORS[outcome]), [la, lb])
        others = [lab for lab in blk.labels if lab not in (la, lb)]
        if others:
            self._add(PureState(len(others), rest), others)
        return outcome

    def pair_chsh(self, la, lb, a_set: int, b_set: int, rng) -> tuple[int, int]:
        ba, bb = self.where[la], self.where[lb]
        if ba == bb:
            blk = self.blocks[ba]
            i, j = blk.labels.index(la), blk.labels.index(lb)
            probs = joint_probabilities(blk.state, i, j, CHSH_ALICE[a_set], CHSH_BOB[b_set]).reshape(-1)
            k = min(int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right")), 3)
            return k >> 1, k & 1
        a = self.measure(la, CHSH_ALICE[a_set], rng)
        b = self.measure(lb, CHSH_BOB[b_set], rng)
        return a, b


@dataclass
class GhzSession:
    M: int
    shuffle: np.ndarray  # Bob slot (0-based) -> triple index
    eve: EveAttack
    register: _Register = field(repr=False)
    published_m: np.ndarray | None = None
    associations: list[tuple[int, int]] = field(default_factory=list)
    eve_outcomes: list[BellOutcome] = field(default_factory=list)
    alice_bits: np.ndarray | None = None
    bob_bits: np.ndarray | None = None
    consumed: set[int] = field(default_factory=set)  # triples used by the Bell check
    chsh: float | None = None
    chsh_trials: list[tuple[int, int, int, int, int]] = field(default_factory=list)  # (triple, a_set, b_set, a, b)

    @property
    def inverse_shuffle(self) -> np.ndarray:
        inv = np.empty(self.M, dtype=np.int64)
        inv[self.shuffle] = np.arange(self.M)
        return inv

    def eve_parities(self) -> np.ndarray:
        """Correlated (0) / anti-correlated (1) as seen by Eve per slot."""
        return np.array([0 if o in (BellOutcome.B1, BellOutcome.B2) else 1 for o in self.eve_outcomes], dtype=np.int8)


def _resolve_shuffle(M: int, shuffle, rng) -> np.ndarray:
    if shuffle is None:
        return np.arange(M)
    if isinstance(shuffle, str):
        if shuffle == "identity":
            return np.arange(M)
        if shuffle == "pairs":
            return pairing_derangement(M, rng)
        if shuffle == "random":
            return rng.permutation(M)
        raise ValueError(f"unknown shuffle {shuffle!r}")
    perm = np.asarray(shuffle, dtype=np.int64)
    if perm.shape != (M,) or not np.array_equal(np.sort(perm), np.arange(M)):
        raise ValueError("shuffle must be a permutation of 0..M-1")
    return perm


def _longest_cycle(perm: np.ndarray) -> int:
    seen = np.zeros(len(perm), dtype=bool)
    best = 0
    for start in range(len(perm)):
        n, j = 0, start
        while not seen[j]:
            seen[j] = True
            j = int(perm[j])
            n += 1
        best = max(best, n)
    return best


def distribute(
    M: int,
    rng: np.random.Generator,
    shuffle=None,
    eve: EveAttack | str = EveAttack.NONE,
) -> GhzSession:
    """Prepare, send (optionally attacked), and let the intermediary measure.

    ``shuffle`` is None/'identity', 'pairs' (fixed-point-free involution),
    'random', or an explicit permutation. Attacked sessions must keep every
    joined block within 8 qubits, which holds for 'pairs'.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    eve = EveAttack(eve)
    perm = _resolve_shuffle(M, shuffle, rng)
    if eve is EveAttack.BELL_RESEND and _longest_cycle(perm) > 3:
        raise ValueError("attacked sessions need a shuffle with cycles of length <= 3 (e.g. 'pairs')")
    reg = _Register(M)
    session = GhzSession(M=M, shuffle=perm, eve=eve, register=reg)
    if eve is EveAttack.BELL_RESEND:
        for s in range(M):
            session.eve_outcomes.append(reg.bell_measure_and_split(("A", s), ("B", int(perm[s])), rng))
    session.published_m = np.array([reg.measure(("M", i), 0.0, rng) for i in range(M)], dtype=np.int8)
    inv = session.inverse_shuffle
    session.associations = [(i + 1, int(inv[i]) + 1) for i in range(M)]
    return session


def bell_check(session: GhzSession, sample_fraction: float, rng: np.random.Generator) -> float | None:
    """CHSH value on a random sample of associated pairs.

    Pairs whose published ``m`` is 1 are anti-correlated; Bob relabels with a
    bit flip first so every sampled pair is compared against B1 statistics.
    Sampled triples are removed from the key.
    """
    if session.alice_bits is not None:
        raise RuntimeError("Bell check must run before Alice and Bob measure")
    if not 0.0 <= sample_fraction <= 1.0:
        raise ValueError("sample_fraction must be in [0, 1]")
    k = int(round(sample_fraction * session.M))
    if k == 0:
        return None
    reg = session.register
    triples = np.sort(rng.choice(session.M, size=k, replace=False))
    tally = ChshTally()
    for i in triples:
        alice_slot, bob_slot = session.associations[i]
        la = ("A", alice_slot - 1)
        lb = ("B", int(session.shuffle[bob_slot - 1]))
        if session.published_m[i]:
            reg.flip(lb)
        a_set, b_set = int(rng.integers(0, 2)), int(rng.integers(0, 2))
        a, b = reg.pair_chsh(la, lb, a_set, b_set, rng)
        tally.add(a_set, b_set, a, b)
        session.chsh_trials.append((int(i), a_set, b_set, a, b))
        session.consumed.add(int(i))
    try:
        session.chsh = tally.value()
    except ValueError:
        session.chsh = None
    return session.chsh


def measure_endpoints(session: GhzSession, rng: np.random.Generator) -> None:
    """Alice and Bob measure every remaining particle in the computational basis."""
    reg = session.register
    a = np.full(session.M, -1, dtype=np.int8)
    b = np.full(session.M, -1, dtype=np.int8)
    for s in range(session.M):
        if s not in session.consumed:
            a[s] = reg.measure(("A", s), 0.0, rng)
        triple = int(session.shuffle[s])
        if triple not in session.consumed:
            b[s] = reg.measure(("B", triple), 0.0, rng)
    session.alice_bits, session.bob_bits = a, b


def run_ghz_session(
    M: int,
    rng: np.random.Generator,
    shuffle=None,
    eve: EveAttack | str = EveAttack.NONE,
    bell_sample_fraction: float = 0.0,
) -> GhzSession:
    session = distribute(M, rng, shuffle, eve)
    if bell_sample_fraction:
        bell_check(session, bell_sample_fraction, rng)
    measure_endpoints(session, rng)
    return session


@dataclass
class GhzKeyResult:
    alice_bits: np.ndarray
    bob_bits: np.ndarray
    agreement_rate: float
    pairs: int

    @property
    def parity_error_rate(self) -> float:
        return 1.0 - self.agreement_rate


def derive_key(session: GhzSession) -> GhzKeyResult:
    """Alice keeps ``a``; Bob uses ``b xor m`` of the associated triple."""
    if session.alice_bits is None:
        raise RuntimeError("Alice and Bob have not measured yet")
    a_out, b_out = [], []
    for alice_slot, bob_slot in session.associations:
        triple = alice_slot - 1
        if triple in session.consumed:
            continue
        a_out.append(int(session.alice_bits[alice_slot - 1]))
        b_out.append(int(session.bob_bits[bob_slot - 1]) ^ int(session.published_m[triple]))
    a = np.array(a_out, dtype=np.int8)
    b = np.array(b_out, dtype=np.int8)
    rate = float(np.mean(a == b)) if a.size else float("nan")
    return GhzKeyResult(a, b, rate, int(a.size))


def parity_violations(session: GhzSession) -> int:
    """Triples whose measured a xor b xor m is nonzero."""
    res = derive_key(session)
    return int(np.sum(res.alice_bits != res.bob_bits))
