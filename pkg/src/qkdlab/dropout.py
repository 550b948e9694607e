"""Drop-out relays and XOR secret sharing over logical channels.

With ``n`` relays of which ``required`` suffice to span the distance, each
relay independently passes a slot through unmeasured with probability ``p``.
Slots are grouped by the set of operational relays; each group with exactly
``required`` members is a logical channel and yields one key share via bit
transport over the contracted chain. The final key is the XOR of all shares,
so a relay absent from at least one channel learns nothing about it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product
from math import comb
from typing import Iterable, Sequence

import numpy as np

from qkdlab.network import SessionData
from qkdlab.transport import Assembly, ChainView, KeyShare, TransportOptions, assemble_view, disagreement


@dataclass(frozen=True)
class DropoutParams:
    n: int
    p: float | Fraction
    required: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one relay")
        if not 0 <= self.p <= 1:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        req = self.n - 1 if self.required is None else self.required
        if not 0 <= req <= self.n:
            raise ValueError(f"required must be in [0, {self.n}], got {req}")
        object.__setattr__(self, "required", req)


def predict_open(params: DropoutParams):
    """Probability that at least ``required`` relays are operational."""
    n, p, r = params.n, params.p, params.required
    q = 1 - p
    return sum(comb(n, k) * q**k * p ** (n - k) for k in range(r, n + 1))


def predict_useful(params: DropoutParams):
    """Probability that exactly ``required`` relays are operational.

    For ``required = n - 1`` this is ``n p (1 - p)^(n-1)``.
    """
    n, p, r = params.n, params.p, params.required
    return comb(n, r) * (1 - p) ** r * p ** (n - r)


def enumerate_patterns(n: int, p) -> dict[tuple[int, ...], object]:
    """Probability of every drop-out pattern (1 = dropped), brute force."""
    out = {}
    for pattern in product((0, 1), repeat=n):
        prob = 1
        for dropped in pattern:
            prob *= p if dropped else (1 - p)
        out[pattern] = prob
    return out


@dataclass
class LogicalChannel:
    active_set: tuple[int, ...]
    slots: list[int]
    key: KeyShare
    bob_key: KeyShare
    assembly: Assembly | None = None

    @property
    def qber(self) -> float:
        return disagreement(self.key, self.bob_key)

    @property
    def label(self) -> str:
        return "".join(str(j) for j in self.active_set) or "direct"


@dataclass
class SharedKeyResult:
    final: KeyShare
    bob_final: KeyShare
    shares: list[LogicalChannel]
    predicted_f: float
    measured_f: float
    measured_open: float
    conditions_met: bool
    notes: list[str] = field(default_factory=list)

    def channel(self, active_set: Iterable[int]) -> LogicalChannel:
        key = tuple(sorted(active_set))
        for ch in self.shares:
            if ch.active_set == key:
                return ch
        raise KeyError(key)


def xor_combine(shares: Sequence[KeyShare]) -> KeyShare:
    """Bitwise XOR of all shares, truncated to the shortest."""
    if not shares:
        return KeyShare(np.zeros(0, dtype=np.int8), {"combined": []})
    m = min(len(s) for s in shares)
    bits = np.zeros(m, dtype=np.int8)
    for s in shares:
        bits ^= s.bits[:m]
    return KeyShare(bits, {"combined": [s.provenance for s in shares], "length": m})


def check_coverage(channels: Iterable, n: int) -> bool:
    """Every relay must be absent from at least one channel used.

    ``channels`` may hold :class:`LogicalChannel` objects or plain relay sets.
    Alice and Bob are endpoints of every channel by construction.
    """
    sets = [set(getattr(ch, "active_set", ch)) for ch in channels]
    if not sets:
        return False
    return all(any(j not in s for s in sets) for j in range(1, n + 1))


def _active_matrix(session: SessionData) -> np.ndarray:
    return ~session.dropout


def establish_shared_key(
    session: SessionData,
    options: TransportOptions = TransportOptions(),
    required: int | None = None,
    p: float | None = None,
) -> SharedKeyResult:
    """Build one share per logical channel and XOR them into the final key.

    Only slots with exactly ``required`` announced-operational relays are
    used. The chain for each channel contracts the dropped relay away.
    """
    n = session.n
    if n < 1:
        raise ValueError("drop-out sharing needs at least one relay")
    req = n - 1 if required is None else required
    if p is None:
        ps = {r.p for r in session.spec.relays}
        p = ps.pop() if len(ps) == 1 else float("nan")
    params = DropoutParams(n, p if p == p else 0.0, req)

    active = _active_matrix(session)
    alice_slot = session.padding_origin == 0
    delivered = session.present[n + 1] & alice_slot
    counts = active.sum(axis=0)
    useful = delivered & (counts == req)
    N = session.N

    shares: list[LogicalChannel] = []
    notes: list[str] = []
    for subset in combinations(range(1, n + 1), req):
        sel = np.ones(session.T, dtype=bool)
        for j in range(1, n + 1):
            sel &= active[j - 1] if j in subset else ~active[j - 1]
        sel &= useful
        view = ChainView([session], relays=subset, slot_masks=[sel])
        asm = assemble_view(view, options, variant="dropout-share")
        tag = "".join(map(str, subset)) or "direct"
        shares.append(
            LogicalChannel(
                active_set=tuple(subset),
                slots=[int(t) for t in np.flatnonzero(sel) + 1],
                key=KeyShare(asm.alice.bits, dict(asm.alice.provenance, channel=f"QK{tag}")),
                bob_key=KeyShare(asm.bob.bits, dict(asm.bob.provenance, channel=f"QK{tag}")),
                assembly=asm,
            )
        )

    conditions = check_coverage(shares, n)
    if not conditions:
        notes.append("coverage condition fails: some relay is present in every channel")
    empty = [ch.label for ch in shares if len(ch.key) == 0]
    if empty:
        conditions = False
        notes.append(f"empty key on logical channel(s): {', '.join(empty)}")
    if conditions:
        final = xor_combine([ch.key for ch in shares])
        bob_final = xor_combine([ch.bob_key for ch in shares])
    else:
        final = KeyShare(np.zeros(0, dtype=np.int8), {"combined": []})
        bob_final = KeyShare(np.zeros(0, dtype=np.int8), {"combined": []})

    return SharedKeyResult(
        final=final,
        bob_final=bob_final,
        shares=shares,
        predicted_f=float(predict_useful(params)),
        measured_f=float(useful.sum() / N),
        measured_open=float(np.sum(delivered & (counts >= req)) / N),
        conditions_met=conditions,
        notes=notes,
    )


def relay_guess(result: SharedKeyResult, relay: int) -> np.ndarray:
    """Best reconstruction of the final key available to one relay.

    The relay recovers every share it took part in from its own records and
    the public parities; shares it was absent from contribute nothing.
    """
    m = len(result.final)
    guess = np.zeros(m, dtype=np.int8)
    for ch in result.shares:
        if relay in ch.active_set:
            pos = ch.active_set.index(relay) + 1
            guess ^= ch.assembly.estimate(pos)[:m]
    return guess


def detect_compromised(
    session: SessionData, options: TransportOptions = TransportOptions(), required: int | None = None
) -> dict[str, dict]:
    """Error rate per logical channel from a full key comparison.

    A relay that measures while claiming to drop out acts as an
    intercept/resend attacker on every channel that excludes it.
    """
    result = establish_shared_key(session, options, required)
    report = {}
    for ch in result.shares:
        report[ch.label] = {
            "active_set": list(ch.active_set),
            "slots": len(ch.slots),
            "bits_compared": len(ch.key),
            "qber": ch.qber,
        }
    return report
