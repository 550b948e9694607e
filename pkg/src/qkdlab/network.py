"""Timeslot engine for a relay channel A -> R1 -> ... -> Rn -> B.

Each timeslot carries one idealized BB84 qubit from Alice towards Bob.
Relays in intercept/resend (IR) mode measure in a random basis, log
``(t, c, b)`` and forward the collapsed qubit. Drop-out relays pass the
qubit through untouched with probability ``p``. A compromised relay keeps
measuring but still announces drop-outs.

Link ``j`` joins participant ``j`` to ``j + 1`` (Alice is 0, Bob is n+1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from qkdlab.bb84 import Basis, Bit, measure_many, random_bits
from qkdlab.rng import stream


class RelayMode(str, Enum):
    IR = "IR"
    DROPOUT = "DROPOUT"
    COMPROMISED_ALWAYS_ON = "COMPROMISED_ALWAYS_ON"


class RetransmissionKind(str, Enum):
    IMMEDIATE = "IMMEDIATE"
    BATCH = "BATCH"
    PADDED = "PADDED"


@dataclass(frozen=True)
class RelayConfig:
    mode: RelayMode = RelayMode.IR
    p: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode", RelayMode(self.mode))
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"drop-out probability must be in [0, 1], got {self.p}")


@dataclass(frozen=True)
class Retransmission:
    kind: RetransmissionKind = RetransmissionKind.IMMEDIATE
    batch: int = 1
    pad_ratio: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", RetransmissionKind(self.kind))
        if self.batch < 1:
            raise ValueError("batch size must be >= 1")
        if not 0.0 <= self.pad_ratio < 1.0:
            raise ValueError("padding ratio must be in [0, 1)")

    @classmethod
    def immediate(cls) -> "Retransmission":
        return cls()

    @classmethod
    def batched(cls, k: int) -> "Retransmission":
        return cls(RetransmissionKind.BATCH, batch=k)

    @classmethod
    def padded(cls, r: float) -> "Retransmission":
        return cls(RetransmissionKind.PADDED, pad_ratio=r)


@dataclass(frozen=True)
class ChannelSpec:
    n: int
    relays: tuple[RelayConfig, ...] = ()
    link_erasure: tuple[float, ...] = ()
    eve_links: frozenset[int] = frozenset()
    retransmission: Retransmission = Retransmission()

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("relay count must be >= 0")
        relays = tuple(self.relays) or tuple(RelayConfig() for _ in range(self.n))
        erasure = tuple(float(e) for e in self.link_erasure) or (0.0,) * (self.n + 1)
        if len(relays) != self.n:
            raise ValueError(f"expected {self.n} relay configs, got {len(relays)}")
        if len(erasure) != self.n + 1:
            raise ValueError(f"expected {self.n + 1} link erasure values, got {len(erasure)}")
        for e in erasure:
            if not 0.0 <= e <= 1.0:
                raise ValueError(f"erasure probability must be in [0, 1], got {e}")
        eve = frozenset(int(j) for j in self.eve_links)
        for j in eve:
            if not 0 <= j <= self.n:
                raise ValueError(f"eve link {j} out of range 0..{self.n}")
        object.__setattr__(self, "relays", relays)
        object.__setattr__(self, "link_erasure", erasure)
        object.__setattr__(self, "eve_links", eve)

    @classmethod
    def ideal(cls, n: int, eve_links: Iterable[int] = ()) -> "ChannelSpec":
        return cls(n, eve_links=frozenset(eve_links))

    @classmethod
    def dropout(cls, n: int, p: float, compromised: Iterable[int] = ()) -> "ChannelSpec":
        bad = set(compromised)
        relays = tuple(
            RelayConfig(RelayMode.COMPROMISED_ALWAYS_ON if j in bad else RelayMode.DROPOUT, p)
            for j in range(1, n + 1)
        )
        return cls(n, relays=relays)

    @property
    def participants(self) -> tuple[str, ...]:
        return participant_names(self.n)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "relays": [{"mode": r.mode.value, "p": r.p} for r in self.relays],
            "link_erasure": list(self.link_erasure),
            "eve_links": sorted(self.eve_links),
            "retransmission": {
                "kind": self.retransmission.kind.value,
                "batch": self.retransmission.batch,
                "pad_ratio": self.retransmission.pad_ratio,
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ChannelSpec":
        rt = d.get("retransmission", {})
        return cls(
            n=int(d["n"]),
            relays=tuple(RelayConfig(r["mode"], float(r.get("p", 0.0))) for r in d.get("relays", [])),
            link_erasure=tuple(d.get("link_erasure", ())),
            eve_links=frozenset(d.get("eve_links", ())),
            retransmission=Retransmission(
                rt.get("kind", "IMMEDIATE"), int(rt.get("batch", 1)), float(rt.get("pad_ratio", 0.0))
            ),
        )


def participant_names(n: int) -> tuple[str, ...]:
    return ("A",) + tuple(f"R{j}" for j in range(1, n + 1)) + ("B",)


@dataclass(frozen=True)
class SlotRecord:
    t: int
    c: Basis
    b: Bit


@dataclass(frozen=True, eq=False)
class EveLog:
    """Measurements made by an adversary (or a lying relay) per slot."""

    present: np.ndarray
    bases: np.ndarray
    bits: np.ndarray

    def records(self) -> list[SlotRecord]:
        idx = np.flatnonzero(self.present)
        return [SlotRecord(int(i) + 1, Basis(int(self.bases[i])), Bit(int(self.bits[i]))) for i in idx]


class MissingRecordError(LookupError):
    """A participant that should have a record for a slot has none."""


@dataclass(frozen=True, eq=False)
class SessionData:
    """Everything recorded during one quantum transmission.

    Arrays are indexed by ``t - 1`` over all ``T`` slot ids. Slots ``1..N``
    originate at Alice; ids above ``N`` are padding qubits injected by a
    relay (``padding_origin`` holds the relay index, 0 for Alice).
    """

    spec: ChannelSpec
    N: int
    session_id: str
    participants: tuple[str, ...]
    bases: np.ndarray  # (P, T) int8
    bits: np.ndarray  # (P, T) int8
    present: np.ndarray  # (P, T) bool
    dropout: np.ndarray  # (n, T) bool, as announced
    padding_origin: np.ndarray  # (T,) int16
    lost_on_link: np.ndarray  # (T,) int16, -1 when delivered
    eve: Mapping[str, EveLog] = field(default_factory=dict)

    def __post_init__(self):
        for arr in (self.bases, self.bits, self.present, self.dropout, self.padding_origin, self.lost_on_link):
            arr.setflags(write=False)

    @property
    def T(self) -> int:
        return int(self.bases.shape[1])

    @property
    def n(self) -> int:
        return self.spec.n

    def index(self, participant: str) -> int:
        return self.participants.index(participant)

    def log(self, participant: str) -> list[SlotRecord]:
        k = self.index(participant)
        idx = np.flatnonzero(self.present[k])
        c, b = self.bases[k], self.bits[k]
        return [SlotRecord(int(i) + 1, Basis(int(c[i])), Bit(int(b[i]))) for i in idx]

    @cached_property
    def logs(self) -> dict[str, list[SlotRecord]]:
        return {p: self.log(p) for p in self.participants}

    def record(self, participant: str, t: int) -> SlotRecord | None:
        k = self.index(participant)
        if not (1 <= t <= self.T) or not self.present[k, t - 1]:
            return None
        return SlotRecord(t, Basis(int(self.bases[k, t - 1])), Bit(int(self.bits[k, t - 1])))

    @property
    def erased_slots(self) -> frozenset[int]:
        return frozenset(int(i) + 1 for i in np.flatnonzero(self.lost_on_link >= 0))

    @property
    def padding_slots(self) -> dict[int, frozenset[int]]:
        return {
            j: frozenset(int(i) + 1 for i in np.flatnonzero(self.padding_origin == j))
            for j in range(1, self.n + 1)
        }

    def active_relays(self, t: int) -> tuple[int, ...]:
        """Relays (1-based) announced as operational in slot ``t``."""
        return tuple(j + 1 for j in range(self.n) if not self.dropout[j, t - 1])

    def delivery_slot(self, relay: int) -> np.ndarray:
        """Onward transmission slot per incoming slot for ``relay``.

        Under BATCH(k) a relay holds qubits until the end of each block of
        ``k`` slots; otherwise retransmission is immediate.
        """
        t = np.arange(1, self.T + 1)
        rt = self.spec.retransmission
        if rt.kind is RetransmissionKind.BATCH:
            return -(-t // rt.batch) * rt.batch
        return t

    def content_equal(self, other: "SessionData") -> bool:
        if (self.spec, self.N, self.session_id, self.participants) != (
            other.spec,
            other.N,
            other.session_id,
            other.participants,
        ):
            return False
        pairs = [
            (self.bases, other.bases),
            (self.bits, other.bits),
            (self.present, other.present),
            (self.dropout, other.dropout),
            (self.padding_origin, other.padding_origin),
            (self.lost_on_link, other.lost_on_link),
        ]
        if not all(np.array_equal(a, b) for a, b in pairs):
            return False
        if set(self.eve) != set(other.eve):
            return False
        return all(
            np.array_equal(self.eve[k].present, other.eve[k].present)
            and np.array_equal(self.eve[k].bases, other.eve[k].bases)
            and np.array_equal(self.eve[k].bits, other.eve[k].bits)
            for k in self.eve
        )


def _padding_counts(spec: ChannelSpec, N: int) -> list[int]:
    rt = spec.retransmission
    if rt.kind is not RetransmissionKind.PADDED or spec.n == 0:
        return [0] * spec.n
    # relay j forwards everything it receives plus enough of its own qubits
    # that padding is a fraction r of its onward stream
    counts = []
    incoming = N
    for _ in range(spec.n):
        extra = int(round(incoming * rt.pad_ratio / (1.0 - rt.pad_ratio)))
        counts.append(extra)
        incoming += extra
    return counts


def run_session(
    spec: ChannelSpec,
    N: int,
    seed: int,
    *,
    session_id: str | None = None,
    force_basis: int | None = None,
) -> SessionData:
    """Simulate ``N`` timeslots over ``spec``.

    ``force_basis`` pins every legitimate participant's basis (a test hook);
    eavesdroppers still choose at random.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if not isinstance(spec, ChannelSpec):
        raise TypeError("spec must be a ChannelSpec")
    n = spec.n
    names = participant_names(n)
    P = n + 2
    pad_counts = _padding_counts(spec, N)
    T = N + sum(pad_counts)

    bases = np.zeros((P, T), dtype=np.int8)
    bits = np.zeros((P, T), dtype=np.int8)
    present = np.zeros((P, T), dtype=bool)
    dropout = np.zeros((n, T), dtype=bool)
    padding_origin = np.zeros(T, dtype=np.int16)
    lost_on_link = np.full(T, -1, dtype=np.int16)
    eve: dict[str, EveLog] = {}

    def choose_bases(rng: np.random.Generator) -> np.ndarray:
        c = random_bits(rng, T)
        if force_basis is not None:
            c[:] = int(force_basis)
        return c

    rng_a = stream(seed, "alice")
    c_a = choose_bases(rng_a)
    b_a = random_bits(rng_a, T)
    bases[0, :N], bits[0, :N], present[0, :N] = c_a[:N], b_a[:N], True

    state_c = np.zeros(T, dtype=np.int8)
    state_b = np.zeros(T, dtype=np.int8)
    state_c[:N], state_b[:N] = c_a[:N], b_a[:N]
    inflight = np.zeros(T, dtype=bool)
    inflight[:N] = True
    next_pad = N

    for link in range(n + 1):
        sender = link
        if 1 <= sender <= n and pad_counts[sender - 1]:
            k = pad_counts[sender - 1]
            ids = slice(next_pad, next_pad + k)
            rng_p = stream(seed, "padding", sender)
            pc = random_bits(rng_p, k)
            if force_basis is not None:
                pc[:] = int(force_basis)
            pb = random_bits(rng_p, k)
            state_c[ids], state_b[ids] = pc, pb
            bases[sender, ids], bits[sender, ids], present[sender, ids] = pc, pb, True
            padding_origin[ids] = sender
            inflight[ids] = True
            next_pad += k

        if link in spec.eve_links:
            rng_e = stream(seed, "eve", link)
            ec = random_bits(rng_e, T)
            coins = random_bits(rng_e, T)
            eb = measure_many(state_c, state_b, ec, coins)
            state_c = np.where(inflight, ec, state_c)
            state_b = np.where(inflight, eb, state_b)
            eve[f"E{link}"] = EveLog(inflight.copy(), np.where(inflight, ec, 0), np.where(inflight, eb, 0))

        e = spec.link_erasure[link]
        if e > 0:
            lost = inflight & (stream(seed, "erasure", link).random(T) < e)
            lost_on_link[lost] = link
            inflight = inflight & ~lost

        receiver = link + 1
        rng_r = stream(seed, "participant", receiver)
        rc = choose_bases(rng_r)
        coins = random_bits(rng_r, T)
        outcome = measure_many(state_c, state_b, rc, coins)
        measured = inflight.copy()
        logged = inflight.copy()
        if receiver <= n:
            relay = spec.relays[receiver - 1]
            if relay.mode is not RelayMode.IR:
                announced = inflight & (stream(seed, "dropout", receiver).random(T) < relay.p)
                dropout[receiver - 1] = announced
                logged = inflight & ~announced
                if relay.mode is RelayMode.DROPOUT:
                    measured = logged
                else:
                    eve[f"R{receiver}*"] = EveLog(
                        measured.copy(), np.where(measured, rc, 0), np.where(measured, outcome, 0)
                    )
        bases[receiver] = np.where(logged, rc, 0)
        bits[receiver] = np.where(logged, outcome, 0)
        present[receiver] = logged
        state_c = np.where(measured, rc, state_c)
        state_b = np.where(measured, outcome, state_b)

    return SessionData(
        spec=spec,
        N=N,
        session_id=session_id if session_id is not None else f"s{seed}",
        participants=names,
        bases=bases,
        bits=bits,
        present=present,
        dropout=dropout,
        padding_origin=padding_origin,
        lost_on_link=lost_on_link,
        eve=eve,
    )


def propagation_check(session: SessionData, t: int) -> tuple[bool, ...]:
    """Per-link openness for slot ``t`` over the operational participants.

    Relays announced as dropped out are contracted away, so their two links
    fuse into one. Raises :class:`MissingRecordError` if an operational
    participant has no record (lost or out-of-range slot).
    """
    if not 1 <= t <= session.T:
        raise MissingRecordError(f"slot {t} outside 1..{session.T}")
    chain = [0] + [j for j in session.active_relays(t)] + [session.n + 1]
    missing = [session.participants[k] for k in chain if not session.present[k, t - 1]]
    if missing:
        raise MissingRecordError(f"slot {t}: no record for {', '.join(missing)}")
    c = session.bases[chain, t - 1]
    return tuple(bool(x) for x in c[:-1] == c[1:])
