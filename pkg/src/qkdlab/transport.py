"""Bit transport: turning relay-chain session logs into an end-to-end key.

A slot's basis string ``c_A c_1 ... c_n c_B`` names its partition. Link k is
open when participants k and k+1 chose the same basis; along an open link
the recorded bits agree. Fully open slots yield a key bit directly. A
partially closed slot is paired with a slot whose openness pattern is the
complement (its dual), and the relays where the route switches slots (the
pivots) announce enough for Alice and Bob to share one bit.

Two announcement styles are supported:

``parity`` (default)
    each pivot relay announces ``b_j(t1) xor b_j(t2)``; Bob corrects his bit
    by the XOR of those parities. Every complementary pair is usable.
``match``
    pairs are formed only when every pivot relay recorded the same bit in
    both slots, so no parity is announced. Pairs with two or more pivots are
    then often impossible and the rate drops below N/2.
"""
from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from qkdlab.network import SessionData

SYMBOLS = "XY"


@dataclass(frozen=True, order=True)
class PartitionId:
    bases: tuple[int, ...]

    def __post_init__(self):
        if len(self.bases) < 2 or any(b not in (0, 1) for b in self.bases):
            raise ValueError(f"invalid partition basis string {self.bases!r}")

    @classmethod
    def parse(cls, text: str) -> "PartitionId":
        try:
            return cls(tuple(SYMBOLS.index(ch) for ch in text.upper()))
        except ValueError:
            raise ValueError(f"partition strings use X/Y symbols only: {text!r}") from None

    def __str__(self) -> str:
        return "".join(SYMBOLS[b] for b in self.bases)

    @property
    def n(self) -> int:
        return len(self.bases) - 2

    @property
    def openness(self) -> tuple[bool, ...]:
        s = self.bases
        return tuple(s[k] == s[k + 1] for k in range(len(s) - 1))

    @property
    def fully_open(self) -> bool:
        return all(self.openness)

    @property
    def fully_closed(self) -> bool:
        return not any(self.openness)

    def render(self) -> str:
        """Basis symbols joined by open (□) / closed (■) link marks."""
        out = SYMBOLS[self.bases[0]]
        for o, b in zip(self.openness, self.bases[1:]):
            out += ("□" if o else "■") + SYMBOLS[b]
        return out


def _pid(s) -> PartitionId:
    return PartitionId.parse(s) if isinstance(s, str) else s


def openness(s) -> tuple[bool, ...]:
    return _pid(s).openness


def dual(s) -> PartitionId:
    """Partition with the same Alice basis and complemented link openness."""
    s = _pid(s)
    out = [s.bases[0]]
    for o in s.openness:
        out.append(out[-1] if not o else 1 - out[-1])
    return PartitionId(tuple(out))


def dual_mask(s) -> PartitionId:
    """Literal XOR-mask form: ``s xor (c_A, ~c_A, c_A, ~c_A, ...)``.

    Agrees with :func:`dual` when Alice's basis is X. For Alice basis Y it
    also flips Alice's symbol and is not an involution; kept for comparison.
    """
    s = _pid(s)
    ca = s.bases[0]
    mask = tuple(ca if k % 2 == 0 else 1 - ca for k in range(len(s.bases)))
    return PartitionId(tuple(a ^ m for a, m in zip(s.bases, mask)))


def pivots(s) -> frozenset[int]:
    """Relays (1-based) where link openness changes along the chain."""
    s = _pid(s)
    if s.fully_open or s.fully_closed:
        raise ValueError(f"{s} is fully open or fully closed; pivots are undefined")
    o = s.openness
    return frozenset(j for j in range(1, len(o)) if o[j - 1] != o[j])


class SlotRef(NamedTuple):
    session: str
    t: int


@dataclass(frozen=True)
class TransportPair:
    t1: SlotRef
    t2: SlotRef
    pivots: tuple[int, ...]
    t_alice: SlotRef
    t_bob: SlotRef
    parity: tuple[int, ...] = ()
    # slot used on each link: 0 -> t1, 1 -> t2
    route: tuple[int, ...] = ()

    @property
    def correction(self) -> int:
        return int(np.bitwise_xor.reduce(self.parity)) if self.parity else 0


@dataclass(frozen=True, eq=False)
class KeyShare:
    bits: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.int8).reshape(-1)
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return int(self.bits.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, KeyShare):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def truncated(self, length: int) -> "KeyShare":
        return KeyShare(self.bits[:length], dict(self.provenance))

    def __xor__(self, other: "KeyShare") -> "KeyShare":
        m = min(len(self), len(other))
        tags = list(self.provenance.get("combined", [self.provenance])) + list(
            other.provenance.get("combined", [other.provenance])
        )
        return KeyShare(self.bits[:m] ^ other.bits[:m], {"combined": tags})

    def to_string(self) -> str:
        return "".join(str(int(b)) for b in self.bits)


@dataclass(frozen=True)
class Announcement:
    """A public record from the relays.

    ``kind`` is ``open`` (slot usable directly, fields ``session, t``) or
    ``transport`` (fields ``session, t_alice, session, t_bob, parity``).
    """

    kind: str
    fields: tuple

    def to_csv(self) -> str:
        return ",".join([self.kind] + [str(f) for f in self.fields])

    @classmethod
    def from_csv(cls, line: str) -> "Announcement":
        kind, *rest = line.strip().split(",")
        if kind == "open":
            return cls(kind, (rest[0], int(rest[1])))
        if kind == "transport":
            return cls(kind, (rest[0], int(rest[1]), rest[2], int(rest[3]), rest[4] if len(rest) > 4 else ""))
        return cls(kind, tuple(rest))


@dataclass(frozen=True)
class TransportOptions:
    mode: str = "parity"
    # pair slots across Alice's two bases; only openness matters for the chain
    pool_alice_basis: bool = True
    # second pass pairing leftovers whose open links jointly cover the chain
    recover_leftovers: bool = True

    def __post_init__(self):
        if self.mode not in ("parity", "match"):
            raise ValueError(f"unknown transport mode {self.mode!r}")

    @classmethod
    def strict(cls, mode: str = "parity") -> "TransportOptions":
        """Complementary duals only, Alice basis preserved."""
        return cls(mode=mode, pool_alice_basis=False, recover_leftovers=False)


class ChainView:
    """Eligible slots over one chain of participants, possibly many sessions.

    Rows of ``bases``/``bits`` are the chain participants (Alice, the chosen
    relays, Bob); columns are slots ordered by (session, t).
    """

    def __init__(
        self,
        sessions: Sequence[SessionData],
        relays: Sequence[int] | None = None,
        slot_masks: Sequence[np.ndarray] | None = None,
    ):
        if not sessions:
            raise ValueError("at least one session is required")
        n = sessions[0].n
        for s in sessions[1:]:
            if s.n != n:
                raise ValueError(
                    f"topology mismatch: session {s.session_id} has {s.n} relays, expected {n}"
                )
        self.sessions = tuple(sessions)
        self.relays = tuple(range(1, n + 1)) if relays is None else tuple(relays)
        rows = [0, *self.relays, n + 1]
        self.rows = rows
        names = sessions[0].participants
        self.names = tuple(names[r] for r in rows)
        bases, bits, sidx, ts = [], [], [], []
        for k, s in enumerate(sessions):
            ok = np.all(s.present[rows], axis=0) & (s.padding_origin == 0)
            if slot_masks is not None:
                ok &= slot_masks[k]
            idx = np.flatnonzero(ok)
            bases.append(s.bases[rows][:, idx])
            bits.append(s.bits[rows][:, idx])
            sidx.append(np.full(idx.shape[0], k, dtype=np.int32))
            ts.append(idx.astype(np.int64) + 1)
        self.bases = np.concatenate(bases, axis=1)
        self.bits = np.concatenate(bits, axis=1)
        self.session_index = np.concatenate(sidx)
        self.t = np.concatenate(ts)

    @property
    def size(self) -> int:
        return int(self.t.shape[0])

    @property
    def links(self) -> int:
        return len(self.rows) - 1

    def ref(self, col: int) -> SlotRef:
        return SlotRef(self.sessions[self.session_index[col]].session_id, int(self.t[col]))

    def patterns(self) -> np.ndarray:
        """Openness bitmask per slot: bit k set when link k is open."""
        eq = self.bases[:-1] == self.bases[1:]
        weights = (1 << np.arange(self.links, dtype=np.int64))[:, None]
        return np.sum(eq * weights, axis=0).astype(np.int64)


def partition(session: SessionData, relays: Sequence[int] | None = None) -> dict[PartitionId, list[int]]:
    """Slots grouped by basis string, over slots every chain member recorded."""
    view = ChainView([session], relays)
    out: dict[PartitionId, list[int]] = defaultdict(list)
    if view.size == 0:
        return {}
    weights = (1 << np.arange(view.bases.shape[0] - 1, -1, -1, dtype=np.int64))[:, None]
    codes = np.sum(view.bases.astype(np.int64) * weights, axis=0)
    width = view.bases.shape[0]
    order = np.argsort(codes, kind="stable")
    for code in np.unique(codes):
        sel = order[codes[order] == code]
        pid = PartitionId(tuple(int(ch) for ch in format(int(code), f"0{width}b")))
        out[pid] = [int(x) for x in view.t[sel]]
    return dict(sorted(out.items()))


def _route(o1: int, o2: int, links: int) -> tuple[int, ...] | None:
    """Slot choice per link, staying put where possible; None if uncovered."""
    route = []
    cur = 0 if o1 & 1 else 1
    for k in range(links):
        here = o1 if cur == 0 else o2
        there = o2 if cur == 0 else o1
        if not (here >> k) & 1:
            if not (there >> k) & 1:
                return None
            cur = 1 - cur
        route.append(cur)
    return tuple(route)


def _pivots_of_route(route: Sequence[int]) -> tuple[int, ...]:
    return tuple(k for k in range(1, len(route)) if route[k] != route[k - 1])


@dataclass
class Assembly:
    alice: KeyShare
    bob: KeyShare
    announcements: list[Announcement]
    pairs: list[TransportPair]
    open_slots: list[SlotRef]
    stats: dict
    view: ChainView | None = None
    open_cols: np.ndarray | None = None
    pair_cols: tuple[np.ndarray, np.ndarray] | None = None

    def __iter__(self) -> Iterator:
        return iter((self.alice, self.bob, self.announcements))

    @property
    def length(self) -> int:
        return len(self.alice)

    def estimate(self, position: int) -> np.ndarray:
        """Key bits as reconstructed by the chain member at ``position``.

        Position 0 is Alice and the last position Bob; a relay reads its own
        bit in the slot used on its incoming link and applies the announced
        parities of the pivots upstream of it. Every member of an ideal chain
        reconstructs the same key.
        """
        view = self.view
        last = view.links
        if not 0 <= position <= last:
            raise IndexError(f"chain position {position} out of range 0..{last}")
        out = [view.bits[position, self.open_cols]]
        c1, c2 = self.pair_cols
        vals = np.zeros(len(self.pairs), dtype=np.int8)
        for i, p in enumerate(self.pairs):
            link = 0 if position == 0 else position - 1
            col = c1[i] if p.route[link] == 0 else c2[i]
            v = int(view.bits[position, col])
            for k, par in zip(_pivots_of_route(p.route), p.parity):
                if k < position:
                    v ^= par
            vals[i] = v
        out.append(vals)
        return np.concatenate(out).astype(np.int8)


class _PairBuilder:
    def __init__(self, view: ChainView, patterns: np.ndarray, mode: str):
        self.view = view
        self.patterns = patterns
        self.mode = mode
        self.cols1: list[np.ndarray] = []
        self.cols2: list[np.ndarray] = []
        self.routes: list[tuple[int, ...]] = []
        self.route_ids: list[np.ndarray] = []

    def add(self, c1: np.ndarray, c2: np.ndarray, route: tuple[int, ...]) -> None:
        if c1.size == 0:
            return
        self.cols1.append(c1)
        self.cols2.append(c2)
        self.route_ids.append(np.full(c1.size, len(self.routes), dtype=np.int32))
        self.routes.append(route)

    def arrays(self):
        if not self.cols1:
            e = np.zeros(0, dtype=np.int64)
            return e, e, np.zeros(0, dtype=np.int32)
        return (
            np.concatenate(self.cols1),
            np.concatenate(self.cols2),
            np.concatenate(self.route_ids),
        )


def _fifo_pairs(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    m = min(a.size, b.size)
    return a[:m], b[:m], a[m:], b[m:]


def match_pairs(
    slots_s: Sequence[int],
    slots_dual: Sequence[int],
    session: SessionData,
    mode: str = "match",
) -> list[TransportPair]:
    """Pair slots of one partition with slots of its dual, FIFO.

    In ``match`` mode a pair needs equal pivot-relay bits in both slots;
    in ``parity`` mode any pair is accepted and the pivot parities recorded.
    """
    if not slots_s or not slots_dual:
        return []
    view = ChainView([session])
    col = {int(t): i for i, t in enumerate(view.t)}
    a = np.array([col[t] for t in slots_s], dtype=np.int64)
    b = np.array([col[t] for t in slots_dual], dtype=np.int64)
    pats = view.patterns()
    p1, p2 = {int(x) for x in pats[a]}, {int(x) for x in pats[b]}
    full = (1 << view.links) - 1
    if len(p1) != 1 or len(p2) != 1 or (p1.pop() ^ p2.pop()) != full:
        raise ValueError("slot lists must come from one partition and its dual")
    builder = _PairBuilder(view, pats, mode)
    _pair_group(builder, a, b, mode)
    return _materialize(builder)[0]


def _pair_group(builder: _PairBuilder, a: np.ndarray, b: np.ndarray, mode: str):
    """Pair two complementary slot columns; returns the unpaired remainders."""
    view, pats = builder.view, builder.patterns
    if a.size == 0 or b.size == 0:
        return a, b
    route = _route(int(pats[a[0]]), int(pats[b[0]]), view.links)
    piv = _pivots_of_route(route)
    if mode == "parity" or not piv:
        x, y, ra, rb = _fifo_pairs(a, b)
        builder.add(x, y, route)
        return ra, rb
    rows = np.array(piv)
    ka = np.sum(view.bits[rows][:, a].astype(np.int64) << np.arange(len(piv))[:, None], axis=0)
    kb = np.sum(view.bits[rows][:, b].astype(np.int64) << np.arange(len(piv))[:, None], axis=0)
    left_a, left_b = [], []
    for key in np.union1d(ka, kb):
        x, y, ra, rb = _fifo_pairs(a[ka == key], b[kb == key])
        builder.add(x, y, route)
        left_a.append(ra)
        left_b.append(rb)
    return np.sort(np.concatenate(left_a)), np.sort(np.concatenate(left_b))


def _materialize(builder: _PairBuilder):
    view = builder.view
    c1, c2, rid = builder.arrays()
    if c1.size == 0:
        return [], np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int8), np.zeros(0, dtype=np.int8)
    routes = builder.routes
    first = np.array([r[0] for r in routes], dtype=np.int8)[rid]
    last = np.array([r[-1] for r in routes], dtype=np.int8)[rid]
    col_alice = np.where(first == 0, c1, c2)
    col_bob = np.where(last == 0, c1, c2)
    alice_bits = view.bits[0, col_alice]
    bob_raw = view.bits[-1, col_bob]
    correction = np.zeros(c1.size, dtype=np.int8)
    parities: list[np.ndarray] = [None] * len(routes)  # type: ignore[list-item]
    for r_index, route in enumerate(routes):
        sel = rid == r_index
        piv = _pivots_of_route(route)
        if not piv:
            parities[r_index] = np.zeros((0, int(sel.sum())), dtype=np.int8)
            continue
        rows = np.array(piv)
        par = view.bits[rows][:, c1[sel]] ^ view.bits[rows][:, c2[sel]]
        parities[r_index] = par
        correction[sel] = np.bitwise_xor.reduce(par, axis=0)
    relay_ids = view.relays
    piv_of = [_pivots_of_route(r) for r in routes]
    piv_ids = [tuple(relay_ids[k - 1] for k in piv) for piv in piv_of]
    par_lists = [[tuple(col) for col in par.T.tolist()] for par in parities]
    sid = [view.sessions[k].session_id for k in view.session_index.tolist()]
    ts = view.t.tolist()

    def ref(col: int) -> SlotRef:
        return SlotRef(sid[col], ts[col])

    pairs = []
    counters = [0] * len(routes)
    for x1, x2, xa, xb, r_index in zip(c1.tolist(), c2.tolist(), col_alice.tolist(), col_bob.tolist(), rid.tolist()):
        j = counters[r_index]
        counters[r_index] += 1
        pairs.append(
            TransportPair(
                t1=ref(x1),
                t2=ref(x2),
                pivots=piv_ids[r_index],
                t_alice=ref(xa),
                t_bob=ref(xb),
                parity=par_lists[r_index][j] if piv_of[r_index] else (),
                route=routes[r_index],
            )
        )
    return pairs, col_alice, col_bob, alice_bits, (bob_raw ^ correction).astype(np.int8)


def _recover(builder: _PairBuilder, leftovers: np.ndarray) -> int:
    """Greedy covering pairs among leftover columns; returns pairs formed."""
    view, pats = builder.view, builder.patterns
    full = (1 << view.links) - 1
    waiting: dict[int, deque] = defaultdict(deque)
    formed = 0
    by_route: dict[tuple, tuple[list, list]] = defaultdict(lambda: ([], []))
    for col in np.sort(leftovers):
        o = int(pats[col])
        best = None
        for q, dq in waiting.items():
            if dq and (o | q) == full:
                cost = bin(o & q).count("1")
                if best is None or (cost, q) < best[0]:
                    best = ((cost, q), q)
        if best is None:
            waiting[o].append(int(col))
            continue
        partner = waiting[best[1]].popleft()
        route = _route(int(pats[partner]), o, view.links)
        lst = by_route[route]
        lst[0].append(partner)
        lst[1].append(int(col))
        formed += 1
    for route, (xs, ys) in by_route.items():
        builder.add(np.array(xs, dtype=np.int64), np.array(ys, dtype=np.int64), route)
    return formed


def assemble_view(view: ChainView, options: TransportOptions = TransportOptions(), variant: str = "transport") -> Assembly:
    pats = view.patterns()
    full = (1 << view.links) - 1
    cols = np.arange(view.size, dtype=np.int64)
    open_cols = cols[pats == full]
    closed = int(np.sum(pats == 0))
    builder = _PairBuilder(view, pats, options.mode)

    group_alice = np.zeros(view.size, dtype=np.int64) if options.pool_alice_basis else view.bases[0].astype(np.int64)
    groups: dict[tuple[int, int], np.ndarray] = {}
    keys = group_alice * (full + 1) + pats
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    bounds = np.flatnonzero(np.diff(sorted_keys)) + 1
    for chunk in np.split(order, bounds):
        if chunk.size:
            k = int(keys[chunk[0]])
            groups[(k // (full + 1), k % (full + 1))] = np.sort(chunk)
    leftovers = []
    for (ca, pat), a in sorted(groups.items()):
        if pat in (0, full) or pat > (full ^ pat):
            continue
        b = groups.get((ca, full ^ pat), np.zeros(0, dtype=np.int64))
        ra, rb = _pair_group(builder, a, b, options.mode)
        leftovers.extend([ra, rb])
    for (ca, pat), a in groups.items():
        if pat not in (0, full) and pat > (full ^ pat) and (ca, full ^ pat) not in groups:
            leftovers.append(a)
    left = np.concatenate(leftovers) if leftovers else np.zeros(0, dtype=np.int64)
    recovered = 0
    if options.recover_leftovers and options.mode == "parity" and left.size:
        recovered = _recover(builder, left)

    pairs, col_alice, col_bob, a_bits, b_bits = _materialize(builder)
    order_pairs = np.argsort(col_alice, kind="stable") if len(pairs) else np.zeros(0, dtype=np.int64)
    pairs = [pairs[i] for i in order_pairs]
    alice_bits = np.concatenate([view.bits[0, open_cols], a_bits[order_pairs]]).astype(np.int8)
    bob_bits = np.concatenate([view.bits[-1, open_cols], b_bits[order_pairs]]).astype(np.int8)

    open_refs = [view.ref(int(c)) for c in open_cols]
    announcements = [Announcement("open", (r.session, r.t)) for r in open_refs]
    for p in pairs:
        announcements.append(
            Announcement(
                "transport",
                (p.t_alice.session, p.t_alice.t, p.t_bob.session, p.t_bob.t, "".join(map(str, p.parity))),
            )
        )
    provenance = {
        "sessions": [s.session_id for s in view.sessions],
        "variant": variant,
        "channel": "-".join(view.names),
        "mode": options.mode,
    }
    eligible = view.size
    stats = {
        "eligible_slots": eligible,
        "open_slots": int(open_cols.size),
        "closed_slots": closed,
        "pairs": len(pairs),
        "recovered_pairs": recovered,
        "unpaired_slots": eligible - int(open_cols.size) - closed - 2 * len(pairs),
        "key_length": int(alice_bits.size),
    }
    c1, c2, _ = builder.arrays()
    return Assembly(
        alice=KeyShare(alice_bits, dict(provenance, party="A")),
        bob=KeyShare(bob_bits, dict(provenance, party="B")),
        announcements=announcements,
        pairs=pairs,
        open_slots=open_refs,
        stats=stats,
        view=view,
        open_cols=open_cols,
        pair_cols=(c1[order_pairs], c2[order_pairs]),
    )


def assemble_key(
    session: SessionData,
    options: TransportOptions = TransportOptions(),
    relays: Sequence[int] | None = None,
    slot_mask: np.ndarray | None = None,
) -> Assembly:
    """End-to-end key from one session.

    Key order: fully open slots by slot index, then transport pairs by
    Alice's slot. Fully closed slots are discarded.
    """
    view = ChainView([session], relays, None if slot_mask is None else [slot_mask])
    return assemble_view(view, options)


def async_assemble(
    store: Iterable[SessionData],
    options: TransportOptions = TransportOptions(),
    relays: Sequence[int] | None = None,
) -> Assembly:
    """Like :func:`assemble_key`, but pairs may span recorded sessions."""
    sessions = list(store.sessions() if hasattr(store, "sessions") else store)
    return assemble_view(ChainView(sessions, relays), options, variant="async-transport")


def disagreement(alice: KeyShare, bob: KeyShare) -> float:
    m = min(len(alice), len(bob))
    if m == 0:
        return float("nan")
    return float(np.mean(alice.bits[:m] != bob.bits[:m]))
