"""Line-oriented session logs and the append-only partition store.

Format (``qkdlab-log v1``)::

    qkdlab-log v1
    # session <id>
    # N <alice slots>
    # T <total slot ids>
    # spec <channel spec as compact JSON>
    t,participant,c,b,flags
    ...

Records are sorted by ``t`` then by participant order. ``flags`` marks
padding (``pad=R2``). Three pseudo-participants carry slot metadata:
``DROP`` (announced drop-outs as a relay bitmap in ``flags``), ``LOST``
(``flags`` = ``link=k``) and eavesdropper logs named ``E<k>`` or ``R<j>*``.
"""
from __future__ import annotations

import io
import json
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from qkdlab.network import ChannelSpec, EveLog, SessionData, participant_names

HEADER = "qkdlab-log v1"
COLUMNS = "t,participant,c,b,flags"
_BITS = {"0": 0, "1": 1}


class LogFormatError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def dumps(session: SessionData) -> str:
    out = io.StringIO()
    out.write(HEADER + "\n")
    out.write(f"# session {session.session_id}\n")
    out.write(f"# N {session.N}\n")
    out.write(f"# T {session.T}\n")
    out.write("# spec " + json.dumps(session.spec.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")
    out.write(COLUMNS + "\n")

    names = list(session.participants)
    rows = [(session.present[k], name, session.bases[k], session.bits[k]) for k, name in enumerate(names)]
    for name in sorted(session.eve):
        log = session.eve[name]
        rows.append((log.present, name, log.bases, log.bits))
    # plain lists: indexing numpy scalars per record dominates otherwise
    rows = [(pr.tolist(), f",{name},", c.tolist(), b.tolist()) for pr, name, c, b in rows]

    pad = session.padding_origin.tolist()
    drop_any = (np.any(session.dropout, axis=0) if session.n else np.zeros(session.T, dtype=bool)).tolist()
    drop_cols = session.dropout.T.astype(np.int8).tolist() if session.n else None
    lost = session.lost_on_link.tolist()
    lines = []
    append = lines.append
    for i in range(session.T):
        t = str(i + 1)
        pad_flag = f"pad=R{pad[i]}" if pad[i] else ""
        for present, mid, c, b in rows:
            if present[i]:
                append(f"{t}{mid}{c[i]},{b[i]},{pad_flag}")
        if drop_any[i]:
            append(f"{t},DROP,,," + "".join(map(str, drop_cols[i])))
        if lost[i] >= 0:
            append(f"{t},LOST,,,link={lost[i]}")
    out.write("\n".join(lines))
    if lines:
        out.write("\n")
    return out.getvalue()


def save(session: SessionData, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps(session))
    return path


def loads(text: str) -> SessionData:
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise LogFormatError(1, f"expected header {HEADER!r}")
    meta: dict[str, str] = {}
    line_no = 1
    body_start = None
    for idx in range(1, len(lines)):
        line_no = idx + 1
        line = lines[idx]
        if line.startswith("# "):
            key, _, value = line[2:].partition(" ")
            meta[key] = value
            continue
        if line.strip() == COLUMNS:
            body_start = idx + 1
            break
        raise LogFormatError(line_no, "expected metadata or column header")
    if body_start is None:
        raise LogFormatError(line_no, "missing column header")
    for key in ("session", "N", "T", "spec"):
        if key not in meta:
            raise LogFormatError(line_no, f"missing '# {key}' metadata")
    try:
        spec = ChannelSpec.from_dict(json.loads(meta["spec"]))
        N, T = int(meta["N"]), int(meta["T"])
    except (ValueError, KeyError) as exc:
        raise LogFormatError(line_no, f"bad metadata: {exc}") from exc

    names = participant_names(spec.n)
    pos = {name: k for k, name in enumerate(names)}
    P = len(names)
    bases = np.zeros((P, T), dtype=np.int8)
    bits = np.zeros((P, T), dtype=np.int8)
    present = np.zeros((P, T), dtype=bool)
    dropout = np.zeros((spec.n, T), dtype=bool)
    padding_origin = np.zeros(T, dtype=np.int16)
    lost_on_link = np.full(T, -1, dtype=np.int16)
    eve_raw: dict[str, list[tuple[int, int, int]]] = defaultdict(list)

    # collected as flat lists, scattered into arrays once at the end
    rec_k: list[int] = []
    rec_i: list[int] = []
    rec_c: list[int] = []
    rec_b: list[int] = []
    for idx in range(body_start, len(lines)):
        line = lines[idx]
        if not line:
            continue
        line_no = idx + 1
        parts = line.split(",")
        if len(parts) != 5:
            raise LogFormatError(line_no, f"expected 5 fields, got {len(parts)}")
        try:
            t = int(parts[0])
        except ValueError:
            raise LogFormatError(line_no, f"bad timeslot {parts[0]!r}") from None
        if not 1 <= t <= T:
            raise LogFormatError(line_no, f"timeslot {t} outside 1..{T}")
        name, c, b, flags = parts[1], parts[2], parts[3], parts[4]
        i = t - 1
        k = pos.get(name)
        if k is not None:
            if c not in _BITS or b not in _BITS:
                raise LogFormatError(line_no, "basis and bit must be 0 or 1")
            rec_k.append(k)
            rec_i.append(i)
            rec_c.append(_BITS[c])
            rec_b.append(_BITS[b])
            if flags:
                if not flags.startswith("pad=R"):
                    raise LogFormatError(line_no, f"unknown flag {flags!r}")
                try:
                    padding_origin[i] = int(flags[5:])
                except ValueError:
                    raise LogFormatError(line_no, f"bad padding flag {flags!r}") from None
            continue
        try:
            if name == "DROP":
                if len(flags) != spec.n or set(flags) - {"0", "1"}:
                    raise ValueError("drop-out bitmap has wrong width or symbols")
                dropout[:, i] = [ch == "1" for ch in flags]
            elif name == "LOST":
                lost_on_link[i] = int(flags.removeprefix("link="))
            else:
                eve_raw[name].append((i, int(c), int(b)))
        except ValueError as exc:
            raise LogFormatError(line_no, str(exc)) from None
    if rec_k:
        kk, ii = np.array(rec_k), np.array(rec_i)
        bases[kk, ii] = rec_c
        bits[kk, ii] = rec_b
        present[kk, ii] = True

    eve = {}
    for name in sorted(eve_raw):
        p = np.zeros(T, dtype=bool)
        c = np.zeros(T, dtype=np.int8)
        b = np.zeros(T, dtype=np.int8)
        for i, cv, bv in eve_raw[name]:
            p[i], c[i], b[i] = True, cv, bv
        eve[name] = EveLog(p, c, b)

    return SessionData(
        spec=spec,
        N=N,
        session_id=meta["session"],
        participants=names,
        bases=bases,
        bits=bits,
        present=present,
        dropout=dropout,
        padding_origin=padding_origin,
        lost_on_link=lost_on_link,
        eve=eve,
    )


def ingest(path: str | Path) -> SessionData:
    return loads(Path(path).read_text())


def session_from_records(
    records: Mapping[str, Sequence[tuple[int, int, int]]],
    n: int,
    *,
    session_id: str = "manual",
) -> SessionData:
    """Build a session from explicit ``(t, c, b)`` tuples per participant."""
    names = participant_names(n)
    T = max((t for recs in records.values() for t, _, _ in recs), default=0)
    P = len(names)
    bases = np.zeros((P, T), dtype=np.int8)
    bits = np.zeros((P, T), dtype=np.int8)
    present = np.zeros((P, T), dtype=bool)
    for name, recs in records.items():
        k = names.index(name)
        for t, c, b in recs:
            bases[k, t - 1], bits[k, t - 1], present[k, t - 1] = c, b, True
    return SessionData(
        spec=ChannelSpec.ideal(n),
        N=T,
        session_id=session_id,
        participants=names,
        bases=bases,
        bits=bits,
        present=present,
        dropout=np.zeros((n, T), dtype=bool),
        padding_origin=np.zeros(T, dtype=np.int16),
        lost_on_link=np.full(T, -1, dtype=np.int16),
    )


class PartitionStore:
    """Append-only directory of session logs with partition sidecars.

    Each session is stored as ``<id>.log`` plus ``<id>.idx.json`` holding
    the slot lists per partition. Sessions must share one topology.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _ids(self) -> list[str]:
        return sorted(p.name[: -len(".log")] for p in self.root.glob("*.log"))

    def add(self, session: SessionData) -> None:
        from qkdlab.transport import partition

        existing = self._ids()
        if session.session_id in existing:
            raise ValueError(f"session {session.session_id} already stored")
        if existing:
            first = self.load(existing[0])
            if first.n != session.n:
                raise ValueError(
                    f"topology mismatch: store has {first.n} relays, session has {session.n}"
                )
        save(session, self.root / f"{session.session_id}.log")
        index = {str(k): v for k, v in partition(session).items()}
        (self.root / f"{session.session_id}.idx.json").write_text(json.dumps(index, sort_keys=True))

    def load(self, session_id: str) -> SessionData:
        return ingest(self.root / f"{session_id}.log")

    def index(self, session_id: str) -> dict[str, list[int]]:
        return json.loads((self.root / f"{session_id}.idx.json").read_text())

    def sessions(self) -> list[SessionData]:
        return [self.load(i) for i in self._ids()]

    def __len__(self) -> int:
        return len(self._ids())


def write_announcements(announcements: Iterable, path: str | Path) -> Path:
    path = Path(path)
    path.write_text("".join(a.to_csv() + "\n" for a in announcements))
    return path


def read_announcements(path: str | Path) -> list:
    from qkdlab.transport import Announcement

    return [Announcement.from_csv(line) for line in Path(path).read_text().splitlines() if line]
