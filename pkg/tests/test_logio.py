import numpy as np
import pytest
from hypothesis import given, strategies as st

from qkdlab import logio
from qkdlab.network import ChannelSpec, RelayConfig, RelayMode, Retransmission, run_session
from qkdlab.transport import Announcement, assemble_key, async_assemble


@given(
    n=st.integers(0, 3),
    N=st.integers(1, 200),
    seed=st.integers(0, 10_000),
    erasure=st.floats(0, 0.5),
    p=st.floats(0, 0.9),
    eve=st.booleans(),
    pad=st.sampled_from([0.0, 0.3]),
)
def test_round_trip(n, N, seed, erasure, p, eve, pad):
    relays = tuple(RelayConfig(RelayMode.DROPOUT, p) for _ in range(n))
    spec = ChannelSpec(
        n,
        relays=relays,
        link_erasure=(erasure,) * (n + 1),
        eve_links=frozenset({0}) if eve else frozenset(),
        retransmission=Retransmission.padded(pad) if pad else Retransmission(),
    )
    s = run_session(spec, N, seed, session_id="rt")
    back = logio.loads(logio.dumps(s))
    assert back.content_equal(s)
    assert logio.dumps(back) == logio.dumps(s)


def test_header_and_columns():
    text = logio.dumps(run_session(ChannelSpec.ideal(1), 3, 1))
    lines = text.splitlines()
    assert lines[0] == "qkdlab-log v1"
    assert logio.COLUMNS in lines


@pytest.mark.parametrize(
    "mutate,line",
    [
        (lambda ls: ["qkdlab-log v0"] + ls[1:], 1),
        (lambda ls: ls[:7] + ["1,A,0"] + ls[8:], 8),
        (lambda ls: ls[:7] + ["x,A,0,1,"] + ls[8:], 8),
        (lambda ls: ls[:7] + ["1,A,2,1,"] + ls[8:], 8),
        (lambda ls: ls[:7] + ["99999,A,0,1,"] + ls[8:], 8),
    ],
)
def test_corrupt_input_reports_line(mutate, line):
    lines = logio.dumps(run_session(ChannelSpec.ideal(1), 20, 2)).splitlines()
    with pytest.raises(logio.LogFormatError) as err:
        logio.loads("\n".join(mutate(lines)))
    assert err.value.line_no == line
    assert f"line {line}" in str(err.value)


def test_partition_store(tmp_path):
    store = logio.PartitionStore(tmp_path / "store")
    a = run_session(ChannelSpec.ideal(2), 2000, 1, session_id="a")
    b = run_session(ChannelSpec.ideal(2), 2000, 2, session_id="b")
    store.add(a)
    store.add(b)
    assert len(store) == 2
    assert store.load("a").content_equal(a)
    assert sum(len(v) for v in store.index("a").values()) == 2000
    with pytest.raises(ValueError):
        store.add(a)
    with pytest.raises(ValueError):
        store.add(run_session(ChannelSpec.ideal(3), 10, 3, session_id="c"))
    reopened = logio.PartitionStore(tmp_path / "store")
    asm = async_assemble(reopened)
    assert asm.alice == asm.bob


def test_ingested_halves_match_single_session_rate(tmp_path):
    for sid, seed in (("h1", 1), ("h2", 2)):
        logio.save(run_session(ChannelSpec.ideal(2), 50_000, seed, session_id=sid), tmp_path / f"{sid}.log")
    halves = [logio.ingest(tmp_path / f"{sid}.log") for sid in ("h1", "h2")]
    full = assemble_key(run_session(ChannelSpec.ideal(2), 100_000, 3)).length / 100_000
    assert abs(async_assemble(halves).length / 100_000 - full) < 0.01


def test_announcement_file_round_trip(tmp_path):
    anns = [Announcement("open", ("s", 1)), Announcement("transport", ("s", 2, "s", 9, "1"))]
    path = logio.write_announcements(anns, tmp_path / "ann.csv")
    assert logio.read_announcements(path) == anns
