from fractions import Fraction

import numpy as np
import pytest

from oracles import intercept_resend_qber
from qkdlab.experiments import bitrev_eve_oracle
from qkdlab.network import ChannelSpec, run_session
from qkdlab.protocols import (
    DuplexLogs,
    LogArrays,
    Pairing,
    ParityTuple,
    bit_revelation,
    duplex_filter,
    duplex_parity,
    log_arrays,
    randomize_postprocessing,
    run_duplex,
    sift_bb84,
)


def logs(session):
    return log_arrays(session, "A"), log_arrays(session, "B")


def one(t, c, b):
    return LogArrays(np.array([t]), np.array([c], dtype=np.int8), np.array([b], dtype=np.int8))


def test_sift_ideal(rng):
    a, b = sift_bb84(*logs(run_session(ChannelSpec.ideal(0), 100_000, 1)), 0.1, rng)
    assert abs(a.kept / 100_000 - 0.5) < 0.01
    assert a.qber_estimate == 0
    assert np.array_equal(a.bits, b.bits)


def test_sift_eve(rng):
    assert intercept_resend_qber() == 0.25
    a, _ = sift_bb84(*logs(run_session(ChannelSpec.ideal(0, eve_links=[0]), 100_000, 2)), 0.2, rng)
    assert abs(a.qber_estimate - 0.25) < 0.01


def test_full_sample_leaves_empty_key(rng):
    a, b = sift_bb84(*logs(run_session(ChannelSpec.ideal(0), 1000, 3)), 1.0, rng)
    assert len(a) == 0 and a.sample_slots.size == a.kept


def test_bit_revelation_worked_cases(rng):
    a, b = bit_revelation(one(7, 0, 0), one(7, 1, 1), 0.0, rng)
    assert list(a.bits) == [0] and list(b.bits) == [0] and list(a.slots) == [1]
    a, b = bit_revelation(one(7, 0, 0), one(7, 1, 0), 0.0, rng)
    assert a.kept == 0


def test_bit_revelation_ideal(rng):
    s = run_session(ChannelSpec.ideal(0), 100_000, 4)
    A, B = logs(s)
    a, b = bit_revelation(A, B, 0.0, rng)
    assert abs(a.kept / 100_000 - 0.25) < 0.01
    kept = np.isin(A.t, a.origin)
    assert np.all(A.c[kept] == 1 - B.c[kept])
    assert np.array_equal(a.slots, np.arange(1, a.kept + 1))


def test_bit_revelation_eve_oracle_and_measurement(rng):
    kept, err = bitrev_eve_oracle()
    assert (kept, err) == (Fraction(3, 8), Fraction(1, 3))
    a, b = bit_revelation(*logs(run_session(ChannelSpec.ideal(0, eve_links=[0]), 100_000, 5)), 0.0, rng)
    q = float(np.mean(a.bits != b.bits))
    assert q > 0.25 and abs(q - 1 / 3) < 0.01


# Reference duplex table: (alice basis, alice bit, bob basis, bob bit) per slot.
# Odd slots are A->B, even slots B->A; None marks a mismatched-basis bit.
DUPLEX_TABLE = [
    ("X", 1, "Y", None), ("X", 0, "X", 0), ("X", 1, "X", 1), ("Y", None, "X", 0),
    ("Y", 0, "Y", 0), ("Y", 1, "Y", 1), ("X", 0, "Y", None), ("X", 1, "X", 1),
    ("Y", 1, "Y", 1), ("Y", None, "X", 1), ("X", 1, "X", 1), ("X", None, "Y", 0),
    ("Y", 0, "X", None), ("Y", 0, "Y", 0), ("Y", 1, "Y", 1), ("Y", 1, "Y", 1),
    ("X", 0, "Y", None), ("X", 0, "X", 0),
]


def test_duplex_table_sets():
    d = DuplexLogs.from_table(DUPLEX_TABLE)
    s1, s2, s3 = duplex_filter(d)
    assert s1 == [1, 4, 7, 10, 12, 13, 17]
    assert s2 == [3, 5, 9, 11, 15]
    assert s3 == [2, 6, 8, 14, 16, 18]


def test_duplex_table_tuples():
    res = duplex_parity(DuplexLogs.from_table(DUPLEX_TABLE), Pairing.SEQUENTIAL)
    assert res.tuples == [ParityTuple(3, 2, 1), ParityTuple(5, 6, 1), ParityTuple(9, 8, 0), ParityTuple(11, 14, 1), ParityTuple(15, 16, 0)]
    assert res.alice_failures == 0
    assert res.stats["unpaired"] == 1
    assert list(res.alice_key.bits) == [1, 0, 1, 1, 1]


def test_duplex_match_equal_announces_indices_only():
    res = duplex_parity(DuplexLogs.from_table(DUPLEX_TABLE), Pairing.MATCH_EQUAL)
    assert all(f == 0 for _, _, f in res.tuples)
    d = DuplexLogs.from_table(DUPLEX_TABLE)
    assert all(d.bob_b[t - 1] == d.bob_b[tt - 1] for t, tt, _ in res.tuples)


def test_duplex_all_matching_bases():
    rows = [("X", 0, "X", 0), ("X", 1, "X", 1)] * 3
    assert duplex_filter(DuplexLogs.from_table(rows))[0] == []


def test_duplex_ideal_and_eve():
    ideal = duplex_parity(run_duplex(20_000, 1))
    assert ideal.alice_failures == 0 and ideal.alice_key == ideal.bob_key
    eve = duplex_parity(run_duplex(100_000, 2, eve=True))
    assert abs(eve.failure_rate - 0.375) < 0.01


def test_duplex_needs_two_slots():
    with pytest.raises(ValueError):
        run_duplex(1, 1)


def test_randomized_degenerate_weights_equal_sifting():
    A, B = logs(run_session(ChannelSpec.ideal(0), 5000, 6))
    res = randomize_postprocessing(A, B, (1.0, 0.0), np.random.default_rng(1), 0.1)
    rng = np.random.default_rng(1)
    rng.random(5000)
    a, _ = sift_bb84(A, B, 0.1, rng)
    assert np.array_equal(res.outputs["standard"][0].bits, a.bits)
    assert res.outputs["bit_revelation"][0].kept == 0


def test_randomized_combined_rate(rng):
    A, B = logs(run_session(ChannelSpec.ideal(0), 100_000, 7))
    res = randomize_postprocessing(A, B, (0.5, 0.5), rng, 0.0)
    assert abs(res.kept_fraction - 0.375) < 0.01
    a, b = res.combined()
    assert a == b


def test_randomized_streams_keep_their_error_rates(rng):
    A, B = logs(run_session(ChannelSpec.ideal(0, eve_links=[0]), 200_000, 8))
    res = randomize_postprocessing(A, B, (0.5, 0.5), rng, 1.0)
    assert abs(res.outputs["standard"][0].qber_estimate - 0.25) < 0.02
    assert abs(res.outputs["bit_revelation"][0].qber_estimate - 1 / 3) < 0.02


def test_randomized_rejects_bad_weights(rng):
    A, B = logs(run_session(ChannelSpec.ideal(0), 10, 9))
    with pytest.raises(ValueError):
        randomize_postprocessing(A, B, (0.7, 0.7), rng)
