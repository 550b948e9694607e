from fractions import Fraction
from itertools import combinations
from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qkdlab.dropout import (
    DropoutParams,
    check_coverage,
    detect_compromised,
    enumerate_patterns,
    establish_shared_key,
    predict_open,
    predict_useful,
    relay_guess,
    xor_combine,
)
from qkdlab.experiments import chi_square_uniform
from qkdlab.network import ChannelSpec, run_session
from qkdlab.transport import KeyShare

TENTHS = [Fraction(k, 10) for k in range(11)]


def brute(n, p, required, exact):
    """Sum over all 2^n drop-out patterns, independent of the library."""
    total = Fraction(0)
    for mask in range(1 << n):
        up = bin(mask).count("1")
        w = (1 - p) ** up * p ** (n - up)
        if (up >= required) if not exact else (up == required):
            total += w
    return total


@pytest.mark.parametrize("n", range(1, 13))
def test_closed_forms_match_enumeration(n):
    for p in TENTHS:
        params = DropoutParams(n, p)
        assert abs(predict_open(params) - brute(n, p, n - 1, False)) < 1e-12
        assert abs(predict_useful(params) - brute(n, p, n - 1, True)) < 1e-12
        assert sum(enumerate_patterns(n, p).values()) == 1


def test_stated_values():
    half = Fraction(1, 2)
    assert predict_open(DropoutParams(4, half)) == Fraction(5, 16)
    assert predict_useful(DropoutParams(4, half)) == Fraction(1, 4)
    assert predict_useful(DropoutParams(10, half)) == Fraction(10, 1024)
    assert predict_open(DropoutParams(4, 0)) == 1
    assert predict_useful(DropoutParams(3, 1)) == 0
    # n p (1-p)^(n-1) form
    p = Fraction(3, 10)
    assert predict_useful(DropoutParams(4, p)) == 4 * p * (1 - p) ** 3


def test_coverage():
    assert check_coverage([(1, 2, 3), (1, 2, 4), (1, 3, 4), (2, 3, 4)], 4)
    assert not check_coverage([(1, 2, 3), (1, 2, 4)], 4)
    assert check_coverage(list(combinations(range(1, 6), 4)), 5)
    assert not check_coverage([], 3)


def test_xor_of_equal_shares_is_zero():
    k = KeyShare(np.array([1, 0, 1, 1]))
    assert not xor_combine([k, k]).bits.any()
    assert len(xor_combine([k, KeyShare(np.array([1, 1]))])) == 2


@pytest.fixture(scope="module")
def n4():
    s = run_session(ChannelSpec.dropout(4, 0.5), 400_000, 77)
    return s, establish_shared_key(s, p=0.5)


def test_shared_key_structure(n4):
    s, res = n4
    assert res.conditions_met
    assert res.final == res.bob_final
    assert [ch.label for ch in res.shares] == ["123", "124", "134", "234"]
    for ch in res.shares:
        assert ch.key == ch.bob_key
        assert abs(len(ch.slots) / s.N - res.measured_f / 4) < 0.005
    assert len(res.final) == min(len(ch.key) for ch in res.shares)
    assert abs(res.measured_f - 0.25) < 0.005
    assert abs(res.measured_open - 5 / 16) < 0.005


def test_single_relay_cannot_predict_final_key(n4):
    _, res = n4
    for j in range(1, 5):
        leaked = res.final.bits ^ relay_guess(res, j)
        assert chi_square_uniform(leaked) > 0.01
        # the relay does reconstruct the shares it took part in
        for ch in res.shares:
            if j in ch.active_set:
                pos = ch.active_set.index(j) + 1
                assert np.array_equal(ch.assembly.estimate(pos), ch.key.bits)


def test_empty_channel_flags_conditions():
    s = run_session(ChannelSpec.dropout(4, 0.5), 40, 1)
    res = establish_shared_key(s, p=0.5)
    if not res.conditions_met:
        assert len(res.final) == 0 and res.notes


def test_detection_without_compromise():
    s = run_session(ChannelSpec.dropout(4, 0.5), 200_000, 5)
    assert all(r["qber"] == 0 for r in detect_compromised(s).values())


def test_two_compromised_relays():
    # with required = n-1 each channel excludes exactly one relay; only the
    # channels excluding a compromised relay suffer its intercept/resend
    s = run_session(ChannelSpec.dropout(4, 0.5, compromised=[2, 3]), 600_000, 6)
    for label, r in detect_compromised(s).items():
        excluded = ({1, 2, 3, 4} - set(r["active_set"])).pop()
        if excluded in (2, 3):
            assert abs(r["qber"] - 0.25) < 0.02, label
        else:
            assert r["qber"] == 0, label


@given(st.integers(1, 8), st.fractions(0, 1, max_denominator=20))
def test_useful_never_exceeds_open(n, p):
    params = DropoutParams(n, p)
    assert 0 <= predict_useful(params) <= predict_open(params) <= 1
