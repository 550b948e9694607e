import numpy as np
import pytest
from hypothesis import given, strategies as st

from qkdlab.bb84 import Basis, Bit, Qubit, measure, measure_many, prepare, random_bits
from qkdlab.rng import derive_seed, stream


def test_prepare_is_constructor_identity():
    assert prepare(Basis.X, 1) == Qubit(Basis.X, Bit.PLUS)
    assert prepare(Basis.Y, 0) == Qubit(Basis.Y, Bit.MINUS)


@given(st.integers(0, 1), st.integers(0, 1), st.integers(0, 2**32))
def test_same_basis_measurement_is_deterministic_and_non_destructive(c, b, seed):
    q = prepare(c, b)
    bit, post = measure(q, c, np.random.default_rng(seed))
    assert bit == b and post == q


def test_cross_basis_is_a_fair_coin(rng):
    outcomes = [measure(prepare(Basis.X, 0), Basis.Y, rng)[0] for _ in range(100_000)]
    assert abs(np.mean(outcomes) - 0.5) < 0.01


def test_cross_basis_collapses_to_measured_state(rng):
    bit, post = measure(prepare(Basis.X, 0), Basis.Y, rng)
    assert post == Qubit(Basis.Y, bit)


def test_mismatch_erases_prior_bit():
    rng = np.random.default_rng(3)
    N = 100_000
    coins1, coins2 = random_bits(rng, N), random_bits(rng, N)
    c0 = np.zeros(N, dtype=np.int8)
    first = measure_many(c0, c0, np.ones(N, dtype=np.int8), coins1)
    second = measure_many(np.ones(N, dtype=np.int8), first, c0, coins2)
    assert abs(second.mean() - 0.5) < 4 * np.sqrt(0.25 / N)


def test_posterior_two_thirds():
    # Alice reveals b_A=0; Bob holds (c_B=0, b_B=0). How often was c_A=0?
    rng = np.random.default_rng(11)
    N = 100_000
    ca, ba, cb = random_bits(rng, N), random_bits(rng, N), random_bits(rng, N)
    bb = measure_many(ca, ba, cb, random_bits(rng, N))
    sel = (ba == 0) & (cb == 0) & (bb == 0)
    assert abs(np.mean(ca[sel] == 0) - 2 / 3) < 0.02


def test_basis_complement():
    assert Basis.X.complement() is Basis.Y and Basis.Y.complement() is Basis.X


def test_streams_are_reproducible_and_independent():
    a = stream(1, "alice").integers(0, 2**31, 5)
    assert np.array_equal(a, stream(1, "alice").integers(0, 2**31, 5))
    assert not np.array_equal(a, stream(1, "bob").integers(0, 2**31, 5))
    assert derive_seed(1, "x") == derive_seed(1, "x") != derive_seed(2, "x")


def test_stream_requires_seed():
    with pytest.raises((TypeError, ValueError)):
        stream(None, "alice")
