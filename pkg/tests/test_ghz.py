from itertools import product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qkdlab import ghz
from qkdlab.statevector import BELL_VECTORS, BellOutcome, prepare_ghz_type


def six_qubit_attack_error() -> float:
    """Exact parity-error probability for two triples under a crossed Bell attack.

    Qubit order A1 B1 M1 A2 B2 M2. Eve projects (A1, B2) and (A2, B1) onto
    Bell states; Alice keeps A1, Bob receives B2 for the slot associated
    with triple 1, so the key check is a1 xor b2 xor m1.
    """
    psi = np.kron(prepare_ghz_type().amplitudes, prepare_ghz_type().amplitudes).reshape([2] * 6)
    err = 0.0
    for o1, o2 in product(BellOutcome, repeat=2):
        v1 = BELL_VECTORS[o1].reshape(2, 2)
        v2 = BELL_VECTORS[o2].reshape(2, 2)
        # amplitude for |o1> on (A1,B2) and |o2> on (A2,B1), indexed by (m1, m2)
        amp = np.einsum("xy,uv,xvmuyn->mn", v1.conj(), v2.conj(), psi)
        prob_m = np.abs(amp) ** 2
        for m1, m2 in product((0, 1), repeat=2):
            pm = prob_m[m1, m2]
            if pm < 1e-15:
                continue
            # Eve resends |o1> into (A1, B2): computational outcomes follow |v1|^2
            for a1, b2 in product((0, 1), repeat=2):
                err += pm * abs(v1[a1, b2]) ** 2 * ((a1 ^ b2 ^ m1) == 1)
    return err


def test_oracle_is_one_half():
    assert six_qubit_attack_error() == pytest.approx(0.5, abs=1e-12)


def test_parity_law_without_eve(rng):
    for shuffle in (None, "pairs", "random"):
        s = ghz.run_ghz_session(2000, rng, shuffle)
        assert ghz.parity_violations(s) == 0
        assert ghz.derive_key(s).agreement_rate == 1.0


def test_unshuffled_attack_is_silent(rng):
    s = ghz.run_ghz_session(2000, rng, None, "BELL_RESEND")
    assert ghz.parity_violations(s) == 0
    assert set(s.eve_outcomes) <= {BellOutcome.B1, BellOutcome.B3}
    assert np.array_equal(s.eve_parities(), s.published_m)


def test_deranged_attack_matches_oracle(rng):
    s = ghz.run_ghz_session(4000, rng, "pairs", "BELL_RESEND")
    assert abs(ghz.derive_key(s).parity_error_rate - 0.5) < 0.04


def test_bell_check_detects_deranged_attack(rng):
    s = ghz.distribute(4000, rng, "pairs", "BELL_RESEND")
    assert ghz.bell_check(s, 1.0, rng) <= 2.05


def test_bell_check_zero_sample_keeps_key(rng):
    s = ghz.distribute(50, rng)
    assert ghz.bell_check(s, 0.0, rng) is None
    ghz.measure_endpoints(s, rng)
    assert ghz.derive_key(s).pairs == 50


def test_bell_check_consumes_sample(rng):
    s = ghz.run_ghz_session(200, rng, "pairs", bell_sample_fraction=0.25)
    assert len(s.consumed) == 50
    assert ghz.derive_key(s).pairs == 150


def test_bell_check_after_measurement_rejected(rng):
    s = ghz.run_ghz_session(10, rng)
    with pytest.raises(RuntimeError):
        ghz.bell_check(s, 0.5, rng)


def test_derive_key_worked_cases(rng):
    s = ghz.run_ghz_session(400, rng)
    res = ghz.derive_key(s)
    for (al, bo), a, b in zip(s.associations, res.alice_bits, res.bob_bits):
        m = s.published_m[al - 1]
        raw_b = s.bob_bits[bo - 1]
        if a == 1 and m == 1:
            assert raw_b == 0 and b == 1
        if a == 0 and m == 0:
            assert raw_b == 0 and b == 0


@given(st.integers(2, 60), st.integers(0, 10_000))
def test_pairing_derangement(M, seed):
    perm = ghz.pairing_derangement(M, np.random.default_rng(seed))
    assert sorted(perm) == list(range(M))
    assert all(perm[i] != i for i in range(M))
    fixed_by_square = sum(perm[perm[i]] == i for i in range(M))
    assert fixed_by_square == (M if M % 2 == 0 else M - 3)


def test_explicit_shuffle_validated(rng):
    with pytest.raises(ValueError):
        ghz.distribute(3, rng, [0, 0, 1])


def test_attack_rejects_long_cycles():
    perm = np.roll(np.arange(6), 1)
    with pytest.raises(ValueError, match="cycles"):
        ghz.distribute(6, np.random.default_rng(0), perm, "BELL_RESEND")
