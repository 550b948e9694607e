"""The eleven acceptance criteria, each at its stated tolerance and time budget.

Every test appends one ``CRITERION k: PASS|FAIL ...`` line, printed in the
pytest terminal summary.
"""
import json
import math
import time
from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import chain_walk
from qkdlab import ghz
from qkdlab.dropout import DropoutParams, enumerate_patterns, establish_shared_key, predict_open, predict_useful
from qkdlab.experiments import SUITE, bitrev_eve_oracle, dumps_report, leaked_key_pvalues, reproduce
from qkdlab.network import ChannelSpec, run_session
from qkdlab.protocols import DuplexLogs, ParityTuple, bit_revelation, duplex_filter, duplex_parity, log_arrays, run_duplex, sift_bb84
from qkdlab.rng import stream
from qkdlab.statevector import BellOutcome
from qkdlab.transport import PartitionId, TransportOptions, assemble_key, dual, openness
from test_protocols import DUPLEX_TABLE

SEED = 20261018


def record(label: str, ok: bool, detail: str) -> None:
    line = f"CRITERION {label}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_transport_rate():
    rates, slow, mismatch = {}, [], []
    for n in (1, 2, 3, 4, 6):
        t0 = time.perf_counter()
        s = run_session(ChannelSpec.ideal(n), 100_000, SEED + n)
        a, b, _ = assemble_key(s)
        dt = time.perf_counter() - t0
        rates[n] = len(a) / s.N
        if dt >= 10:
            slow.append((n, round(dt, 1)))
        if a != b:
            mismatch.append(n)
    ok = all(abs(r - 0.5) <= 0.01 for r in rates.values()) and not slow and not mismatch
    detail = ", ".join(f"n={n}: {r:.4f}" for n, r in rates.items())
    record("1", ok, f"key rate {detail} (target 0.5 +/- 0.01); over budget {slow}; mismatched {mismatch}")


def test_criterion_2_dual_structure():
    t0 = time.perf_counter()
    failures = 0
    for n in range(0, 11):
        for first in (0, 1):
            seen = set()
            for rest in product((0, 1), repeat=n + 1):
                s = PartitionId((first,) + rest)
                d = dual(s)
                failures += dual(d) != s
                failures += openness(d) != tuple(not o for o in openness(s))
                failures += d.bases[0] != first
                seen.add(d.bases)
            failures += len(seen) != 2 ** (n + 1)
    worked = str(dual(PartitionId.parse("XXXY"))) == "XYXX" and str(dual(PartitionId.parse("XYXX"))) == "XXXY"
    extremes = str(dual(PartitionId.parse("XXXX"))) == "XYXY" and str(dual(PartitionId.parse("XYXY"))) == "XXXX"
    dt = time.perf_counter() - t0
    ok = failures == 0 and worked and extremes and dt < 1.0
    record("2", ok, f"exhaustive n<=10 violations={failures}; XXXY<->XYXX {worked}; fully open<->closed {extremes}; {dt:.2f}s")


def test_criterion_3_chain_theorem():
    t0 = time.perf_counter()
    literal = corrected = bad = 0
    for k in range(100):
        n = 1 + k % 4
        s = run_session(ChannelSpec.ideal(n), 10_000, SEED + 1000 + k, session_id=f"c{k}")
        rows = list(range(n + 2))
        # equal-pivot-bit pairs: Alice's and Bob's bits are equal outright, and
        # an independent link-by-link walk confirms every hop
        for p in assemble_key(s, TransportOptions.strict("match")).pairs:
            a, b, par = chain_walk({s.session_id: s}, p, rows)
            bad += (a != b) or par != 0
            literal += 1
        # default parity pairs: equal after the announced parity correction
        asm = assemble_key(s)
        ta = np.array([p.t_alice.t for p in asm.pairs]) - 1
        tb = np.array([p.t_bob.t for p in asm.pairs]) - 1
        corr = np.array([p.correction for p in asm.pairs], dtype=np.int8)
        bad += int(np.sum(s.bits[0, ta] != (s.bits[n + 1, tb] ^ corr)))
        corrected += len(asm.pairs)
    dt = time.perf_counter() - t0
    record("3", bad == 0 and dt < 30, f"{literal} equal-bit pairs walked and {corrected} parity pairs checked, {bad} violations, {dt:.1f}s")


def test_criterion_4_dropout_formulas():
    t0 = time.perf_counter()
    worst = Fraction(0)
    for n in range(1, 13):
        for p in (Fraction(k, 10) for k in range(11)):
            pats = enumerate_patterns(n, p)
            up = lambda pat: n - sum(pat)
            params = DropoutParams(n, p)
            o = sum(w for pat, w in pats.items() if up(pat) >= n - 1)
            u = sum(w for pat, w in pats.items() if up(pat) == n - 1)
            worst = max(worst, abs(predict_open(params) - o), abs(predict_useful(params) - u))
    s = run_session(ChannelSpec.dropout(4, 0.5), 1_000_000, SEED + 4)
    res = establish_shared_key(s, p=0.5)
    f10 = float(predict_useful(DropoutParams(10, Fraction(1, 2))))
    dt = time.perf_counter() - t0
    ok = (
        worst < 1e-12
        and abs(res.measured_open - 5 / 16) <= 0.005
        and abs(res.measured_f - 0.25) <= 0.005
        and round(f10, 5) == 0.00977
        and abs(f10 - 0.01) < 0.0005
        and dt < 60
    )
    record(
        "4",
        ok,
        f"max formula error {float(worst):.1e}; P(open)={res.measured_open:.4f} (5/16), f={res.measured_f:.4f} (1/4); "
        f"n=10 f={f10:.5f}; {dt:.1f}s",
    )


def test_criterion_5_secret_sharing():
    t0 = time.perf_counter()
    s = run_session(ChannelSpec.dropout(4, 0.5), 3_400_000, SEED + 5)
    res = establish_shared_key(s, p=0.5)
    pvals = leaked_key_pvalues(res, 4)
    dt = time.perf_counter() - t0
    ok = len(res.final) >= 100_000 and res.final == res.bob_final and min(pvals.values()) > 0.01 and dt < 60
    detail = ", ".join(f"R{j}: p={v:.3f}" for j, v in pvals.items())
    record("5", ok, f"{len(res.final)} key bits, keys equal {res.final == res.bob_final}; uniformity given one relay {detail}; {dt:.1f}s")


def test_criterion_6_compromised_relay():
    t0 = time.perf_counter()
    s = run_session(ChannelSpec.dropout(4, 0.5, compromised=[2]), 1_000_000, SEED + 6)
    res = establish_shared_key(s, p=0.5)
    ok, parts = True, []
    for ch in res.shares:
        q = ch.qber
        target, tol = (0.0, 0.005) if 2 in ch.active_set else (0.25, 0.01)
        ok &= abs(q - target) <= tol
        parts.append(f"{ch.label}: {q:.4f}")
    dt = time.perf_counter() - t0
    record("6", ok and dt < 60, f"R2 always on; qber {', '.join(parts)} (excluding R2 -> 0.25, including -> 0); {dt:.1f}s")


def test_criterion_7_duplex():
    t0 = time.perf_counter()
    eve = duplex_parity(run_duplex(100_000, SEED + 7, eve=True))
    ideal = duplex_parity(run_duplex(100_000, SEED + 8))
    table = DuplexLogs.from_table(DUPLEX_TABLE)
    set1 = duplex_filter(table)[0]
    tuples = duplex_parity(table).tuples
    expected = [ParityTuple(3, 2, 1), ParityTuple(5, 6, 1), ParityTuple(9, 8, 0), ParityTuple(11, 14, 1), ParityTuple(15, 16, 0)]
    dt = time.perf_counter() - t0
    ok = (
        abs(eve.failure_rate - 0.375) <= 0.01
        and ideal.alice_failures == 0
        and ideal.alice_key == ideal.bob_key
        and set1 == [1, 4, 7, 10, 12, 13, 17]
        and tuples == expected
        and dt < 30
    )
    record(
        "7",
        ok,
        f"failure rate with Eve {eve.failure_rate:.4f} (0.375 +/- 0.01); ideal failures {ideal.alice_failures}; "
        f"table set1 and tuples reproduced {set1 == [1, 4, 7, 10, 12, 13, 17] and tuples == expected}; {dt:.1f}s",
    )


def test_criterion_8_bit_revelation():
    t0 = time.perf_counter()
    N = 100_000
    s = run_session(ChannelSpec.ideal(0), N, SEED + 9)
    A, B = log_arrays(s, "A"), log_arrays(s, "B")
    a, _ = bit_revelation(A, B, 0.0, stream(SEED, "bitrev"))
    kept = np.isin(A.t, a.origin)
    exact = bool(np.all(A.c[kept] == 1 - B.c[kept]))
    se = run_session(ChannelSpec.ideal(0, eve_links=[0]), N, SEED + 10)
    ea, eb = bit_revelation(log_arrays(se, "A"), log_arrays(se, "B"), 0.0, stream(SEED, "bitrev-eve"))
    q = float(np.mean(ea.bits != eb.bits))
    _, q_oracle = bitrev_eve_oracle()
    dt = time.perf_counter() - t0
    ok = exact and abs(a.kept / N - 0.25) <= 0.01 and q > 0.25 and dt < 30
    record(
        "8",
        ok,
        f"c_A = not c_B on all kept slots {exact}; kept {a.kept / N:.4f} (1/4); Eve key qber {q:.4f} > 0.25 "
        f"(enumeration {float(q_oracle):.4f}); discarded {1 - a.kept / N:.4f} vs stated 5/8 (documented discrepancy); {dt:.1f}s",
    )


def test_criterion_9_intercept_resend_baseline():
    t0 = time.perf_counter()
    s = run_session(ChannelSpec.ideal(0, eve_links=[0]), 100_000, SEED + 11)
    key, _ = sift_bb84(log_arrays(s, "A"), log_arrays(s, "B"), 1.0, stream(SEED, "sift"))
    dt = time.perf_counter() - t0
    ok = abs(key.qber_estimate - 0.25) <= 0.01 and dt < 10
    record("9", ok, f"sifted qber {key.qber_estimate:.4f} over {key.sample_slots.size} slots (0.25 +/- 0.01); {dt:.1f}s")


def test_criterion_10_ghz_scheme():
    t0 = time.perf_counter()
    M = 10_000
    ideal = ghz.run_ghz_session(M, stream(SEED, "ghz-ideal"), "random")
    law = ghz.parity_violations(ideal)
    plain = ghz.run_ghz_session(M, stream(SEED, "ghz-plain"), None, "BELL_RESEND")
    plain_err = ghz.parity_violations(plain)
    stray = sum(o not in (BellOutcome.B1, BellOutcome.B3) for o in plain.eve_outcomes)
    chk = ghz.distribute(100_000, stream(SEED, "ghz-chsh"))
    S = ghz.bell_check(chk, 1.0, stream(SEED, "ghz-chsh-check"))
    dt = time.perf_counter() - t0
    ok = law == 0 and plain_err == 0 and stray == 0 and abs(S - 2 * math.sqrt(2)) <= 0.05 and dt < 120
    record(
        "10a",
        ok,
        f"parity violations {law} over {M} triples; unshuffled attack errors {plain_err}, outcomes outside B1/B3 {stray}; "
        f"CHSH S={S:.4f} over 1e5 checked pairs (2.8284 +/- 0.05); {dt:.1f}s",
    )


def test_criterion_10_deranged_shuffle_attack():
    t0 = time.perf_counter()
    s = ghz.run_ghz_session(10_000, stream(SEED, "ghz-deranged"), "pairs", "BELL_RESEND")
    err = ghz.derive_key(s).parity_error_rate
    dt = time.perf_counter() - t0
    record(
        "10b",
        abs(err - 0.25) <= 0.01 and dt < 120,
        f"deranged-shuffle attack parity error {err:.4f} vs stated 0.25 +/- 0.01 "
        f"(exact two-triple enumeration gives 0.5; see decisions ledger); {dt:.1f}s",
    )


def test_criterion_11_determinism():
    t0 = time.perf_counter()
    differing = []
    for name in SUITE:
        first = dumps_report(reproduce(name), "json")
        second = dumps_report(reproduce(name), "json")
        if first != second:
            differing.append(name)
    dt = time.perf_counter() - t0
    record("11", not differing, f"{len(SUITE)} experiments rerun with pinned seeds, differing reports {differing}; {dt:.0f}s")
