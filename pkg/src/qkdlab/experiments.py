"""Scenario runner, persisted artifacts, reports and the reproduction suite.

A run is split in two halves so that every report value can be recomputed
from what was written to disk: :func:`simulate` produces artifacts (session
logs, or published GHZ data), :func:`analyze` turns artifacts into a report.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.stats import chisquare

from qkdlab import ghz, logio
from qkdlab.config import ScenarioConfig, parse_config
from qkdlab.dropout import DropoutParams, establish_shared_key, predict_open, predict_useful, relay_guess
from qkdlab.network import ChannelSpec, SessionData, run_session
from qkdlab.protocols import (
    DuplexLogs,
    bit_revelation,
    duplex_parity,
    log_arrays,
    randomize_postprocessing,
    run_duplex,
    sift_bb84,
)
from qkdlab.rng import derive_seed, stream
from qkdlab.statevector import ChshTally, BellOutcome
from qkdlab.transport import TransportOptions, assemble_key, disagreement

REPORT_VERSION = "qkdlab-report v1"
GHZ_HEADER = "qkdlab-ghz v1"


# --- small helpers ------------------------------------------------------------


def _clean(x):
    """JSON-safe values: NaN/inf become None, numpy scalars become Python."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if not math.isfinite(x) else round(x, 12)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def rate(count: int, of: int) -> dict:
    return {"value": (count / of) if of else None, "count": int(count), "of": int(of)}


def dumps_report(report: dict, fmt: str = "json") -> str:
    report = _clean(report)
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    if fmt == "table":
        return render_table(report)
    raise ValueError(f"unknown format {fmt!r}")


def _flatten(d, prefix=""):
    for k in sorted(d):
        v = d[k]
        key = f"{prefix}{k}"
        if isinstance(v, dict) and not ({"value", "count", "of"} <= set(v)):
            yield from _flatten(v, key + ".")
        else:
            yield key, v


def _fmt(v) -> str:
    if isinstance(v, dict) and {"value", "count", "of"} <= set(v):
        val = "n/a" if v["value"] is None else f"{v['value']:.6f}"
        return f"{val}  ({v['count']}/{v['of']})"
    if isinstance(v, float):
        return f"{v:.6f}"
    if v is None:
        return "n/a"
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True, separators=(",", ":"))
    return str(v)


def render_table(report: dict) -> str:
    if "rows" in report:
        return _suite_table(report)
    items = list(_flatten({k: v for k, v in report.items() if k != "scenario"}))
    width = max((len(k) for k, _ in items), default=0)
    head = f"{report.get('report', REPORT_VERSION)}  scenario={report['scenario']['name']}  seed={report['scenario']['seed']}"
    return "\n".join([head] + [f"{k.ljust(width)}  {_fmt(v)}" for k, v in items]) + "\n"


def _suite_table(report: dict) -> str:
    lines = [f"# {report['experiment']}: {report['anchor']}  (seed {report['seed']})"]
    cols = ("quantity", "measured", "expected", "tolerance", "result")
    rows = []
    for r in report["rows"]:
        result = {True: "PASS", False: "FAIL", None: "note"}[r["pass"]]
        rows.append((r["quantity"], _fmt(r["measured"]), _fmt(r["expected"]), _fmt(r["tolerance"]), result))
    widths = [max(len(c), *(len(row[i]) for row in rows)) for i, c in enumerate(cols)]
    lines.append("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
    for row in rows:
        lines.append("  ".join(x.ljust(w) for x, w in zip(row, widths)))
    seen = set()
    for r in report["rows"]:
        if r.get("note") and r["note"] not in seen:
            seen.add(r["note"])
            lines.append(f"  * {r['quantity']}: {r['note']}")
    return "\n".join(lines) + "\n"


# --- artifacts ----------------------------------------------------------------


@dataclass
class GhzRecord:
    """Per-triple data written after a GHZ run."""

    m: np.ndarray
    associations: list[tuple[int, int]]
    alice_bits: np.ndarray
    bob_bits: np.ndarray
    eve: list[str]
    consumed: set[int]
    chsh_trials: list[tuple[int, int, int, int, int]]

    @classmethod
    def from_session(cls, s: ghz.GhzSession) -> "GhzRecord":
        return cls(
            s.published_m.copy(),
            list(s.associations),
            s.alice_bits.copy(),
            s.bob_bits.copy(),
            [o.name for o in s.eve_outcomes],
            set(s.consumed),
            list(s.chsh_trials),
        )

    def dumps(self) -> str:
        out = io.StringIO()
        out.write(GHZ_HEADER + "\n")
        out.write("triple,m,alice_slot,bob_slot,a,b,eve,bell_sample\n")
        for i, (al, bo) in enumerate(self.associations):
            eve = self.eve[i] if self.eve else ""
            out.write(
                f"{i + 1},{int(self.m[i])},{al},{bo},{int(self.alice_bits[al - 1])},"
                f"{int(self.bob_bits[bo - 1])},{eve},{int(i in self.consumed)}\n"
            )
        out.write("# chsh triple,a_set,b_set,a,b\n")
        for tr in self.chsh_trials:
            out.write("chsh," + ",".join(str(int(x)) for x in (tr[0] + 1,) + tuple(tr[1:])) + "\n")
        return out.getvalue()

    @classmethod
    def loads(cls, text: str) -> "GhzRecord":
        lines = text.splitlines()
        if not lines or lines[0] != GHZ_HEADER:
            raise logio.LogFormatError(1, f"expected header {GHZ_HEADER!r}")
        m, assoc, a, b, eve, consumed, trials = [], [], {}, {}, [], set(), []
        for no, line in enumerate(lines[2:], start=3):
            if not line or line.startswith("#"):
                continue
            f = line.split(",")
            try:
                if f[0] == "chsh":
                    tr = tuple(int(x) for x in f[1:6])
                    trials.append((tr[0] - 1,) + tr[1:])
                    continue
                triple, mm, al, bo, aa, bb = (int(x) for x in f[:6])
            except (ValueError, IndexError) as exc:
                raise logio.LogFormatError(no, f"bad record: {exc}") from exc
            m.append(mm)
            assoc.append((al, bo))
            a[al], b[bo] = aa, bb
            if f[6]:
                eve.append(f[6])
            if f[7] == "1":
                consumed.add(triple - 1)
        M = len(m)
        return cls(
            np.array(m, dtype=np.int8),
            assoc,
            np.array([a[k] for k in range(1, M + 1)], dtype=np.int8),
            np.array([b[k] for k in range(1, M + 1)], dtype=np.int8),
            eve,
            consumed,
            trials,
        )


@dataclass
class Artifacts:
    sessions: dict[str, SessionData] = field(default_factory=dict)
    ghz: GhzRecord | None = None


def _spec(cfg: ScenarioConfig) -> ChannelSpec:
    return cfg.topology.channel_spec()


def _transport_options(cfg: ScenarioConfig) -> TransportOptions:
    o = cfg.options
    return TransportOptions(mode=o.transport_mode, pool_alice_basis=o.pool_alice_basis, recover_leftovers=o.recover_leftovers)


def simulate(cfg: ScenarioConfig) -> Artifacts:
    """Run the stochastic part of a scenario. Everything derives from ``cfg.seed``."""
    if cfg.protocol == "duplex":
        eve = cfg.options.duplex_eve or bool(cfg.topology.eve_links)
        d_seed = derive_seed(cfg.seed, "scenario", "duplex")
        spec = ChannelSpec.ideal(0, eve_links=[0] if eve else [])
        ab = run_session(spec, (cfg.N + 1) // 2, derive_seed(d_seed, "duplex-ab"), session_id="ab")
        ba = run_session(spec, cfg.N // 2, derive_seed(d_seed, "duplex-ba"), session_id="ba")
        return Artifacts(sessions={"ab": ab, "ba": ba})
    if cfg.protocol == "ghz":
        rng = stream(cfg.seed, "scenario", "ghz")
        s = ghz.run_ghz_session(cfg.N, rng, cfg.options.shuffle, cfg.options.eve, cfg.options.bell_sample_fraction)
        return Artifacts(ghz=GhzRecord.from_session(s))
    session = run_session(_spec(cfg), cfg.N, derive_seed(cfg.seed, "scenario", "session"), session_id="s1")
    return Artifacts(sessions={"s1": session})


def _announcement_volume(announcements) -> dict:
    lines = [a.to_csv() for a in announcements]
    return {"records": len(lines), "bytes": sum(len(x) + 1 for x in lines)}


def _sifted_report(a_key, b_key, slots: int, label: str) -> dict:
    return {
        "counters": {"slots": slots, "kept": a_key.kept, "key_length": len(a_key), "sample": int(a_key.sample_slots.size)},
        "rates": {
            "kept_fraction": rate(a_key.kept, slots),
            "key_rate": rate(len(a_key), slots),
            "qber_estimate": {
                "value": a_key.qber_estimate if a_key.qber_defined else None,
                "count": int(round(a_key.qber_estimate * a_key.sample_slots.size)) if a_key.qber_defined else 0,
                "of": int(a_key.sample_slots.size),
            },
            "key_disagreement": rate(int(np.sum(a_key.bits != b_key.bits)), len(a_key)),
        },
        "announcements": {"records": slots, "bytes": None, "kind": label},
    }


def analyze(cfg: ScenarioConfig, art: Artifacts) -> dict:
    """Compute a report from artifacts alone (plus the config that made them)."""
    rng = stream(cfg.seed, "scenario", "analysis")
    body: dict
    proto = cfg.protocol
    if proto in ("standard", "bit_revelation", "randomized"):
        s = art.sessions["s1"]
        alice, bob = log_arrays(s, "A"), log_arrays(s, "B")
        slots = int(np.intersect1d(alice.t, bob.t).size)
        if proto == "randomized":
            res = randomize_postprocessing(alice, bob, cfg.options.weights, rng, cfg.options.sample_fraction)
            body = {"counters": {"slots": res.slots, "kept": res.kept}, "rates": {"kept_fraction": rate(res.kept, res.slots)}, "channels": {}}
            for name, (ak, bk) in res.outputs.items():
                body["channels"][name] = _sifted_report(ak, bk, int(np.sum(res.assignment == (name != "standard"))), name)
            body["announcements"] = {"records": slots, "bytes": None}
        else:
            fn = sift_bb84 if proto == "standard" else bit_revelation
            a_key, b_key = fn(alice, bob, cfg.options.sample_fraction, rng)
            body = _sifted_report(a_key, b_key, slots, "basis" if proto == "standard" else "bit")
    elif proto == "duplex":
        d = DuplexLogs.from_sessions(art.sessions["ab"], art.sessions["ba"])
        res = duplex_parity(d, cfg.options.pairing)
        st = res.stats
        body = {
            "counters": {k: st[k] for k in ("slots", "set1", "set2", "set3", "tuples", "failures", "unpaired", "key_length")},
            "rates": {
                "failure_rate": rate(res.alice_failures, len(res.tuples)),
                "key_rate": rate(len(res.alice_key), d.T),
                "key_disagreement": rate(int(np.sum(res.alice_key.bits != res.bob_key.bits)), len(res.alice_key)),
            },
            "announcements": {"records": len(res.tuples), "bytes": sum(len(f"parity,{t},{tt},{f}") + 1 for t, tt, f in res.tuples)},
        }
        if "eve_key_agreement" in st:
            body["rates"]["eve_key_agreement"] = rate(int(round(st["eve_key_agreement"] * st["key_length"])), st["key_length"])
    elif proto == "transport":
        s = art.sessions["s1"]
        asm = assemble_key(s, _transport_options(cfg))
        body = {
            "counters": dict(asm.stats, slots=s.N),
            "rates": {
                "key_rate": rate(asm.length, s.N),
                "key_disagreement": rate(int(np.sum(asm.alice.bits != asm.bob.bits)), asm.length),
            },
            "announcements": _announcement_volume(asm.announcements),
        }
    elif proto == "dropout_sharing":
        s = art.sessions["s1"]
        res = establish_shared_key(s, _transport_options(cfg), cfg.options.required, cfg.topology.p)
        required = s.n - 1 if cfg.options.required is None else cfg.options.required
        useful = int(round(res.measured_f * s.N))
        opened = int(round(res.measured_open * s.N))
        channels = {}
        ann = []
        for ch in res.shares:
            channels[ch.label] = {
                "active_set": list(ch.active_set),
                "slots": len(ch.slots),
                "key_length": len(ch.key),
                "qber": rate(int(np.sum(ch.key.bits != ch.bob_key.bits)), len(ch.key)),
            }
            ann.extend(ch.assembly.announcements)
        body = {
            "counters": {"slots": s.N, "required": required, "key_length": len(res.final), "shares": len(res.shares)},
            "rates": {
                "measured_f": rate(useful, s.N),
                "measured_open": rate(opened, s.N),
                "predicted_f": res.predicted_f,
                "final_key_disagreement": rate(int(np.sum(res.final.bits != res.bob_final.bits)), len(res.final)),
            },
            "conditions_met": res.conditions_met,
            "notes": list(res.notes),
            "channels": channels,
            "announcements": _announcement_volume(ann),
        }
    elif proto == "ghz":
        g = art.ghz
        keep = [i for i in range(len(g.associations)) if i not in g.consumed]
        a = np.array([g.alice_bits[g.associations[i][0] - 1] for i in keep], dtype=np.int8)
        b = np.array([g.bob_bits[g.associations[i][1] - 1] ^ g.m[i] for i in keep], dtype=np.int8)
        tally = ChshTally()
        for _, a_set, b_set, x, y in g.chsh_trials:
            tally.add(a_set, b_set, x, y)
        try:
            S = tally.value()
        except ValueError:
            S = None
        eve_counts = {o.name: g.eve.count(o.name) for o in BellOutcome} if g.eve else {}
        body = {
            "counters": {"triples": len(g.associations), "bell_sample": len(g.consumed), "key_length": int(a.size)},
            "rates": {
                "parity_error_rate": rate(int(np.sum(a != b)), int(a.size)),
                "chsh_S": {"value": S, "count": tally.trials, "of": tally.trials},
            },
            "eve_outcomes": eve_counts,
            "announcements": {"records": 2 * len(g.associations), "bytes": None},
        }
    else:  # pragma: no cover - config validation rejects this
        raise ValueError(proto)
    return {"report": REPORT_VERSION, "scenario": cfg.to_dict(), **body}


# --- persistence --------------------------------------------------------------


def persist(cfg: ScenarioConfig, art: Artifacts, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "scenario.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    for sid, s in art.sessions.items():
        logio.save(s, out / f"{sid}.log")
    if art.ghz is not None:
        (out / "ghz.csv").write_text(art.ghz.dumps())


def load_artifacts(root: Path) -> tuple[ScenarioConfig, Artifacts]:
    root = Path(root)
    cfg = parse_config(json.loads((root / "scenario.json").read_text()))
    art = Artifacts()
    for p in sorted(root.glob("*.log")):
        s = logio.ingest(p)
        art.sessions[s.session_id] = s
    if (root / "ghz.csv").exists():
        art.ghz = GhzRecord.loads((root / "ghz.csv").read_text())
    return cfg, art


def run_scenario(cfg: ScenarioConfig, out: Path | None = None) -> dict:
    art = simulate(cfg)
    report = analyze(cfg, art)
    if out is not None:
        out = Path(out)
        if cfg.write_logs:
            persist(cfg, art, out)
        else:
            out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(dumps_report(report, "json"))
    return report


def report_from_logs(root: Path) -> dict:
    cfg, art = load_artifacts(root)
    return analyze(cfg, art)


# --- derived oracles used by the suite ---------------------------------------


def match_mode_rate(n: int) -> Fraction:
    """Asymptotic key rate when transport pairs need equal pivot bits.

    Per openness pattern, each relay bit is fixed by the segment of open
    links it sits on. A dual pair of buckets can pair at most
    ``sum_v min(P(v), P'(v))`` of its slots, ``v`` ranging over pivot-bit
    vectors.
    """
    L = n + 1

    def dist(o, piv):
        counts: dict = {}
        for bits in product((0, 1), repeat=L + 1):
            if any(o[k] and bits[k] != bits[k + 1] for k in range(L)):
                continue
            v = tuple(bits[j] for j in piv)
            counts[v] = counts.get(v, 0) + 1
        tot = sum(counts.values())
        return {k: Fraction(c, tot) for k, c in counts.items()}

    acc = Fraction(1)
    for o in product((0, 1), repeat=L):
        comp = tuple(1 - x for x in o)
        if all(o) or not any(o) or o > comp:
            continue
        piv = [k for k in range(1, L) if o[k] != o[k - 1]]
        p1, p2 = dist(o, piv), dist(comp, piv)
        acc += sum(min(p1.get(v, 0), p2.get(v, 0)) for v in set(p1) | set(p2))
    return acc / 2**L


def bitrev_eve_oracle() -> tuple[Fraction, Fraction]:
    """(kept fraction, key error rate) for bit revelation with intercept/resend.

    Enumerates Alice basis/bit, Eve basis and outcome, Bob basis and outcome,
    with the basis-match rule at each measurement.
    """
    kept = err = Fraction(0)
    for ca, ba, ce, cb in product((0, 1), repeat=4):
        w = Fraction(1, 16)
        for be, pe in ((ba, Fraction(1)),) if ce == ca else ((0, Fraction(1, 2)), (1, Fraction(1, 2))):
            for bb, pb in ((be, Fraction(1)),) if cb == ce else ((0, Fraction(1, 2)), (1, Fraction(1, 2))):
                if ba != bb:
                    kept += w * pe * pb
                    if ca != 1 - cb:
                        err += w * pe * pb
    return kept, err / kept


# --- reproduction suite ---------------------------------------------------------


def _row(quantity, measured, expected, tolerance, note="", check=True) -> dict:
    if not check:
        ok = None
    elif measured is None:
        ok = False
    else:
        ok = bool(abs(float(measured) - float(expected)) <= tolerance)
    return {"quantity": quantity, "measured": measured, "expected": expected, "tolerance": tolerance, "pass": ok, "note": note}


def _exp_rate_vs_relays(seed: int) -> list[dict]:
    rows = []
    N = 100_000
    for n in (1, 2, 3, 4, 6):
        s = run_session(ChannelSpec.ideal(n), N, derive_seed(seed, "relays", n))
        asm = assemble_key(s, TransportOptions())
        rows.append(_row(f"key rate n={n}", asm.length / N, 0.5, 0.01))
        rows.append(_row(f"key mismatch n={n}", disagreement(asm.alice, asm.bob), 0.0, 0.0))
    for n in (1, 2, 3, 4, 6):
        s = run_session(ChannelSpec.ideal(n), N, derive_seed(seed, "relays", n))
        asm = assemble_key(s, TransportOptions.strict("match"))
        rows.append(
            _row(
                f"equal-pivot-bit rate n={n}",
                asm.length / N,
                float(match_mode_rate(n)),
                0.01,
                "literal equal-bit pairing; expected value is the derived asymptotic rate, not N/2",
            )
        )
    return rows


def _exp_dropout_fractions(seed: int) -> list[dict]:
    N = 1_000_000
    params = DropoutParams(4, Fraction(1, 2))
    s = run_session(ChannelSpec.dropout(4, 0.5), N, derive_seed(seed, "dropout", 4))
    res = establish_shared_key(s, p=0.5)
    return [
        _row("P(open) n=4 p=1/2", res.measured_open, 5 / 16, 0.005),
        _row("f n=4 p=1/2", res.measured_f, 1 / 4, 0.005),
        _row("predicted P(open)", float(predict_open(params)), 5 / 16, 1e-12),
        _row("predicted f", float(predict_useful(params)), 1 / 4, 1e-12),
        _row("final key mismatch", disagreement(res.final, res.bob_final), 0.0, 0.0),
        _row("final key length", len(res.final), len(res.final), 0, "XOR of four shares truncated to the shortest", check=False),
    ]


def _exp_dropout_n10(seed: int) -> list[dict]:
    pred = float(predict_useful(DropoutParams(10, Fraction(1, 2))))
    N = 1_000_000
    s = run_session(ChannelSpec.dropout(10, 0.5), N, derive_seed(seed, "dropout", 10))
    active = (~s.dropout).sum(axis=0)[: s.N]
    measured = float(np.mean(active == 9))
    sd = math.sqrt(pred * (1 - pred) / N)
    return [
        _row("predicted f n=10", pred, 10 / 1024, 1e-12),
        _row("predicted f vs stated f~0.01", pred, 0.01, 0.0005),
        _row("measured f n=10", measured, pred, round(4 * sd, 6), "tolerance is four binomial standard deviations"),
    ]


def _exp_duplex_eve(seed: int) -> list[dict]:
    T = 100_000
    eve = duplex_parity(run_duplex(T, derive_seed(seed, "duplex", "eve"), eve=True))
    ideal = duplex_parity(run_duplex(T, derive_seed(seed, "duplex", "ideal"), eve=False))
    rows = [
        _row("failure rate with Eve", eve.failure_rate, 0.375, 0.01),
        _row("failure rate ideal", ideal.failure_rate, 0.0, 0.0),
        _row("ideal key mismatch", disagreement(ideal.alice_key, ideal.bob_key), 0.0, 0.0),
    ]
    if "eve_key_agreement" in eve.stats:
        rows.append(_row("Eve agreement with surviving key bits", eve.stats["eve_key_agreement"], None, None, check=False))
    return rows


def _exp_bitrev_fractions(seed: int) -> list[dict]:
    N = 100_000
    kept_o, err_o = bitrev_eve_oracle()
    ideal = run_session(ChannelSpec.ideal(0), N, derive_seed(seed, "bitrev", "ideal"))
    a, b = log_arrays(ideal, "A"), log_arrays(ideal, "B")
    ak, bk = bit_revelation(a, b, 0.0, stream(seed, "bitrev", "sample"))
    ca = a.c[np.isin(a.t, ak.origin)]
    cb = b.c[np.isin(b.t, ak.origin)]
    attacked = run_session(ChannelSpec.ideal(0, eve_links=[0]), N, derive_seed(seed, "bitrev", "eve"))
    ea, eb = bit_revelation(log_arrays(attacked, "A"), log_arrays(attacked, "B"), 0.0, stream(seed, "bitrev", "sample2"))
    return [
        _row("kept fraction ideal", ak.kept / N, 0.25, 0.01),
        _row("kept slots with c_A != complement(c_B)", int(np.sum(ca != 1 - cb)), 0, 0),
        _row("kept fraction with Eve", ea.kept / N, float(kept_o), 0.01),
        _row("key qber with Eve", disagreement(ea.share(), eb.share()), float(err_o), 0.01, "exceeds 0.25"),
        _row(
            "discarded fraction ideal",
            1 - ak.kept / N,
            5 / 8,
            None,
            "stated 5/8 differs from the case enumeration (3/4 discarded); documented discrepancy",
            check=False,
        ),
    ]


# sd of S is about 0.036 at 1e4 trials; 1e5 puts the 0.05 band past 4 sd
CHSH_TRIALS = 100_000


def _exp_ghz_attack(seed: int) -> list[dict]:
    M = 10_000
    rows = []
    s = ghz.run_ghz_session(M, stream(seed, "ghz", "ideal"))
    rows.append(_row("parity violations ideal", ghz.parity_violations(s), 0, 0))
    s = ghz.run_ghz_session(M, stream(seed, "ghz", "unshuffled"), None, "BELL_RESEND")
    rows.append(_row("parity violations unshuffled attack", ghz.parity_violations(s), 0, 0))
    stray = sum(o not in (BellOutcome.B1, BellOutcome.B3) for o in s.eve_outcomes)
    rows.append(_row("Eve outcomes outside {B1,B3}", stray, 0, 0))
    s = ghz.run_ghz_session(M, stream(seed, "ghz", "deranged"), "pairs", "BELL_RESEND")
    err = ghz.derive_key(s).parity_error_rate
    rows.append(_row("parity error deranged attack (stated)", err, 0.25, 0.01, "exact six-qubit enumeration gives 1/2"))
    rows.append(_row("parity error deranged attack (oracle)", err, 0.5, 0.01))
    s = ghz.distribute(CHSH_TRIALS, stream(seed, "ghz", "chsh"))
    S = ghz.bell_check(s, 1.0, stream(seed, "ghz", "chsh-check"))
    rows.append(_row("CHSH S ideal", S, 2 * math.sqrt(2), 0.05, f"{CHSH_TRIALS} triples, all Bell-checked"))
    return rows


def _exp_compromised_relay(seed: int) -> list[dict]:
    N = 1_000_000
    s = run_session(ChannelSpec.dropout(4, 0.5, compromised=[2]), N, derive_seed(seed, "compromised"))
    res = establish_shared_key(s, p=0.5)
    rows = []
    for ch in res.shares:
        q = ch.qber
        if 2 in ch.active_set:
            rows.append(_row(f"qber {ch.label} (includes R2)", q, 0.0, 0.005))
        else:
            rows.append(_row(f"qber {ch.label} (excludes R2)", q, 0.25, 0.01))
    return rows


@dataclass(frozen=True)
class Experiment:
    name: str
    anchor: str
    seed: int
    fn: Callable[[int], list[dict]]


SUITE: dict[str, Experiment] = {
    e.name: e
    for e in (
        Experiment("rate-vs-relays", "bit transport yields N/2 shared bits on average, for any relay count", 101, _exp_rate_vs_relays),
        Experiment("dropout-fractions", "drop-out relays at p=1/2, n=4: open fraction 5/16, useful fraction 1/4", 102, _exp_dropout_fractions),
        Experiment("dropout-n10", "drop-out relays at p=1/2, n=10: useful fraction about 0.01", 103, _exp_dropout_n10),
        Experiment("duplex-eve", "duplex parity checks expose intercept/resend at an error rate of 3/8", 104, _exp_duplex_eve),
        Experiment("bitrev-fractions", "bit-revelation variant: kept fraction and induced error rate", 105, _exp_bitrev_fractions),
        Experiment("ghz-attack", "GHZ-type distribution: parity law, Bell-measurement attack, CHSH check", 106, _exp_ghz_attack),
        Experiment("compromised-relay", "an always-on relay reveals itself as 25% errors on channels excluding it", 107, _exp_compromised_relay),
    )
}


def reproduce(name: str, seed: int | None = None) -> dict:
    exp = SUITE[name]
    seed = exp.seed if seed is None else seed
    rows = exp.fn(seed)
    checked = [r["pass"] for r in rows if r["pass"] is not None]
    return _clean(
        {
            "report": REPORT_VERSION,
            "experiment": exp.name,
            "anchor": exp.anchor,
            "seed": seed,
            "rows": rows,
            "passed": all(checked),
        }
    )


def chi_square_uniform(bits: np.ndarray) -> float:
    """p-value of a chi-square test that 0 and 1 are equally frequent."""
    ones = int(np.sum(bits))
    return float(chisquare([bits.size - ones, ones]).pvalue)


def leaked_key_pvalues(result, n: int) -> dict[int, float]:
    """Uniformity p-value of ``final xor relay_guess`` for each relay."""
    return {j: chi_square_uniform(result.final.bits ^ relay_guess(result, j)) for j in range(1, n + 1)}
