"""Scenario configuration files (JSON, schema ``qkdlab-scenario/1``).

Example::

    {
      "schema": "qkdlab-scenario/1",
      "name": "transport-n2",
      "protocol": "transport",
      "seed": 1,
      "N": 100000,
      "topology": {"relays": 2},
      "options": {"transport_mode": "parity"}
    }
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from qkdlab.network import ChannelSpec, RelayConfig, RelayMode, Retransmission

SCHEMA = "qkdlab-scenario/1"
PROTOCOLS = ("standard", "bit_revelation", "randomized", "duplex", "transport", "dropout_sharing", "ghz")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class Topology:
    relays: int = 0
    mode: str = "IR"
    p: float = 0.0
    erasure: tuple[float, ...] | float = 0.0
    eve_links: tuple[int, ...] = ()
    compromised: tuple[int, ...] = ()
    retransmission: str = "IMMEDIATE"
    batch: int = 1
    pad_ratio: float = 0.0

    def channel_spec(self) -> ChannelSpec:
        n = self.relays
        mode = RelayMode(self.mode)
        relays = []
        for j in range(1, n + 1):
            if j in self.compromised:
                relays.append(RelayConfig(RelayMode.COMPROMISED_ALWAYS_ON, self.p))
            else:
                relays.append(RelayConfig(mode, self.p if mode is not RelayMode.IR else 0.0))
        erasure = self.erasure
        if isinstance(erasure, (int, float)):
            erasure = (float(erasure),) * (n + 1)
        return ChannelSpec(
            n=n,
            relays=tuple(relays),
            link_erasure=tuple(erasure),
            eve_links=frozenset(self.eve_links),
            retransmission=Retransmission(self.retransmission, self.batch, self.pad_ratio),
        )


@dataclass(frozen=True)
class Options:
    sample_fraction: float = 0.1
    transport_mode: str = "parity"
    pool_alice_basis: bool = True
    recover_leftovers: bool = True
    pairing: str = "SEQUENTIAL"
    weights: tuple[float, float] = (0.5, 0.5)
    eve: str = "NONE"
    shuffle: str = "identity"
    bell_sample_fraction: float = 0.0
    required: int | None = None
    duplex_eve: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    protocol: str
    seed: int
    N: int
    topology: Topology = field(default_factory=Topology)
    options: Options = field(default_factory=Options)
    write_logs: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema"] = SCHEMA
        return d


def _check_keys(d: dict, allowed: set[str], path: str) -> None:
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else k, "unknown field")


def _num(d: dict, key: str, path: str, kind=float, lo=None, hi=None, hi_open=False, default=None):
    if key not in d:
        return default
    v = d[key]
    full = f"{path}.{key}" if path else key
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and not float(v).is_integer()):
        raise ConfigError(full, f"expected {'integer' if kind is int else 'number'}, got {v!r}")
    v = kind(v)
    if lo is not None and v < lo:
        raise ConfigError(full, f"must be >= {lo}")
    if hi is not None and (v >= hi if hi_open else v > hi):
        raise ConfigError(full, f"must be {'<' if hi_open else '<='} {hi}")
    return v


def parse_config(data: Any) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("$", "config must be a JSON object")
    _check_keys(data, {"schema", "name", "protocol", "seed", "N", "M", "topology", "options", "write_logs"}, "")
    if data.get("schema", SCHEMA) != SCHEMA:
        raise ConfigError("schema", f"unsupported schema {data.get('schema')!r}, expected {SCHEMA!r}")
    if "seed" not in data or data["seed"] is None:
        raise ConfigError("seed", "a seed is required (no implicit entropy)")
    seed = _num(data, "seed", "", int, lo=0)
    name = data.get("name")
    if not isinstance(name, str) or not name:
        raise ConfigError("name", "must be a non-empty string")
    protocol = data.get("protocol")
    if protocol not in PROTOCOLS:
        raise ConfigError("protocol", f"must be one of {', '.join(PROTOCOLS)}")
    size_key = "M" if protocol == "ghz" and "M" in data else "N"
    if size_key not in data:
        raise ConfigError(size_key, "missing slot count")
    N = _num(data, size_key, "", int, lo=1)

    topo_raw = data.get("topology", {})
    if not isinstance(topo_raw, dict):
        raise ConfigError("topology", "must be an object")
    _check_keys(topo_raw, set(Topology.__dataclass_fields__), "topology")
    relays = _num(topo_raw, "relays", "topology", int, lo=0, default=0)
    mode = topo_raw.get("mode", "IR")
    if mode not in {m.value for m in RelayMode}:
        raise ConfigError("topology.mode", f"unknown relay mode {mode!r}")
    p = _num(topo_raw, "p", "topology", float, lo=0.0, hi=1.0, default=0.0)
    erasure = topo_raw.get("erasure", 0.0)
    if isinstance(erasure, list):
        if len(erasure) != relays + 1:
            raise ConfigError("topology.erasure", f"expected {relays + 1} values")
        for i, e in enumerate(erasure):
            _num({"v": e}, "v", f"topology.erasure[{i}]", float, lo=0.0, hi=1.0)
        erasure = tuple(float(e) for e in erasure)
    else:
        erasure = _num(topo_raw, "erasure", "topology", float, lo=0.0, hi=1.0, default=0.0)
    eve_links = tuple(topo_raw.get("eve_links", ()))
    for i, j in enumerate(eve_links):
        if not isinstance(j, int) or not 0 <= j <= relays:
            raise ConfigError(f"topology.eve_links[{i}]", f"link must be an integer in 0..{relays}")
    compromised = tuple(topo_raw.get("compromised", ()))
    for i, j in enumerate(compromised):
        if not isinstance(j, int) or not 1 <= j <= relays:
            raise ConfigError(f"topology.compromised[{i}]", f"relay must be an integer in 1..{relays}")
    retrans = topo_raw.get("retransmission", "IMMEDIATE")
    if retrans not in ("IMMEDIATE", "BATCH", "PADDED"):
        raise ConfigError("topology.retransmission", "must be IMMEDIATE, BATCH or PADDED")
    topology = Topology(
        relays=relays,
        mode=mode,
        p=p,
        erasure=erasure,
        eve_links=eve_links,
        compromised=compromised,
        retransmission=retrans,
        batch=_num(topo_raw, "batch", "topology", int, lo=1, default=1),
        pad_ratio=_num(topo_raw, "pad_ratio", "topology", float, lo=0.0, hi=1.0, hi_open=True, default=0.0),
    )

    opt_raw = data.get("options", {})
    if not isinstance(opt_raw, dict):
        raise ConfigError("options", "must be an object")
    _check_keys(opt_raw, set(Options.__dataclass_fields__), "options")
    defaults = Options()
    weights = tuple(opt_raw.get("weights", defaults.weights))
    if len(weights) != 2 or abs(sum(weights) - 1.0) > 1e-9 or min(weights) < 0:
        raise ConfigError("options.weights", "two non-negative weights summing to 1")
    tmode = opt_raw.get("transport_mode", defaults.transport_mode)
    if tmode not in ("parity", "match"):
        raise ConfigError("options.transport_mode", "must be 'parity' or 'match'")
    pairing = opt_raw.get("pairing", defaults.pairing)
    if pairing not in ("SEQUENTIAL", "MATCH_EQUAL"):
        raise ConfigError("options.pairing", "must be SEQUENTIAL or MATCH_EQUAL")
    eve = opt_raw.get("eve", defaults.eve)
    if eve not in ("NONE", "BELL_RESEND"):
        raise ConfigError("options.eve", "must be NONE or BELL_RESEND")
    shuffle = opt_raw.get("shuffle", defaults.shuffle)
    if shuffle not in ("identity", "pairs", "random"):
        raise ConfigError("options.shuffle", "must be identity, pairs or random")
    required = opt_raw.get("required")
    if required is not None and not (isinstance(required, int) and 0 <= required <= relays):
        raise ConfigError("options.required", f"must be an integer in 0..{relays}")
    options = Options(
        sample_fraction=_num(opt_raw, "sample_fraction", "options", float, 0.0, 1.0, default=defaults.sample_fraction),
        transport_mode=tmode,
        pool_alice_basis=bool(opt_raw.get("pool_alice_basis", defaults.pool_alice_basis)),
        recover_leftovers=bool(opt_raw.get("recover_leftovers", defaults.recover_leftovers)),
        pairing=pairing,
        weights=(float(weights[0]), float(weights[1])),
        eve=eve,
        shuffle=shuffle,
        bell_sample_fraction=_num(opt_raw, "bell_sample_fraction", "options", float, 0.0, 1.0, default=0.0),
        required=required,
        duplex_eve=bool(opt_raw.get("duplex_eve", False)),
    )
    try:
        topology.channel_spec()
    except ValueError as exc:
        raise ConfigError("topology", str(exc)) from exc
    return ScenarioConfig(
        name=name,
        protocol=protocol,
        seed=seed,
        N=N,
        topology=topology,
        options=options,
        write_logs=bool(data.get("write_logs", True)),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_config(data)
