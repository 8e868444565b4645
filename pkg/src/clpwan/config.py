"""Scenario configuration: JSON loading, validation with line-located diagnostics, and scenario assembly."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from jsonschema import Draft202012Validator

from .engine import EngineConfig, OracleConfig
from .errors import ConfigError
from .radio import PROFILE_FIELDS, TechnologyRegistry, builtin_registry, default_config, profile_violations
from .traffic import FEATURE_FIELDS, WorkloadSpec, workload_violations

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_range = {"type": "array", "items": _nonneg, "minItems": 2, "maxItems": 2}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_ranges = _obj({f: _range for f in FEATURE_FIELDS}, FEATURE_FIELDS)

_profile = _obj({
    "coverage_m": _pos,
    "data_rate_bps": _pos,
    "bandwidth_hz": _nonneg,
    "spectrum": {"enum": ["licensed", "unlicensed"]},
    "max_payload_bytes": {"type": ["integer", "null"], "minimum": 1},
    "max_messages_per_day": {"type": ["integer", "null"], "minimum": 1},
    "fixed_overhead_s": _nonneg,
    "tx_power_w": _pos,
    "per_message_overhead_j": _nonneg,
    "battery_life": {"type": "string"},
})
assert set(_profile["properties"]) == set(PROFILE_FIELDS)

_preset = _obj(
    {
        "arrival_s": _pos,
        "device_count": {"type": "integer", "minimum": 1},
        "duration_s": _pos,
        "distance_m": _range,
        "pattern_distribution": _ranges,
    },
    ("arrival_s", "device_count", "duration_s", "distance_m", "pattern_distribution"),
)

SCHEMA = _obj(
    {
        "technologies": {"type": "object", "additionalProperties": _profile},
        "workload": _obj(
            {"active": {"type": "string"}, "presets": {"type": "object", "additionalProperties": _preset}},
            ("active",),
        ),
        "engine": _obj({
            "k": {"type": "integer", "minimum": 1},
            "epsilon": _pos,
            "admission": {"type": "boolean"},
            "feedback": {"type": "boolean"},
            "bootstrap": _obj({
                "count": {"type": "integer", "minimum": 0},
                "weights": _obj({"delay": _nonneg, "energy": _nonneg}),
            }),
            "feature_bounds": _obj({f: {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
                                    for f in FEATURE_FIELDS}),
        }),
        "simulation": _obj({
            "seed": {"type": "integer", "minimum": 0},
            "modes": {"type": "array", "items": {"type": "string", "pattern": "^(hybrid|fixed:.+)$"},
                      "minItems": 1},
            "edge_capacity": _pos,
            "edge_compute_s": _nonneg,
            "cloud_compute_s": _nonneg,
            "backhaul": _obj({"delay_s": _nonneg, "energy_j": _nonneg}),
            "bucket_edges_bytes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        }),
        "output": _obj({
            "charts": {"type": "boolean"},
            "decisions_log": {"type": "boolean"},
            "dataset": {"type": "boolean"},
        }),
    },
    ("workload", "engine", "simulation"),
)


@dataclass(frozen=True)
class Diagnostic:
    key: str
    message: str
    line: int | None = None

    def format(self, source: str = "config") -> str:
        where = f"{source}:{self.line}" if self.line is not None else source
        return f"{where}: {self.key}: {self.message}"


def locate_line(text: str | None, path: list) -> int | None:
    """Best-effort line of the deepest key in ``path`` found in the raw JSON text."""
    if not text:
        return None
    pos, found = 0, None
    for part in path:
        if not isinstance(part, str):
            continue
        idx = text.find(json.dumps(part), pos)
        if idx < 0:
            break
        pos = found = idx
    if found is None:
        return 1
    return text.count("\n", 0, found) + 1


def _dotted(path) -> str:
    return ".".join(str(p) for p in path) or "<root>"


def effective_config(raw: dict) -> dict:
    """Fill omitted keys inside present sections from the shipped defaults."""
    base = default_config()
    out = {}
    for section in ("engine", "simulation", "output"):
        merged = copy.deepcopy(base[section])
        for key, value in raw.get(section, {}).items():
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key] = {**merged[key], **value}
            else:
                merged[key] = value
        out[section] = merged
    out["technologies"] = copy.deepcopy(raw.get("technologies", {}))
    workload = copy.deepcopy(raw["workload"])
    workload["presets"] = {**base["workload"]["presets"], **workload.get("presets", {})}
    out["workload"] = workload
    return out


def validate(raw, text: str | None = None) -> list[Diagnostic]:
    """Every violation in ``raw``, schema errors first, then cross-field checks."""
    diags = []
    for err in sorted(Draft202012Validator(SCHEMA).iter_errors(raw), key=lambda e: list(map(str, e.path))):
        path = list(err.path)
        if err.validator == "required":
            missing = err.message.split("'")[1]
            path = path + [missing]
            diags.append(Diagnostic(_dotted(path), "required section or key is missing", locate_line(text, path[:-1])))
        elif err.validator == "additionalProperties" and isinstance(err.instance, dict):
            allowed = set(err.schema.get("properties", {}))
            for extra in sorted(set(err.instance) - allowed):
                diags.append(Diagnostic(_dotted(path + [extra]), "unknown key", locate_line(text, path + [extra])))
        else:
            diags.append(Diagnostic(_dotted(path), err.message, locate_line(text, path)))
    if diags:
        return diags

    cfg = effective_config(raw)

    def add(path, msg):
        diags.append(Diagnostic(_dotted(path), msg, locate_line(text, path)))

    registry = None
    try:
        registry = build_registry(cfg)
    except ConfigError as exc:
        add(["technologies", exc.key or ""], str(exc))
    if registry is not None:
        for p in registry:
            for key, msg in profile_violations(p.__dict__):
                add(["technologies", p.id, key], msg)
        for i, mode in enumerate(cfg["simulation"]["modes"]):
            if mode.startswith("fixed:") and mode[6:] not in registry:
                add(["simulation", "modes", i], f"unknown technology {mode[6:]!r} in mode {mode!r}")

    active = cfg["workload"]["active"]
    if active not in cfg["workload"]["presets"]:
        add(["workload", "active"], f"no workload preset named {active!r}")
    for name, preset in raw["workload"].get("presets", {}).items():
        spec = workload_from_preset(name, preset, 0)
        for key, msg in workload_violations(spec):
            add(["workload", "presets", name, key], msg)

    for name, (lo, hi) in cfg["engine"]["feature_bounds"].items():
        if not lo < hi:
            add(["engine", "feature_bounds", name], "min must be < max")
    edges = cfg["simulation"]["bucket_edges_bytes"]
    if any(b <= a for a, b in zip(edges, edges[1:])):
        add(["simulation", "bucket_edges_bytes"], "edges must be strictly increasing")
    return diags


def load(path: str | Path) -> tuple[dict, str]:
    """Read and parse a config file; raises ``OSError`` on I/O failure."""
    text = Path(path).read_text("utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}", key="<json>") from None
    return raw, text


def build_registry(cfg: dict) -> TechnologyRegistry:
    return builtin_registry().with_overrides(cfg.get("technologies", {}))


def workload_from_preset(name: str, preset: dict, seed: int) -> WorkloadSpec:
    return WorkloadSpec(
        name=name,
        arrival_s=float(preset["arrival_s"]),
        device_count=int(preset["device_count"]),
        pattern_distribution={k: tuple(v) for k, v in preset["pattern_distribution"].items()},
        duration_s=float(preset["duration_s"]),
        seed=seed,
        distance_m=tuple(preset["distance_m"]),
    )


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def engine_config(cfg: dict) -> EngineConfig:
    e = cfg["engine"]
    return EngineConfig(
        k=e["k"],
        epsilon=e["epsilon"],
        admission=e["admission"],
        feedback=e["feedback"],
        bootstrap_count=e["bootstrap"]["count"],
        w_delay=e["bootstrap"]["weights"]["delay"],
        w_energy=e["bootstrap"]["weights"]["energy"],
    )


def oracle_config(cfg: dict, workload: WorkloadSpec) -> OracleConfig:
    e = cfg["engine"]
    return OracleConfig(
        ranges=workload.pattern_distribution,
        distance_m=workload.distance_m,
        feature_bounds={k: tuple(v) for k, v in e["feature_bounds"].items()},
        w_delay=e["bootstrap"]["weights"]["delay"],
        w_energy=e["bootstrap"]["weights"]["energy"],
    )


def scenario_from_config(raw: dict, mode: str = "hybrid", seed: int | None = None, workload: str | None = None):
    """Validate ``raw`` and assemble a runnable Scenario; raises ConfigError listing every problem."""
    from .simulator import Backhaul, Scenario

    diags = validate(raw)
    if diags:
        raise ConfigError("; ".join(d.format() for d in diags), key=diags[0].key)
    cfg = effective_config(raw)
    sim = cfg["simulation"]
    seed = sim["seed"] if seed is None else seed
    name = workload or cfg["workload"]["active"]
    if name not in cfg["workload"]["presets"]:
        raise ConfigError(f"no workload preset named {name!r}", key="workload.active")
    spec = workload_from_preset(name, cfg["workload"]["presets"][name], seed)
    return Scenario(
        registry=build_registry(cfg),
        workload=spec,
        mode=mode,
        edge_capacity=sim["edge_capacity"],
        backhaul=Backhaul(sim["backhaul"]["delay_s"], sim["backhaul"]["energy_j"]),
        engine=engine_config(cfg),
        oracle=oracle_config(cfg, spec),
        seed=seed,
        edge_compute_s=sim["edge_compute_s"],
        cloud_compute_s=sim["cloud_compute_s"],
        bucket_edges=tuple(sim["bucket_edges_bytes"]),
    )
