"""Synthetic IoT request streams and the feature encoding used by the classifier."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import ConfigError

FEATURE_FIELDS = (
    "data_volume_bytes",
    "latency_budget_s",
    "required_rate_bps",
    "mobility_mps",
    "compute_complexity",
)

STREAM_CSV_HEADER = ["t_s", "device_id", "bytes", "latency_s", "rate_bps", "mobility_mps", "compute"]


@dataclass(frozen=True)
class TrafficPattern:
    data_volume_bytes: int
    latency_budget_s: float
    required_rate_bps: float = 0.0
    mobility_mps: float = 0.0
    compute_complexity: float = 0.0

    def __post_init__(self) -> None:
        if self.data_volume_bytes < 1:
            raise ValueError("data_volume_bytes must be >= 1")
        if not self.latency_budget_s > 0:
            raise ValueError("latency_budget_s must be > 0")
        for name in ("required_rate_bps", "mobility_mps", "compute_complexity"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def raw(self) -> tuple[float, ...]:
        return tuple(float(getattr(self, f)) for f in FEATURE_FIELDS)


@dataclass(frozen=True)
class WorkloadSpec:
    name: str
    arrival_s: float
    device_count: int
    pattern_distribution: Mapping[str, tuple[float, float]]
    duration_s: float
    seed: int = 0
    # one link distance per device, shared by all technologies
    distance_m: tuple[float, float] = (1.0, 1.0)

    def validate(self) -> None:
        problems = workload_violations(self)
        if problems:
            key, msg = problems[0]
            raise ConfigError(f"workload {self.name}: {key} {msg}", key=key)


def workload_violations(spec: WorkloadSpec) -> list[tuple[str, str]]:
    out = []
    if not spec.arrival_s > 0:
        out.append(("arrival_s", "must be > 0"))
    if spec.device_count < 1:
        out.append(("device_count", "must be >= 1"))
    if not spec.duration_s > 0:
        out.append(("duration_s", "must be > 0"))
    for name in FEATURE_FIELDS:
        if name not in spec.pattern_distribution:
            out.append((name, "missing sampling range"))
            continue
        lo, hi = spec.pattern_distribution[name]
        if lo > hi:
            out.append((name, "low must be <= high"))
        if lo < 0:
            out.append((name, "must be >= 0"))
    extra = set(spec.pattern_distribution) - set(FEATURE_FIELDS)
    for name in sorted(extra):
        out.append((name, "is not a traffic-pattern field"))
    if "data_volume_bytes" in spec.pattern_distribution and spec.pattern_distribution["data_volume_bytes"][0] < 1:
        out.append(("data_volume_bytes", "low must be >= 1"))
    if "latency_budget_s" in spec.pattern_distribution and not spec.pattern_distribution["latency_budget_s"][0] > 0:
        out.append(("latency_budget_s", "low must be > 0"))
    lo, hi = spec.distance_m
    if lo < 0 or lo > hi:
        out.append(("distance_m", "needs 0 <= low <= high"))
    return out


class Arrival(NamedTuple):
    t_s: float
    device_id: str
    pattern: TrafficPattern


def device_ids(spec: WorkloadSpec) -> list[str]:
    return [f"d{i:04d}" for i in range(spec.device_count)]


def sample_pattern(rng: np.random.Generator, ranges: Mapping[str, tuple[float, float]]) -> TrafficPattern:
    lo, hi = ranges["data_volume_bytes"]
    values = {"data_volume_bytes": int(rng.integers(int(lo), int(hi) + 1))}
    for name in FEATURE_FIELDS[1:]:
        lo, hi = ranges[name]
        values[name] = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    return TrafficPattern(**values)


def generate(spec: WorkloadSpec) -> list[Arrival]:
    """Poisson arrivals per device, merged in time order (ties by device order)."""
    spec.validate()
    rng = np.random.default_rng([spec.seed, 0])
    times = []
    for idx, dev in enumerate(device_ids(spec)):
        t = 0.0
        while True:
            t += float(rng.exponential(spec.arrival_s))
            if t >= spec.duration_s:
                break
            times.append((t, idx, dev))
    times.sort()
    prng = np.random.default_rng([spec.seed, 1])
    return [Arrival(t, dev, sample_pattern(prng, spec.pattern_distribution)) for t, _, dev in times]


def device_distances(spec: WorkloadSpec) -> dict[str, float]:
    rng = np.random.default_rng([spec.seed, 2])
    lo, hi = spec.distance_m
    return {dev: float(rng.uniform(lo, hi)) if hi > lo else float(lo) for dev in device_ids(spec)}


def stream_to_csv(stream: Iterable[Arrival]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STREAM_CSV_HEADER)
    for a in stream:
        p = a.pattern
        w.writerow([repr(a.t_s), a.device_id, p.data_volume_bytes, repr(p.latency_budget_s),
                    repr(p.required_rate_bps), repr(p.mobility_mps), repr(p.compute_complexity)])
    return buf.getvalue()


def featurize(pattern: TrafficPattern, bounds: Mapping[str, tuple[float, float]]) -> np.ndarray:
    """Min-max scale the five pattern fields into [0, 1], clamping out-of-range values."""
    out = np.empty(len(FEATURE_FIELDS))
    for i, (name, raw) in enumerate(zip(FEATURE_FIELDS, pattern.raw())):
        lo, hi = bounds[name]
        if not lo < hi:
            raise ValueError(f"feature bounds for {name} need min < max")
        out[i] = min(max((raw - lo) / (hi - lo), 0.0), 1.0)
    return out
