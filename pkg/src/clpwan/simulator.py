"""Discrete-event request flow: device -> edge -> (cloud), with per-device sticky technology choice."""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .engine import CognitiveEngine, Dataset, EngineConfig, OracleConfig, SelectionDecision, bootstrap_dataset
from .errors import ConfigError
from .radio import (
    DeviceRadioState,
    TechnologyRegistry,
    feasibility_mask,
    feasible,
    transmission_delay,
    transmission_energy,
)
from .traffic import Arrival, WorkloadSpec, device_distances, featurize, generate

logger = logging.getLogger(__name__)

METRICS_HEADER = ["t_s", "device_id", "mode", "chosen", "delay_s", "energy_j", "tier", "feasible", "entropy", "admitted"]
DECISIONS_HEADER = ["decision_id", "t_s", "device_id", "chosen", "entropy", "admitted"]


@dataclass(frozen=True)
class Backhaul:
    delay_s: float
    energy_j: float


@dataclass(frozen=True)
class Scenario:
    registry: TechnologyRegistry
    workload: WorkloadSpec
    mode: str
    edge_capacity: float
    backhaul: Backhaul
    engine: EngineConfig
    oracle: OracleConfig
    seed: int
    edge_compute_s: float = 0.0
    cloud_compute_s: float = 0.0
    bucket_edges: tuple[int, ...] = (1, 51, 1000, 10000, 100000)

    @property
    def fixed_technology(self) -> str | None:
        return self.mode[6:] if self.mode.startswith("fixed:") else None

    def validate(self) -> None:
        if self.mode != "hybrid" and not self.mode.startswith("fixed:"):
            raise ConfigError(f"mode must be 'hybrid' or 'fixed:<TECH>', got {self.mode!r}", key="mode")
        tech = self.fixed_technology
        if tech is not None and tech not in self.registry:
            raise ConfigError(f"fixed mode names unknown technology {tech!r}", key="mode")
        if not self.edge_capacity > 0:
            raise ConfigError("edge_capacity must be > 0", key="edge_capacity")
        if self.backhaul.delay_s < 0 or self.backhaul.energy_j < 0:
            raise ConfigError("backhaul costs must be >= 0", key="backhaul")
        self.workload.validate()


@dataclass
class MetricsRecord:
    t_s: float
    device_id: str
    mode: str
    chosen: str
    delay_s: float | None
    energy_j: float | None
    tier: str
    feasible: bool
    entropy: float | None
    admitted: bool
    data_volume_bytes: int = 0
    seq: int = 0

    def row(self) -> list[str]:
        def num(v):
            return "" if v is None else repr(float(v))

        return [repr(self.t_s), self.device_id, self.mode, self.chosen, num(self.delay_s), num(self.energy_j),
                self.tier, str(int(self.feasible)), num(self.entropy), str(int(self.admitted))]


@dataclass
class DecisionLogRow:
    decision_id: int
    t_s: float
    device_id: str
    chosen: str
    entropy: float
    admitted: bool
    reference_entropy: float | None = None

    def row(self) -> list[str]:
        return [str(self.decision_id), repr(self.t_s), self.device_id, self.chosen, repr(self.entropy),
                str(int(self.admitted))]


@dataclass
class RunResult:
    mode: str
    records: list[MetricsRecord]
    dataset: Dataset | None
    decisions: list[DecisionLogRow] = field(default_factory=list)
    corrections: dict = field(default_factory=dict)

    def metrics_csv(self) -> str:
        return _csv(METRICS_HEADER, (r.row() for r in self.records))

    def decisions_csv(self) -> str:
        return _csv(DECISIONS_HEADER, (d.row() for d in self.decisions))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


class EventQueue:
    """Min-heap on (time, insertion sequence)."""

    ARRIVAL = 0
    COMPLETION = 1

    def __init__(self):
        self._heap = []
        self._seq = itertools.count()
        self.now = 0.0

    def push(self, t_s: float, kind: int, payload) -> None:
        heapq.heappush(self._heap, (t_s, next(self._seq), kind, payload))

    def pop(self):
        t_s, _, kind, payload = heapq.heappop(self._heap)
        if t_s < self.now:
            raise RuntimeError("event scheduled in the past")
        self.now = t_s
        return t_s, kind, payload

    def __len__(self) -> int:
        return len(self._heap)


def make_engine(scenario: Scenario) -> CognitiveEngine:
    dataset = None
    if scenario.engine.bootstrap_count > 0:
        dataset = bootstrap_dataset(scenario.registry, scenario.oracle, scenario.engine.bootstrap_count, scenario.seed)
    return CognitiveEngine(scenario.registry, scenario.engine, dataset)


def service(scenario: Scenario, tech: str, arrival: Arrival) -> tuple[float, float, str]:
    """End-to-end delay, energy and serving tier for a request carried on ``tech``."""
    profile = scenario.registry.profile(tech)
    bytes_ = arrival.pattern.data_volume_bytes
    delay = transmission_delay(profile, bytes_)
    energy = transmission_energy(profile, bytes_)
    if arrival.pattern.compute_complexity > scenario.edge_capacity:
        return delay + scenario.cloud_compute_s + scenario.backhaul.delay_s, energy + scenario.backhaul.energy_j, "cloud"
    return delay + scenario.edge_compute_s, energy, "edge"


def run(
    scenario: Scenario,
    stream: Sequence[Arrival] | None = None,
    engine_factory: Callable[[Scenario], CognitiveEngine] = make_engine,
) -> RunResult:
    scenario.validate()
    if stream is None:
        stream = generate(scenario.workload)
    distances = device_distances(scenario.workload)
    registry = scenario.registry
    states = {dev: DeviceRadioState(dev, {t: d for t in registry.ids}) for dev, d in distances.items()}
    fixed = scenario.fixed_technology
    engine = None if fixed else engine_factory(scenario)
    bounds = scenario.oracle.feature_bounds
    last_decision: dict[str, SelectionDecision] = {}
    records: list[MetricsRecord] = []
    decisions: list[DecisionLogRow] = []

    queue = EventQueue()
    for seq, arrival in enumerate(stream):
        queue.push(arrival.t_s, EventQueue.ARRIVAL, (seq, arrival))

    while queue:
        t_s, kind, payload = queue.pop()
        if kind == EventQueue.COMPLETION:
            records.append(payload)
            continue
        seq, arrival = payload
        state = states[arrival.device_id]
        state.roll_day(t_s)
        bytes_ = arrival.pattern.data_volume_bytes
        tier = "cloud" if arrival.pattern.compute_complexity > scenario.edge_capacity else "edge"

        if fixed:
            if feasible(registry.profile(fixed), state, bytes_) != "ok":
                records.append(MetricsRecord(t_s, arrival.device_id, scenario.mode, fixed, None, None, tier,
                                             False, None, False, bytes_, seq))
                continue
            delay, energy, tier = service(scenario, fixed, arrival)
            state.record_send(registry.profile(fixed))
            queue.push(t_s + delay, EventQueue.COMPLETION,
                       MetricsRecord(t_s, arrival.device_id, scenario.mode, fixed, delay, energy, tier,
                                     True, None, False, bytes_, seq))
            continue

        mask = np.array(feasibility_mask(registry, state, bytes_))
        if not mask.any():
            # admission control: nothing can carry this request
            records.append(MetricsRecord(t_s, arrival.device_id, scenario.mode, "", None, None, tier,
                                         False, None, False, bytes_, seq))
            continue
        energy_est = [transmission_energy(p, bytes_) if ok else math.inf for p, ok in zip(registry, mask)]
        features = featurize(arrival.pattern, bounds)
        carrier = state.current_technology
        forced = carrier is None or not mask[registry.index(carrier)]

        if forced:
            decision = engine.select(features, mask, energy_est, arrival.pattern)
            carrier = decision.chosen
            delay, energy, tier = service(scenario, carrier, arrival)
        else:
            delay, energy, tier = service(scenario, carrier, arrival)
            prev = last_decision.get(arrival.device_id)
            if scenario.engine.feedback and prev is not None and engine.is_retained(prev.decision_id):
                engine.feedback_correct(prev.decision_id, delay, energy, arrival.pattern)
            decision = engine.select(features, mask, energy_est, arrival.pattern)

        admitted = engine.admit(decision) if scenario.engine.admission else False
        decisions.append(DecisionLogRow(decision.decision_id, t_s, arrival.device_id, decision.chosen,
                                        decision.entropy, admitted, decision.reference_entropy))
        state.current_technology = decision.chosen
        last_decision[arrival.device_id] = decision
        state.record_send(registry.profile(carrier))
        queue.push(t_s + delay, EventQueue.COMPLETION,
                   MetricsRecord(t_s, arrival.device_id, scenario.mode, carrier, delay, energy, tier,
                                 True, decision.entropy, admitted, bytes_, seq))

    return RunResult(
        mode=scenario.mode,
        records=records,
        dataset=engine.dataset if engine else None,
        decisions=decisions,
        corrections=dict(engine.corrections) if engine else {},
    )


@dataclass
class BucketStats:
    lo: int
    hi: int | None
    requests: int
    feasible: int
    mean_delay_s: float | None
    total_energy_j: float

    @property
    def label(self) -> str:
        return f"{self.lo}-{self.hi - 1}B" if self.hi is not None else f">={self.lo}B"


@dataclass
class ModeSummary:
    mode: str
    requests: int
    feasible: int
    infeasible: int
    mean_delay_s: float | None
    p95_delay_s: float | None
    total_energy_j: float
    buckets: list[BucketStats]


def bucket_bounds(edges: Sequence[int]) -> list[tuple[int, int | None]]:
    return [(lo, edges[i + 1] if i + 1 < len(edges) else None) for i, lo in enumerate(edges)]


def summarize(mode: str, records: Sequence[MetricsRecord], edges: Sequence[int]) -> ModeSummary:
    ok = [r for r in records if r.feasible]
    delays = np.array([r.delay_s for r in ok])
    buckets = []
    for lo, hi in bucket_bounds(edges):
        inside = [r for r in records if r.data_volume_bytes >= lo and (hi is None or r.data_volume_bytes < hi)]
        served = [r for r in inside if r.feasible]
        buckets.append(BucketStats(
            lo, hi, len(inside), len(served),
            float(np.mean([r.delay_s for r in served])) if served else None,
            sum(r.energy_j for r in served),
        ))
    return ModeSummary(
        mode=mode,
        requests=len(records),
        feasible=len(ok),
        infeasible=len(records) - len(ok),
        mean_delay_s=float(delays.mean()) if len(ok) else None,
        p95_delay_s=float(np.percentile(delays, 95)) if len(ok) else None,
        total_energy_j=sum(r.energy_j for r in ok),
        buckets=buckets,
    )


def _run_mode(args):
    base, mode, stream = args
    return run(replace(base, mode=mode), stream)


def compare_modes(base: Scenario, modes: Sequence[str], workers: int | None = None):
    """Run every mode on one shared request stream; returns (summaries, run results)."""
    if not modes:
        raise ValueError("modes must be non-empty")
    for mode in modes:
        replace(base, mode=mode).validate()
    stream = generate(base.workload)
    if workers is None:
        workers = int(os.environ.get("CLPWAN_THREADS", "1") or 1)
    jobs = [(base, mode, stream) for mode in modes]
    if workers > 1 and len(modes) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(modes))) as pool:
            results = list(pool.map(_run_mode, jobs))
    else:
        results = [_run_mode(j) for j in jobs]
    return [summarize(r.mode, r.records, base.bucket_edges) for r in results], results
