import math
from dataclasses import replace

import pytest

from clpwan.config import scenario_from_config
from clpwan.engine import EngineConfig
from clpwan.errors import ConfigError
from clpwan.radio import builtin_registry, default_config, transmission_delay, transmission_energy
from clpwan.simulator import Backhaul, EventQueue, compare_modes, run, service, summarize
from clpwan.traffic import Arrival, TrafficPattern, WorkloadSpec, generate

from oracles import delay_exact, energy_exact

REG = builtin_registry()
BASE = scenario_from_config(default_config())


def workload(bytes_=(1000, 1000), latency=(1.0, 1.0), compute=(0.0, 0.0), devices=2, duration=200.0,
             distance=(5.0, 5.0), arrival=5.0, seed=3):
    ranges = {"data_volume_bytes": bytes_, "latency_budget_s": latency, "required_rate_bps": (0.0, 0.0),
              "mobility_mps": (0.0, 0.0), "compute_complexity": compute}
    return WorkloadSpec("t", arrival, devices, ranges, duration, seed, distance)


def scenario(mode="hybrid", **kw):
    eng = kw.pop("engine", BASE.engine)
    wl = workload(**kw)
    return replace(BASE, mode=mode, workload=wl, engine=eng, oracle=replace(BASE.oracle, ranges=wl.pattern_distribution,
                                                                          distance_m=wl.distance_m))


def test_fixed_sigfox_rejects_large_payloads():
    res = run(scenario("fixed:SIGFOX", bytes_=(1000, 1000)))
    assert res.records and all(not r.feasible and r.delay_s is None and r.energy_j is None for r in res.records)
    row = res.metrics_csv().splitlines()[1].split(",")
    assert row[4] == row[5] == "" and row[7] == "0"


def test_hybrid_trace_single_device():
    sc = scenario(bytes_=(12, 12), devices=1, duration=30.0, engine=EngineConfig(bootstrap_count=0))
    res = run(sc)
    assert len(res.records) >= 2
    first, second = res.decisions[0], res.decisions[1]
    # empty store, every technology feasible: uniform vote and the energy tie-break decides
    assert first.entropy == pytest.approx(math.log(8), abs=1e-12)
    assert min(REG.ids, key=lambda t: transmission_energy(REG.profile(t), 12)) == "BLE"
    assert first.chosen == "BLE" and not first.admitted
    records = sorted(res.records, key=lambda r: r.seq)
    assert records[0].chosen == "BLE" and records[1].chosen == "BLE"
    # nothing is admitted into an empty store, so it stays empty and the next vote is uniform again
    assert second.entropy == first.entropy and not second.admitted
    assert len(res.dataset) == 0


def test_deterministic():
    sc = scenario(bytes_=(10, 50_000), latency=(0.01, 2.0), compute=(0, 100), devices=4)
    a, b = run(sc), run(sc)
    assert a.metrics_csv() == b.metrics_csv() and a.decisions_csv() == b.decisions_csv()
    assert a.dataset.to_jsonl() == b.dataset.to_jsonl()


def test_lte_faster_than_nb_iot_at_10kb():
    lte = summarize("lte", run(scenario("fixed:LTE", bytes_=(10_000, 10_000))).records, BASE.bucket_edges)
    nb = summarize("nb", run(scenario("fixed:NB_IOT", bytes_=(10_000, 10_000))).records, BASE.bucket_edges)
    assert lte.mean_delay_s < nb.mean_delay_s


def test_compare_single_and_duplicate_modes():
    sc = scenario(bytes_=(100, 5000), devices=3)
    one, _ = compare_modes(sc, ["fixed:WIFI"])
    assert len(one) == 1
    two, _ = compare_modes(sc, ["hybrid", "hybrid"])
    assert two[0] == two[1]
    with pytest.raises(ValueError):
        compare_modes(sc, [])


def test_compare_shares_one_stream():
    sc = scenario(bytes_=(10, 20_000), devices=3)
    _, results = compare_modes(sc, ["hybrid", "fixed:LTE", "fixed:BLE"])
    keys = [sorted((r.seq, r.t_s, r.device_id) for r in res.records) for res in results]
    assert keys[0] == keys[1] == keys[2]


def test_compare_with_worker_processes(monkeypatch):
    sc = scenario(bytes_=(100, 5000), devices=3)
    serial, _ = compare_modes(sc, ["hybrid", "fixed:LTE"], workers=1)
    monkeypatch.setenv("CLPWAN_THREADS", "2")
    parallel, _ = compare_modes(sc, ["hybrid", "fixed:LTE"])
    assert serial == parallel


def test_energy_conservation_and_causality():
    sc = scenario(bytes_=(10, 50_000), latency=(0.01, 2.0), compute=(0, 100), devices=4)
    stream = generate(sc.workload)
    for mode in ("hybrid", "fixed:WIFI", "fixed:NB_IOT"):
        res = run(replace(sc, mode=mode), stream)
        assert len(res.records) == len(stream)
        s = summarize(mode, res.records, sc.bucket_edges)
        assert s.total_energy_j == pytest.approx(sum(r.energy_j for r in res.records if r.feasible), rel=1e-12)
        assert s.total_energy_j == pytest.approx(sum(b.total_energy_j for b in s.buckets), rel=1e-12)
        for r in res.records:
            assert r.t_s == stream[r.seq].t_s
            if r.feasible:
                assert r.delay_s >= 0 and r.energy_j >= 0


def test_cloud_tier_costs():
    sc = replace(scenario(), edge_capacity=50.0, backhaul=Backhaul(0.02, 0.05))
    p = REG.profile("LTE")
    edge = Arrival(0.0, "d0000", TrafficPattern(500, 1.0, compute_complexity=10.0))
    cloud = Arrival(0.0, "d0000", TrafficPattern(500, 1.0, compute_complexity=80.0))
    d, e, tier = service(sc, "LTE", edge)
    assert tier == "edge" and d == pytest.approx(delay_exact(p.data_rate_bps, p.fixed_overhead_s, 500), rel=1e-12)
    d, e, tier = service(sc, "LTE", cloud)
    assert tier == "cloud"
    assert d == pytest.approx(delay_exact(p.data_rate_bps, p.fixed_overhead_s, 500) + 0.02, rel=1e-12)
    assert e == pytest.approx(energy_exact(p.tx_power_w, p.data_rate_bps, p.fixed_overhead_s,
                                           p.per_message_overhead_j, 500) + 0.05, rel=1e-12)


def test_records_in_completion_order():
    res = run(scenario("fixed:NB_IOT", bytes_=(10, 60_000), devices=5, arrival=1.0))
    done = [r.t_s + r.delay_s for r in res.records]
    assert done == sorted(done)


def test_sigfox_daily_cap_resets():
    sc = scenario("fixed:SIGFOX", bytes_=(5, 12), devices=1, duration=2 * 86_400.0, arrival=300.0)
    res = run(sc)
    per_day = {}
    for r in res.records:
        if r.feasible:
            per_day[int(r.t_s // 86_400)] = per_day.get(int(r.t_s // 86_400), 0) + 1
    assert per_day == {0: 150, 1: 150}
    assert any(not r.feasible for r in res.records)


def test_hybrid_rejects_when_nothing_feasible():
    res = run(scenario(bytes_=(100, 100), distance=(30_000.0, 30_000.0)))
    assert res.records and all(r.chosen == "" and not r.feasible for r in res.records)


class TestEventQueue:
    def test_time_then_insertion_order(self):
        q = EventQueue()
        for t, tag in [(2.0, "a"), (1.0, "b"), (2.0, "c"), (1.0, "d")]:
            q.push(t, EventQueue.ARRIVAL, tag)
        assert [q.pop()[2] for _ in range(4)] == ["b", "d", "a", "c"]

    def test_refuses_past(self):
        q = EventQueue()
        q.push(5.0, 0, None)
        q.pop()
        q.push(1.0, 0, None)
        with pytest.raises(RuntimeError):
            q.pop()


@pytest.mark.parametrize("change,key", [
    (dict(mode="auto"), "mode"),
    (dict(mode="fixed:ZIGBEE"), "mode"),
    (dict(edge_capacity=0.0), "edge_capacity"),
    (dict(backhaul=Backhaul(-1.0, 0.0)), "backhaul"),
])
def test_scenario_validation(change, key):
    with pytest.raises(ConfigError) as exc:
        run(replace(scenario(), **change))
    assert exc.value.key == key


def test_link_delay_matches_record():
    res = run(scenario("fixed:LTE", bytes_=(10, 50_000), devices=2))
    p = REG.profile("LTE")
    for r in res.records:
        assert r.delay_s == pytest.approx(transmission_delay(p, r.data_volume_bytes), rel=1e-12)
