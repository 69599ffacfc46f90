"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line through the `verdict` fixture; the lines are
printed together in the terminal summary.
"""

from __future__ import annotations

import json
import time
from functools import lru_cache

import pytest

from fogmesh.api import roundtrip
from fogmesh.api.schema import KINDS
from fogmesh.engine import PIPELINE_STEPS
from fogmesh.placement import MalformedPR, pr_from_dict
from fogmesh.scenario import ScenarioResult, TrafficSpec, load_scenario, run_scenario

from . import test_properties as props
from .conftest import GOLDEN, SCENARIOS

# tolerances
SHARE_TOLERANCE = 1.0  # percentage points
IMPROVEMENT_BAND = (30.0, 60.0)  # percent
COLLECTION_TOLERANCE = 1.0  # simulated ms
PLACEMENT_BUDGET = 5.0  # wall-clock seconds


@lru_cache(maxsize=None)
def scenario(name: str, placement_only: bool = False) -> ScenarioResult:
    sc = load_scenario(SCENARIOS / f"{name}.toml", environ={})
    if placement_only:
        for p in sc.phases:
            p.traffic = []
    return run_scenario(sc)


def _layout(result: ScenarioResult) -> dict:
    return {name: {m: [[i.cluster, i.node_name, i.units] for i in insts]
                   for pr in phase.pr_ids for m, insts in sorted(phase.federation.placements(pr).items())}
            for name, phase in result.phases.items()}


def _clusters(layout: dict, ms_id: str) -> set[str]:
    return {c for c, _, _ in layout[ms_id]}


def test_criterion_1_reference_placements(verdict):
    t0 = time.perf_counter()
    result = scenario.__wrapped__("reference_placement", placement_only=True)  # timed without the cache
    elapsed = time.perf_counter() - t0
    layout = _layout(result)
    v1, v2 = layout["v1"], layout["v2"]
    golden = json.loads((GOLDEN / "reference_placements.json").read_text())

    checks = {
        "all deployed": all(s == "deployed" for p in result.phases.values() for s in p.states.values()),
        "V1 spills a2m3/a2m4/hcm3 to cloud1": all(_clusters(v1, m) == {"cloud1"} for m in ("a2m3", "a2m4", "hcm3")),
        "V2 keeps all but hcm3 in fog": all(
            not (_clusters(v2, m) & {"cloud1"}) for m in v2 if m != "hcm3") and _clusters(v2, "hcm3") == {"cloud1"},
        "a2m2 1:2:1 over fog1+fog2": len(v2["a2m2"]) == 3 and _clusters(v2, "a2m2") == {"fog1", "fog2"}
        and sorted(u for _, _, u in v2["a2m2"]) == [1, 1, 2],
        "hcm2 1:2:3 over fog1+fog2": len(v2["hcm2"]) == 3 and _clusters(v2, "hcm2") == {"fog1", "fog2"}
        and sorted(u for _, _, u in v2["hcm2"]) == [1, 2, 3],
        "matches golden": layout == golden,
        f"runtime < {PLACEMENT_BUDGET:.0f} s": elapsed < PLACEMENT_BUDGET,
    }
    failed = [k for k, ok in checks.items() if not ok]
    assert verdict(1, not failed, f"reference placement pattern in {elapsed:.2f} s" + (f"; failed: {failed}" if failed else ""))


def _split(phase, ms_id: str) -> list[float]:
    return sorted(100 * v for v in phase.metrics.shares(f"{ms_id}@").values())


def test_criterion_2_wrr_split(verdict):
    sc = load_scenario(SCENARIOS / "reference_placement.toml", environ={})
    phase = next(p for p in sc.phases if p.name == "v2")
    phase.traffic = [TrafficSpec("app2", "S", "fog1", 10_000), TrafficSpec("hcapp", "S1", "fog1", 10_000)]
    sc.phases = [phase]
    runs = [run_scenario(sc).phases["v2"] for _ in range(2)]
    a2m2, hcm2 = _split(runs[0], "a2m2"), _split(runs[0], "hcm2")
    want_a2m2, want_hcm2 = [25.0, 25.0, 50.0], [100 / 6, 100 / 3, 50.0]
    ok = (
        len(a2m2) == 3 and len(hcm2) == 3
        and all(abs(g - w) <= SHARE_TOLERANCE for g, w in zip(a2m2, want_a2m2))
        and all(abs(g - w) <= SHARE_TOLERANCE for g, w in zip(hcm2, want_hcm2))
        and runs[0].metrics.instance_counts == runs[1].metrics.instance_counts
    )
    fmt = lambda xs: "/".join(f"{x:.1f}" for x in xs)  # noqa: E731
    assert verdict(2, ok, f"a2m2 {fmt(a2m2)}%, hcm2 {fmt(hcm2)}% over 10,000 requests, deterministic")


def test_criterion_3_v2_improvement(verdict):
    result = scenario("reference_placement")
    comps = result.summary()["comparisons"]
    lo, hi = IMPROVEMENT_BAND
    ok = len(comps) == 2 and all(
        c["candidateMean"] < c["baselineMean"] and lo <= c["improvementPercent"] <= hi for c in comps)
    detail = ", ".join(f"{c['service']} {c['baselineMean']:.1f} -> {c['candidateMean']:.1f} ms "
                       f"({c['improvementPercent']:.1f}%)" for c in comps)
    assert verdict(3, ok, detail)


def test_criterion_4_store_failover(verdict):
    result = scenario("failover")
    seen = []
    for name in ("all-healthy", "fog1-down", "fog1-fog2-down"):
        first = next(a for a in result.phases[name].metrics.store_accesses if a.store == "metadata")
        seen.append((first.served_by, first.latency))
    (s1, l1), (s2, l2), (s3, l3) = seen
    ok = l1 < l2 < l3 and [s1, s2, s3] == ["fog1", "fog2", "cloud1"]
    assert verdict(4, ok, f"latencies {l1:g} < {l2:g} < {l3:g} ms served by {s1} -> {s2} -> {s3}")


def test_criterion_5_forwarding_order(verdict):
    result = scenario("forwarding")
    means = [result.phases[n].mean("chain3/s1") for n in ("fits-in-entry-fog", "fp1-adjacent-fog", "fp2-cloud")]
    deployed = all(s == "deployed" for p in result.phases.values() for s in p.states.values())
    ok = deployed and means[0] < means[1] < means[2]
    assert verdict(5, ok, "mean response " + " < ".join(f"{m:.2f}" for m in means) + " ms")


def test_criterion_6_operation_modes(verdict):
    result = scenario("operation_modes")
    rows = []
    for n in (5, 10, 15):
        d = result.phases[f"distributed-{n}"]
        c = result.phases[f"centralised-{n}"]
        states = list(d.states.values()) + list(c.states.values())
        assert len(d.pr_ids) == len(c.pr_ids) == n
        rows.append((n, d.federation.completion_time(d.pr_ids), c.federation.completion_time(c.pr_ids),
                     all(s == "deployed" for s in states)))
    gaps = [c - d for _, d, c, _ in rows]
    ok = all(dep and d < c for _, d, c, dep in rows) and all(a <= b for a, b in zip(gaps, gaps[1:]))
    detail = "; ".join(f"{n} PRs {d:g} vs {c:g} ms" for n, d, c, _ in rows)
    assert verdict(6, ok, detail + f"; gaps {', '.join(f'{g:g}' for g in gaps)}")


def _ordered(trace) -> bool:
    firsts = [next(i for i, s in enumerate(trace.steps()) if s == step) for step in PIPELINE_STEPS]
    lasts = [max(i for i, s in enumerate(trace.steps()) if s == step) for step in PIPELINE_STEPS]
    return firsts == sorted(firsts) and all(lasts[k] < firsts[k + 1] for k in range(len(PIPELINE_STEPS) - 1))


def test_criterion_7_trace_conformance(verdict):
    traces = [t for name in ("reference_placement", "forwarding", "operation_modes", "failover")
              for p in scenario(name, placement_only=True).phases.values() for t in p.federation.traces()]
    in_order = all(set(PIPELINE_STEPS) <= set(t.steps()) and _ordered(t) for t in traces)

    # centralised collection: the primary's step 1.1 lasts as long as its slowest round trip
    central = scenario("operation_modes", placement_only=True).phases["centralised-15"].federation
    primary = next(c for c, ce in central.ces.items() if ce.config.operation_mode.value == "centralised-primary")
    worst_rtt = max(central.api_rtt(primary, c) for c in central.topology.clusters if c != primary)
    spans = []
    for t in central.ces[primary].traces:
        marks = [e.time for e in t.events if e.step == "1.1"]
        spans.append(marks[-1] - marks[0])
    collection_ok = bool(spans) and all(abs(s - worst_rtt) <= COLLECTION_TOLERANCE for s in spans)

    # overlap: a remote dispatch is still in flight when the local deployment starts
    overlaps = []
    for name in ("reference_placement", "operation_modes"):
        for p in scenario(name, placement_only=True).phases.values():
            fed = p.federation
            for t in fed.traces():
                local = t.first("deploy-local")
                sent = [d for d in fed.dispatches if d.source == t.cluster and t.start <= d.sent <= t.end]
                if local and sent:
                    overlaps.append(all(d.sent <= local.time < d.acked for d in sent))
    overlap_ok = bool(overlaps) and all(overlaps)

    ok = in_order and collection_ok and overlap_ok
    assert verdict(7, ok, f"{len(traces)} traces ordered 1.1 -> 1.2 -> 2 -> 3: {in_order}; "
                          f"collection {spans[0] if spans else float('nan'):g} ms vs max RTT {worst_rtt:g} ms; "
                          f"dispatch overlaps local deploy in {sum(overlaps)}/{len(overlaps)} rounds")


SUITES = [
    props.test_dag_validity_matches_oracle,
    props.test_generated_apps_are_valid_dags,
    props.test_allocate_release_conservation,
    props.test_placement_capacity_and_throughput,
    props.test_lb_exactly_once,
    props.test_pr_terminal_conservation,
    props.test_wrr_matches_weight_expansion,
]


def test_criterion_8_property_suites(verdict):
    failed = []
    for suite in SUITES:
        assert suite.hypothesis.inner_test  # a hypothesis test, not a plain function
        settings = getattr(suite, "_hypothesis_internal_use_settings", None)
        assert settings is not None and settings.max_examples >= 1000
        try:
            suite()
        except Exception as exc:  # report every broken suite, not just the first
            failed.append(f"{suite.__name__}: {type(exc).__name__}")
    assert verdict(8, not failed, f"{len(SUITES) - len(failed)}/{len(SUITES)} suites held on 1000 cases each"
                   + (f"; failed {failed}" if failed else ""))


def test_criterion_9_api_golden(verdict):
    exact = {k: roundtrip(k, (GOLDEN / f"{k}.json").read_text()) == (GOLDEN / f"{k}.json").read_text()
             for k in KINDS}
    enforced = []
    base = json.loads((GOLDEN / "placement-request.json").read_text())
    for field in ("applicationId", "entryClusters"):
        doc = {k: v for k, v in base.items() if k != field}
        with pytest.raises(MalformedPR):
            pr_from_dict(doc)
        enforced.append(field)
    ok = all(exact.values()) and enforced == ["applicationId", "entryClusters"]
    assert verdict(9, ok, f"bit-exact round trip of {sorted(k for k, v in exact.items() if v)}; "
                          f"required fields {enforced} enforced")

