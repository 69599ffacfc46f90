from __future__ import annotations

import csv

import pytest

from fogmesh.deployment import DeploymentInfo, LBUpdate
from fogmesh.fabric import GB
from fogmesh.placement import InstancePlan, SubsetWeight
from fogmesh.routing import ServiceMesh
from fogmesh.sim import (
    CSV_COLUMNS,
    ClockError,
    EventQueue,
    MetricsSink,
    Server,
    Simulator,
    TrafficModel,
    percentile,
    replay_traffic,
)
from fogmesh.workload import app2

from .conftest import chain_app

# event core


def test_ties_run_in_insertion_order():
    q = EventQueue()
    seen = []
    for i in range(5):
        q.push(1.0, lambda i=i: seen.append(i))
    q.push(0.5, lambda: seen.append("early"))
    while q:
        q.pop().fn()
    assert seen == ["early", 0, 1, 2, 3, 4]


def test_clock_never_goes_back():
    sim = Simulator()
    sim.schedule(5, lambda: None)
    sim.run()
    with pytest.raises(ClockError):
        sim.at(1, lambda: None)
    with pytest.raises(ClockError):
        sim.schedule(-1, lambda: None)


def test_process_sleeps_and_waits():
    sim = Simulator()
    log = []

    def child(d):
        yield d
        return d * 2

    def parent():
        a = yield sim.process(child(3))
        both = yield [sim.process(child(5)), sim.process(child(2))]
        log.append((sim.now, a, both))

    sim.process(parent())
    sim.run()
    # children of the second step run in parallel: 3 + max(5, 2)
    assert log == [(8.0, 6, [10, 4])]


def test_run_until_stops_the_clock():
    sim = Simulator()
    fired = []
    sim.schedule(10, lambda: fired.append(1))
    assert sim.run(until=4) == 4
    assert not fired
    sim.run()
    assert fired == [1]


def test_single_server_queues_fifo():
    sim = Simulator()
    srv = Server(sim, 1)
    done = []

    def job(name):
        yield sim.process(srv.serve(10))
        done.append((name, sim.now))

    for n in "abc":
        sim.process(job(n))
    sim.run()
    assert done == [("a", 10), ("b", 20), ("c", 30)]


def test_multi_server_runs_in_parallel():
    sim = Simulator()
    srv = Server(sim, 2)
    for _ in range(4):
        sim.process(srv.serve(10))
    assert sim.run() == 20
    assert srv.served == 4


def test_percentile():
    assert percentile([1, 2, 3, 4], 50) == 2.5
    assert percentile([7], 95) == 7


# traffic replay


def deploy(mesh: ServiceMesh, app_id: str, where: dict[str, tuple[str, str]], entry: str):
    """Place one instance per microservice and give every involved cluster the routing records."""
    clusters = {c for c, _ in where.values()} | {entry}
    for ms_id, (c, node) in where.items():
        mesh.apply_deployment(c, DeploymentInfo(c, "p", app_id, [InstancePlan(ms_id, c, node, 0.5, GB // 2)]))
    lb = [LBUpdate(m, (SubsetWeight(c, n, 1),)) for m, (c, n) in where.items()]
    for c in sorted(clusters):
        mesh.apply_deployment(c, DeploymentInfo(c, "lb", app_id, [], c == entry, lb))


def _mesh(topo, app):
    return ServiceMesh(topo, {app.app_id: app}.__getitem__)


def test_single_microservice_closed_form(topo):
    app = chain_app(n=1, pt=10)
    mesh = _mesh(topo, app)
    deploy(mesh, "chain", {"m1": ("fog1", "fog1-worker1")}, "fog1")
    xs = replay_traffic(mesh, app, "s", 20, "fog1", model=TrafficModel(arrivals="fixed", rate=10))
    # ingress 2 + intra-cluster hop 1 + processing 10
    assert xs == [13.0] * 20


def test_fog_only_beats_fog_cloud(topo):
    app = chain_app(n=2, pt=10)
    model = TrafficModel(arrivals="fixed", rate=10)
    fog = _mesh(topo, app)
    deploy(fog, "chain", {"m1": ("fog1", "fog1-worker1"), "m2": ("fog1", "fog1-worker2")}, "fog1")
    split = _mesh(topo, app)
    deploy(split, "chain", {"m1": ("fog1", "fog1-worker1"), "m2": ("cloud1", "cloud1-worker1")}, "fog1")
    a = replay_traffic(fog, app, "s", 10, "fog1", model=model)
    b = replay_traffic(split, app, "s", 10, "fog1", model=model)
    # closed form: 2 + 1 + 10 + (1 + 10 + 1) and 2 + 1 + 10 + (50 + 10 + 50)
    assert set(a) == {25.0} and set(b) == {123.0}


def test_aggregator_takes_max_branch(topo):
    app = app2()
    mesh = _mesh(topo, app)
    where = {"a2m1": ("fog1", "fog1-worker1"), "a2m2": ("fog1", "fog1-worker2"),
             "a2m3": ("fog1", "fog1-worker3"), "a2m4": ("fog2", "fog2-worker1")}
    deploy(mesh, "app2", where, "fog1")
    (x,) = replay_traffic(mesh, app, "S", 1, "fog1")
    pt = 30
    slow_branch = 5 + pt + 5
    assert x == 2 + 1 + pt + 1 + pt + slow_branch + 1


def test_serialization_delay_knob(topo):
    app = chain_app(n=2, pt=0)  # 1000-byte messages
    mesh = _mesh(topo, app)
    deploy(mesh, "chain", {"m1": ("fog1", "fog1-worker1"), "m2": ("fog1", "fog1-worker2")}, "fog1")
    (x,) = replay_traffic(mesh, app, "s", 1, "fog1", model=TrafficModel(0.001))
    assert x == 2 + 1 + 2 * (1 + 1.0)


def test_unresolvable_requests_are_counted(topo):
    app = chain_app(n=1)
    mesh = _mesh(topo, app)
    m = MetricsSink()
    assert replay_traffic(mesh, app, "s", 3, "fog1", metrics=m) == []
    assert m.failed["chain/s"] == 3


def test_zero_requests(topo):
    app = chain_app(n=1)
    assert replay_traffic(_mesh(topo, app), app, "s", 0, "fog1") == []


def test_replay_is_deterministic_under_seed(topo):
    app = chain_app(n=2, pt=40)
    runs = []
    for _ in range(2):
        mesh = _mesh(topo, app)
        deploy(mesh, "chain", {"m1": ("fog1", "fog1-worker1"), "m2": ("fog2", "fog2-worker1")}, "fog1")
        runs.append(replay_traffic(mesh, app, "s", 200, "fog1", seed=7))
    assert runs[0] == runs[1]
    assert max(runs[0]) > min(runs[0])  # queueing at a 40 ms server under 10 rps Poisson arrivals


# metrics export


def test_csv_export(tmp_path):
    m = MetricsSink("sc", 4)
    m.response("a/s", 0, 12.5, ["m1@fog1/n1"])
    m.store_access("metadata", "a", "fog1", "fog2", 6.0)
    p = tmp_path / "x.csv"
    m.write_csv(p)
    rows = list(csv.reader(p.open()))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert rows[1] == ["sc", "4", "a/s", "0", "12.5", "m1@fog1/n1"]
    assert rows[2] == ["sc", "4", "store:metadata", "0", "6.0", "fog2"]
    s = m.summary()
    assert s["services"]["a/s"]["mean"] == 12.5 and s["seed"] == 4
