"""Request replay through deployed placements."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

from ..app_model import Application, path_tree, service_paths
from ..fabric import Topology
from ..routing import Instance, ServiceMesh, Unresolvable
from .core import Process, Server, Simulator
from .metrics import MetricsSink


def hop_latency(topology: Topology, path: Sequence[str]) -> float:
    """One-way latency along a cluster path; a single-cluster path costs the intra-cluster latency."""
    if len(path) == 1:
        return topology.latency[(path[0], path[0])]
    return sum(topology.latency[(a, b)] for a, b in zip(path, path[1:]))


def service_label(app_id: str, service_id: str) -> str:
    return f"{app_id}/{service_id}"


@dataclass
class TrafficModel:
    serialization_ms_per_byte: float = 0.0
    # "poisson" arrivals at the service's required throughput, or "fixed" spacing
    arrivals: str = "poisson"
    rate: float | None = None


@dataclass
class Replayer:
    sim: Simulator
    mesh: ServiceMesh
    metrics: MetricsSink
    model: TrafficModel = field(default_factory=TrafficModel)
    servers: dict[tuple[str, str, str, str], Server] = field(default_factory=dict)

    @property
    def topology(self) -> Topology:
        return self.mesh.topology

    def server(self, inst: Instance) -> Server:
        s = self.servers.get(inst.key)
        if s is None:
            s = self.servers[inst.key] = Server(self.sim, max(1, inst.units))
        return s

    def replay(self, app: Application, service_id: str, n_requests: int, entry_cluster: str,
               seed: int = 0, start: float | None = None) -> list[float]:
        """Schedule `n_requests` requests, run the loop to completion and return their response times."""
        if n_requests <= 0:
            return []
        svc = app.service(service_id)
        tree = path_tree(service_paths(svc, app))
        root = svc.root()
        rate = self.model.rate or svc.qos.required_throughput
        gap = 1000.0 / rate
        rng = random.Random(seed)
        t = self.sim.now if start is None else start
        results: list[float | None] = [None] * n_requests
        for i in range(n_requests):
            self.sim.at(t, lambda i=i, t=t: self.sim.process(self._request(app, service_id, root, tree, entry_cluster,
                                                                           i, t, results)))
            t += rng.expovariate(1.0 / gap) if self.model.arrivals == "poisson" else gap
        self.sim.run()
        return [r for r in results if r is not None]

    def _request(self, app: Application, service_id: str, root: str, tree: dict[str, list[str]], entry: str,
                 i: int, t0: float, results: list[float | None]) -> Process:
        visited: list[str] = []
        label = service_label(app.app_id, service_id)
        yield self.topology.ingress_latency.get(entry, 0.0)
        try:
            res = self.mesh.resolve_next(entry, app.app_id, root)
        except Unresolvable:
            self.metrics.fail(label)
            return
        yield hop_latency(self.topology, res.path)
        ok = yield self.sim.process(self._visit(app, res.instance, tree, visited))
        if not ok:
            self.metrics.fail(label)
            return
        results[i] = self.sim.now - t0
        self.metrics.response(label, i, results[i], visited)

    def _visit(self, app: Application, inst: Instance, tree: dict[str, list[str]], visited: list[str]) -> Process:
        label = f"{inst.ms_id}@{inst.cluster}/{inst.node_name}"
        visited.append(label)
        self.metrics.hit(label)
        ms = app.microservices[inst.ms_id]
        yield self.sim.process(self.server(inst).serve(ms.processing_time))
        calls = [self.sim.process(self._call(app, inst, child, tree, visited)) for child in tree.get(inst.ms_id, [])]
        if not calls:
            return True
        outcomes = yield calls
        return all(outcomes)

    def _call(self, app: Application, consumer: Instance, target: str, tree: dict[str, list[str]],
              visited: list[str]) -> Process:
        try:
            res = self.mesh.resolve_next(consumer, app.app_id, target)
        except Unresolvable:
            return False
        flow = app.flow(consumer.ms_id, target)
        one_way = hop_latency(self.topology, res.path) + flow.message_size * self.model.serialization_ms_per_byte
        yield one_way
        ok = yield self.sim.process(self._visit(app, res.instance, tree, visited))
        if flow.bidirectional:
            yield one_way
        return ok


def replay_traffic(mesh: ServiceMesh, app: Application, service_id: str, n_requests: int, entry_cluster: str,
                   metrics: MetricsSink | None = None, seed: int = 0, model: TrafficModel | None = None,
                   sim: Simulator | None = None) -> list[float]:
    r = Replayer(sim or Simulator(), mesh, metrics or MetricsSink(seed=seed), model or TrafficModel())
    return r.replay(app, service_id, n_requests, entry_cluster, seed)
