"""A simulated federation: one control engine per cluster, shared stores and mesh,
and API calls between engines carried over the simulated network."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, replace
from typing import Any, Iterable, Mapping

from .app_model import Application
from .deployment import DeploymentInfo
from .engine import CEConfig, ControlEngine, OperationMode, UnknownApplication
from .fabric import ClusterData, InsufficientResources, Topology, cluster_snapshot, to_millicores
from .placement import InstancePlan, PlacementRequest, pr_from_dict
from .placement.algorithms import AlgorithmRegistry
from .routing import ServiceMesh, UnknownNode
from .sim.core import Process, Signal, Simulator
from .sim.metrics import MetricsSink
from .stores import MetaDataStore, NotFound, ResourceTemplateStore
from .workload import render_templates

log = logging.getLogger(__name__)

TERMINAL = ("deployed", "rejected")


@dataclass(frozen=True)
class Dispatch:
    source: str
    target: str
    pr_id: str
    sent: float
    acked: float


class Federation:
    def __init__(
        self,
        topology: Topology,
        configs: Mapping[str, CEConfig] | Iterable[CEConfig] | None = None,
        *,
        metrics: MetricsSink | None = None,
        registry: AlgorithmRegistry | None = None,
        store_master: str | None = None,
        store_replicas: Iterable[str] | None = None,
        sync_delay: float = 10.0,
        store_service_time: float = 1.0,
        api_service_time: float = 1.0,
    ):
        self.topology = topology
        self.sim = Simulator()
        self.metrics = metrics or MetricsSink()
        master = store_master or (topology.cloud_clusters() or list(topology.clusters))[0]
        replicas = list(store_replicas) if store_replicas is not None else None
        self.meta = MetaDataStore(topology, master, replicas, sync_delay=sync_delay, service_time=store_service_time,
                                  schedule=self.sim.schedule)
        self.templates = ResourceTemplateStore(topology, master, replicas, sync_delay=sync_delay,
                                               service_time=store_service_time, schedule=self.sim.schedule)
        self.mesh = ServiceMesh(topology, self.application)
        self.api_service_time = api_service_time
        if configs is None:
            configs = [CEConfig(c) for c in topology.clusters]
        if isinstance(configs, Mapping):
            configs = list(configs.values())
        self.ces: dict[str, ControlEngine] = {}
        for cfg in configs:
            topology.cluster(cfg.cluster_name)
            self.ces[cfg.cluster_name] = ControlEngine(cfg, self, registry)
        for c in topology.clusters:
            if c not in self.ces:
                self.ces[c] = ControlEngine(CEConfig(c), self, registry)
        primaries = [c for c, ce in self.ces.items() if ce.config.operation_mode is OperationMode.CENTRALISED_PRIMARY]
        secondaries = [c for c, ce in self.ces.items()
                       if ce.config.operation_mode is OperationMode.CENTRALISED_SECONDARY]
        if secondaries and len(primaries) != 1:
            raise ValueError("a centralised federation needs exactly one primary control engine")

        self.states: dict[str, str] = {}
        self.reasons: dict[str, str] = {}
        self.final_prs: dict[str, PlacementRequest] = {}
        self.lb_dispatches: Counter[tuple[str, str, str]] = Counter()
        self.lb_completed: Counter[tuple[str, str]] = Counter()
        self.dispatches: list[Dispatch] = []
        self.warnings: list[str] = []
        self.unreachable: set[str] = set()
        self._pending: dict[str, list[Signal]] = {}
        self._inflight: dict[str, list[InstancePlan]] = {}
        self._next_id = 0

    # seeding

    def application(self, app_id: str) -> Application:
        held = self.meta.replicas[self.meta.master].records.get(app_id)
        if held is None:
            raise UnknownApplication(app_id)
        return held[0]

    def seed(self, apps: Iterable[Application], templates: Mapping[str, dict] | None = None,
             settle: bool = True) -> None:
        """Store applications (and their rendered templates) and let replication finish."""
        for app in apps:
            self.meta.put_application(app)
            for key, doc in sorted((templates or render_templates(app)).items()):
                self.templates.put_template(key, doc)
        if settle:
            self.sim.run()

    # API 1

    def submit(self, pr: PlacementRequest | Mapping[str, Any], cluster: str, at: float | None = None) -> str:
        if not isinstance(pr, PlacementRequest):
            pr = pr_from_dict(pr)
        self.topology.cluster(cluster)
        self.application(pr.application_id)
        if not pr.pr_id:
            self._next_id += 1
            pr = replace(pr, pr_id=f"pr-{self._next_id}")
        if pr.pr_id in self.states:
            raise ValueError(f"duplicate PR id {pr.pr_id}")
        self.states[pr.pr_id] = "pending"
        when = self.sim.now if at is None else at

        def arrive() -> None:
            self.metrics.timeline(pr.pr_id, pr.application_id, self.sim.now)
            self.ces[cluster].enqueue(pr)

        self.sim.at(when, arrive)
        return pr.pr_id

    def send_pr(self, source: str, target: str, pr: PlacementRequest) -> None:
        pr = pr.copy()
        self.sim.schedule(self.topology.latency[(source, target)] + self.api_service_time,
                          lambda: self.ces[target].enqueue(pr))

    # API 2

    def api_rtt(self, a: str, b: str) -> float:
        return 2 * self.topology.latency[(a, b)] + self.api_service_time

    def cluster_data(self, cluster: str) -> ClusterData:
        """Snapshot of `cluster`, counting resources already promised by in-flight deployments."""
        snap = cluster_snapshot(self.topology.cluster(cluster))
        pending = self._inflight.get(cluster)
        if not pending:
            return snap
        extra: dict[str, list[float]] = {}
        for p in pending:
            acc = extra.setdefault(p.node_name, [0, 0])
            acc[0] += to_millicores(p.cpu)
            acc[1] += p.mem
        nodes = tuple(
            replace(n, allocated_cpu=(to_millicores(n.allocated_cpu) + extra[n.node_name][0]) / 1000,
                    allocated_memory=n.allocated_memory + extra[n.node_name][1])
            if n.node_name in extra else n
            for n in snap.nodes
        )
        return replace(snap, nodes=nodes)

    def request_cluster_data(self, origin: str, target: str, timeout: float) -> Signal:
        reply = self.sim.signal()
        if target in self.unreachable:
            self.sim.schedule(timeout, lambda: reply.succeed(None))
            return reply
        one_way = self.topology.latency[(origin, target)]
        rtt = self.api_rtt(origin, target)
        if rtt > timeout:
            self.sim.schedule(timeout, lambda: reply.succeed(None))
            return reply

        def answer() -> None:
            data = self.cluster_data(target)
            self.sim.schedule(one_way, lambda: reply.succeed(data))

        self.sim.schedule(one_way + self.api_service_time, answer)
        return reply

    # API 3

    def send_deployment(self, source: str, target: str, info: DeploymentInfo) -> Signal:
        done = self.sim.signal()
        self._inflight.setdefault(target, []).extend(info.instance_plans)
        now = self.sim.now
        self.dispatches.append(Dispatch(source, target, info.pr_id, now, now + self.api_rtt(source, target)))
        delay = self.topology.latency[(source, target)] + self.api_service_time
        self.sim.schedule(delay, lambda: self.sim.process(self.deploy_locally(target, info, done)))
        return done

    def deploy_locally(self, cluster: str, info: DeploymentInfo, done: Signal) -> Process:
        """Fetch templates, apply the routing/instance records, then wait out the deployment delay
        in the background."""
        ms_ids = sorted({p.ms_id for p in info.instance_plans})
        if ms_ids or info.entry_cluster_flag:
            try:
                app = self.application(info.application_id)
                batch = self.templates.get_templates(app, ms_ids, cluster)
            except (NotFound, LookupError) as exc:
                self._drop_inflight(cluster, info)
                self.reasons.setdefault(info.pr_id, f"template lookup failed: {exc}")
                done.succeed(False)
                return False
            served = sorted({by for _, _, by in batch.documents})
            self.metrics.store_access("templates", info.application_id, cluster, ",".join(served), batch.latency)
            yield batch.latency
        try:
            self.mesh.apply_deployment(cluster, info)
        except (InsufficientResources, UnknownNode) as exc:
            self._drop_inflight(cluster, info)
            log.warning("%s: deployment of %s rejected: %s", cluster, info.pr_id, exc)
            self.reasons.setdefault(info.pr_id, f"stale placement on {cluster}: {exc}")
            done.succeed(False)
            return False
        self._drop_inflight(cluster, info)
        if info.instance_plans:
            self.sim.schedule(self.topology.cluster(cluster).deployment_delay, lambda: done.succeed(True))
        else:
            done.succeed(True)
        return True

    def _drop_inflight(self, cluster: str, info: DeploymentInfo) -> None:
        lst = self._inflight.get(cluster, [])
        for p in info.instance_plans:
            if p in lst:
                lst.remove(p)

    # terminal states

    def track_deployment(self, pr_id: str, signal: Signal) -> None:
        self._pending.setdefault(pr_id, []).append(signal)

    def placement_complete(self, pr: PlacementRequest) -> None:
        self.final_prs[pr.pr_id] = pr.copy()
        waits = self._pending.get(pr.pr_id, [])

        def finish(results: list[Any]) -> None:
            if all(results):
                self._terminal(pr.pr_id, "deployed")
            else:
                self.reject(pr.pr_id, self.reasons.get(pr.pr_id, "deployment failed"))

        self.sim.all_of(waits).on(finish)

    def reject(self, pr_id: str, reason: str) -> None:
        self.reasons[pr_id] = reason
        self._terminal(pr_id, "rejected")

    def _terminal(self, pr_id: str, status: str) -> None:
        if self.states.get(pr_id) in TERMINAL:
            return
        self.states[pr_id] = status
        tl = self.metrics.timeline(pr_id)
        tl.terminal = self.sim.now
        tl.status = status
        if status == "deployed":
            tl.deployment_end = self.sim.now
        else:
            tl.reason = self.reasons.get(pr_id, "")

    # running

    def run(self, until: float | None = None) -> float:
        return self.sim.run(until)

    def completion_time(self, pr_ids: Iterable[str] | None = None) -> float:
        """Makespan from the earliest submission to the latest terminal time."""
        tls = [self.metrics.timelines[p] for p in (pr_ids or self.metrics.timelines)]
        ends = [t.terminal for t in tls if t.terminal is not None]
        return max(ends) - min(t.submit for t in tls) if ends else float("nan")

    def placements(self, pr_id: str) -> dict[str, list[InstancePlan]]:
        pr = self.final_prs.get(pr_id)
        return {} if pr is None else {m: list(v) for m, v in pr.placed_microservices.items()}

    def traces(self) -> list:
        return [t for ce in self.ces.values() for t in ce.traces]
