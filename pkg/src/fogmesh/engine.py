"""Per-cluster control engine: PR intake, the three-step processing pipeline, forwarding
and load-balancing readiness."""

from __future__ import annotations

import logging
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Callable, Iterable, Mapping

from .app_model import Application
from .deployment import DeploymentInfo, LBUpdate
from .fabric import ClusterData, Tier, Topology, cluster_snapshot
from .placement import (
    InstancePlan,
    PlacementOutput,
    PlacementRequest,
    SubsetWeight,
    external_placement,
    required_units,
    subset_weights,
)
from .placement.algorithms import AlgorithmRegistry, REGISTRY
from .sim.core import Process, Signal

if TYPE_CHECKING:
    from .federation import Federation

log = logging.getLogger(__name__)


class OperationMode(str, Enum):
    DISTRIBUTED = "distributed"
    CENTRALISED_PRIMARY = "centralised-primary"
    CENTRALISED_SECONDARY = "centralised-secondary"


class Batching(str, Enum):
    BATCH = "batch"
    SEQUENTIAL = "sequential"


class NoForwardTarget(LookupError):
    pass


class UnknownApplication(KeyError):
    pass


@dataclass(frozen=True)
class PlacementMode:
    """Event-driven placement (period None) or periodic placement every `period` ms."""

    period: float | None = None

    @property
    def periodic(self) -> bool:
        return self.period is not None

    @classmethod
    def parse(cls, text: str | None, period: float = 1000.0) -> "PlacementMode":
        if text in (None, "event-driven", "event"):
            return cls(None)
        if text == "periodic":
            return cls(period)
        raise ValueError(f"unknown placement mode {text!r}")


@dataclass
class CEConfig:
    cluster_name: str
    operation_mode: OperationMode = OperationMode.DISTRIBUTED
    placement_mode: PlacementMode = field(default_factory=PlacementMode)
    batching: Batching = Batching.SEQUENTIAL
    algorithm_name: str = "v2"
    forwarding_policy: str = "fp1-random-fog"
    lb_policy_name: str = "wrr"
    external_algo_url: str | None = None
    rng_seed: int = 0
    # simulated cost of one algorithm invocation
    algorithm_cost_base: float = 5.0
    algorithm_cost_per_pr: float = 2.0
    api_timeout: float = 1000.0
    primary_cluster: str | None = None

    def __post_init__(self) -> None:
        self.operation_mode = OperationMode(self.operation_mode)
        self.batching = Batching(self.batching)
        if self.operation_mode is OperationMode.CENTRALISED_SECONDARY and not self.primary_cluster:
            raise ValueError("a secondary control engine needs primary_cluster")


# --- forwarding ---------------------------------------------------------------

ForwardingPolicy = Callable[[PlacementRequest, str, Topology, random.Random], str]


def _fp2(pr: PlacementRequest, current: str, topology: Topology, rng: random.Random) -> str:
    for c in topology.cluster(current).adjacent_cloud:
        if c not in pr.visited_clusters:
            return c
    raise NoForwardTarget(f"{pr.pr_id}: no unvisited cloud cluster adjacent to {current}")


def _fp1(pr: PlacementRequest, current: str, topology: Topology, rng: random.Random) -> str:
    options = [c for c in topology.cluster(current).adjacent_fog if c not in pr.visited_clusters]
    if options:
        return rng.choice(sorted(options))
    return _fp2(pr, current, topology, rng)


FORWARDING_POLICIES: dict[str, ForwardingPolicy] = {"fp1-random-fog": _fp1, "fp2-cloud": _fp2}


def register_forwarding_policy(name: str, policy: ForwardingPolicy) -> None:
    if name in FORWARDING_POLICIES:
        raise ValueError(f"forwarding policy {name!r} already registered")
    FORWARDING_POLICIES[name] = policy


def forward_pr(pr: PlacementRequest, policy: str, topology: Topology, current: str,
               rng: random.Random) -> str:
    """Pick the next cluster for an incomplete PR and advance its hop state."""
    try:
        fn = FORWARDING_POLICIES[policy]
    except KeyError:
        raise KeyError(f"unknown forwarding policy {policy!r}") from None
    if current not in pr.visited_clusters:
        pr.visited_clusters.append(current)
    dest = fn(pr, current, topology, rng)
    if dest in pr.visited_clusters:
        raise NoForwardTarget(f"{pr.pr_id}: policy {policy} chose visited cluster {dest}")
    pr.hop_count += 1
    return dest


# --- load-balancing readiness -------------------------------------------------


@dataclass
class LBEntry:
    expected_instances: int
    placed_instances: int
    consumer_ms_ids: tuple[str, ...]
    consumers_placed: bool
    completed: bool

    @property
    def ready(self) -> bool:
        return not self.completed and self.placed_instances == self.expected_instances and self.consumers_placed


@dataclass
class LBTracker:
    """Readiness of every microservice of one PR, derived from the state the PR carries."""

    app_id: str
    entries: dict[str, LBEntry]

    @classmethod
    def from_pr(cls, pr: PlacementRequest, app: Application) -> "LBTracker":
        expected = {m: required_units(app, pr, m) for m in app.microservices}
        placed = {m: min(pr.placed_units(m), expected[m]) for m in app.microservices}
        entries = {}
        for m in app.microservices:
            consumers = tuple(app.consumers(m))
            entries[m] = LBEntry(expected[m], placed[m], consumers,
                                 all(placed[c] == expected[c] for c in consumers),
                                 pr.load_balancing_completed.get(m, False))
        return cls(app.app_id, entries)

    def ready(self) -> list[str]:
        return sorted(m for m, e in self.entries.items() if e.ready)


def lb_targets(pr: PlacementRequest, app: Application, ms_id: str) -> list[str]:
    """Clusters that need routing records for `ms_id`: its hosts, its consumers' hosts,
    composition-only clusters and, for roots, the entry clusters."""
    targets = {i.cluster for i in pr.instances(ms_id)}
    for c in app.consumers(ms_id):
        targets |= {i.cluster for i in pr.instances(c)}
    targets |= set(pr.composition_only_placements.get(ms_id, []))
    if not app.consumers(ms_id):
        targets |= set(pr.entry_clusters)
    return sorted(targets)


def track_lb(tracker: LBTracker, pr: PlacementRequest, app: Application) -> dict[str, list[LBUpdate]]:
    """Emit the LB updates that became ready, keyed by target cluster, and mark them completed."""
    out: dict[str, list[LBUpdate]] = {}
    for ms_id in tracker.ready():
        insts = pr.instances(ms_id)
        weights = subset_weights([i.cpu for i in insts])
        subsets = tuple(SubsetWeight(i.cluster, i.node_name, w) for i, w in zip(insts, weights))
        pr.subset_weights[ms_id] = list(subsets)
        pr.load_balancing_completed[ms_id] = True
        tracker.entries[ms_id].completed = True
        for c in lb_targets(pr, app, ms_id):
            out.setdefault(c, []).append(LBUpdate(ms_id, subsets))
    return out


# --- processing trace -----------------------------------------------------------


@dataclass(frozen=True)
class TraceEvent:
    time: float
    step: str
    detail: str = ""


@dataclass
class ProcessingTrace:
    cluster: str
    round_id: int
    pr_ids: list[str]
    events: list[TraceEvent] = field(default_factory=list)
    failed: bool = False

    def mark(self, time: float, step: str, detail: str = "") -> None:
        self.events.append(TraceEvent(time, step, detail))

    def steps(self) -> list[str]:
        return [e.step for e in self.events]

    def first(self, step: str) -> TraceEvent | None:
        return next((e for e in self.events if e.step == step), None)

    @property
    def start(self) -> float:
        return self.events[0].time if self.events else 0.0

    @property
    def end(self) -> float:
        return self.events[-1].time if self.events else 0.0


PIPELINE_STEPS = ("1.1", "1.2", "2", "3")


# --- control engine ---------------------------------------------------------------


class ControlEngine:
    def __init__(self, config: CEConfig, federation: "Federation",
                 registry: AlgorithmRegistry | None = None):
        self.config = config
        self.fed = federation
        self.cluster = config.cluster_name
        self.registry = registry or REGISTRY
        self.queue: deque[PlacementRequest] = deque()
        self.busy = False
        self.tick_pending = False
        self.rng = random.Random(config.rng_seed)
        self.traces: list[ProcessingTrace] = []
        self._rounds = 0
        self.placement_running = False  # guards single-worker serialisation

    # intake

    def enqueue(self, pr: PlacementRequest) -> None:
        if self.config.operation_mode is OperationMode.CENTRALISED_SECONDARY:
            self.fed.send_pr(self.cluster, self.config.primary_cluster, pr)
            return
        self.queue.append(pr)
        if self.config.placement_mode.periodic:
            self._arm_tick()
        elif not self.busy:
            self._start_worker()

    def _arm_tick(self) -> None:
        if self.tick_pending:
            return
        period = self.config.placement_mode.period
        now = self.fed.sim.now
        nxt = (int(now // period) + 1) * period
        self.tick_pending = True
        self.fed.sim.at(nxt, self._tick)

    def _tick(self) -> None:
        self.tick_pending = False
        if self.busy:
            self._arm_tick()
            return
        if self.queue:
            self._start_worker(drain_once=True)

    def _start_worker(self, drain_once: bool = False) -> None:
        self.busy = True
        self.fed.sim.process(self._worker(drain_once))

    def _worker(self, drain_once: bool) -> Process:
        snapshot = len(self.queue) if drain_once else None
        taken = 0
        while self.queue and (snapshot is None or taken < snapshot):
            if self.config.batching is Batching.BATCH:
                n = len(self.queue) if snapshot is None else snapshot - taken
            else:
                n = 1
            batch = [self.queue.popleft() for _ in range(n)]
            taken += n
            yield self.fed.sim.process(self.process_prs(batch))
        self.busy = False
        if self.queue:
            if self.config.placement_mode.periodic:
                self._arm_tick()
            else:
                self._start_worker()

    # processing pipeline

    def process_prs(self, prs: list[PlacementRequest]) -> Process:
        sim = self.fed.sim
        assert not self.placement_running, "placement executions must not interleave"
        self.placement_running = True
        self._rounds += 1
        trace = ProcessingTrace(self.cluster, self._rounds, [p.pr_id for p in prs])
        self.traces.append(trace)
        for pr in prs:
            tl = self.fed.metrics.timeline(pr.pr_id, pr.application_id, sim.now)
            tl.placement_start.append(sim.now)
            if self.cluster not in tl.clusters:
                tl.clusters.append(self.cluster)
            if self.config.operation_mode is OperationMode.DISTRIBUTED and self.cluster not in pr.visited_clusters:
                pr.visited_clusters.append(self.cluster)

        # 1.1 cluster data
        trace.mark(sim.now, "1.1", "start")
        cluster_data: dict[str, ClusterData] = {self.cluster: self.fed.cluster_data(self.cluster)}
        if self.config.operation_mode is OperationMode.CENTRALISED_PRIMARY:
            others = [c for c in self.fed.topology.clusters if c != self.cluster]
            remote = yield sim.process(collect_remote_cluster_data(self.fed, self.cluster, others,
                                                                   self.config.api_timeout))
            cluster_data.update(remote)
            cluster_data = {c: cluster_data[c] for c in self.fed.topology.clusters if c in cluster_data}
        trace.mark(sim.now, "1.1", "end")

        # 1.2 application metadata
        trace.mark(sim.now, "1.2", "start")
        app_info: dict[str, Application] = {}
        failed_apps: set[str] = set()
        for app_id in sorted({p.application_id for p in prs}):
            try:
                read = self.fed.meta.get_application(app_id, self.cluster)
            except LookupError as exc:
                failed_apps.add(app_id)
                trace.mark(sim.now, "1.2", f"failed {app_id}: {exc}")
                continue
            self.fed.metrics.store_access("metadata", app_id, self.cluster, read.served_by, read.latency)
            yield read.latency
            app_info[app_id] = read.value
        trace.mark(sim.now, "1.2", "end")
        runnable = [p for p in prs if p.application_id not in failed_apps]
        for p in prs:
            if p.application_id in failed_apps:
                self._retry(p, "metadata unavailable", trace)

        # 2 algorithm
        trace.mark(sim.now, "2", "start")
        out: PlacementOutput | None = None
        if runnable:
            try:
                out = self._run_algorithm(runnable, app_info, cluster_data)
            except Exception as exc:  # an algorithm failure fails the step, not the engine
                log.warning("%s: placement algorithm failed: %s", self.cluster, exc)
                trace.mark(sim.now, "2", f"failed: {exc}")
                trace.failed = True
                for p in runnable:
                    self._retry(p, f"algorithm failure: {exc}", trace)
            yield self.config.algorithm_cost_base + self.config.algorithm_cost_per_pr * len(runnable)
        trace.mark(sim.now, "2", "end")
        for p in prs:
            self.fed.metrics.timeline(p.pr_id).placement_end.append(sim.now)

        # 3 deployment
        trace.mark(sim.now, "3", "start")
        if out is not None:
            yield sim.process(self._deploy(out, runnable, app_info, trace))
        trace.mark(sim.now, "3", "end")
        self.placement_running = False
        return trace

    def _run_algorithm(self, prs: list[PlacementRequest], app_info: Mapping[str, Application],
                       cluster_data: Mapping[str, ClusterData]) -> PlacementOutput:
        if self.config.external_algo_url:
            return external_placement(prs, app_info, cluster_data, self.config.external_algo_url)
        factory = self.registry.resolve(self.config.algorithm_name)
        return factory(prs, app_info, cluster_data, self.cluster).generate_placement()

    def _deploy(self, out: PlacementOutput, prs: list[PlacementRequest], app_info: Mapping[str, Application],
                trace: ProcessingTrace) -> Process:
        sim = self.fed.sim
        by_id = {p.pr_id: p for p in prs}
        for pr_id, reason in sorted(out.rejected_prs.items()):
            self.fed.reject(pr_id, reason)
        local: list[tuple[DeploymentInfo, Signal]] = []
        finished: list[PlacementRequest] = []
        for pr_id in [p.pr_id for p in prs]:
            if pr_id in out.rejected_prs:
                continue
            pr = out.updated_prs.get(pr_id, by_id[pr_id])
            app = app_info[pr.application_id]
            infos = self._deployment_infos(pr, app, out)
            for target, info in sorted(infos.items()):
                done = sim.signal() if target == self.cluster else None
                if done is not None:
                    local.append((info, done))
                else:
                    # remote clusters receive their part concurrently with the local deployment
                    trace.mark(sim.now, "dispatch", target)
                    done = self.fed.send_deployment(self.cluster, target, info)
                self.fed.track_deployment(pr.pr_id, done)
            if pr_id in out.completed_prs:
                finished.append(pr)
            else:
                self._forward(pr, trace)
        for pr in finished:
            self.fed.placement_complete(pr)
        for info, done in local:
            trace.mark(sim.now, "deploy-local", info.pr_id)
            yield sim.process(self.fed.deploy_locally(self.cluster, info, done))

    def _deployment_infos(self, pr: PlacementRequest, app: Application,
                          out: PlacementOutput) -> dict[str, DeploymentInfo]:
        infos: dict[str, DeploymentInfo] = {}

        def info(c: str) -> DeploymentInfo:
            if c not in infos:
                infos[c] = DeploymentInfo(c, pr.pr_id, pr.application_id)
            return infos[c]

        for plan in out.placements_for(pr.pr_id):
            info(plan.cluster).instance_plans.append(plan)
        for (app_id, c), bound in sorted(out.ingress_bindings.items()):
            if app_id == pr.application_id and bound and c in pr.entry_clusters:
                info(c).entry_cluster_flag = True
        tracker = LBTracker.from_pr(pr, app)
        updates = track_lb(tracker, pr, app)
        for c, ups in sorted(updates.items()):
            info(c).lb_updates.extend(ups)
            for u in ups:
                self.fed.lb_dispatches[(pr.pr_id, u.ms_id, c)] += 1
        for ms_id in sorted({u.ms_id for ups in updates.values() for u in ups}):
            self.fed.lb_completed[(pr.pr_id, ms_id)] += 1
            for c in pr.composition_only_placements.get(ms_id, []):
                if ms_id not in info(c).additional_m_for_s_level:
                    info(c).additional_m_for_s_level.append(ms_id)
        return {c: i for c, i in infos.items() if not i.is_empty()}

    def _forward(self, pr: PlacementRequest, trace: ProcessingTrace) -> None:
        try:
            dest = forward_pr(pr, self.config.forwarding_policy, self.fed.topology, self.cluster, self.rng)
        except NoForwardTarget as exc:
            trace.mark(self.fed.sim.now, "forward", f"{pr.pr_id} rejected: {exc}")
            self.fed.reject(pr.pr_id, str(exc))
            return
        trace.mark(self.fed.sim.now, "forward", f"{pr.pr_id} -> {dest}")
        self.fed.send_pr(self.cluster, dest, pr)

    def _retry(self, pr: PlacementRequest, reason: str, trace: ProcessingTrace) -> None:
        pr.retries += 1
        if pr.retries > 1:
            self.fed.reject(pr.pr_id, reason)
        else:
            trace.mark(self.fed.sim.now, "requeue", f"{pr.pr_id}: {reason}")
            self.queue.append(pr)


def collect_remote_cluster_data(fed: "Federation", origin: str, clusters: Iterable[str],
                                timeout: float = 1000.0) -> Process:
    """Query every cluster's data concurrently; a cluster that does not answer in time is left out."""
    sim = fed.sim
    clusters = list(clusters)
    if not clusters:
        return {}
    replies: list[Signal] = [fed.request_cluster_data(origin, c, timeout) for c in clusters]
    values = yield replies
    result = {}
    for c, v in zip(clusters, values):
        if v is None:
            log.warning("%s: cluster data from %s timed out; excluded from this round", origin, c)
            fed.warnings.append(f"cluster data from {c} timed out at {sim.now}")
            continue
        result[c] = v
    return result
