"""Simulated service-mesh state: routing records, weighted round-robin and locality failover."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

from .app_model import Application
from .deployment import DeploymentInfo, deployment_info_to_dict
from .fabric import AllocationTicket, InsufficientResources, Topology, allocate, to_millicores

Label = tuple[str, str]  # (cluster, node)
RecordKey = tuple[str, str]  # (app_id, ms_id)


class Unresolvable(LookupError):
    pass


class AllReplicasDown(LookupError):
    pass


class NoSubsetMatch(LookupError):
    pass


class UnknownNode(KeyError):
    pass


# --- weighted round-robin ---------------------------------------------------


class SmoothWRR:
    """Smooth weighted round-robin (the current-weight method used by nginx).

    Each pick adds every eligible weight to its running counter, chooses the
    largest counter (first in list order on ties) and subtracts the eligible total
    from the winner. Over one period every item is chosen exactly `weight` times.
    """

    def __init__(self, items: Sequence[tuple[Any, int]]):
        if not items:
            raise ValueError("at least one weighted item is required")
        if any(w <= 0 for _, w in items):
            raise ValueError("weights must be positive")
        self.items = [k for k, _ in items]
        self.weights = [int(w) for _, w in items]
        self.current = [0] * len(items)

    def next(self, eligible: Callable[[Any], bool] | None = None) -> Any:
        idx = [i for i, k in enumerate(self.items) if eligible is None or eligible(k)]
        if not idx:
            raise AllReplicasDown("no eligible item")
        total = 0
        best = None
        for i in idx:
            self.current[i] += self.weights[i]
            total += self.weights[i]
            if best is None or self.current[i] > self.current[best]:
                best = i
        self.current[best] -= total
        return self.items[best]


def wrr_schedule(weights: Sequence[int], n: int) -> list[int]:
    """Indices picked by smooth WRR over `n` rounds."""
    wrr = SmoothWRR([(i, w) for i, w in enumerate(weights)])
    return [wrr.next() for _ in range(n)]


# --- locality failover ------------------------------------------------------


@dataclass
class FailoverPolicy:
    """Replica choice by locality tier: same zone, then same region, then the other region."""

    health: dict[str, bool] = field(default_factory=dict)

    def healthy(self, cluster: str) -> bool:
        return self.health.get(cluster, True)

    def tier_of(self, topology: Topology, from_cluster: str, replica: str) -> int:
        src, dst = topology.cluster(from_cluster), topology.cluster(replica)
        if src.zone == dst.zone:
            return 0
        if src.region == dst.region:
            return 1
        return 2

    def select(self, replicas: Iterable[str], from_cluster: str, topology: Topology) -> str:
        candidates = [r for r in replicas if self.healthy(r)]
        if not candidates:
            raise AllReplicasDown(f"no healthy replica reachable from {from_cluster}")
        return min(
            candidates,
            key=lambda r: (self.tier_of(topology, from_cluster, r), topology.path_latency(from_cluster, r), r),
        )


def failover_select(replicas: Iterable[str], from_cluster: str, policy: FailoverPolicy, topology: Topology) -> str:
    return policy.select(replicas, from_cluster, topology)


# --- header routing -------------------------------------------------------


@dataclass(frozen=True)
class RouteRule:
    """`match` is a value of the `cluster` header; None matches every request."""

    match: str | None
    destination: str


def header_rules(clusters: Iterable[str], local: str) -> list[RouteRule]:
    """One rule per cluster label followed by the local default."""
    return [RouteRule(c, c) for c in sorted(clusters)] + [RouteRule(None, local)]


def route_by_header(headers: Mapping[str, str], rules: Sequence[RouteRule]) -> str:
    value = {k.lower(): v for k, v in headers.items()}.get("cluster")
    for rule in rules:
        if rule.match is None:
            if value is None:
                return rule.destination
            continue
        if rule.match == value:
            return rule.destination
    raise NoSubsetMatch(f"no subset labelled {value!r}")


# --- mesh state -------------------------------------------------------------


@dataclass(frozen=True)
class SubsetPolicy:
    label: Label
    weight: int
    locality: str


@dataclass
class Instance:
    app_id: str
    ms_id: str
    cluster: str
    node_name: str
    units: int
    cpu: float
    mem: int
    tickets: list[AllocationTicket] = field(default_factory=list)
    healthy: bool = True

    @property
    def label(self) -> Label:
        return (self.cluster, self.node_name)

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.app_id, self.ms_id, self.cluster, self.node_name)


@dataclass
class RoutingTable:
    cluster: str
    service_entries: dict[RecordKey, set[Label]] = field(default_factory=dict)
    route_rules: dict[RecordKey, list[RouteRule]] = field(default_factory=dict)
    subset_policies: dict[RecordKey, list[SubsetPolicy]] = field(default_factory=dict)
    gateways: set[tuple[str, str]] = field(default_factory=set)
    east_west_links: set[str] = field(default_factory=set)

    def can_resolve(self, key: RecordKey) -> bool:
        return key in self.service_entries and key in self.route_rules and bool(self.subset_policies.get(key))


def table_to_dict(t: RoutingTable) -> dict[str, Any]:
    fmt = lambda k: f"{k[0]}/{k[1]}"  # noqa: E731
    return {
        "cluster": t.cluster,
        "serviceEntries": {fmt(k): sorted(f"{c}/{n}" for c, n in v) for k, v in sorted(t.service_entries.items())},
        "routeRules": {
            fmt(k): [{"match": r.match, "destination": r.destination} for r in v]
            for k, v in sorted(t.route_rules.items())
        },
        "subsetPolicies": {
            fmt(k): [{"subset": f"{p.label[0]}/{p.label[1]}", "weight": p.weight, "locality": p.locality} for p in v]
            for k, v in sorted(t.subset_policies.items())
        },
        "gateways": sorted(f"{a}/{m}" for a, m in t.gateways),
        "eastWestLinks": sorted(t.east_west_links),
    }


@dataclass(frozen=True)
class AppliedRecord:
    cluster: str
    pr_id: str
    instances: tuple[Instance, ...]
    lb_microservices: tuple[str, ...]
    gateway: bool
    noop: bool = False


@dataclass(frozen=True)
class Resolution:
    instance: Instance
    # clusters traversed from the consumer to the serving instance, both ends included
    path: tuple[str, ...]


class ServiceMesh:
    """Routing tables for every cluster of a topology plus the instances they point to."""

    def __init__(self, topology: Topology, app_lookup: Callable[[str], Application] | None = None):
        self.topology = topology
        self.app_lookup = app_lookup
        self.tables = {c: RoutingTable(c) for c in topology.clusters}
        self.instances: dict[tuple[str, str, str, str], Instance] = {}
        self._applied: dict[tuple[str, str, str], AppliedRecord] = {}
        self._wrr: dict[tuple[Any, str, str], tuple[tuple, SmoothWRR]] = {}

    def table(self, cluster: str) -> RoutingTable:
        self.topology.cluster(cluster)
        return self.tables[cluster]

    # deployment

    def apply_deployment(self, cluster: str, info: DeploymentInfo) -> AppliedRecord:
        if info.target_cluster != cluster:
            raise ValueError(f"deployment info for {info.target_cluster} applied to {cluster}")
        fingerprint = json.dumps(deployment_info_to_dict(info), sort_keys=True)
        key = (info.pr_id, cluster, fingerprint)
        if key in self._applied:
            prev = self._applied[key]
            return AppliedRecord(prev.cluster, prev.pr_id, prev.instances, prev.lb_microservices, prev.gateway, True)

        table = self.table(cluster)
        c = self.topology.cluster(cluster)
        # all-or-nothing fit check before touching the fabric
        need: dict[str, list[int]] = {}
        for p in info.instance_plans:
            if p.cluster != cluster:
                raise ValueError(f"plan for {p.cluster} inside deployment info for {cluster}")
            try:
                c.node(p.node_name)
            except KeyError:
                raise UnknownNode(f"{cluster} has no node {p.node_name!r}") from None
            acc = need.setdefault(p.node_name, [0, 0])
            acc[0] += to_millicores(p.cpu)
            acc[1] += p.mem
        for name, (mcpu, mem) in need.items():
            n = c.node(name)
            if mcpu > n.free_mcpu or mem > n.free_mem:
                raise InsufficientResources(f"{cluster}/{name} cannot host the planned instances")

        created = []
        for p in info.instance_plans:
            node = c.node(p.node_name)
            ticket = allocate(node, p.cpu, p.mem, owner=f"{info.application_id}/{p.ms_id}")
            inst = Instance(info.application_id, p.ms_id, cluster, p.node_name, p.units, p.cpu, p.mem, [ticket])
            existing = self.instances.get(inst.key)
            if existing is not None:
                # a later plan on the same node grows the pod
                existing.units += inst.units
                existing.cpu += inst.cpu
                existing.mem += inst.mem
                existing.tickets.append(ticket)
                inst = existing
            else:
                self.instances[inst.key] = inst
            table.service_entries.setdefault((info.application_id, p.ms_id), set()).add(inst.label)
            created.append(inst)

        for ms_id in info.additional_m_for_s_level:
            table.service_entries.setdefault((info.application_id, ms_id), set())

        for u in info.lb_updates:
            rk = (info.application_id, u.ms_id)
            labels = [s.label for s in u.subsets]
            table.service_entries[rk] = set(table.service_entries.get(rk, set())) | set(labels)
            table.route_rules[rk] = [RouteRule(None, u.ms_id)]
            table.subset_policies[rk] = [
                SubsetPolicy(s.label, s.weight, self.topology.cluster(s.cluster).zone) for s in u.subsets
            ]
            table.east_west_links.update(s.cluster for s in u.subsets if s.cluster != cluster)
            self._wrr = {k: v for k, v in self._wrr.items() if not (k[1] == info.application_id and k[2] == u.ms_id)}

        if info.entry_cluster_flag:
            roots = ["*"]
            if self.app_lookup is not None:
                roots = self.app_lookup(info.application_id).roots()
            for r in roots:
                table.gateways.add((info.application_id, r))

        rec = AppliedRecord(cluster, info.pr_id, tuple(created), tuple(u.ms_id for u in info.lb_updates),
                            info.entry_cluster_flag)
        self._applied[key] = rec
        return rec

    # discovery

    def set_health(self, app_id: str, ms_id: str, label: Label, healthy: bool) -> None:
        self.instances[(app_id, ms_id, *label)].healthy = healthy

    def instances_of(self, app_id: str, ms_id: str) -> list[Instance]:
        return [i for k, i in sorted(self.instances.items()) if k[0] == app_id and k[1] == ms_id]

    def resolve_next(self, consumer: Any, app_id: str, target_ms: str, from_cluster: str | None = None) -> Resolution:
        """Next serving instance of `target_ms` for `consumer`.

        `consumer` is an Instance or, for ingress traffic, a cluster name.
        """
        cluster = from_cluster or (consumer.cluster if isinstance(consumer, Instance) else consumer)
        table = self.table(cluster)
        rk = (app_id, target_ms)
        if not table.can_resolve(rk):
            raise Unresolvable(f"{cluster} holds no routing records for {app_id}/{target_ms}")
        policies = table.subset_policies[rk]
        ident = consumer.key if isinstance(consumer, Instance) else consumer
        wkey = (ident, app_id, target_ms)
        sig = tuple((p.label, p.weight) for p in policies)
        cached = self._wrr.get(wkey)
        if cached is None or cached[0] != sig:
            cached = (sig, SmoothWRR([(p.label, p.weight) for p in policies]))
            self._wrr[wkey] = cached
        wrr = cached[1]

        def eligible(label: Label) -> bool:
            inst = self.instances.get((app_id, target_ms, *label))
            return inst is not None and inst.healthy

        try:
            label = wrr.next(eligible)
        except AllReplicasDown:
            raise Unresolvable(f"no healthy instance of {app_id}/{target_ms}") from None
        inst = self.instances[(app_id, target_ms, *label)]
        return Resolution(inst, self.route(cluster, inst.cluster, rk))

    def route(self, src: str, dst: str, rk: RecordKey) -> tuple[str, ...]:
        """Clusters a call crosses; non-adjacent pairs need an intermediate that holds the records."""
        if src == dst:
            return (src,)
        if self.topology.linked(src, dst):
            return (src, dst)
        for mid in sorted(self.topology.clusters):
            if mid in (src, dst):
                continue
            if self.topology.linked(src, mid) and self.topology.linked(mid, dst) and rk in self.tables[mid].service_entries:
                return (src, mid, dst)
        raise Unresolvable(f"no composition path from {src} to {dst} for {rk[0]}/{rk[1]}")

    def failover_select(self, app_id: str, ms_id: str, from_cluster: str, policy: FailoverPolicy | None = None) -> str:
        insts = self.instances_of(app_id, ms_id)
        if not insts:
            raise AllReplicasDown(f"no instance of {app_id}/{ms_id}")
        policy = policy or FailoverPolicy()
        healthy = {i.cluster for i in insts if i.healthy and policy.healthy(i.cluster)}
        if not healthy:
            raise AllReplicasDown(f"all instances of {app_id}/{ms_id} are down")
        return policy.select(sorted(healthy), from_cluster, self.topology)

    def gateway_clusters(self, app_id: str) -> list[str]:
        return sorted(c for c, t in self.tables.items() if any(a == app_id for a, _ in t.gateways))

    def dump(self) -> str:
        return json.dumps({c: table_to_dict(t) for c, t in sorted(self.tables.items())}, sort_keys=True, indent=2)

