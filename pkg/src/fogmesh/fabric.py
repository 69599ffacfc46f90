"""Simulated federated infrastructure: clusters, nodes, latencies and resource accounting.

CPU is tracked internally in millicores so that allocate/release sequences are exact.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping

GB = 1024**3


class Tier(str, Enum):
    FOG = "fog"
    CLOUD = "cloud"


class InsufficientResources(Exception):
    pass


class UnknownCluster(KeyError):
    pass


def to_millicores(cpu: float) -> int:
    # round up so a request is never silently shrunk
    return int(math.ceil(round(cpu * 1000, 6)))


@dataclass(frozen=True)
class AllocationTicket:
    ticket_id: int
    cluster: str
    node_name: str
    mcpu: int
    mem: int
    owner: str = ""

    @property
    def cpu(self) -> float:
        return self.mcpu / 1000


_ticket_ids = itertools.count(1)


@dataclass
class NodeState:
    node_name: str
    cluster: str
    capacity_cpu: float
    capacity_mem: int
    schedulable: bool = True
    usage_cpu: float = 0.0
    usage_mem: int = 0
    _alloc_mcpu: int = 0
    _alloc_mem: int = 0
    _tickets: dict[int, AllocationTicket] = field(default_factory=dict, repr=False)

    @property
    def capacity_mcpu(self) -> int:
        return to_millicores(self.capacity_cpu)

    @property
    def allocated_cpu(self) -> float:
        return self._alloc_mcpu / 1000

    @property
    def allocated_mem(self) -> int:
        return self._alloc_mem

    @property
    def free_mcpu(self) -> int:
        return self.capacity_mcpu - self._alloc_mcpu

    @property
    def free_mem(self) -> int:
        return self.capacity_mem - self._alloc_mem

    def tickets(self) -> list[AllocationTicket]:
        return list(self._tickets.values())


def allocate(node: NodeState, cpu: float, mem: int, owner: str = "") -> AllocationTicket:
    if not (cpu > 0 and mem > 0):
        raise ValueError("allocation request must be positive on both dimensions")
    mcpu = to_millicores(cpu)
    if node._alloc_mcpu + mcpu > node.capacity_mcpu or node._alloc_mem + mem > node.capacity_mem:
        raise InsufficientResources(
            f"{node.node_name}: request {mcpu}m/{mem}B exceeds free {node.free_mcpu}m/{node.free_mem}B"
        )
    ticket = AllocationTicket(next(_ticket_ids), node.cluster, node.node_name, mcpu, int(mem), owner)
    node._alloc_mcpu += mcpu
    node._alloc_mem += int(mem)
    node._tickets[ticket.ticket_id] = ticket
    return ticket


def release(node: NodeState, ticket: AllocationTicket) -> None:
    held = node._tickets.pop(ticket.ticket_id, None)
    if held is None:
        raise KeyError(f"ticket {ticket.ticket_id} not held by {node.node_name}")
    node._alloc_mcpu -= held.mcpu
    node._alloc_mem -= held.mem


@dataclass
class Cluster:
    name: str
    tier: Tier
    zone: str
    nodes: list[NodeState] = field(default_factory=list)
    adjacent_fog: list[str] = field(default_factory=list)
    adjacent_cloud: list[str] = field(default_factory=list)
    deployment_delay: float = 100.0

    @property
    def region(self) -> str:
        return self.tier.value

    def node(self, name: str) -> NodeState:
        for n in self.nodes:
            if n.node_name == name:
                return n
        raise KeyError(f"{self.name} has no node {name!r}")

    def adjacent(self) -> list[str]:
        return list(self.adjacent_fog) + list(self.adjacent_cloud)


@dataclass(frozen=True)
class NodeData:
    node_name: str
    total_cpu: float
    total_memory: int
    used_cpu: float
    used_memory: int
    allocated_cpu: float
    allocated_memory: int
    schedulable: bool = True

    @property
    def free_mcpu(self) -> int:
        return to_millicores(self.total_cpu) - to_millicores(self.allocated_cpu)

    @property
    def free_memory(self) -> int:
        return self.total_memory - self.allocated_memory


@dataclass(frozen=True)
class ClusterData:
    """Point-in-time view of one cluster, as returned by the cluster-data API."""

    cluster_name: str
    tier: Tier
    nodes: tuple[NodeData, ...]
    adjacent_fog: tuple[str, ...]
    adjacent_cloud: tuple[str, ...]

    def node(self, name: str) -> NodeData:
        for n in self.nodes:
            if n.node_name == name:
                return n
        raise KeyError(name)


def cluster_snapshot(cluster: Cluster) -> ClusterData:
    return ClusterData(
        cluster_name=cluster.name,
        tier=cluster.tier,
        nodes=tuple(
            NodeData(
                node_name=n.node_name,
                total_cpu=n.capacity_cpu,
                total_memory=n.capacity_mem,
                used_cpu=n.usage_cpu,
                used_memory=n.usage_mem,
                allocated_cpu=n.allocated_cpu,
                allocated_memory=n.allocated_mem,
                schedulable=n.schedulable,
            )
            for n in cluster.nodes
        ),
        adjacent_fog=tuple(cluster.adjacent_fog),
        adjacent_cloud=tuple(cluster.adjacent_cloud),
    )


@dataclass
class Topology:
    clusters: dict[str, Cluster]
    latency: dict[tuple[str, str], float]
    ingress_latency: dict[str, float]

    def __post_init__(self) -> None:
        self.check()

    def check(self) -> None:
        names = set(self.clusters)
        zones = [c.zone for c in self.clusters.values()]
        if len(set(zones)) != len(zones):
            raise ValueError("zones must be unique per cluster")
        for a in names:
            for b in names:
                if (a, b) not in self.latency:
                    raise ValueError(f"missing latency {a}->{b}")
                v = self.latency[(a, b)]
                if v < 0:
                    raise ValueError(f"negative latency {a}->{b}")
                if v != self.latency[(b, a)]:
                    raise ValueError(f"latency not symmetric for {a}/{b}")
                if a != b and v < self.latency[(a, a)]:
                    raise ValueError(f"off-diagonal latency {a}->{b} below intra-cluster latency")
        for c in self.clusters.values():
            for adj in c.adjacent():
                if adj not in names:
                    raise ValueError(f"{c.name} lists unknown neighbour {adj}")

    def cluster(self, name: str) -> Cluster:
        try:
            return self.clusters[name]
        except KeyError:
            raise UnknownCluster(name) from None

    def node(self, cluster: str, node_name: str) -> NodeState:
        return self.cluster(cluster).node(node_name)

    def path_latency(self, a: str, b: str) -> float:
        self.cluster(a)
        self.cluster(b)
        return self.latency[(a, b)]

    def linked(self, a: str, b: str) -> bool:
        """True when the two clusters share an east-west link (or are the same cluster)."""
        if a == b:
            return True
        return b in self.cluster(a).adjacent() or a in self.cluster(b).adjacent()

    def fog_clusters(self) -> list[str]:
        return [n for n, c in self.clusters.items() if c.tier is Tier.FOG]

    def cloud_clusters(self) -> list[str]:
        return [n for n, c in self.clusters.items() if c.tier is Tier.CLOUD]


def path_latency(topology: Topology, cluster_a: str, cluster_b: str) -> float:
    return topology.path_latency(cluster_a, cluster_b)


def cluster_data_to_dict(data: ClusterData) -> dict[str, Any]:
    return {
        "clusterName": data.cluster_name,
        "tier": data.tier.value,
        "nodes": [
            {
                "nodeName": n.node_name,
                "totalCpu": n.total_cpu,
                "totalMemory": n.total_memory,
                "usedCpu": n.used_cpu,
                "usedMemory": n.used_memory,
                "allocatedCpu": n.allocated_cpu,
                "allocatedMemory": n.allocated_memory,
                "schedulable": n.schedulable,
            }
            for n in data.nodes
        ],
        "adjacentFogClusters": list(data.adjacent_fog),
        "adjacentCloudClusters": list(data.adjacent_cloud),
    }


def cluster_data_from_dict(d: Mapping[str, Any]) -> ClusterData:
    return ClusterData(
        cluster_name=d["clusterName"],
        tier=Tier(d.get("tier", "fog")),
        nodes=tuple(
            NodeData(
                node_name=n["nodeName"],
                total_cpu=float(n["totalCpu"]),
                total_memory=int(n["totalMemory"]),
                used_cpu=float(n.get("usedCpu", 0.0)),
                used_memory=int(n.get("usedMemory", 0)),
                allocated_cpu=float(n.get("allocatedCpu", 0.0)),
                allocated_memory=int(n.get("allocatedMemory", 0)),
                schedulable=bool(n.get("schedulable", True)),
            )
            for n in d.get("nodes", [])
        ),
        adjacent_fog=tuple(d.get("adjacentFogClusters", [])),
        adjacent_cloud=tuple(d.get("adjacentCloudClusters", [])),
    )


# --- topology documents ---------------------------------------------------


def topology_from_dict(d: Mapping[str, Any]) -> Topology:
    clusters: dict[str, Cluster] = {}
    for c in d["clusters"]:
        tier = Tier(c["tier"])
        region = c.get("region", tier.value)
        if region != tier.value:
            raise ValueError(f"cluster {c['name']}: region must be {tier.value!r}, got {region!r}")
        cluster = Cluster(
            name=c["name"],
            tier=tier,
            zone=c.get("zone", c["name"]),
            adjacent_fog=list(c.get("adjacentFog", [])),
            adjacent_cloud=list(c.get("adjacentCloud", [])),
            deployment_delay=float(c.get("deploymentDelayMs", 100.0)),
        )
        for n in c.get("nodes", []):
            node = NodeState(
                node_name=n["name"],
                cluster=cluster.name,
                capacity_cpu=float(n["cpu"]),
                capacity_mem=int(n["memory"]),
                schedulable=bool(n.get("schedulable", True)),
            )
            pre_cpu, pre_mem = float(n.get("reservedCpu", 0)), int(n.get("reservedMemory", 0))
            if pre_cpu > 0 and pre_mem > 0:
                allocate(node, pre_cpu, pre_mem, owner="system")
            cluster.nodes.append(node)
        clusters[cluster.name] = cluster

    names = list(clusters)
    raw = d.get("latencyMs", {})
    latency: dict[tuple[str, str], float] = {}
    if isinstance(raw, Mapping):
        for a, row in raw.items():
            for b, v in row.items():
                latency[(a, b)] = float(v)
                latency.setdefault((b, a), float(v))
    else:  # list-of-lists in cluster declaration order
        for i, row in enumerate(raw):
            for j, v in enumerate(row):
                latency[(names[i], names[j])] = float(v)
    ingress_raw = d.get("ingressLatencyMs", 2.0)
    if isinstance(ingress_raw, Mapping):
        ingress = {k: float(v) for k, v in ingress_raw.items()}
    else:
        ingress = {n: float(ingress_raw) for n in names}
    return Topology(clusters, latency, ingress)


def topology_to_dict(t: Topology) -> dict[str, Any]:
    names = list(t.clusters)
    return {
        "clusters": [
            {
                "name": c.name,
                "tier": c.tier.value,
                "region": c.region,
                "zone": c.zone,
                "nodes": [
                    {
                        "name": n.node_name,
                        "cpu": n.capacity_cpu,
                        "memory": n.capacity_mem,
                        "schedulable": n.schedulable,
                    }
                    for n in c.nodes
                ],
                "adjacentFog": list(c.adjacent_fog),
                "adjacentCloud": list(c.adjacent_cloud),
                "deploymentDelayMs": c.deployment_delay,
            }
            for c in t.clusters.values()
        ],
        "latencyMs": {a: {b: t.latency[(a, b)] for b in names} for a in names},
        "ingressLatencyMs": dict(t.ingress_latency),
    }


def load_topology(path: str | Path) -> Topology:
    return topology_from_dict(json.loads(Path(path).read_text()))


# --- reference preset -----------------------------------------------------

# (node, vCPU, GB, schedulable). Control-plane nodes of the kind-based fog clusters
# carry the usual NoSchedule taint; the k3s server and the cloud control node do not.
REFERENCE_NODES: dict[str, list[tuple[str, float, int, bool]]] = {
    "fog1": [
        ("control-node", 3, 6, False),
        ("worker1", 4, 9, True),
        ("worker2", 5, 16, True),
        ("worker3", 3, 8, True),
    ],
    "fog2": [
        ("control-node", 3, 6, False),
        ("worker1", 3, 9, True),
        ("worker2", 2, 6, True),
        ("worker3", 4, 12, True),
        ("worker4", 4, 8, True),
    ],
    "fog3": [
        ("server", 3, 6, True),
        ("agent0", 2, 4, True),
        ("agent1", 2, 4, True),
    ],
    "cloud1": [
        ("control-node", 8, 14, True),
        ("worker1", 8, 14, True),
    ],
}

REFERENCE_ADJACENCY: dict[str, tuple[list[str], list[str]]] = {
    "fog1": (["fog2"], ["cloud1"]),
    "fog2": (["fog1", "fog3"], ["cloud1"]),
    "fog3": (["fog2"], ["cloud1"]),
    "cloud1": (["fog1", "fog2", "fog3"], []),
}


@dataclass(frozen=True)
class LatencyPreset:
    intra: float = 1.0
    fog_fog: float = 5.0
    fog_cloud: float = 50.0
    ingress: float = 2.0


def reference_topology(
    latencies: LatencyPreset = LatencyPreset(),
    deployment_delay: float | Mapping[str, float] = 100.0,
    nodes: Mapping[str, Iterable[tuple[str, float, int, bool]]] | None = None,
) -> Topology:
    """Three fog clusters in a line (fog1-fog2-fog3) and one cloud cluster reachable from all.

    Fog pairs without a direct link are charged one fog-fog latency per hop.
    """
    nodes = nodes or REFERENCE_NODES
    clusters: dict[str, Cluster] = {}
    for name, spec in nodes.items():
        tier = Tier.CLOUD if name.startswith("cloud") else Tier.FOG
        fog_adj, cloud_adj = REFERENCE_ADJACENCY.get(name, ([], []))
        delay = deployment_delay[name] if isinstance(deployment_delay, Mapping) else deployment_delay
        cluster = Cluster(name, tier, zone=name, adjacent_fog=list(fog_adj), adjacent_cloud=list(cloud_adj),
                          deployment_delay=float(delay))
        for node_name, cpu, gb, sched in spec:
            cluster.nodes.append(NodeState(f"{name}-{node_name}", name, float(cpu), int(gb * GB), sched))
        clusters[name] = cluster

    fog_order = ["fog1", "fog2", "fog3"]
    latency: dict[tuple[str, str], float] = {}
    for a in clusters:
        for b in clusters:
            if a == b:
                v = latencies.intra
            elif clusters[a].tier is Tier.FOG and clusters[b].tier is Tier.FOG:
                hops = abs(fog_order.index(a) - fog_order.index(b)) if a in fog_order and b in fog_order else 1
                v = latencies.fog_fog * hops
            else:
                v = latencies.fog_cloud
            latency[(a, b)] = v
    ingress = {n: latencies.ingress for n in clusters}
    return Topology(clusters, latency, ingress)
