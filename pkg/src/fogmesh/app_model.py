"""DAG application model: microservices, dataflows, composite services and QoS.

Edges point from the consumer (client) microservice to the consumed one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping

import networkx as nx

APP_LEVEL_RESOURCES = "_application"


class TierRestriction(str, Enum):
    FOG_ONLY = "fog-only"
    CLOUD_ALLOWED = "cloud-allowed"


class UnknownMicroservice(KeyError):
    pass


@dataclass(frozen=True)
class Microservice:
    ms_id: str
    ref_cpu: float
    ref_memory: int
    ref_throughput: float
    processing_time: float = 0.0
    image_ref: str = ""


@dataclass(frozen=True)
class DataFlow:
    source: str
    target: str
    message_size: int = 0
    bidirectional: bool = True

    @property
    def key(self) -> tuple[str, str]:
        return (self.source, self.target)


@dataclass(frozen=True)
class DataPath:
    edges: tuple[tuple[str, str], ...] = ()

    def microservices(self) -> list[str]:
        if not self.edges:
            return []
        return [self.edges[0][0]] + [t for _, t in self.edges]


@dataclass(frozen=True)
class QoSRequirement:
    latency_budget: float
    required_throughput: float
    tier_restriction: TierRestriction | None = None
    # finer-grained (per-edge) parameters are carried verbatim but not consumed
    extra: Mapping[str, Any] = field(default_factory=dict, compare=False, hash=False)


@dataclass(frozen=True)
class CompositeService:
    service_id: str
    members: frozenset[str]
    data_paths: tuple[DataPath, ...]
    qos: QoSRequirement

    def root(self) -> str | None:
        """Member that no other member of the service consumes."""
        if len(self.members) == 1:
            return next(iter(self.members))
        consumed = {t for p in self.data_paths for _, t in p.edges}
        roots = sorted(self.members - consumed)
        return roots[0] if len(roots) == 1 else None


@dataclass(frozen=True)
class Application:
    app_id: str
    microservices: Mapping[str, Microservice]
    dataflows: tuple[DataFlow, ...]
    services: tuple[CompositeService, ...]
    deployment_resources: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(sorted(self.microservices))
        g.add_edges_from(df.key for df in self.dataflows)
        return g

    def flow(self, source: str, target: str) -> DataFlow:
        for df in self.dataflows:
            if df.source == source and df.target == target:
                return df
        raise KeyError((source, target))

    def consumers(self, ms_id: str) -> list[str]:
        return sorted(df.source for df in self.dataflows if df.target == ms_id)

    def consumed(self, ms_id: str) -> list[str]:
        return sorted(df.target for df in self.dataflows if df.source == ms_id)

    def roots(self) -> list[str]:
        return [m for m in sorted(self.microservices) if not self.consumers(m)]

    def topological_order(self) -> list[str]:
        return list(nx.lexicographical_topological_sort(self.graph()))

    def service(self, service_id: str) -> CompositeService:
        for s in self.services:
            if s.service_id == service_id:
                return s
        raise KeyError(service_id)

    def demand(self, ms_id: str, overrides: Mapping[str, QoSRequirement] | None = None) -> float:
        """Requests/second the microservice must sustain: sum over the services using it."""
        total = 0.0
        for s in self.services:
            if ms_id in s.members:
                qos = (overrides or {}).get(s.service_id, s.qos)
                total += qos.required_throughput
        return total

    def latency_critical_service(self) -> CompositeService:
        return min(self.services, key=lambda s: (s.qos.latency_budget, s.service_id))

    def fog_only(self, ms_id: str, overrides: Mapping[str, QoSRequirement] | None = None) -> bool:
        for s in self.services:
            if ms_id in s.members:
                qos = (overrides or {}).get(s.service_id, s.qos)
                if qos.tier_restriction is TierRestriction.FOG_ONLY:
                    return True
        return False


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def add(self, code: str, detail: str) -> None:
        self.violations.append(Violation(code, detail))

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def __bool__(self) -> bool:
        return bool(self.violations)

    def __len__(self) -> int:
        return len(self.violations)


def validate(app: Application) -> ValidationReport:
    """Collect every violated invariant; an empty report means the app is well formed."""
    report = ValidationReport()
    known = set(app.microservices)

    for key, ms in app.microservices.items():
        if key != ms.ms_id:
            report.add("id-mismatch", f"key {key!r} holds microservice {ms.ms_id!r}")
        if not ms.ref_cpu > 0:
            report.add("bad-resource", f"{ms.ms_id}: ref_cpu must be > 0")
        if not ms.ref_memory > 0:
            report.add("bad-resource", f"{ms.ms_id}: ref_memory must be > 0")
        if not ms.ref_throughput > 0:
            report.add("bad-resource", f"{ms.ms_id}: ref_throughput must be > 0")
        if ms.processing_time < 0:
            report.add("bad-resource", f"{ms.ms_id}: processing_time must be >= 0")

    seen_edges: set[tuple[str, str]] = set()
    for df in app.dataflows:
        if df.source == df.target:
            report.add("self-loop", f"{df.source} -> {df.target}")
        for end in (df.source, df.target):
            if end not in known:
                report.add("unknown-microservice", f"dataflow {df.source}->{df.target} references {end}")
        if df.key in seen_edges:
            report.add("duplicate-dataflow", f"{df.source} -> {df.target}")
        seen_edges.add(df.key)
        if df.message_size < 0:
            report.add("bad-dataflow", f"{df.source}->{df.target}: negative message size")

    g = nx.DiGraph()
    g.add_edges_from(k for k in seen_edges if k[0] != k[1])
    if not nx.is_directed_acyclic_graph(g):
        cycle = nx.find_cycle(g)
        report.add("cycle", " -> ".join(u for u, _ in cycle))

    service_ids: set[str] = set()
    for s in app.services:
        if s.service_id in service_ids:
            report.add("duplicate-service", s.service_id)
        service_ids.add(s.service_id)
        for m in sorted(s.members - known):
            report.add("unknown-microservice", f"service {s.service_id} references {m}")
        if not s.members:
            report.add("empty-service", s.service_id)
        if not s.qos.latency_budget > 0:
            report.add("bad-qos", f"{s.service_id}: latency_budget must be > 0")
        if not s.qos.required_throughput > 0:
            report.add("bad-qos", f"{s.service_id}: required_throughput must be > 0")
        root = s.root()
        if root is None:
            report.add("no-unique-root", s.service_id)
        for i, path in enumerate(s.data_paths):
            for src, dst in path.edges:
                if (src, dst) not in seen_edges:
                    report.add("path-edge-not-dataflow", f"{s.service_id}[{i}]: {src}->{dst}")
                if src not in s.members or dst not in s.members:
                    report.add("path-outside-service", f"{s.service_id}[{i}]: {src}->{dst}")
            for (_, a), (b, _) in zip(path.edges, path.edges[1:]):
                if a != b:
                    report.add("broken-path", f"{s.service_id}[{i}]: {a} does not chain to {b}")
            if path.edges and root is not None and path.edges[0][0] != root:
                report.add("path-not-root-anchored", f"{s.service_id}[{i}] starts at {path.edges[0][0]}")
        covered = {m for p in s.data_paths for m in p.microservices()}
        if len(s.members) > 1 and covered != set(s.members):
            report.add("member-off-path", f"{s.service_id}: {sorted(set(s.members) - covered)}")

    for m in app.deployment_resources:
        if m != APP_LEVEL_RESOURCES and m not in known:
            report.add("unknown-microservice", f"deployment resources for {m}")
    return report


def next_placeable(app: Application, placed: Iterable[str]) -> set[str]:
    """Unplaced microservices whose consumers are all placed."""
    placed = set(placed)
    unknown = placed - set(app.microservices)
    if unknown:
        raise UnknownMicroservice(sorted(unknown))
    return {
        m
        for m in app.microservices
        if m not in placed and all(c in placed for c in app.consumers(m))
    }


def enumerate_walks(app: Application, members: Iterable[str]) -> list[DataPath]:
    """All root-to-leaf walks in the subgraph induced by `members`."""
    members = set(members)
    sub = app.graph().subgraph(members)
    roots = sorted(m for m in members if sub.in_degree(m) == 0)
    paths: list[DataPath] = []

    def walk(node: str, acc: list[tuple[str, str]]) -> None:
        children = sorted(sub.successors(node))
        if not children:
            paths.append(DataPath(tuple(acc)))
            return
        for c in children:
            walk(c, acc + [(node, c)])

    for r in roots:
        walk(r, [])
    return paths


def service_paths(service: CompositeService, app: Application | None = None) -> list[DataPath]:
    if service.data_paths:
        return list(service.data_paths)
    if len(service.members) == 1 or app is None:
        return [DataPath(())]
    return enumerate_walks(app, service.members)


def path_tree(paths: Iterable[DataPath]) -> dict[str, list[str]]:
    """Merge root-anchored paths into a fan-out tree: node -> ordered children."""
    tree: dict[str, list[str]] = {}
    for p in paths:
        for src, dst in p.edges:
            children = tree.setdefault(src, [])
            if dst not in children:
                children.append(dst)
            tree.setdefault(dst, [])
    return tree


# --- JSON documents -------------------------------------------------------


def _qos_to_dict(q: QoSRequirement) -> dict[str, Any]:
    d: dict[str, Any] = {"latencyBudget": q.latency_budget, "requiredThroughput": q.required_throughput}
    if q.tier_restriction is not None:
        d["tierRestriction"] = q.tier_restriction.value
    d.update(q.extra)
    return d


def qos_from_dict(d: Mapping[str, Any]) -> QoSRequirement:
    tier = d.get("tierRestriction")
    extra = {k: v for k, v in d.items() if k not in ("latencyBudget", "requiredThroughput", "tierRestriction")}
    return QoSRequirement(
        latency_budget=float(d["latencyBudget"]),
        required_throughput=float(d["requiredThroughput"]),
        tier_restriction=TierRestriction(tier) if tier else None,
        extra=extra,
    )


qos_to_dict = _qos_to_dict


def application_to_dict(app: Application) -> dict[str, Any]:
    return {
        "appId": app.app_id,
        "microservices": [
            {
                "msId": ms.ms_id,
                "refCpu": ms.ref_cpu,
                "refMemory": ms.ref_memory,
                "refThroughput": ms.ref_throughput,
                "processingTime": ms.processing_time,
                "imageRef": ms.image_ref,
            }
            for ms in (app.microservices[k] for k in sorted(app.microservices))
        ],
        "dataflows": [
            {
                "source": df.source,
                "target": df.target,
                "messageSize": df.message_size,
                "bidirectional": df.bidirectional,
            }
            for df in app.dataflows
        ],
        "services": [
            {
                "serviceId": s.service_id,
                "members": sorted(s.members),
                "dataPaths": [[{"source": a, "target": b} for a, b in p.edges] for p in s.data_paths],
                "qosParameters": _qos_to_dict(s.qos),
            }
            for s in app.services
        ],
        "deploymentResources": {k: list(v) for k, v in sorted(app.deployment_resources.items())},
    }


def application_from_dict(d: Mapping[str, Any]) -> Application:
    microservices = {}
    for m in d["microservices"]:
        ms = Microservice(
            ms_id=m["msId"],
            ref_cpu=float(m["refCpu"]),
            ref_memory=int(m["refMemory"]),
            ref_throughput=float(m["refThroughput"]),
            processing_time=float(m.get("processingTime", 0.0)),
            image_ref=m.get("imageRef", ""),
        )
        microservices[ms.ms_id] = ms
    dataflows = tuple(
        DataFlow(
            source=f["source"],
            target=f["target"],
            message_size=int(f.get("messageSize", 0)),
            bidirectional=bool(f.get("bidirectional", True)),
        )
        for f in d.get("dataflows", [])
    )
    services = tuple(
        CompositeService(
            service_id=s["serviceId"],
            members=frozenset(s["members"]),
            data_paths=tuple(
                DataPath(tuple((e["source"], e["target"]) for e in p)) for p in s.get("dataPaths", [])
            ),
            qos=qos_from_dict(s["qosParameters"]),
        )
        for s in d.get("services", [])
    )
    resources = {k: tuple(v) for k, v in d.get("deploymentResources", {}).items()}
    return Application(d["appId"], microservices, dataflows, services, resources)


def load_application(path: str | Path) -> Application:
    return application_from_dict(json.loads(Path(path).read_text()))


def dump_application(app: Application, path: str | Path) -> None:
    Path(path).write_text(json.dumps(application_to_dict(app), indent=2) + "\n")
