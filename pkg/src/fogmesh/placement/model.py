"""Placement requests and algorithm output."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from ..app_model import QoSRequirement, qos_from_dict, qos_to_dict


class MalformedPR(ValueError):
    pass


@dataclass(frozen=True)
class InstancePlan:
    """One pod: `units` reference-sized replicas merged on a single node."""

    ms_id: str
    cluster: str
    node_name: str
    cpu: float
    mem: int
    replica_index: int = 0
    units: int = 1
    status: str = "placed"

    def __post_init__(self) -> None:
        if not (self.cpu > 0 and self.mem > 0):
            raise ValueError(f"instance of {self.ms_id} must request positive resources")

    @property
    def label(self) -> tuple[str, str]:
        return (self.cluster, self.node_name)


@dataclass(frozen=True)
class SubsetWeight:
    cluster: str
    node_name: str
    weight: int

    @property
    def label(self) -> tuple[str, str]:
        return (self.cluster, self.node_name)


@dataclass
class PlacementRequest:
    pr_id: str
    application_id: str
    entry_clusters: list[str]
    placed_microservices: dict[str, list[InstancePlan]] = field(default_factory=dict)
    composition_only_placements: dict[str, list[str]] = field(default_factory=dict)
    load_balancing_completed: dict[str, bool] = field(default_factory=dict)
    subset_weights: dict[str, list[SubsetWeight]] = field(default_factory=dict)
    qos_parameters: dict[str, QoSRequirement] = field(default_factory=dict)
    hop_count: int = 0
    visited_clusters: list[str] = field(default_factory=list)
    retries: int = 0

    def __post_init__(self) -> None:
        if not self.application_id:
            raise MalformedPR("applicationId is required")
        if not self.entry_clusters:
            raise MalformedPR("entryClusters must be non-empty")
        if self.hop_count < 0:
            raise MalformedPR("hopCount must be >= 0")

    def instances(self, ms_id: str) -> list[InstancePlan]:
        return self.placed_microservices.get(ms_id, [])

    def placed_units(self, ms_id: str) -> int:
        return sum(i.units for i in self.instances(ms_id))

    def record(self, plan: InstancePlan) -> None:
        self.placed_microservices.setdefault(plan.ms_id, []).append(plan)

    def copy(self) -> "PlacementRequest":
        return PlacementRequest(
            pr_id=self.pr_id,
            application_id=self.application_id,
            entry_clusters=list(self.entry_clusters),
            placed_microservices={k: list(v) for k, v in self.placed_microservices.items()},
            composition_only_placements={k: list(v) for k, v in self.composition_only_placements.items()},
            load_balancing_completed=dict(self.load_balancing_completed),
            subset_weights={k: list(v) for k, v in self.subset_weights.items()},
            qos_parameters=dict(self.qos_parameters),
            hop_count=self.hop_count,
            visited_clusters=list(self.visited_clusters),
            retries=self.retries,
        )


@dataclass
class PlacementOutput:
    placements: list[InstancePlan] = field(default_factory=list)
    completed_prs: list[str] = field(default_factory=list)
    incomplete_prs: list[PlacementRequest] = field(default_factory=list)
    ingress_bindings: dict[tuple[str, str], bool] = field(default_factory=dict)
    rejected_prs: dict[str, str] = field(default_factory=dict)
    # which PR each new placement belongs to (parallel to `placements`)
    owners: list[str] = field(default_factory=list)
    # every PR the algorithm saw, in its updated state
    updated_prs: dict[str, PlacementRequest] = field(default_factory=dict)

    def add(self, pr_id: str, plan: InstancePlan) -> None:
        self.placements.append(plan)
        self.owners.append(pr_id)

    def placements_for(self, pr_id: str) -> list[InstancePlan]:
        return [p for p, o in zip(self.placements, self.owners) if o == pr_id]


# --- wire format (API 1 body and external-algorithm documents) ---------------


def instance_to_dict(p: InstancePlan) -> dict[str, Any]:
    return {
        "microservice": p.ms_id,
        "cluster": p.cluster,
        "node": p.node_name,
        "cpu": p.cpu,
        "memory": p.mem,
        "replicaIndex": p.replica_index,
        "units": p.units,
        "status": p.status,
    }


def instance_from_dict(d: Mapping[str, Any]) -> InstancePlan:
    return InstancePlan(
        ms_id=d["microservice"],
        cluster=d["cluster"],
        node_name=d["node"],
        cpu=float(d["cpu"]),
        mem=int(d["memory"]),
        replica_index=int(d.get("replicaIndex", 0)),
        units=int(d.get("units", 1)),
        status=d.get("status", "placed"),
    )


def subset_to_dict(s: SubsetWeight) -> dict[str, Any]:
    return {"cluster": s.cluster, "node": s.node_name, "weight": s.weight}


def subset_from_dict(d: Mapping[str, Any]) -> SubsetWeight:
    w = int(d["weight"])
    if w <= 0:
        raise ValueError("subset weight must be a positive integer")
    return SubsetWeight(d["cluster"], d["node"], w)


REQUIRED_PR_FIELDS = ("applicationId", "entryClusters")


def pr_to_dict(pr: PlacementRequest) -> dict[str, Any]:
    return {
        "prId": pr.pr_id,
        "applicationId": pr.application_id,
        "entryClusters": list(pr.entry_clusters),
        "placedMicroservices": {
            m: [instance_to_dict(i) for i in insts] for m, insts in sorted(pr.placed_microservices.items())
        },
        "compositionOnlyPlacements": {m: list(c) for m, c in sorted(pr.composition_only_placements.items())},
        "loadBalancingCompleted": dict(sorted(pr.load_balancing_completed.items())),
        "subsetWeights": {m: [subset_to_dict(s) for s in ws] for m, ws in sorted(pr.subset_weights.items())},
        "qosParameters": {k: qos_to_dict(q) for k, q in sorted(pr.qos_parameters.items())},
        "hopCount": pr.hop_count,
        "visitedClusters": list(pr.visited_clusters),
        "retries": pr.retries,
    }


def pr_from_dict(d: Mapping[str, Any], pr_id: str | None = None) -> PlacementRequest:
    if not isinstance(d, Mapping):
        raise MalformedPR("placement request must be an object")
    for name in REQUIRED_PR_FIELDS:
        if name not in d or d[name] in (None, "", []):
            raise MalformedPR(f"missing required field {name!r}")
    if not isinstance(d["entryClusters"], list) or not all(isinstance(c, str) for c in d["entryClusters"]):
        raise MalformedPR("entryClusters must be a list of cluster names")
    try:
        return PlacementRequest(
            pr_id=str(d.get("prId") or pr_id or ""),
            application_id=str(d["applicationId"]),
            entry_clusters=list(d["entryClusters"]),
            placed_microservices={
                m: [instance_from_dict(i) for i in insts] for m, insts in d.get("placedMicroservices", {}).items()
            },
            composition_only_placements={m: list(c) for m, c in d.get("compositionOnlyPlacements", {}).items()},
            load_balancing_completed={m: bool(v) for m, v in d.get("loadBalancingCompleted", {}).items()},
            subset_weights={
                m: [subset_from_dict(s) for s in ws] for m, ws in d.get("subsetWeights", {}).items()
            },
            qos_parameters={k: qos_from_dict(q) for k, q in d.get("qosParameters", {}).items()},
            hop_count=int(d.get("hopCount", 0)),
            visited_clusters=list(d.get("visitedClusters", [])),
            retries=int(d.get("retries", 0)),
        )
    except MalformedPR:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedPR(f"invalid placement request: {exc}") from exc


def output_to_dict(out: PlacementOutput) -> dict[str, Any]:
    return {
        "placements": [dict(instance_to_dict(p), prId=o) for p, o in zip(out.placements, out.owners)],
        "completedPrs": list(out.completed_prs),
        "incompletePrs": [pr_to_dict(p) for p in out.incomplete_prs],
        "ingressBindings": [
            {"applicationId": app, "cluster": cluster, "ingress": bound}
            for (app, cluster), bound in sorted(out.ingress_bindings.items())
        ],
        "rejectedPrs": dict(sorted(out.rejected_prs.items())),
    }


def output_from_dict(d: Mapping[str, Any]) -> PlacementOutput:
    out = PlacementOutput()
    for p in d["placements"]:
        out.add(p.get("prId", ""), instance_from_dict(p))
    out.completed_prs = list(d["completedPrs"])
    out.incomplete_prs = [pr_from_dict(p) for p in d["incompletePrs"]]
    out.ingress_bindings = {(b["applicationId"], b["cluster"]): bool(b["ingress"]) for b in d["ingressBindings"]}
    out.rejected_prs = dict(d.get("rejectedPrs", {}))
    return out
