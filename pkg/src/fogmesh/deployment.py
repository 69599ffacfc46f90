"""Per-cluster deployment payloads exchanged between control engines."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from .placement.model import (
    InstancePlan,
    SubsetWeight,
    instance_from_dict,
    instance_to_dict,
    subset_from_dict,
    subset_to_dict,
)


class MalformedDeploymentInfo(ValueError):
    pass


@dataclass(frozen=True)
class LBUpdate:
    ms_id: str
    subsets: tuple[SubsetWeight, ...]


@dataclass
class DeploymentInfo:
    target_cluster: str
    pr_id: str
    application_id: str
    instance_plans: list[InstancePlan] = field(default_factory=list)
    entry_cluster_flag: bool = False
    lb_updates: list[LBUpdate] = field(default_factory=list)
    additional_m_for_s_level: list[str] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (self.instance_plans or self.entry_cluster_flag or self.lb_updates or self.additional_m_for_s_level)


def lb_update_to_dict(u: LBUpdate) -> dict[str, Any]:
    return {
        "microservice": u.ms_id,
        "subsets": [subset_to_dict(s) for s in u.subsets],
    }


def deployment_info_to_dict(info: DeploymentInfo) -> dict[str, Any]:
    return {
        "targetCluster": info.target_cluster,
        "prId": info.pr_id,
        "applicationId": info.application_id,
        "placements": [instance_to_dict(p) for p in info.instance_plans],
        "entryCluster": info.entry_cluster_flag,
        "loadBalancing": [lb_update_to_dict(u) for u in info.lb_updates],
        "additionalMForSLevel": list(info.additional_m_for_s_level),
    }


def deployment_info_from_dict(d: Mapping[str, Any]) -> DeploymentInfo:
    if not isinstance(d, Mapping):
        raise MalformedDeploymentInfo("deployment info must be an object")
    for key in ("targetCluster", "applicationId"):
        if not d.get(key):
            raise MalformedDeploymentInfo(f"{key} is required")
    try:
        lb = [
            LBUpdate(u["microservice"], tuple(subset_from_dict(s) for s in u["subsets"]))
            for u in d.get("loadBalancing", [])
        ]
        return DeploymentInfo(
            target_cluster=d["targetCluster"],
            pr_id=d.get("prId", ""),
            application_id=d["applicationId"],
            instance_plans=[instance_from_dict(p) for p in d.get("placements", [])],
            entry_cluster_flag=bool(d.get("entryCluster", False)),
            lb_updates=lb,
            additional_m_for_s_level=list(d.get("additionalMForSLevel", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDeploymentInfo(f"bad deployment info: {exc}") from exc
