"""Client for placement algorithms hosted as a separate HTTP service."""

from __future__ import annotations

import json
from typing import Any, Iterable, Mapping

import httpx

from ..app_model import Application, application_to_dict
from ..fabric import ClusterData, cluster_data_to_dict
from .model import PlacementOutput, PlacementRequest, output_from_dict, pr_to_dict


class Unreachable(ConnectionError):
    pass


class MalformedResponse(ValueError):
    pass


def external_request_body(prs: Iterable[PlacementRequest], app_info: Mapping[str, Application],
                          cluster_data: Mapping[str, ClusterData]) -> dict[str, Any]:
    return {
        "prs": [pr_to_dict(p) for p in prs],
        "appInfo": {k: application_to_dict(a) for k, a in sorted(app_info.items())},
        "clusterData": {k: cluster_data_to_dict(c) for k, c in sorted(cluster_data.items())},
    }


def check_output(out: PlacementOutput, cluster_data: Mapping[str, ClusterData]) -> None:
    for p in out.placements:
        cd = cluster_data.get(p.cluster)
        if cd is None:
            raise MalformedResponse(f"placement references unknown cluster {p.cluster!r}")
        if p.node_name not in {n.node_name for n in cd.nodes}:
            raise MalformedResponse(f"placement references unknown node {p.node_name!r} in {p.cluster}")


def external_placement(
    prs: Iterable[PlacementRequest],
    app_info: Mapping[str, Application],
    cluster_data: Mapping[str, ClusterData],
    url: str,
    timeout: float = 5.0,
) -> PlacementOutput:
    """Send the round's metadata with a GET request and parse the returned placement."""
    prs = list(prs)
    body = json.dumps(external_request_body(prs, app_info, cluster_data))
    try:
        resp = httpx.request("GET", url, content=body, headers={"content-type": "application/json"},
                             timeout=timeout)
    except httpx.TransportError as exc:
        raise Unreachable(f"{url}: {exc}") from exc
    if resp.status_code != 200:
        raise MalformedResponse(f"{url} answered {resp.status_code}")
    try:
        out = output_from_dict(resp.json())
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedResponse(f"{url}: cannot parse placement output: {exc}") from exc
    check_output(out, cluster_data)
    if len(prs) == 1:  # a single-PR round needs no per-placement owner
        out.owners = [o or prs[0].pr_id for o in out.owners]
    known = {p.pr_id: p for p in prs}
    for pr in out.incomplete_prs:
        out.updated_prs[pr.pr_id] = pr
    for pr_id in out.completed_prs:
        if pr_id in known and pr_id not in out.updated_prs:
            pr = known[pr_id].copy()
            for plan in out.placements_for(pr_id):
                pr.record(plan)
            out.updated_prs[pr_id] = pr
    return out
