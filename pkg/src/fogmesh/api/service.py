"""HTTP endpoints for one control engine, backed by a simulated federation.

Handlers only translate bodies and hand work to the federation; the simulation
is advanced to quiescence under a lock so the event loop keeps a single owner.
"""

from __future__ import annotations

import threading
from typing import Any

from fastapi import FastAPI, Header, Request
from fastapi.responses import JSONResponse

from ..deployment import MalformedDeploymentInfo, deployment_info_from_dict
from ..engine import UnknownApplication
from ..fabric import InsufficientResources, UnknownCluster, cluster_data_to_dict
from ..federation import Federation
from ..placement import MalformedPR
from ..routing import UnknownNode
from .schema import CLUSTER_DATA_PATH, DEPLOYMENT_INFO_PATH, PLACEMENT_REQUESTS_PATH


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def create_app(federation: Federation, local_cluster: str) -> FastAPI:
    federation.topology.cluster(local_cluster)
    app = FastAPI(title=f"fogmesh control engine ({local_cluster})")
    lock = threading.Lock()

    async def body_of(request: Request) -> Any:
        try:
            return await request.json()
        except ValueError:
            return None

    @app.post(PLACEMENT_REQUESTS_PATH, status_code=202)
    async def submit(request: Request, cluster: str | None = Header(default=None)) -> Any:
        body = await body_of(request)
        target = cluster or local_cluster
        with lock:
            try:
                pr_id = federation.submit(body if body is not None else [], target)
            except MalformedPR as exc:
                return _error(400, str(exc))
            except UnknownCluster:
                return _error(404, f"unknown cluster {target}")
            except UnknownApplication as exc:
                return _error(404, f"unknown application {exc.args[0]}")
            except ValueError as exc:
                return _error(409, str(exc))
            federation.run()
        return {"prId": pr_id}

    @app.get(CLUSTER_DATA_PATH)
    def cluster_data(cluster: str | None = Header(default=None)) -> Any:
        target = cluster or local_cluster
        with lock:
            try:
                return cluster_data_to_dict(federation.cluster_data(target))
            except UnknownCluster:
                return _error(404, f"unknown cluster {target}")

    @app.post(DEPLOYMENT_INFO_PATH)
    async def deployment_info(request: Request, cluster: str | None = Header(default=None)) -> Any:
        body = await body_of(request)
        try:
            info = deployment_info_from_dict(body)
        except MalformedDeploymentInfo as exc:
            return _error(400, str(exc))
        target = cluster or local_cluster
        if target != info.target_cluster:
            return _error(400, f"targetCluster {info.target_cluster} does not match cluster header {target}")
        with lock:
            try:
                federation.topology.cluster(target)
                record = federation.mesh.apply_deployment(target, info)
            except UnknownCluster:
                return _error(404, f"unknown cluster {target}")
            except (InsufficientResources, UnknownNode) as exc:
                return _error(409, f"stale placement: {exc}")
        return {"applied": True, "noop": record.noop}

    @app.get("/prs/{pr_id}")
    def pr_state(pr_id: str) -> Any:
        with lock:
            if pr_id not in federation.states:
                return _error(404, f"unknown PR {pr_id}")
            return {"prId": pr_id, "status": federation.states[pr_id], "reason": federation.reasons.get(pr_id, "")}

    return app
