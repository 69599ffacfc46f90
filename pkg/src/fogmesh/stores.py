"""Replicated metadata and resource-template stores with locality-failover reads."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Generic, Iterable, TypeVar

from .app_model import APP_LEVEL_RESOURCES, Application, application_from_dict
from .fabric import Topology
from .routing import AllReplicasDown, FailoverPolicy

T = TypeVar("T")

Scheduler = Callable[[float, Callable[[], None]], None]


class NotFound(KeyError):
    pass


class MasterDown(RuntimeError):
    pass


@dataclass
class Replica(Generic[T]):
    cluster: str
    records: dict[str, tuple[T, int]] = field(default_factory=dict)


@dataclass(frozen=True)
class StoreRead(Generic[T]):
    value: T
    served_by: str
    latency: float
    version: int


class ReplicatedStore(Generic[T]):
    """Single-master store; writes land on the master and reach replicas after `sync_delay`.

    `schedule(delay, fn)` hands replication to an event loop. Without one, replication
    is applied immediately.
    """

    def __init__(
        self,
        topology: Topology,
        master: str = "cloud1",
        replicas: Iterable[str] | None = None,
        sync_delay: float = 10.0,
        service_time: float = 1.0,
        schedule: Scheduler | None = None,
    ):
        self.topology = topology
        topology.cluster(master)
        self.master = master
        names = list(replicas) if replicas is not None else list(topology.clusters)
        if master not in names:
            names.append(master)
        self.replicas: dict[str, Replica[T]] = {c: Replica(topology.cluster(c).name) for c in names}
        self.sync_delay = sync_delay
        self.service_time = service_time
        self.schedule = schedule
        self.policy = FailoverPolicy()
        self.versions: dict[str, int] = {}

    def set_health(self, cluster: str, healthy: bool) -> None:
        if cluster not in self.replicas:
            raise KeyError(f"no replica in {cluster}")
        self.policy.health[cluster] = healthy

    def healthy(self, cluster: str) -> bool:
        return self.policy.healthy(cluster)

    def put(self, key: str, value: T) -> int:
        if not self.healthy(self.master):
            raise MasterDown(self.master)
        version = self.versions.get(key, 0) + 1
        self.versions[key] = version
        self.replicas[self.master].records[key] = (value, version)
        for name, rep in self.replicas.items():
            if name == self.master:
                continue
            if self.schedule is None:
                _sync(rep, key, value, version)
            else:
                self.schedule(self.sync_delay, lambda rep=rep: _sync(rep, key, value, version))
        return version

    def get(self, key: str, from_cluster: str) -> StoreRead[T]:
        self.topology.cluster(from_cluster)
        live = [c for c in self.replicas if self.healthy(c)]
        if not live:
            raise AllReplicasDown("every store replica is down")
        holders = [c for c in live if key in self.replicas[c].records]
        if not holders:
            raise NotFound(key)
        served_by = self.policy.select(holders, from_cluster, self.topology)
        value, version = self.replicas[served_by].records[key]
        return StoreRead(value, served_by, self.read_latency(from_cluster, served_by), version)

    def read_latency(self, from_cluster: str, served_by: str) -> float:
        return self.topology.path_latency(from_cluster, served_by) + self.service_time

    def converged(self) -> bool:
        master = self.replicas[self.master].records
        return all(r.records == master for r in self.replicas.values())


def _sync(rep: Replica, key: str, value: Any, version: int) -> None:
    held = rep.records.get(key)
    if held is None or held[1] < version:
        rep.records[key] = (value, version)


class MetaDataStore(ReplicatedStore[Application]):
    def put_application(self, app: Application) -> int:
        return self.put(app.app_id, app)

    def get_application(self, app_id: str, from_cluster: str) -> StoreRead[Application]:
        return self.get(app_id, from_cluster)


@dataclass(frozen=True)
class TemplateBatch:
    documents: list[tuple[str, dict[str, Any], str]]  # (key, document, served_by)
    latency: float


class ResourceTemplateStore(ReplicatedStore[dict]):
    def put_template(self, key: str, doc: dict[str, Any]) -> int:
        return self.put(key, doc)

    def get_templates(self, app: Application, ms_ids: Iterable[str], from_cluster: str) -> TemplateBatch:
        """Every template referenced for `ms_ids` plus the application-level ones.

        Reads are batched: each serving replica is charged one round trip.
        """
        wanted = list(app.deployment_resources.get(APP_LEVEL_RESOURCES, ()))
        for m in ms_ids:
            wanted.extend(app.deployment_resources.get(m, ()))
        docs = []
        charged: dict[str, float] = {}
        for key in wanted:
            r = self.get(key, from_cluster)
            docs.append((key, r.value, r.served_by))
            charged[r.served_by] = r.latency
        return TemplateBatch(docs, sum(charged.values()))


def seed_stores(seed_dir: str | Path, meta: MetaDataStore, templates: ResourceTemplateStore) -> list[str]:
    """Load `applications/*.json` and `templates.json` from a seed directory. Returns app ids."""
    root = Path(seed_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"seed directory {root} does not exist")
    ids = []
    for path in sorted((root / "applications").glob("*.json")):
        app = application_from_dict(json.loads(path.read_text()))
        meta.put_application(app)
        ids.append(app.app_id)
    tpl = root / "templates.json"
    if tpl.exists():
        for key, doc in sorted(json.loads(tpl.read_text()).items()):
            templates.put_template(key, doc)
    return ids
