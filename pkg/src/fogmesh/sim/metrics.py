"""Metric collection and export (CSV samples plus a JSON summary)."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

CSV_COLUMNS = ("scenario", "seed", "service", "request_id", "response_ms", "serving_instances")


@dataclass(frozen=True)
class ResponseSample:
    scenario: str
    seed: int
    service: str
    request_id: int
    response_ms: float
    serving_instances: tuple[str, ...]


@dataclass
class PRTimeline:
    pr_id: str
    application_id: str
    submit: float
    placement_start: list[float] = field(default_factory=list)
    placement_end: list[float] = field(default_factory=list)
    deployment_end: float | None = None
    terminal: float | None = None
    status: str = "pending"
    reason: str = ""
    clusters: list[str] = field(default_factory=list)

    @property
    def completion_time(self) -> float | None:
        return None if self.terminal is None else self.terminal - self.submit


@dataclass(frozen=True)
class StoreAccess:
    scenario: str
    seed: int
    store: str
    key: str
    from_cluster: str
    served_by: str
    latency: float


def percentile(values: Iterable[float], q: float) -> float:
    """Linear-interpolation percentile (q in [0, 100])."""
    xs = sorted(values)
    if not xs:
        return math.nan
    if len(xs) == 1:
        return xs[0]
    pos = (len(xs) - 1) * q / 100
    lo = math.floor(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


class MetricsSink:
    def __init__(self, scenario: str = "default", seed: int = 0):
        self.scenario = scenario
        self.seed = seed
        self.samples: list[ResponseSample] = []
        self.failed: Counter[str] = Counter()
        self.instance_counts: Counter[str] = Counter()
        self.timelines: dict[str, PRTimeline] = {}
        self.store_accesses: list[StoreAccess] = []
        self.extra: dict[str, Any] = {}

    # recording

    def response(self, service: str, request_id: int, response_ms: float, serving: Iterable[str]) -> ResponseSample:
        s = ResponseSample(self.scenario, self.seed, service, request_id, response_ms, tuple(serving))
        self.samples.append(s)
        return s

    def hit(self, instance: str) -> None:
        self.instance_counts[instance] += 1

    def fail(self, service: str) -> None:
        self.failed[service] += 1

    def timeline(self, pr_id: str, application_id: str = "", submit: float = 0.0) -> PRTimeline:
        tl = self.timelines.get(pr_id)
        if tl is None:
            tl = self.timelines[pr_id] = PRTimeline(pr_id, application_id, submit)
        return tl

    def store_access(self, store: str, key: str, from_cluster: str, served_by: str, latency: float) -> None:
        self.store_accesses.append(StoreAccess(self.scenario, self.seed, store, key, from_cluster, served_by, latency))

    # queries

    def responses(self, service: str | None = None) -> list[float]:
        return [s.response_ms for s in self.samples if service is None or s.service == service]

    def mean(self, service: str | None = None) -> float:
        xs = self.responses(service)
        return sum(xs) / len(xs) if xs else math.nan

    def shares(self, prefix: str = "") -> dict[str, float]:
        counts = {k: v for k, v in self.instance_counts.items() if k.startswith(prefix)}
        total = sum(counts.values())
        return {k: v / total for k, v in sorted(counts.items())} if total else {}

    def summary(self) -> dict[str, Any]:
        services = sorted({s.service for s in self.samples} | set(self.failed))
        per_service = {}
        for svc in services:
            xs = self.responses(svc)
            per_service[svc] = {
                "count": len(xs),
                "failed": self.failed.get(svc, 0),
                "mean": sum(xs) / len(xs) if xs else None,
                "p50": percentile(xs, 50) if xs else None,
                "p95": percentile(xs, 95) if xs else None,
            }
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "services": per_service,
            "instanceShares": self.shares(),
            "prTimelines": {
                k: {
                    "applicationId": t.application_id,
                    "submit": t.submit,
                    "placementStart": t.placement_start,
                    "placementEnd": t.placement_end,
                    "deploymentEnd": t.deployment_end,
                    "terminal": t.terminal,
                    "status": t.status,
                    "reason": t.reason,
                    "clusters": t.clusters,
                    "completionTime": t.completion_time,
                }
                for k, t in sorted(self.timelines.items())
            },
            "storeAccesses": [
                {"store": a.store, "key": a.key, "from": a.from_cluster, "servedBy": a.served_by, "latency": a.latency}
                for a in self.store_accesses
            ],
            **self.extra,
        }

    def csv_rows(self) -> list[list[Any]]:
        """Request samples, then data-store reads as `store:<name>` rows served by the replica cluster."""
        rows: list[list[Any]] = [
            [s.scenario, s.seed, s.service, s.request_id, repr(s.response_ms), ";".join(s.serving_instances)]
            for s in self.samples
        ]
        for i, a in enumerate(self.store_accesses):
            rows.append([a.scenario, a.seed, f"store:{a.store}", i, repr(a.latency), a.served_by])
        return rows

    def write_csv(self, path: str | Path, rows: Iterable[list[Any]] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            w.writerows(self.csv_rows() if rows is None else rows)
