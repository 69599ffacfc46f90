"""Mock application generator and the two canned example applications."""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any

from .app_model import (
    APP_LEVEL_RESOURCES,
    Application,
    CompositeService,
    DataFlow,
    DataPath,
    Microservice,
    QoSRequirement,
    enumerate_walks,
)
from .fabric import GB

MB = 1024**2


class Pattern(str, Enum):
    CHAINED = "chained"
    AGGREGATOR = "aggregator"
    HYBRID = "hybrid"
    CANDIDATE = "candidate"


@dataclass(frozen=True)
class GeneratorSpec:
    pattern: Pattern
    # chained: length; aggregator/candidate: fan-out; hybrid: per-depth fan-out recipe
    length: int = 2
    fan_out: int = 2
    recipe: tuple[int, ...] = (1, 2)
    app_id: str = "genapp"
    processing_time_range: tuple[float, float] = (5.0, 20.0)
    message_size_range: tuple[int, int] = (1_000, 50_000)
    ref_throughput_range: tuple[float, float] = (20.0, 50.0)
    ref_cpu_range: tuple[float, float] = (0.1, 0.5)
    ref_memory_range: tuple[int, int] = (64 * MB, 512 * MB)
    throughput_range: tuple[float, float] = (10.0, 40.0)
    latency_budget_range: tuple[float, float] = (50.0, 500.0)
    rng_seed: int = 0

    def check(self) -> None:
        for name in ("processing_time_range", "message_size_range", "ref_throughput_range", "ref_cpu_range",
                     "ref_memory_range", "throughput_range", "latency_budget_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} must be a non-empty non-negative range")
        for name in ("ref_throughput_range", "ref_cpu_range", "ref_memory_range", "throughput_range",
                     "latency_budget_range"):
            if getattr(self, name)[0] <= 0:
                raise ValueError(f"{name} must be positive")
        if self.pattern is Pattern.CHAINED and self.length < 1:
            raise ValueError("chained length must be >= 1")
        if self.pattern in (Pattern.AGGREGATOR, Pattern.CANDIDATE) and self.fan_out < 1:
            raise ValueError("fan_out must be >= 1")
        if self.pattern is Pattern.HYBRID and (not self.recipe or min(self.recipe) < 1):
            raise ValueError("hybrid recipe must be non-empty positive widths")


def template_refs(app_id: str, ms_ids: list[str]) -> dict[str, tuple[str, ...]]:
    refs: dict[str, tuple[str, ...]] = {
        APP_LEVEL_RESOURCES: (f"{app_id}/namespace.yaml", f"{app_id}/gateway.yaml"),
    }
    for m in ms_ids:
        refs[m] = (f"{app_id}/{m}/pod.yaml", f"{app_id}/{m}/service.yaml", f"{app_id}/{m}/route.yaml")
    return refs


def render_templates(app: Application) -> dict[str, dict[str, Any]]:
    """Deployment resource documents for every template reference of `app`."""
    docs: dict[str, dict[str, Any]] = {}
    for owner, refs in app.deployment_resources.items():
        for ref in refs:
            kind = ref.rsplit("/", 1)[-1].removesuffix(".yaml")
            doc: dict[str, Any] = {"kind": kind, "application": app.app_id}
            if owner != APP_LEVEL_RESOURCES:
                ms = app.microservices[owner]
                doc["microservice"] = owner
                if kind == "pod":
                    doc["image"] = ms.image_ref
            docs[ref] = doc
    return docs


def _edges_for(spec: GeneratorSpec) -> tuple[int, list[tuple[int, int]], list[list[int]]]:
    """(node count, edges, per-service member lists) for the pattern, nodes numbered from 1."""
    if spec.pattern is Pattern.CHAINED:
        n = spec.length
        return n, [(i, i + 1) for i in range(1, n)], [list(range(1, n + 1))]
    if spec.pattern is Pattern.AGGREGATOR:
        n = 2 + spec.fan_out
        edges = [(1, 2)] + [(2, 3 + i) for i in range(spec.fan_out)]
        return n, edges, [list(range(1, n + 1))]
    if spec.pattern is Pattern.CANDIDATE:
        n = 1 + spec.fan_out
        edges = [(1, 2 + i) for i in range(spec.fan_out)]
        return n, edges, [[1, 2 + i] for i in range(spec.fan_out)]
    edges: list[tuple[int, int]] = []
    level = [1]
    n = 1
    for width in spec.recipe:
        nxt = []
        for parent in level:
            for _ in range(width):
                n += 1
                edges.append((parent, n))
                nxt.append(n)
        level = nxt
    return n, edges, [list(range(1, n + 1))]


def generate(spec: GeneratorSpec) -> Application:
    spec.check()
    rng = random.Random(spec.rng_seed)
    n, edges, groups = _edges_for(spec)
    names = [f"m{i}" for i in range(1, n + 1)]
    microservices = {}
    for name in names:
        microservices[name] = Microservice(
            ms_id=name,
            ref_cpu=round(rng.uniform(*spec.ref_cpu_range), 3),
            ref_memory=rng.randint(*spec.ref_memory_range),
            ref_throughput=round(rng.uniform(*spec.ref_throughput_range), 2),
            processing_time=round(rng.uniform(*spec.processing_time_range), 2),
            image_ref=f"mock/{spec.app_id}-{name}:latest",
        )
    dataflows = tuple(
        DataFlow(names[a - 1], names[b - 1], rng.randint(*spec.message_size_range), True) for a, b in edges
    )
    skeleton = Application(spec.app_id, microservices, dataflows, ())
    services = []
    for i, group in enumerate(groups, start=1):
        members = frozenset(names[g - 1] for g in group)
        paths = tuple(p for p in enumerate_walks(skeleton, members) if p.edges) or (DataPath(()),)
        if len(members) == 1:
            paths = ()
        qos = QoSRequirement(
            latency_budget=round(rng.uniform(*spec.latency_budget_range), 1),
            required_throughput=round(rng.uniform(*spec.throughput_range), 2),
        )
        services.append(CompositeService(f"s{i}", members, paths, qos))
    return replace(skeleton, services=tuple(services), deployment_resources=template_refs(spec.app_id, names))


# --- canned applications ---------------------------------------------------
#
# DERIVED calibration. The resource and throughput figures were chosen so that on the
# reference topology, with hcapp submitted before app2 at fog1, the vertically scaled
# policy spills a2m3, a2m4 and hcm3 to the cloud while the horizontally scaled one keeps
# everything but hcm3 in the fog, splitting a2m2 1:2:1 and hcm2 1:2:3 over fog1 and fog2.
# Unit counts follow from demand / ref_throughput (a2m2: 4, hcm2: 6).

HCAPP_PARAMS: dict[str, Any] = {
    "hcm1": dict(ref_cpu=4.0, ref_memory=int(11.5 * GB), ref_throughput=20.0, processing_time=30.0),
    "hcm2": dict(ref_cpu=1.25, ref_memory=GB // 4, ref_throughput=2.5, processing_time=30.0),
    "hcm3": dict(ref_cpu=6.0, ref_memory=2 * GB, ref_throughput=5.0, processing_time=30.0),
    "S1": dict(latency_budget=100.0, required_throughput=15.0),
    "S2": dict(latency_budget=500.0, required_throughput=5.0),
}

APP2_PARAMS: dict[str, Any] = {
    "a2m1": dict(ref_cpu=0.25, ref_memory=int(3.5 * GB), ref_throughput=10.0, processing_time=30.0),
    "a2m2": dict(ref_cpu=0.5, ref_memory=GB // 2, ref_throughput=2.5, processing_time=30.0),
    "a2m3": dict(ref_cpu=0.25, ref_memory=int(6.25 * GB), ref_throughput=5.0, processing_time=30.0),
    "a2m4": dict(ref_cpu=1.25, ref_memory=4 * GB, ref_throughput=10.0, processing_time=30.0),
    "S": dict(latency_budget=150.0, required_throughput=10.0),
}

# submission order that produces the reference placements
REFERENCE_ORDER = ("hcapp", "app2")

MESSAGE_SIZE = 10_000


def _ms(ms_id: str, app_id: str, params: dict[str, Any]) -> Microservice:
    return Microservice(ms_id=ms_id, image_ref=f"mock/{app_id}-{ms_id}:latest", **params)


def hcapp() -> Application:
    p = HCAPP_PARAMS
    ms = {m: _ms(m, "hcapp", p[m]) for m in ("hcm1", "hcm2", "hcm3")}
    flows = (
        DataFlow("hcm1", "hcm2", MESSAGE_SIZE, True),
        DataFlow("hcm1", "hcm3", MESSAGE_SIZE, True),
    )
    services = (
        CompositeService("S1", frozenset({"hcm1", "hcm2"}), (DataPath((("hcm1", "hcm2"),)),),
                         QoSRequirement(**p["S1"])),
        CompositeService("S2", frozenset({"hcm1", "hcm3"}), (DataPath((("hcm1", "hcm3"),)),),
                         QoSRequirement(**p["S2"])),
    )
    return Application("hcapp", ms, flows, services, template_refs("hcapp", sorted(ms)))


def app2() -> Application:
    p = APP2_PARAMS
    ids = ("a2m1", "a2m2", "a2m3", "a2m4")
    ms = {m: _ms(m, "app2", p[m]) for m in ids}
    flows = (
        DataFlow("a2m1", "a2m2", MESSAGE_SIZE, True),
        DataFlow("a2m2", "a2m3", MESSAGE_SIZE, True),
        DataFlow("a2m2", "a2m4", MESSAGE_SIZE, True),
    )
    paths = (
        DataPath((("a2m1", "a2m2"), ("a2m2", "a2m3"))),
        DataPath((("a2m1", "a2m2"), ("a2m2", "a2m4"))),
    )
    services = (CompositeService("S", frozenset(ids), paths, QoSRequirement(**p["S"])),)
    return Application("app2", ms, flows, services, template_refs("app2", list(ids)))


CANNED = {"hcapp": hcapp, "app2": app2}


def canned(name: str) -> Application:
    try:
        return CANNED[name]()
    except KeyError:
        raise KeyError(f"unknown canned application {name!r}; known: {sorted(CANNED)}") from None
