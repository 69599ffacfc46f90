"""Scenario files: topology, control-engine settings, applications, timed PRs, faults and traffic.

A scenario is a TOML document. Top-level `requests`, `faults`, `traffic` and `reserve`
tables form a single phase named "main"; a `[[phases]]` array instead runs several
independent phases (each on a fresh federation), which is how the comparison
experiments are expressed. Phase tables may override `[engine]` keys.
"""

from __future__ import annotations

import json
import logging
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .app_model import Application
from .engine import Batching, CEConfig, OperationMode, PlacementMode
from .fabric import GB, LatencyPreset, Topology, allocate, load_topology, reference_topology
from .federation import Federation
from .placement import PlacementRequest
from .placement.model import instance_to_dict
from .sim.metrics import MetricsSink
from .sim.traffic import Replayer, TrafficModel
from .stores import seed_stores
from .workload import GeneratorSpec, Pattern, canned, generate

log = logging.getLogger(__name__)

# environment variable -> engine key
ENV_OVERRIDES = {
    "FOGMESH_ALGORITHM": "algorithm",
    "FOGMESH_OPERATION_MODE": "operation_mode",
    "FOGMESH_PLACEMENT_MODE": "placement_mode",
    "FOGMESH_PERIOD": "period",
    "FOGMESH_BATCHING": "batching",
    "FOGMESH_FORWARDING": "forwarding",
    "FOGMESH_PRIMARY": "primary",
}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class RequestSpec:
    application: str
    cluster: str
    entry_clusters: tuple[str, ...]
    at: float = 0.0
    pr_id: str = ""


@dataclass(frozen=True)
class FaultSpec:
    kind: str  # "store", "cluster" or "instance"
    cluster: str
    healthy: bool = False
    at: float = 0.0
    store: str = "both"
    application: str = ""
    microservice: str = ""
    node: str = ""


@dataclass(frozen=True)
class TrafficSpec:
    application: str
    service: str
    entry: str
    requests: int = 1000
    arrivals: str = "poisson"
    rate: float | None = None
    serialization_ms_per_byte: float = 0.0


@dataclass(frozen=True)
class ReserveSpec:
    """Background load pinned on a node before the phase starts."""

    cluster: str
    node: str
    cpu: float
    memory_gb: float = 0.0


@dataclass(frozen=True)
class CompareSpec:
    baseline: str
    candidate: str
    service: str


@dataclass
class PhaseSpec:
    name: str
    engine: dict[str, Any]
    requests: list[RequestSpec] = field(default_factory=list)
    faults: list[FaultSpec] = field(default_factory=list)
    traffic: list[TrafficSpec] = field(default_factory=list)
    reserve: list[ReserveSpec] = field(default_factory=list)
    expect_rejected: tuple[str, ...] = ()


@dataclass
class Scenario:
    name: str
    seed: int
    topology: dict[str, Any]
    applications: list[str]
    generated: list[GeneratorSpec]
    seed_data: Path | None
    phases: list[PhaseSpec]
    compare: list[CompareSpec] = field(default_factory=list)
    stores: dict[str, Any] = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path)

    def build_topology(self) -> Topology:
        t = self.topology
        if "file" in t:
            path = self.base_dir / t["file"]
            if not path.exists():
                raise ScenarioError(f"topology file {path} does not exist")
            return load_topology(path)
        if t.get("preset", "reference") != "reference":
            raise ScenarioError(f"unknown topology preset {t.get('preset')!r}")
        lat = LatencyPreset(**{k: float(t[k]) for k in ("intra", "fog_fog", "fog_cloud", "ingress") if k in t})
        delay = t.get("deployment_delay", 100.0)
        return reference_topology(lat, delay if isinstance(delay, Mapping) else float(delay))


# --- loading -----------------------------------------------------------------


def _tuple(v: Any) -> tuple:
    return tuple(v) if isinstance(v, (list, tuple)) else (v,)


def _requests(items: list[Mapping[str, Any]]) -> list[RequestSpec]:
    out = []
    for r in items:
        cluster = r.get("cluster") or _tuple(r["entry_clusters"])[0]
        count = int(r.get("count", 1))
        for i in range(count):
            pr_id = r.get("id", "")
            if pr_id and count > 1:
                pr_id = f"{pr_id}-{i + 1}"
            out.append(RequestSpec(r["application"], cluster, _tuple(r.get("entry_clusters", cluster)),
                                   float(r.get("at", 0.0)), pr_id))
    return out


def _phase(name: str, d: Mapping[str, Any], engine: dict[str, Any]) -> PhaseSpec:
    return PhaseSpec(
        name=name,
        engine=engine,
        requests=_requests(d.get("requests", [])),
        faults=[FaultSpec(**f) for f in d.get("faults", [])],
        traffic=[TrafficSpec(**t) for t in d.get("traffic", [])],
        reserve=[ReserveSpec(**r) for r in d.get("reserve", [])],
        expect_rejected=tuple(d.get("expect_rejected", ())),
    )


def _generator(d: Mapping[str, Any]) -> GeneratorSpec:
    kw = dict(d)
    kw["pattern"] = Pattern(kw["pattern"])
    for k, v in list(kw.items()):
        if k.endswith("_range"):
            kw[k] = tuple(v)
    if "ref_memory_range" in kw:
        kw["ref_memory_range"] = tuple(int(x) for x in kw["ref_memory_range"])
    if "recipe" in kw:
        kw["recipe"] = tuple(kw["recipe"])
    spec = GeneratorSpec(**kw)
    spec.check()
    return spec


def _env_engine(environ: Mapping[str, str]) -> dict[str, Any]:
    return {key: environ[var] for var, key in ENV_OVERRIDES.items() if var in environ}


def parse_scenario(text: str, base_dir: str | Path = ".", source: str = "<scenario>",
                   environ: Mapping[str, str] | None = None) -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    try:
        engine = dict(doc.get("engine", {}))
        engine.update(_env_engine(os.environ if environ is None else environ))
        if "phases" in doc:
            phases = []
            for p in doc["phases"]:
                merged = {**engine, **p.get("engine", {})}
                if "clusters" in engine and "clusters" in p.get("engine", {}):
                    merged["clusters"] = {**engine["clusters"], **p["engine"]["clusters"]}
                phases.append(_phase(p["name"], p, merged))
        else:
            phases = [_phase("main", doc, engine)]
        names = [p.name for p in phases]
        if len(set(names)) != len(names):
            raise ScenarioError(f"{source}: duplicate phase names")
        seed_data = doc.get("seed_data")
        return Scenario(
            name=str(doc.get("name", Path(source).stem)),
            seed=int(doc.get("seed", 0)),
            topology=dict(doc.get("topology", {"preset": "reference"})),
            applications=list(doc.get("applications", [])),
            generated=[_generator(g) for g in doc.get("generated", [])],
            seed_data=Path(base_dir) / seed_data if seed_data else None,
            phases=phases,
            compare=[CompareSpec(**c) for c in doc.get("compare", [])],
            stores=dict(doc.get("stores", {})),
            base_dir=Path(base_dir),
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{source}: {_describe(exc)}") from None


def _describe(exc: Exception) -> str:
    if isinstance(exc, KeyError):
        return f"missing key {exc.args[0]!r}"
    return re.sub(r"\s+", " ", str(exc))


def load_scenario(path: str | Path, environ: Mapping[str, str] | None = None) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file {path} does not exist")
    return parse_scenario(path.read_text(), path.parent, str(path), environ)


# --- running -----------------------------------------------------------------


def engine_configs(topology: Topology, engine: Mapping[str, Any], seed: int) -> list[CEConfig]:
    """Per-cluster CE configuration from the engine table (defaults plus `clusters.<name>` overrides)."""
    mode = engine.get("operation_mode", "distributed")
    primary = engine.get("primary")
    if mode in ("centralised", "centralized"):
        primary = primary or topology.cloud_clusters()[0]
    configs = []
    for i, name in enumerate(topology.clusters):
        e = {**engine, **engine.get("clusters", {}).get(name, {})}
        m = e.get("operation_mode", "distributed")
        if m in ("centralised", "centralized"):
            m = "centralised-primary" if name == primary else "centralised-secondary"
        period = float(e.get("period", 1000.0))
        configs.append(CEConfig(
            cluster_name=name,
            operation_mode=OperationMode(m),
            placement_mode=PlacementMode.parse(e.get("placement_mode"), period),
            batching=Batching(e.get("batching", "sequential")),
            algorithm_name=e.get("algorithm", "v3" if m == "centralised-primary" else "v2"),
            forwarding_policy=e.get("forwarding", "fp1-random-fog"),
            external_algo_url=e.get("external_algo_url"),
            rng_seed=seed * 1000 + i,
            algorithm_cost_base=float(e.get("algorithm_cost_base", 5.0)),
            algorithm_cost_per_pr=float(e.get("algorithm_cost_per_pr", 2.0)),
            api_timeout=float(e.get("api_timeout", 1000.0)),
            primary_cluster=primary if m == "centralised-secondary" else e.get("primary"),
        ))
    return configs


@dataclass
class PhaseResult:
    name: str
    federation: Federation
    pr_ids: list[str]
    unexpected_rejections: list[str]

    @property
    def metrics(self) -> MetricsSink:
        return self.federation.metrics

    @property
    def states(self) -> dict[str, str]:
        return {p: self.federation.states[p] for p in self.pr_ids}

    def placements(self) -> dict[str, dict[str, list[dict[str, Any]]]]:
        return {p: {m: [instance_to_dict(i) for i in insts] for m, insts in sorted(self.federation.placements(p).items())}
                for p in self.pr_ids}

    def mean(self, service: str) -> float:
        return self.metrics.mean(service)


@dataclass
class ScenarioResult:
    scenario: Scenario
    phases: dict[str, PhaseResult]

    @property
    def ok(self) -> bool:
        return not any(p.unexpected_rejections for p in self.phases.values())

    def comparisons(self) -> list[dict[str, Any]]:
        out = []
        for c in self.scenario.compare:
            base = self.phases[c.baseline].mean(c.service)
            cand = self.phases[c.candidate].mean(c.service)
            out.append({"service": c.service, "baseline": c.baseline, "candidate": c.candidate,
                        "baselineMean": base, "candidateMean": cand,
                        "improvementPercent": 100.0 * (1.0 - cand / base)})
        return out

    def summary(self) -> dict[str, Any]:
        phases = {}
        for name, p in self.phases.items():
            s = p.metrics.summary()
            s["prStates"] = p.states
            s["completionTime"] = p.federation.completion_time(p.pr_ids) if p.pr_ids else None
            s["unexpectedRejections"] = p.unexpected_rejections
            s["warnings"] = list(p.federation.warnings)
            phases[name] = s
        return {"scenario": self.scenario.name, "seed": self.scenario.seed, "phases": phases,
                "comparisons": self.comparisons()}

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = self.scenario.name
        files = [out / f"{stem}.samples.csv", out / f"{stem}.summary.json", out / f"{stem}.placements.json"]
        rows = [r for p in self.phases.values() for r in p.metrics.csv_rows()]
        next(iter(self.phases.values())).metrics.write_csv(files[0], rows)
        files[1].write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        placements = {n: {"states": p.states, "placements": p.placements()} for n, p in self.phases.items()}
        files[2].write_text(json.dumps(placements, indent=2, sort_keys=True) + "\n")
        return files


def _applications(sc: Scenario) -> list[Application]:
    apps = [canned(a) for a in sc.applications]
    apps += [generate(g) for g in sc.generated]
    return apps


def run_phase(sc: Scenario, phase: PhaseSpec) -> PhaseResult:
    topology = sc.build_topology()
    for r in phase.reserve:
        allocate(topology.node(r.cluster, r.node), r.cpu, int(r.memory_gb * GB), owner="background")
    metrics = MetricsSink(f"{sc.name}/{phase.name}", sc.seed)
    st = sc.stores
    fed = Federation(topology, engine_configs(topology, phase.engine, sc.seed), metrics=metrics,
                     store_master=st.get("master"), store_replicas=st.get("replicas"),
                     sync_delay=float(st.get("sync_delay", 10.0)),
                     store_service_time=float(st.get("service_time", 1.0)))
    if sc.seed_data is not None:
        seed_stores(sc.seed_data, fed.meta, fed.templates)
    fed.seed(_applications(sc))
    start = fed.sim.now

    for f in phase.faults:
        fed.sim.at(start + f.at, lambda f=f: _apply_fault(fed, f))
    pr_ids = []
    for i, r in enumerate(phase.requests):
        pr = PlacementRequest(pr_id=r.pr_id or f"pr-{i + 1}", application_id=r.application,
                              entry_clusters=list(r.entry_clusters))
        pr_ids.append(fed.submit(pr, r.cluster, at=start + r.at))
    fed.run()

    for j, t in enumerate(phase.traffic):
        model = TrafficModel(t.serialization_ms_per_byte, t.arrivals, t.rate)
        Replayer(fed.sim, fed.mesh, metrics, model).replay(fed.application(t.application), t.service, t.requests,
                                                            t.entry, seed=sc.seed * 1000 + j)
    unexpected = [p for p in pr_ids if fed.states[p] == "rejected" and p not in phase.expect_rejected]
    for p in unexpected:
        log.warning("%s/%s: %s rejected: %s", sc.name, phase.name, p, fed.reasons.get(p, ""))
    return PhaseResult(phase.name, fed, pr_ids, unexpected)


def _apply_fault(fed: Federation, f: FaultSpec) -> None:
    if f.kind == "store":
        if f.store in ("metadata", "both"):
            fed.meta.set_health(f.cluster, f.healthy)
        if f.store in ("templates", "both"):
            fed.templates.set_health(f.cluster, f.healthy)
    elif f.kind == "cluster":
        (fed.unreachable.discard if f.healthy else fed.unreachable.add)(f.cluster)
    elif f.kind == "instance":
        fed.mesh.set_health(f.application, f.microservice, (f.cluster, f.node), f.healthy)
    else:
        raise ScenarioError(f"unknown fault kind {f.kind!r}")


def run_scenario(sc: Scenario) -> ScenarioResult:
    return ScenarioResult(sc, {p.name: run_phase(sc, p) for p in sc.phases})

