"""Latency-aware placement policies: vertically scaled (V1), horizontally scaled (V2)
and centralised (V3), plus the algorithm registry used by the control engine."""

from __future__ import annotations

from collections import OrderedDict
from typing import Callable, Iterable, Mapping

from ..app_model import Application, next_placeable
from ..fabric import ClusterData, Tier, to_millicores
from .model import InstancePlan, PlacementOutput, PlacementRequest
from .sizing import required_instances, vertical_allocation


class UnknownAlgorithm(KeyError):
    pass


class DuplicateName(ValueError):
    pass


class MetadataMissing(KeyError):
    pass


class UnplaceablePR(Exception):
    pass


class CapacityView:
    """Mutable free-capacity ledger over a set of cluster snapshots."""

    def __init__(self, cluster_data: Mapping[str, ClusterData]):
        self.data = dict(cluster_data)
        self.free: dict[tuple[str, str], list[int]] = {}
        self.schedulable: dict[tuple[str, str], bool] = {}
        for cname, cd in cluster_data.items():
            for n in cd.nodes:
                self.free[(cname, n.node_name)] = [n.free_mcpu, n.free_memory]
                self.schedulable[(cname, n.node_name)] = n.schedulable

    def nodes(self, cluster: str) -> list[str]:
        return [n.node_name for n in self.data[cluster].nodes]

    def best_node(self, cluster: str, mcpu: int, mem: int) -> str | None:
        """Worst-fit: the fitting node with most free CPU, ties broken by node name."""
        best: tuple[int, str] | None = None
        for name in self.nodes(cluster):
            key = (cluster, name)
            if not self.schedulable[key]:
                continue
            fcpu, fmem = self.free[key]
            if fcpu < mcpu or fmem < mem:
                continue
            if best is None or fcpu > best[0] or (fcpu == best[0] and name < best[1]):
                best = (fcpu, name)
        return None if best is None else best[1]

    def take(self, cluster: str, node: str, mcpu: int, mem: int) -> None:
        f = self.free[(cluster, node)]
        f[0] -= mcpu
        f[1] -= mem

    def give(self, cluster: str, node: str, mcpu: int, mem: int) -> None:
        f = self.free[(cluster, node)]
        f[0] += mcpu
        f[1] += mem

    def has_free(self, cluster: str) -> bool:
        return any(
            self.schedulable[(cluster, n)] and self.free[(cluster, n)][0] > 0 and self.free[(cluster, n)][1] > 0
            for n in self.nodes(cluster)
        )


def required_units(app: Application, pr: PlacementRequest, ms_id: str) -> int:
    demand = app.demand(ms_id, pr.qos_parameters)
    if demand <= 0:
        return 1
    return required_instances(app.microservices[ms_id], demand)[0]


def fully_placed(app: Application, pr: PlacementRequest) -> set[str]:
    return {m for m in app.microservices if pr.placed_units(m) >= required_units(app, pr, m)}


def _merge_units(ms_id: str, cluster: str, nodes: Iterable[str], ref_cpu: float, ref_mem: int,
                 start_index: int) -> list[InstancePlan]:
    counts: OrderedDict[str, int] = OrderedDict()
    for n in nodes:
        counts[n] = counts.get(n, 0) + 1
    plans = []
    for i, (node, k) in enumerate(counts.items()):
        cpu = to_millicores(ref_cpu * k) / 1000
        plans.append(InstancePlan(ms_id, cluster, node, cpu, ref_mem * k, start_index + i, k))
    return plans


class PlacementAlgorithm:
    """Base class: constructed with the PRs, application models and cluster data of one round."""

    name = "base"

    def __init__(
        self,
        prs: Iterable[PlacementRequest],
        app_info: Mapping[str, Application],
        cluster_data: Mapping[str, ClusterData],
        local_cluster: str | None = None,
    ):
        self.prs = [pr.copy() for pr in prs]
        self.app_info = app_info
        self.cluster_data = cluster_data
        self.local_cluster = local_cluster or next(iter(cluster_data), None)
        self.view = CapacityView(cluster_data)

    def app(self, pr: PlacementRequest) -> Application:
        try:
            return self.app_info[pr.application_id]
        except KeyError:
            raise MetadataMissing(pr.application_id) from None

    def generate_placement(self) -> PlacementOutput:
        raise NotImplementedError

    def _ordered_ready(self, app: Application, pr: PlacementRequest) -> list[str]:
        order = {m: i for i, m in enumerate(app.topological_order())}
        ready = next_placeable(app, fully_placed(app, pr))
        return sorted(ready, key=order.__getitem__)

    def _neighbours(self, cluster: str) -> set[str]:
        cd = self.cluster_data.get(cluster)
        return set(cd.adjacent_fog) | set(cd.adjacent_cloud) if cd else set()

    def _linked(self, a: str, b: str) -> bool:
        return a == b or b in self._neighbours(a) or a in self._neighbours(b)

    def _note_composition(self, app: Application, pr: PlacementRequest, ms_id: str, cluster: str,
                          route: list[str]) -> None:
        """Record intermediate clusters that must carry service-level records for `ms_id`."""
        hosts = {i.cluster for i in pr.instances(ms_id)}
        for consumer in app.consumers(ms_id):
            for cc in sorted({i.cluster for i in pr.instances(consumer)}):
                if self._linked(cc, cluster) or cc not in route or cluster not in route:
                    continue
                a, b = sorted((route.index(cc), route.index(cluster)))
                for mid in route[a + 1 : b]:
                    if mid not in hosts:
                        lst = pr.composition_only_placements.setdefault(ms_id, [])
                        if mid not in lst:
                            lst.append(mid)


class DistributedPlacement(PlacementAlgorithm):
    """Place as much of each PR as fits in the local cluster; the rest is forwarded."""

    horizontal = False

    def generate_placement(self) -> PlacementOutput:
        out = PlacementOutput()
        local = self.local_cluster
        cd = self.cluster_data[local]
        for pr in self.prs:
            app = self.app(pr)
            if pr.hop_count == 0:
                for c in pr.entry_clusters:
                    out.ingress_bindings[(app.app_id, c)] = True
            complete = True
            while True:
                ready = self._ordered_ready(app, pr)
                if not ready:
                    break
                if not all(self._place(out, pr, app, m, cd) for m in ready):
                    complete = False
                    break
            out.updated_prs[pr.pr_id] = pr
            if complete:
                out.completed_prs.append(pr.pr_id)
            else:
                out.incomplete_prs.append(pr)
        return out

    def _place(self, out: PlacementOutput, pr: PlacementRequest, app: Application, ms_id: str,
               cd: ClusterData) -> bool:
        ms = app.microservices[ms_id]
        if cd.tier is Tier.CLOUD and app.fog_only(ms_id, pr.qos_parameters):
            return False
        demand = app.demand(ms_id, pr.qos_parameters) or ms.ref_throughput
        route = pr.visited_clusters or [cd.cluster_name]
        start = len(pr.instances(ms_id))
        if not self.horizontal:
            cpu, mem = vertical_allocation(ms, demand)
            node = self.view.best_node(cd.cluster_name, to_millicores(cpu), mem)
            if node is None:
                return False
            self.view.take(cd.cluster_name, node, to_millicores(cpu), mem)
            units = required_instances(ms, demand)[0]
            plan = InstancePlan(ms_id, cd.cluster_name, node, cpu, mem, start, units)
            self._note_composition(app, pr, ms_id, cd.cluster_name, route)
            pr.record(plan)
            out.add(pr.pr_id, plan)
            return True

        residual = required_units(app, pr, ms_id) - pr.placed_units(ms_id)
        mcpu = to_millicores(ms.ref_cpu)
        chosen: list[str] = []
        for _ in range(residual):
            node = self.view.best_node(cd.cluster_name, mcpu, ms.ref_memory)
            if node is None:
                break
            self.view.take(cd.cluster_name, node, mcpu, ms.ref_memory)
            chosen.append(node)
        if chosen:
            self._note_composition(app, pr, ms_id, cd.cluster_name, route)
            for plan in _merge_units(ms_id, cd.cluster_name, chosen, ms.ref_cpu, ms.ref_memory, start):
                pr.record(plan)
                out.add(pr.pr_id, plan)
        return len(chosen) == residual


class VerticalDistributedPlacement(DistributedPlacement):
    name = "v1"
    horizontal = False


class HorizontalDistributedPlacement(DistributedPlacement):
    name = "v2"
    horizontal = True


class CentralisedPlacement(PlacementAlgorithm):
    """Global-view placement starting at an entry cluster, spilling to fog neighbours, then cloud."""

    name = "v3"

    def cluster_order(self, entry: str) -> list[str]:
        cd = self.cluster_data[entry]
        order = [entry, *cd.adjacent_fog, *cd.adjacent_cloud]
        order += [c for c, d in self.cluster_data.items() if d.tier is Tier.CLOUD]
        seen: list[str] = []
        for c in order:
            if c in self.cluster_data and c not in seen:
                seen.append(c)
        return seen

    def generate_placement(self) -> PlacementOutput:
        out = PlacementOutput()
        for pr in self.prs:
            app = self.app(pr)
            known = [c for c in pr.entry_clusters if c in self.cluster_data]
            if not known:
                out.rejected_prs[pr.pr_id] = "no entry cluster in the global view"
                continue
            # first entry with free capacity; a full entry still anchors the spill order
            entry = next((c for c in known if self.view.has_free(c)), known[0])
            try:
                plans = self._place_pr(pr, app, entry)
            except UnplaceablePR as exc:
                out.rejected_prs[pr.pr_id] = str(exc)
                continue
            for p in plans:
                out.add(pr.pr_id, p)
            for c in pr.entry_clusters:
                out.ingress_bindings[(app.app_id, c)] = True
            out.updated_prs[pr.pr_id] = pr
            out.completed_prs.append(pr.pr_id)
        return out

    def _place_pr(self, pr: PlacementRequest, app: Application, entry: str) -> list[InstancePlan]:
        order = self.cluster_order(entry)
        taken: list[tuple[str, str, int, int]] = []
        plans: list[InstancePlan] = []
        working = pr.copy()
        try:
            for ms_id in app.topological_order():
                ms = app.microservices[ms_id]
                residual = required_units(app, working, ms_id) - working.placed_units(ms_id)
                if residual <= 0:
                    continue
                fog_only = app.fog_only(ms_id, working.qos_parameters)
                mcpu = to_millicores(ms.ref_cpu)
                per_cluster: OrderedDict[str, list[str]] = OrderedDict()
                for _ in range(residual):
                    for cluster in order:
                        if fog_only and self.cluster_data[cluster].tier is Tier.CLOUD:
                            continue
                        node = self.view.best_node(cluster, mcpu, ms.ref_memory)
                        if node is not None:
                            self.view.take(cluster, node, mcpu, ms.ref_memory)
                            taken.append((cluster, node, mcpu, ms.ref_memory))
                            per_cluster.setdefault(cluster, []).append(node)
                            break
                    else:
                        raise UnplaceablePR(f"{pr.pr_id}: no capacity left for {ms_id}")
                for cluster, nodes in per_cluster.items():
                    start = len(working.instances(ms_id))
                    for plan in _merge_units(ms_id, cluster, nodes, ms.ref_cpu, ms.ref_memory, start):
                        working.record(plan)
                        plans.append(plan)
            self._composition_only(working, app)
        except UnplaceablePR:
            for cluster, node, mcpu, mem in taken:
                self.view.give(cluster, node, mcpu, mem)
            raise
        pr.placed_microservices = working.placed_microservices
        pr.composition_only_placements = working.composition_only_placements
        return plans

    def _composition_only(self, pr: PlacementRequest, app: Application) -> None:
        for df in app.dataflows:
            hosts = {i.cluster for i in pr.instances(df.target)}
            for cc in sorted({i.cluster for i in pr.instances(df.source)}):
                for tc in sorted(hosts):
                    if self._linked(cc, tc):
                        continue
                    mid = next((m for m in self.cluster_data if self._linked(cc, m) and self._linked(m, tc)
                                and m not in (cc, tc)), None)
                    if mid is not None and mid not in hosts:
                        lst = pr.composition_only_placements.setdefault(df.target, [])
                        if mid not in lst:
                            lst.append(mid)


AlgorithmFactory = Callable[..., PlacementAlgorithm]


class AlgorithmRegistry:
    def __init__(self) -> None:
        self._factories: dict[str, AlgorithmFactory] = {}

    def register(self, name: str, constructor: AlgorithmFactory) -> None:
        if name in self._factories:
            raise DuplicateName(name)
        self._factories[name] = constructor

    def resolve(self, name: str) -> AlgorithmFactory:
        try:
            return self._factories[name]
        except KeyError:
            raise UnknownAlgorithm(name) from None

    def names(self) -> list[str]:
        return sorted(self._factories)

    def copy(self) -> "AlgorithmRegistry":
        r = AlgorithmRegistry()
        r._factories = dict(self._factories)
        return r


def default_registry() -> AlgorithmRegistry:
    r = AlgorithmRegistry()
    r.register("v1", VerticalDistributedPlacement)
    r.register("v2", HorizontalDistributedPlacement)
    r.register("v3", CentralisedPlacement)
    return r


REGISTRY = default_registry()


def register_algorithm(name: str, constructor: AlgorithmFactory) -> None:
    REGISTRY.register(name, constructor)


def resolve_algorithm(name: str) -> AlgorithmFactory:
    return REGISTRY.resolve(name)


def place_v1(pr: PlacementRequest, cluster_view: ClusterData, app_info: Mapping[str, Application]) -> PlacementOutput:
    return VerticalDistributedPlacement([pr], app_info, {cluster_view.cluster_name: cluster_view},
                                        cluster_view.cluster_name).generate_placement()


def place_v2(pr: PlacementRequest, cluster_view: ClusterData, app_info: Mapping[str, Application]) -> PlacementOutput:
    return HorizontalDistributedPlacement([pr], app_info, {cluster_view.cluster_name: cluster_view},
                                          cluster_view.cluster_name).generate_placement()


def place_v3(prs: Iterable[PlacementRequest], global_view: Mapping[str, ClusterData],
             app_info: Mapping[str, Application]) -> PlacementOutput:
    return CentralisedPlacement(prs, app_info, global_view).generate_placement()
