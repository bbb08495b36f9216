"""Routing indicator: does a flow's demand go unmet under a failure configuration?

Three policies are supported:

* ``shortest-path-maxmin``: every flow is pinned to its minimum-hop surviving
  path (ties broken by the lexicographically smallest node sequence, then by
  smallest link id among parallel links) and bandwidth is shared by
  progressive filling.
* ``max-flow``: a flow succeeds iff the s-t max-flow over surviving links
  covers its demand, ignoring every other flow.
* ``connectivity``: a flow succeeds iff its destination is reachable.
"""

from __future__ import annotations

import json
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

import networkx as nx

from .network import FailureConfig, SchemaError, Topology, load_json

_REL_TOL = 1e-9
_ABS_TOL = 1e-9


class RoutingPolicy(str, Enum):
    SHORTEST_PATH_MAXMIN = "shortest-path-maxmin"
    MAX_FLOW = "max-flow"
    CONNECTIVITY = "connectivity"


class UnknownFlowError(KeyError):
    pass


class MonotonicityError(RuntimeError):
    """Failing more links made a flow succeed; SEED structure is undefined."""

    def __init__(self, flow_id: int, mask: int, link_id: int):
        super().__init__(
            f"flow {flow_id} fails with down-mask {mask:#x} but succeeds once link {link_id} also fails"
        )
        self.flow_id = flow_id
        self.mask = mask
        self.link_id = link_id


@dataclass(frozen=True)
class Flow:
    id: int
    src: str
    dst: str
    demand: float
    target: float = 0.0

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError(f"flow {self.id}: source equals destination")
        if not self.demand >= 0:
            raise ValueError(f"flow {self.id}: demand must be non-negative")
        if not 0.0 <= self.target <= 1.0:
            raise ValueError(f"flow {self.id}: availability target must lie in [0, 1]")


@dataclass(frozen=True)
class FlowSet:
    flows: tuple[Flow, ...]

    def __post_init__(self):
        object.__setattr__(self, "flows", tuple(self.flows))
        ids = [f.id for f in self.flows]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate flow ids")

    def __iter__(self) -> Iterator[Flow]:
        return iter(self.flows)

    def __len__(self) -> int:
        return len(self.flows)

    @property
    def ids(self) -> list[int]:
        return [f.id for f in self.flows]

    def get(self, flow_id: int) -> Flow:
        for f in self.flows:
            if f.id == flow_id:
                return f
        raise UnknownFlowError(flow_id)

    def index(self, flow_id: int) -> int:
        for k, f in enumerate(self.flows):
            if f.id == flow_id:
                return k
        raise UnknownFlowError(flow_id)

    def to_dict(self) -> dict:
        return {
            "flows": [
                {"id": f.id, "src": f.src, "dst": f.dst, "demand": f.demand, "target": f.target}
                for f in self.flows
            ]
        }

    @classmethod
    def from_dict(cls, doc: dict, topo: Topology | None = None) -> "FlowSet":
        if not isinstance(doc, dict) or not isinstance(doc.get("flows"), list):
            raise SchemaError("flows", "expected an object with a 'flows' list")
        known = set(topo.nodes) if topo is not None else None
        flows = []
        seen = set()
        for k, item in enumerate(doc["flows"]):
            where = f"flows[{k}]"
            if not isinstance(item, dict):
                raise SchemaError(where, "expected an object")
            fid = item.get("id")
            if not isinstance(fid, int) or isinstance(fid, bool):
                raise SchemaError(f"{where}.id", "expected an integer")
            if fid in seen:
                raise SchemaError(f"{where}.id", f"duplicate flow id {fid}")
            seen.add(fid)
            for key in ("src", "dst"):
                v = item.get(key)
                if not isinstance(v, str) or (known is not None and v not in known):
                    raise SchemaError(f"{where}.{key}", f"unknown node {v!r}")
            if item["src"] == item["dst"]:
                raise SchemaError(where, "source equals destination")
            demand = item.get("demand")
            if not _is_number(demand) or demand < 0:
                raise SchemaError(f"{where}.demand", "expected a non-negative number")
            target = item.get("target", 0.0)
            if not _is_number(target) or not 0 <= target <= 1:
                raise SchemaError(f"{where}.target", "expected a number in [0, 1]")
            flows.append(Flow(fid, item["src"], item["dst"], float(demand), float(target)))
        return cls(tuple(flows))

    @classmethod
    def load(cls, path: str | Path, topo: Topology | None = None) -> "FlowSet":
        return cls.from_dict(load_json(path), topo)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


@dataclass(frozen=True)
class Allocation:
    grants: dict[int, float]
    loads: dict[int, float]
    paths: dict[int, tuple[int, ...] | None] = field(default_factory=dict)


def _down(x: FailureConfig, link_id: int) -> bool:
    return bool((x.mask >> (link_id - 1)) & 1)


def connected(topo: Topology, x: FailureConfig, src: str, dst: str) -> bool:
    if src == dst:
        return True
    seen = {src}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for lid in topo.out_links[u]:
            if _down(x, lid):
                continue
            v = topo.links[lid - 1].dst
            if v == dst:
                return True
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return False


def shortest_path(topo: Topology, x: FailureConfig, src: str, dst: str) -> tuple[int, ...] | None:
    """Minimum-hop surviving path as a tuple of link ids, or None if disconnected."""
    dist = {dst: 0}
    queue = deque([dst])
    while queue and src not in dist:
        v = queue.popleft()
        for lid in topo.in_links[v]:
            if _down(x, lid):
                continue
            u = topo.links[lid - 1].src
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    if src not in dist:
        return None
    path = []
    u = src
    while u != dst:
        best = None
        for lid in topo.out_links[u]:
            if _down(x, lid):
                continue
            v = topo.links[lid - 1].dst
            if dist.get(v) == dist[u] - 1:
                key = (v, lid)
                if best is None or key < best:
                    best = key
        path.append(best[1])
        u = best[0]
    return tuple(path)


def route_maxmin(topo: Topology, x: FailureConfig, flows: FlowSet) -> Allocation:
    """Max-min fair shares by progressive filling on each flow's shortest path.

    Every round raises all unfrozen flows by the same increment until a link
    saturates or a demand is met; at least one flow freezes per round.
    """
    paths = {f.id: shortest_path(topo, x, f.src, f.dst) for f in flows}
    grants = {f.id: 0.0 for f in flows}
    demand = {f.id: f.demand for f in flows}
    remaining = {l.id: l.c for l in topo.links if not _down(x, l.id)}
    active = {f.id for f in flows if paths[f.id] is not None and f.demand > 0}
    while active:
        count = Counter(lid for fid in active for lid in paths[fid])
        inc = min(demand[fid] - grants[fid] for fid in active)
        for lid, n in count.items():
            if not math.isinf(remaining[lid]):
                inc = min(inc, remaining[lid] / n)
        inc = max(inc, 0.0)
        saturated = set()
        for lid, n in count.items():
            if math.isinf(remaining[lid]):
                continue
            share = remaining[lid] / n
            remaining[lid] -= inc * n
            if share <= inc * (1 + 1e-12) or remaining[lid] <= _ABS_TOL:
                remaining[lid] = 0.0
                saturated.add(lid)
        frozen = set()
        for fid in active:
            grants[fid] += inc
            if demand[fid] - grants[fid] <= inc * 1e-12 + 1e-15:
                grants[fid] = demand[fid]
                frozen.add(fid)
            elif saturated.intersection(paths[fid]):
                frozen.add(fid)
        active -= frozen
    loads = {l.id: 0.0 for l in topo.links}
    for fid, path in paths.items():
        if path:
            for lid in path:
                loads[lid] += grants[fid]
    return Allocation(grants, loads, paths)


def _satisfied(grant: float, demand: float) -> bool:
    return grant >= demand - max(_ABS_TOL, _REL_TOL * demand)


def max_flow(topo: Topology, x: FailureConfig, src: str, dst: str) -> float:
    """Max-flow value from ``src`` to ``dst`` over surviving links.

    Parallel links are merged by summing capacities; infinite capacity links
    are unbounded edges, so an all-infinite path yields ``inf``.
    """
    if src == dst:
        raise ValueError("max_flow is undefined for src == dst (degenerate input)")
    caps: dict[tuple[str, str], float] = {}
    for l in topo.links:
        if _down(x, l.id):
            continue
        key = (l.src, l.dst)
        caps[key] = caps.get(key, 0.0) + l.c
    if not connected(topo, x, src, dst):
        return 0.0
    finite = [c for c in caps.values() if not math.isinf(c)]
    integral = all(float(c).is_integer() for c in finite)
    g = nx.DiGraph()
    g.add_nodes_from(topo.nodes)
    for (u, v), c in caps.items():
        if math.isinf(c):
            g.add_edge(u, v)
        else:
            g.add_edge(u, v, capacity=int(c) if integral else c)
    try:
        value = nx.maximum_flow_value(g, src, dst)
    except nx.NetworkXUnbounded:
        return math.inf
    return float(value)


def evaluate_all(topo: Topology, x: FailureConfig, flows: FlowSet, policy: RoutingPolicy | str) -> dict[int, int]:
    """Failure indicator (1 = demand unmet) for every flow."""
    policy = RoutingPolicy(policy)
    if policy is RoutingPolicy.SHORTEST_PATH_MAXMIN:
        alloc = route_maxmin(topo, x, flows)
        return {f.id: int(not _satisfied(alloc.grants[f.id], f.demand)) for f in flows}
    if policy is RoutingPolicy.MAX_FLOW:
        out = {}
        for f in flows:
            if f.demand <= 0:
                out[f.id] = 0
            else:
                out[f.id] = int(not _satisfied(max_flow(topo, x, f.src, f.dst), f.demand))
        return out
    return {f.id: int(not connected(topo, x, f.src, f.dst)) for f in flows}


def evaluate(topo: Topology, x: FailureConfig, flows: FlowSet, policy: RoutingPolicy | str, flow_id: int) -> int:
    flows.get(flow_id)
    policy = RoutingPolicy(policy)
    if policy is RoutingPolicy.SHORTEST_PATH_MAXMIN:
        return evaluate_all(topo, x, flows, policy)[flow_id]
    return evaluate_all(topo, x, FlowSet((flows.get(flow_id),)), policy)[flow_id]


class NetworkEvaluator:
    """Caches per-configuration routing results for every flow.

    One routing computation answers all flows, and repeated configurations
    (common under rare-event sampling) cost a dictionary lookup.
    """

    def __init__(self, topo: Topology, flows: FlowSet, policy: RoutingPolicy | str = RoutingPolicy.SHORTEST_PATH_MAXMIN,
                 debug: bool = False, cache_size: int = 1 << 20):
        self.topo = topo
        self.flows = flows
        self.policy = RoutingPolicy(policy)
        self.cache_size = cache_size
        self._cache: dict[int, tuple[int, ...]] = {}
        if debug:
            check_monotone(topo, flows, self.policy, evaluator=self)

    def results(self, x: FailureConfig) -> tuple[int, ...]:
        hit = self._cache.get(x.mask)
        if hit is None:
            res = evaluate_all(self.topo, x, self.flows, self.policy)
            hit = tuple(res[f.id] for f in self.flows)
            if len(self._cache) >= self.cache_size:
                self._cache.clear()
            self._cache[x.mask] = hit
        return hit

    def __call__(self, x: FailureConfig) -> dict[int, int]:
        return dict(zip(self.flows.ids, self.results(x)))

    def indicator(self, flow_id: int) -> "FlowIndicator":
        return FlowIndicator(self, flow_id)

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state


class FlowIndicator:
    """Callable ``R(x)`` for one flow, backed by a shared evaluator."""

    def __init__(self, evaluator: NetworkEvaluator, flow_id: int):
        self.evaluator = evaluator
        self.flow_id = flow_id
        self._index = evaluator.flows.index(flow_id)

    def __call__(self, x: FailureConfig) -> int:
        return self.evaluator.results(x)[self._index]


def flow_indicator(topo: Topology, flows: FlowSet, policy: RoutingPolicy | str, flow_id: int) -> FlowIndicator:
    return NetworkEvaluator(topo, flows, policy).indicator(flow_id)


def check_monotone(topo: Topology, flows: FlowSet, policy: RoutingPolicy | str = RoutingPolicy.SHORTEST_PATH_MAXMIN,
                   flow_ids: Iterable[int] | None = None, evaluator: NetworkEvaluator | None = None,
                   limit: int = 16) -> None:
    """Exhaustively verify failure monotonicity; raise MonotonicityError on a violation."""
    n = topo.n_links
    if n > limit:
        raise ValueError(f"monotonicity check is exhaustive; {n} links exceeds limit {limit}")
    evaluator = evaluator or NetworkEvaluator(topo, flows, policy)
    ids = list(flow_ids) if flow_ids is not None else flows.ids
    idx = {fid: flows.index(fid) for fid in ids}
    table = [evaluator.results(FailureConfig(m, n)) for m in range(1 << n)]
    for m in range(1 << n):
        for fid, k in idx.items():
            if not table[m][k]:
                continue
            for b in range(n):
                if not (m >> b) & 1 and not table[m | (1 << b)][k]:
                    raise MonotonicityError(fid, m, b + 1)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
