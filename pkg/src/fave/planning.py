"""Capacity planning: link-importance rankings and proposal feasibility."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .estimate import EstimateSummary, estimate
from .network import FailureConfig, SchemaError, Topology, load_json
from .routing import FlowSet, NetworkEvaluator, RoutingPolicy, max_flow, route_maxmin
from .samplers import MonteCarloSampler, as_generator, make_sampler
from .seed import SeedCollection

METRICS = ("utilization", "maxflow-delta", "seed-importance")
DEFAULT_NEW_LINK_P = 0.01
DEFAULT_NEW_LINK_C = 2500.0

ACHIEVED = "achieved"
UNREACHED = "unreached"
UNDECIDED = "undecided"


@dataclass(frozen=True)
class LinkRanking:
    """Links by descending score; ties go to the smaller link id."""

    metric: str
    entries: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        ordered = sorted(((int(i), float(s)) for i, s in self.entries), key=lambda e: (-e[1], e[0]))
        object.__setattr__(self, "entries", tuple(ordered))

    @classmethod
    def from_scores(cls, metric: str, scores: Mapping[int, float]) -> "LinkRanking":
        return cls(metric, tuple(scores.items()))

    @property
    def link_ids(self) -> list[int]:
        return [i for i, _ in self.entries]

    def score(self, link_id: int) -> float:
        for i, s in self.entries:
            if i == link_id:
                return s
        raise KeyError(link_id)

    def rows(self) -> list[dict]:
        return [{"rank": r, "link_id": i, "metric": self.metric, "score": s}
                for r, (i, s) in enumerate(self.entries, start=1)]


def rank_utilization(topo: Topology, flows: FlowSet,
                     policy: RoutingPolicy | str = RoutingPolicy.SHORTEST_PATH_MAXMIN,
                     averaged: bool = False, n: int = 1000, rng=None) -> LinkRanking:
    """Carried load over capacity at the all-up configuration.

    With ``averaged=True`` the load is averaged over ``n`` configurations
    drawn from ``p`` instead.  Loads come from the max-min allocation, which
    is the only policy that places traffic on specific links; ``policy`` is
    accepted for interface symmetry.
    """
    RoutingPolicy(policy)
    n_links = topo.n_links
    if averaged:
        rng = as_generator(rng)
        sampler = MonteCarloSampler(topo)
        configs = [sampler.draw(rng).config for _ in range(n)]
    else:
        configs = [FailureConfig.all_up(n_links)]
    loads = np.zeros(n_links)
    if len(flows):
        for x in configs:
            alloc = route_maxmin(topo, x, flows)
            loads += np.array([alloc.loads[i] for i in range(1, n_links + 1)])
        loads /= len(configs)
    scores = {}
    for link in topo.links:
        scores[link.id] = 0.0 if math.isinf(link.c) else float(loads[link.id - 1] / link.c)
    return LinkRanking.from_scores("utilization", scores)


def rank_maxflow_delta(topo: Topology, flows: FlowSet, unit: float = 1.0) -> LinkRanking:
    """Gain in summed all-up max-flow from adding ``unit`` capacity to one link."""
    if unit <= 0:
        raise ValueError("unit must be positive")
    x = FailureConfig.all_up(topo.n_links)
    pairs = [(f.src, f.dst) for f in flows if f.src != f.dst]
    base = [max_flow(topo, x, s, t) for s, t in pairs]
    scores = {}
    for link in topo.links:
        if math.isinf(link.c):
            scores[link.id] = 0.0
            continue
        bumped = topo.with_capacity(link.id, link.c + unit)
        gain = sum(max_flow(bumped, x, s, t) - b for (s, t), b in zip(pairs, base))
        scores[link.id] = float(gain)
    return LinkRanking.from_scores("maxflow-delta", scores)


def _forced_first(topo: Topology, link_id: int) -> tuple[Topology, tuple[int, ...]]:
    p = [1.0 if l.id == link_id else l.p for l in topo.links]
    order = (link_id,) + tuple(i for i in range(1, topo.n_links + 1) if i != link_id)
    return topo.with_probabilities(p), order


def conditional_failure(topo: Topology, indicator, seeds: SeedCollection, link_id: int,
                        method: str = "seed-vre", n: int = 1000, rng=None) -> EstimateSummary:
    """Estimate of ``P[R = 1 | x_link = 1]`` with the link sampled first and forced down."""
    forced, order = _forced_first(topo, link_id)
    sampler = make_sampler(method, forced, seeds, order=order)
    return estimate(sampler, indicator, n, rng, flow_id=seeds.flow_id)


def rank_seed_importance(topo: Topology, flows: FlowSet, unmet: Sequence[int],
                         seeds: Mapping[int, SeedCollection],
                         policy: RoutingPolicy | str = RoutingPolicy.SHORTEST_PATH_MAXMIN,
                         method: str = "seed-vre", n: int = 1000, rng=None,
                         evaluator: NetworkEvaluator | None = None) -> LinkRanking:
    """Sum over unmet flows of the estimated ``P[R_i = 1 | x_j = 1]`` for each link ``j``."""
    unmet = list(unmet)
    if not unmet:
        raise ValueError("seed-importance ranking needs at least one unmet flow")
    if method not in ("seed-zv", "seed-bre", "seed-vre"):
        raise ValueError(f"seed-importance needs a SEED sampler, not {method!r}")
    evaluator = evaluator or NetworkEvaluator(topo, flows, policy)
    rng = as_generator(rng)
    scores = {}
    for link in topo.links:
        total = 0.0
        for fid in unmet:
            coll = seeds[fid]
            total += conditional_failure(topo, evaluator.indicator(fid), coll, link.id, method, n, rng).mean
        scores[link.id] = total
    return LinkRanking.from_scores("seed-importance", scores)


def write_ranking_csv(path: str | Path, rankings: Iterable[LinkRanking]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=("rank", "link_id", "metric", "score"))
        writer.writeheader()
        for ranking in rankings:
            for row in ranking.rows():
                writer.writerow({**row, "score": repr(row["score"])})


def read_ranking_csv(path: str | Path) -> list[LinkRanking]:
    by_metric: dict[str, list[tuple[int, float]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            by_metric.setdefault(row["metric"], []).append((int(row["link_id"]), float(row["score"])))
    return [LinkRanking(m, tuple(e)) for m, e in by_metric.items()]


# proposals

@dataclass(frozen=True)
class Proposal:
    """A base topology plus links to add, as ``(src, dst, p, c)`` tuples."""

    base: Topology
    added_links: tuple[tuple[str, str, float, float], ...] = ()
    label: str = "proposal"
    base_ref: str | None = None

    def __post_init__(self):
        nodes = set(self.base.nodes)
        for k, (src, dst, _, _) in enumerate(self.added_links):
            for node in (src, dst):
                if node not in nodes:
                    raise SchemaError(f"$.added_links[{k}]", f"unknown node {node!r}")

    def apply(self) -> Topology:
        return self.base.with_added_links(self.added_links)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "base": self.base_ref if self.base_ref is not None else self.base.to_dict(),
            "added_links": [
                {"src": s, "dst": d, "p": p, "c": None if math.isinf(c) else c}
                for s, d, p, c in self.added_links
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict, base: Topology | None = None, root: str | Path = ".") -> "Proposal":
        """Parse a proposal; ``base`` may be inline, a path relative to ``root``, or given."""
        if not isinstance(doc, dict):
            raise SchemaError("$", "expected an object")
        ref = doc.get("base")
        if base is None:
            if isinstance(ref, dict):
                base = Topology.from_dict(ref)
                ref = None
            elif isinstance(ref, str):
                base = Topology.load(Path(root) / ref)
            else:
                raise SchemaError("$.base", "expected a topology object or a path")
        elif not isinstance(ref, str):
            ref = None
        raw = doc.get("added_links", [])
        if not isinstance(raw, list):
            raise SchemaError("$.added_links", "expected a list")
        added = []
        for k, item in enumerate(raw):
            where = f"$.added_links[{k}]"
            if not isinstance(item, dict):
                raise SchemaError(where, "expected an object")
            for key in ("src", "dst"):
                if not isinstance(item.get(key), str):
                    raise SchemaError(f"{where}.{key}", "expected a node name")
            p = item.get("p", DEFAULT_NEW_LINK_P)
            c = item.get("c", DEFAULT_NEW_LINK_C)
            if not isinstance(p, (int, float)) or isinstance(p, bool) or not 0 <= p <= 1:
                raise SchemaError(f"{where}.p", "expected a probability in [0, 1]")
            if c is None:
                c = math.inf
            elif not isinstance(c, (int, float)) or isinstance(c, bool) or c <= 0:
                raise SchemaError(f"{where}.c", "expected a positive capacity or null")
            added.append((item["src"], item["dst"], float(p), float(c)))
        label = doc.get("label", "proposal")
        if not isinstance(label, str):
            raise SchemaError("$.label", "expected a string")
        return cls(base, tuple(added), label, ref)

    @classmethod
    def load(cls, path: str | Path, base: Topology | None = None) -> "Proposal":
        return cls.from_dict(load_json(path), base, Path(path).parent)


@dataclass(frozen=True)
class FlowStatus:
    flow_id: int
    target: float
    availability: float
    lower: float
    upper: float
    status: str
    n: int

    def to_row(self, label: str) -> dict:
        return {"proposal": label, "flow_id": self.flow_id, "target": self.target,
                "availability": self.availability, "lower": self.lower, "upper": self.upper,
                "status": self.status, "n": self.n}


@dataclass(frozen=True)
class FeasibilityReport:
    label: str
    flows: tuple[FlowStatus, ...] = field(default_factory=tuple)

    @property
    def feasible(self) -> bool:
        return all(f.status == ACHIEVED for f in self.flows)

    @property
    def undecided(self) -> list[int]:
        return [f.flow_id for f in self.flows if f.status == UNDECIDED]

    def rows(self) -> list[dict]:
        return [f.to_row(self.label) for f in self.flows]


def classify(lower: float, upper: float, target: float) -> str:
    """Availability bounds against a target."""
    if lower >= target:
        return ACHIEVED
    if upper < target:
        return UNREACHED
    return UNDECIDED


def availability_bounds(summary: EstimateSummary) -> tuple[float, float, float]:
    lo, hi = summary.ci
    clamp = lambda v: min(1.0, max(0.0, v))
    return clamp(1.0 - summary.mean), clamp(1.0 - hi), clamp(1.0 - lo)


def proposal_seeds(topo: Topology, evaluator: NetworkEvaluator, n_collect: int = 10000,
                   inflation: float = 1.0, rng=None, limit: int | None = None) -> dict[int, SeedCollection]:
    """SEED sets per flow: enumerated when small and monotone, else collected."""
    from .oracle import ExhaustiveLimitError
    from .routing import MonotonicityError
    from .seed import collect_seeds, enumerate_seeds

    try:
        return {fid: enumerate_seeds(topo, evaluator.indicator(fid), fid, limit) for fid in evaluator.flows.ids}
    except (ExhaustiveLimitError, MonotonicityError):
        result = collect_seeds(topo, evaluator, n_collect, rng, inflation)
        return {c.flow_id: c for c in result.collections}


def evaluate_proposal(proposal: Proposal | Topology, flows: FlowSet,
                      policy: RoutingPolicy | str = RoutingPolicy.SHORTEST_PATH_MAXMIN,
                      method: str = "seed-vre", seeds: Mapping[int, SeedCollection] | None = None,
                      confidence: float = 0.95, batch: int = 1000, budget: int = 100_000,
                      rng=None, label: str | None = None) -> FeasibilityReport:
    """Per-flow availability against targets, sampling until each flow is decided.

    A flow is achieved when the availability lower bound reaches its target
    and unreached when the upper bound falls below it.  Flows still straddling
    their target once ``budget`` draws are spent are reported undecided.
    """
    if batch < 1 or budget < 1:
        raise ValueError("batch and budget must be positive")
    if isinstance(proposal, Proposal):
        topo, label = proposal.apply(), label or proposal.label
    else:
        topo, label = proposal, label or "topology"
    rng = as_generator(rng)
    evaluator = NetworkEvaluator(topo, flows, policy)
    if seeds is None and method != "mc":
        seeds = proposal_seeds(topo, evaluator, rng=rng)
    out = []
    for flow in flows:
        indicator = evaluator.indicator(flow.id)
        coll = seeds[flow.id] if seeds is not None else None
        sampler = make_sampler(method, topo, coll) if method != "mc" else MonteCarloSampler(topo)
        summary = EstimateSummary(flow_id=flow.id, method=sampler.tag, confidence=confidence)
        status = UNDECIDED
        while summary.n < budget:
            size = min(batch, budget - summary.n)
            summary = summary.merge(estimate(sampler, indicator, size, rng, flow.id, confidence))
            _, lower, upper = availability_bounds(summary)
            status = classify(lower, upper, flow.target)
            if status != UNDECIDED:
                break
        avail, lower, upper = availability_bounds(summary)
        out.append(FlowStatus(flow.id, flow.target, avail, lower, upper, status, summary.n))
    return FeasibilityReport(label, tuple(out))


def availability_ccdf(report: FeasibilityReport) -> list[dict]:
    """Fraction of flows whose availability is at least each observed value."""
    values = sorted(f.availability for f in report.flows)
    total = len(values)
    return [{"proposal": report.label, "availability": a, "ccdf": (total - k) / total}
            for k, a in enumerate(values)]


def write_feasibility_csv(path: str | Path, reports: Iterable[FeasibilityReport]) -> None:
    fields = ("proposal", "flow_id", "target", "availability", "lower", "upper", "status", "n")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for report in reports:
            for row in report.rows():
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def write_ccdf_csv(path: str | Path, reports: Iterable[FeasibilityReport]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=("proposal", "availability", "ccdf"))
        writer.writeheader()
        for report in reports:
            for row in availability_ccdf(report):
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_feasibility_csv(path: str | Path) -> list[FeasibilityReport]:
    by_label: dict[str, list[FlowStatus]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            by_label.setdefault(row["proposal"], []).append(FlowStatus(
                int(row["flow_id"]), float(row["target"]), float(row["availability"]),
                float(row["lower"]), float(row["upper"]), row["status"], int(row["n"]),
            ))
    return [FeasibilityReport(k, tuple(v)) for k, v in by_label.items()]
