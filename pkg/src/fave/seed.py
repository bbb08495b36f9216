"""SEED sets: minimal failure link sets and their conditional residuals.

A :class:`SeedCollection` is an antichain of link sets.  Internally the hot
paths work on integer masks (bit ``i - 1`` for link ``i``); the public API
speaks ``frozenset`` link sets.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .network import FailureConfig, SchemaError, Topology, links_of, load_json, mask_of
from .oracle import check_exhaustive

Indicator = Callable[[FailureConfig], int]


class SeedContradictionWarning(UserWarning):
    """An observed success lies in the span of a collected SEED set."""


def _canonical(sets: Iterable[Iterable[int]]) -> tuple[frozenset[int], ...]:
    unique = {frozenset(int(i) for i in s) for s in sets}
    return tuple(sorted(unique, key=lambda s: (len(s), sorted(s))))


def reduce_masks(masks: Iterable[int]) -> tuple[int, ...]:
    """Minimal elements of a family of masks, canonically ordered.

    If the empty set is present the result is exactly ``(0,)``.
    """
    ordered = sorted(set(masks), key=lambda m: (bin(m).count("1"), m))
    if ordered and ordered[0] == 0:
        return (0,)
    kept: list[int] = []
    for m in ordered:
        if not any(k & m == k for k in kept):
            kept.append(m)
    return tuple(kept)


@dataclass(frozen=True)
class SeedCollection:
    """Deduplicated, canonically sorted family of link sets for one flow."""

    sets: tuple[frozenset[int], ...] = ()
    flow_id: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "sets", _canonical(self.sets))

    @classmethod
    def from_masks(cls, masks: Iterable[int], flow_id: int | None = None) -> "SeedCollection":
        return cls(tuple(links_of(m) for m in masks), flow_id)

    @property
    def masks(self) -> tuple[int, ...]:
        return tuple(mask_of(s) for s in self.sets)

    def reduced(self) -> "SeedCollection":
        return SeedCollection.from_masks(reduce_masks(self.masks), self.flow_id)

    def contains_in_span(self, links: Iterable[int]) -> bool:
        m = mask_of(links)
        return any(s & m == s for s in self.masks)

    @property
    def union(self) -> frozenset[int]:
        return frozenset().union(*self.sets) if self.sets else frozenset()

    def __len__(self) -> int:
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)

    def __bool__(self) -> bool:
        return bool(self.sets)

    def to_record(self) -> dict:
        return {"flow_id": self.flow_id, "seeds": [sorted(s) for s in self.sets]}

    @classmethod
    def from_record(cls, rec: dict, where: str = "$") -> "SeedCollection":
        if not isinstance(rec, dict):
            raise SchemaError(where, "expected an object")
        seeds = rec.get("seeds")
        if not isinstance(seeds, list) or not all(
            isinstance(s, list) and all(isinstance(i, int) and i >= 1 for i in s) for s in seeds
        ):
            raise SchemaError(f"{where}.seeds", "expected a list of lists of positive link ids")
        fid = rec.get("flow_id")
        if fid is not None and not isinstance(fid, int):
            raise SchemaError(f"{where}.flow_id", "expected an integer")
        return cls(tuple(frozenset(s) for s in seeds), fid)

    def __repr__(self) -> str:
        inner = ", ".join("{" + ",".join(map(str, sorted(s))) + "}" for s in self.sets)
        return f"SeedCollection({{{inner}}}, flow_id={self.flow_id})"


class SpanIndicator:
    """``R(x) = 1`` iff the failed link set is in the span of a collection."""

    def __init__(self, collection: SeedCollection | Iterable[Iterable[int]]):
        if not isinstance(collection, SeedCollection):
            collection = SeedCollection(tuple(collection))
        self.collection = collection
        self._masks = collection.masks

    def __call__(self, x: FailureConfig) -> int:
        m = x.mask
        return int(any(s & m == s for s in self._masks))


def is_antichain(coll: SeedCollection | Iterable[Iterable[int]]) -> bool:
    sets = coll.sets if isinstance(coll, SeedCollection) else _canonical(coll)
    for a in sets:
        for b in sets:
            if a < b:
                return False
    return True


def update_cond_seed(i: int, x_i: int, coll: SeedCollection) -> SeedCollection:
    """Conditional SEEDs after fixing link ``i``'s status.

    ``x_i = 1`` removes ``i`` from every member; ``x_i = 0`` drops members
    containing ``i``.  The result is deduplicated and antichain-reduced, and
    collapses to ``{∅}`` once failure is certain.
    """
    bit = 1 << (i - 1)
    if x_i:
        masks = [m & ~bit for m in coll.masks]
    else:
        masks = [m for m in coll.masks if not m & bit]
    return SeedCollection.from_masks(reduce_masks(masks), coll.flow_id)


def enumerate_seeds(topo: Topology, indicator: Indicator, flow_id: int | None = None,
                    limit: int | None = None) -> SeedCollection:
    """All SEEDs of ``indicator`` by exhaustive enumeration (exponential).

    Raises :class:`fave.routing.MonotonicityError` if some failing set has a
    succeeding superset, since SEEDs are then not well defined.
    """
    from .routing import MonotonicityError

    n = topo.n_links
    check_exhaustive(n, limit)
    fails = bytearray(1 << n)
    for m in range(1 << n):
        fails[m] = 1 if indicator(FailureConfig(m, n)) else 0
    seeds = []
    for m in range(1 << n):
        if not fails[m]:
            continue
        minimal = True
        for b in range(n):
            bit = 1 << b
            if m & bit:
                if fails[m & ~bit]:
                    minimal = False
            elif not fails[m | bit]:
                raise MonotonicityError(flow_id if flow_id is not None else -1, m, b + 1)
        if minimal:
            seeds.append(m)
    return SeedCollection.from_masks(seeds, flow_id)


def _update_one(coll: SeedCollection, failed_mask: int, failed: bool) -> SeedCollection:
    masks = coll.masks
    in_span = any(s & failed_mask == s for s in masks)
    if not failed:
        if in_span:
            warnings.warn(
                f"flow {coll.flow_id}: successful configuration {sorted(links_of(failed_mask))} "
                "lies in the span of the collected SEED set",
                SeedContradictionWarning,
                stacklevel=3,
            )
        return coll
    if in_span:
        return coll
    kept = [s for s in masks if not (s & failed_mask == failed_mask and s != failed_mask)]
    kept.append(failed_mask)
    return SeedCollection.from_masks(kept, coll.flow_id)


def seed_update(colls: Sequence[SeedCollection], x: FailureConfig, fail_flags: Sequence[int]) -> list[SeedCollection]:
    """One step of SEED-Updating over every flow's collection.

    A failing configuration not already covered is inserted and its proper
    supersets are dropped; everything else is returned unchanged.
    """
    if len(colls) != len(fail_flags):
        raise ValueError("need one failure flag per collection")
    return [_update_one(c, x.mask, bool(f)) for c, f in zip(colls, fail_flags)]


def good_coverage_subset(coll: SeedCollection, k: int = 0) -> SeedCollection:
    """Members whose size is within ``k`` of the smallest member."""
    if not coll.sets:
        raise ValueError("good_coverage_subset needs a non-empty collection")
    if k < 0:
        raise ValueError("k must be non-negative")
    smallest = min(len(s) for s in coll.sets)
    return SeedCollection(tuple(s for s in coll.sets if len(s) <= smallest + k), coll.flow_id)


def save_seeds(path: str | Path, colls: Iterable[SeedCollection], extra: dict | None = None) -> None:
    records = []
    for c in colls:
        rec = c.to_record()
        if extra and c.flow_id in extra:
            rec.update(extra[c.flow_id])
        records.append(rec)
    Path(path).write_text(json.dumps(records, indent=2))


def load_seeds(path: str | Path) -> list[SeedCollection]:
    doc = load_json(path)
    if isinstance(doc, dict):
        doc = [doc]
    if not isinstance(doc, list):
        raise SchemaError("$", "expected a SEED record or a list of records")
    return [SeedCollection.from_record(rec, f"[{k}]") for k, rec in enumerate(doc)]


@dataclass(frozen=True)
class CollectionResult:
    collections: list[SeedCollection]
    coverage: dict[int, float]
    observed_failures: dict[int, int]


def collect_seeds(topo: Topology, evaluator, n: int, rng=None, inflation: float = 1.0,
                  initial: Sequence[SeedCollection] | None = None) -> CollectionResult:
    """Run SEED-Updating over ``n`` draws from ``p`` scaled by ``inflation``.

    Draws use ``min(1, inflation * p_i)`` per link.  ``evaluator`` maps a
    configuration to per-flow failure flags in ``evaluator.flows`` order.
    Coverage is the fraction of observed failures already in the span at the
    time they were observed.
    """
    from .samplers import MonteCarloSampler, as_generator

    ids = evaluator.flows.ids
    colls = list(initial) if initial is not None else [SeedCollection((), fid) for fid in ids]
    if len(colls) != len(ids):
        raise ValueError("need one initial collection per flow")
    gen_topo = topo.with_probabilities([min(1.0, inflation * l.p) for l in topo.links]) if inflation != 1.0 else topo
    sampler = MonteCarloSampler(gen_topo)
    rng = as_generator(rng)
    seen = {fid: 0 for fid in ids}
    covered = {fid: 0 for fid in ids}
    for _ in range(n):
        x = sampler.draw(rng).config
        flags = evaluator.results(x)
        for k, (fid, f) in enumerate(zip(ids, flags)):
            if f:
                seen[fid] += 1
                if colls[k].contains_in_span(links_of(x.mask)):
                    covered[fid] += 1
        colls = seed_update(colls, x, flags)
    coverage = {fid: (covered[fid] / seen[fid] if seen[fid] else 1.0) for fid in ids}
    return CollectionResult(colls, coverage, seen)
