"""Network data model: links, topologies, failure configurations and link sets.

Links are identified by 1-based ids ``1..n_links``.  A failure configuration is
stored as a packed integer bit mask where bit ``i - 1`` holds the status of
link ``i`` (1 = down).  Link sets are plain ``frozenset`` objects of link ids.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

INFINITE = math.inf
"""Capacity sentinel for links that never constrain bandwidth (JSON ``null``)."""

LinkSet = frozenset


class InvalidLinkError(ValueError):
    """A link id outside ``1..n_links`` was referenced."""


class SchemaError(ValueError):
    """An input document does not match its schema.

    ``where`` is a field path such as ``links[3].p``.
    """

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


def link_set(members: Iterable[int] = ()) -> frozenset[int]:
    return frozenset(int(m) for m in members)


def sorted_members(links: Iterable[int]) -> list[int]:
    return sorted(links)


@dataclass(frozen=True)
class Link:
    id: int
    src: str
    dst: str
    p: float
    c: float = INFINITE

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"link {self.id}: failure probability {self.p} not in [0, 1]")
        if not (self.c >= 0):
            raise ValueError(f"link {self.id}: capacity {self.c} must be non-negative")

    @property
    def infinite(self) -> bool:
        return math.isinf(self.c)


@dataclass(frozen=True)
class Topology:
    """Directed multigraph with per-link failure probability and capacity."""

    nodes: tuple[str, ...]
    links: tuple[Link, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", tuple(self.links))
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("duplicate node ids")
        known = set(self.nodes)
        for pos, link in enumerate(self.links, start=1):
            if link.id != pos:
                raise InvalidLinkError(f"link ids must be dense 1..N_l; position {pos} holds id {link.id}")
            if link.src not in known or link.dst not in known:
                raise ValueError(f"link {link.id} references an undeclared node")

    @property
    def n_links(self) -> int:
        return len(self.links)

    def link(self, link_id: int) -> Link:
        check_link_id(link_id, self.n_links)
        return self.links[link_id - 1]

    @cached_property
    def p(self) -> np.ndarray:
        """Failure probabilities indexed by ``link_id - 1``."""
        return np.array([l.p for l in self.links], dtype=float)

    @cached_property
    def log_p(self) -> tuple[float, ...]:
        return tuple(_log(l.p) for l in self.links)

    @cached_property
    def log_q(self) -> tuple[float, ...]:
        return tuple(_log(1.0 - l.p) for l in self.links)

    @cached_property
    def out_links(self) -> dict[str, tuple[int, ...]]:
        out: dict[str, list[int]] = {n: [] for n in self.nodes}
        for l in self.links:
            out[l.src].append(l.id)
        return {n: tuple(v) for n, v in out.items()}

    @cached_property
    def in_links(self) -> dict[str, tuple[int, ...]]:
        out: dict[str, list[int]] = {n: [] for n in self.nodes}
        for l in self.links:
            out[l.dst].append(l.id)
        return {n: tuple(v) for n, v in out.items()}

    def with_probabilities(self, p: Sequence[float]) -> "Topology":
        if len(p) != self.n_links:
            raise ValueError("probability vector length does not match n_links")
        links = [Link(l.id, l.src, l.dst, float(pi), l.c) for l, pi in zip(self.links, p)]
        return Topology(self.nodes, tuple(links))

    def with_capacity(self, link_id: int, c: float) -> "Topology":
        links = list(self.links)
        old = self.link(link_id)
        links[link_id - 1] = Link(old.id, old.src, old.dst, old.p, c)
        return Topology(self.nodes, tuple(links))

    def with_added_links(self, added: Iterable[tuple[str, str, float, float]]) -> "Topology":
        links = list(self.links)
        for src, dst, p, c in added:
            links.append(Link(len(links) + 1, src, dst, p, c))
        return Topology(self.nodes, tuple(links))

    # serialization

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "links": [
                {"id": l.id, "src": l.src, "dst": l.dst, "p": l.p, "c": None if l.infinite else l.c}
                for l in self.links
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Topology":
        if not isinstance(doc, dict):
            raise SchemaError("$", "topology must be a JSON object")
        nodes = doc.get("nodes")
        if not isinstance(nodes, list) or not all(isinstance(n, str) for n in nodes):
            raise SchemaError("nodes", "expected a list of node id strings")
        raw = doc.get("links")
        if not isinstance(raw, list):
            raise SchemaError("links", "expected a list")
        by_id: dict[int, Link] = {}
        known = set(nodes)
        for k, item in enumerate(raw):
            where = f"links[{k}]"
            if not isinstance(item, dict):
                raise SchemaError(where, "expected an object")
            link_id = item.get("id")
            if not isinstance(link_id, int) or isinstance(link_id, bool) or link_id < 1:
                raise SchemaError(f"{where}.id", "expected a positive integer")
            if link_id in by_id:
                raise SchemaError(f"{where}.id", f"duplicate link id {link_id}")
            for key in ("src", "dst"):
                if item.get(key) not in known:
                    raise SchemaError(f"{where}.{key}", f"unknown node {item.get(key)!r}")
            p = item.get("p")
            if not _is_number(p) or not 0.0 <= p <= 1.0:
                raise SchemaError(f"{where}.p", "expected a probability in [0, 1]")
            c = item.get("c", None)
            if c is None:
                c = INFINITE
            elif not _is_number(c) or c < 0:
                raise SchemaError(f"{where}.c", "expected a non-negative number or null")
            by_id[link_id] = Link(link_id, item["src"], item["dst"], float(p), float(c))
        if sorted(by_id) != list(range(1, len(by_id) + 1)):
            raise SchemaError("links", "link ids must be dense 1..N_l")
        return cls(tuple(nodes), tuple(by_id[i] for i in range(1, len(by_id) + 1)))

    @classmethod
    def load(cls, path: str | Path) -> "Topology":
        return cls.from_dict(load_json(path))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


@dataclass(frozen=True)
class FailureConfig:
    """Link statuses as a packed bit mask; bit ``i - 1`` is link ``i`` (1 = down)."""

    mask: int
    n_links: int

    def __post_init__(self):
        if self.mask < 0 or self.mask >> self.n_links:
            raise InvalidLinkError(f"mask {self.mask:#x} has bits beyond {self.n_links} links")

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "FailureConfig":
        mask = 0
        for pos, b in enumerate(bits):
            if b not in (0, 1, True, False):
                raise ValueError(f"link status must be 0 or 1, got {b!r}")
            if b:
                mask |= 1 << pos
        return cls(mask, len(bits))

    @classmethod
    def all_up(cls, n_links: int) -> "FailureConfig":
        return cls(0, n_links)

    def status(self, link_id: int) -> int:
        check_link_id(link_id, self.n_links)
        return (self.mask >> (link_id - 1)) & 1

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.mask >> k) & 1 for k in range(self.n_links))

    def prefix(self, i: int) -> tuple[int, ...]:
        """Statuses of links ``1..i``; ``i = 0`` is the empty prefix."""
        if not 0 <= i <= self.n_links:
            raise ValueError(f"prefix length {i} outside 0..{self.n_links}")
        return self.bits[:i]

    @property
    def failed(self) -> frozenset[int]:
        return psi_inv(self)

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.int8)

    def __len__(self) -> int:
        return self.n_links

    def __iter__(self) -> Iterator[int]:
        return iter(self.bits)

    def __repr__(self) -> str:
        return f"FailureConfig({''.join(map(str, self.bits))})"


def check_link_id(link_id: int, n_links: int) -> None:
    if not 1 <= link_id <= n_links:
        raise InvalidLinkError(f"link id {link_id} outside 1..{n_links}")


def mask_of(links: Iterable[int]) -> int:
    mask = 0
    for i in links:
        mask |= 1 << (i - 1)
    return mask


def links_of(mask: int) -> frozenset[int]:
    out = []
    pos = 1
    while mask:
        if mask & 1:
            out.append(pos)
        mask >>= 1
        pos += 1
    return frozenset(out)


def psi(links: Iterable[int], n_links: int) -> FailureConfig:
    """Configuration in which exactly the links in ``links`` are down."""
    links = list(links)
    for i in links:
        check_link_id(i, n_links)
    return FailureConfig(mask_of(links), n_links)


def psi_inv(x: FailureConfig) -> frozenset[int]:
    return links_of(x.mask)


def phi(links: Iterable[int], topo: Topology) -> float:
    """Probability that every link in ``links`` is down."""
    out = 1.0
    for i in sorted(set(links)):
        out *= topo.link(i).p
    return out


def log_config_prob(x: FailureConfig, topo: Topology) -> float:
    if x.n_links != topo.n_links:
        raise ValueError("configuration length does not match topology")
    total = 0.0
    mask = x.mask
    for k in range(topo.n_links):
        total += topo.log_p[k] if (mask >> k) & 1 else topo.log_q[k]
    return total


def config_prob(x: FailureConfig, topo: Topology) -> float:
    """``p(x) = prod_i p_i^x_i (1 - p_i)^(1 - x_i)``.

    Computed as an exact linear product for up to 64 links and through the
    log-probability beyond that.
    """
    if x.n_links != topo.n_links:
        raise ValueError("configuration length does not match topology")
    if topo.n_links > 64:
        return math.exp(log_config_prob(x, topo))
    out = 1.0
    for k, link in enumerate(topo.links):
        out *= link.p if (x.mask >> k) & 1 else 1.0 - link.p
    return out


def in_span(links: Iterable[int], collection: Iterable[Iterable[int]]) -> bool:
    """True iff some member of ``collection`` is a subset of ``links``."""
    target = frozenset(links)
    return any(frozenset(s) <= target for s in collection)


def all_config_log_probs(topo: Topology) -> np.ndarray:
    """``log p(x)`` for every mask ``0 .. 2**n_links - 1`` (small networks only)."""
    n = topo.n_links
    out = np.zeros(1 << n)
    masks = np.arange(1 << n, dtype=np.int64)
    for k in range(n):
        down = (masks >> k) & 1
        lp, lq = topo.log_p[k], topo.log_q[k]
        out += np.where(down == 1, lp, lq)
    return out


def load_json(path: str | Path):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None


def _log(v: float) -> float:
    return math.log(v) if v > 0 else -math.inf


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
