"""Failure-configuration samplers with exact importance weights.

Every sampler draws a :class:`WeightedDraw` carrying ``log w(x) = log p(x) -
log q(x)`` and can evaluate ``log q(x)`` for any configuration by replaying
its (deterministic) sequential recursion.

The SEED samplers walk links in a configurable order and keep the
conditional SEED collection of the prefix drawn so far.  Only links that
appear in some conditional SEED change the importance distribution; every
other link is drawn from its true failure probability and contributes a
unit factor to the weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .network import FailureConfig, Topology, log_config_prob
from .oracle import SupportError, exact_marginals, exhaustive_limit
from .seed import SeedCollection, reduce_masks

METHODS = ("mc", "baseline-is", "seed-zv", "seed-bre", "seed-vre", "mixture")
DEFAULT_IE_CAP = 25
_CACHE_LIMIT = 1 << 18


class AbsoluteContinuityError(SupportError):
    """The importance density is zero where the true density is not."""


class InclusionExclusionCapError(ValueError):
    pass


def stream_rng(seed: int | None, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for worker ``stream`` of master ``seed``."""
    ss = np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return stream_rng(rng)


@dataclass(frozen=True)
class WeightedDraw:
    config: FailureConfig
    log_weight: float
    sampler_tag: str
    log_q: float

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)


class Sampler:
    tag = "base"

    def __init__(self, topo: Topology):
        self.topo = topo

    def draw(self, rng: np.random.Generator) -> WeightedDraw:
        raise NotImplementedError

    def log_density(self, x: FailureConfig) -> float:
        raise NotImplementedError

    def density(self, x: FailureConfig) -> float:
        return math.exp(self.log_density(x))

    def _check(self, x: FailureConfig) -> None:
        if x.n_links != self.topo.n_links:
            raise ValueError("configuration length does not match topology")


def _mask_from_bool(down: np.ndarray) -> int:
    mask = 0
    for k in np.flatnonzero(down):
        mask |= 1 << int(k)
    return mask


class MonteCarloSampler(Sampler):
    """Draws from the true failure distribution; every weight is 1."""

    tag = "mc"

    def draw(self, rng):
        down = rng.random(self.topo.n_links) < self.topo.p
        x = FailureConfig(_mask_from_bool(down), self.topo.n_links)
        return WeightedDraw(x, 0.0, self.tag, log_config_prob(x, self.topo))

    def log_density(self, x):
        self._check(x)
        return log_config_prob(x, self.topo)


class ProductSampler(Sampler):
    """Independent per-link importance marginals ``q_i(1)``."""

    tag = "baseline-is"

    def __init__(self, topo: Topology, marginals: Sequence[float]):
        super().__init__(topo)
        q1 = np.asarray(marginals, dtype=float)
        if q1.shape != (topo.n_links,):
            raise ValueError("need one marginal per link")
        if np.any((q1 < 0) | (q1 > 1)):
            raise ValueError("marginals must lie in [0, 1]")
        bad = np.flatnonzero((q1 == 0) & (topo.p > 0))
        if bad.size:
            raise AbsoluteContinuityError(f"marginal is 0 on link {int(bad[0]) + 1} whose failure probability is positive")
        self.marginals = q1
        with np.errstate(divide="ignore"):
            self._log_q1 = np.log(q1)
            self._log_q0 = np.log1p(-q1)

    def draw(self, rng):
        down = rng.random(self.topo.n_links) < self.marginals
        x = FailureConfig(_mask_from_bool(down), self.topo.n_links)
        log_q = self.log_density(x)
        return WeightedDraw(x, log_config_prob(x, self.topo) - log_q, self.tag, log_q)

    def log_density(self, x):
        self._check(x)
        total = 0.0
        for k in range(x.n_links):
            total += self._log_q1[k] if (x.mask >> k) & 1 else self._log_q0[k]
        return float(total)


class SeedSampler(Sampler):
    """Sequential importance sampler driven by a SEED collection.

    ``rule`` picks how the conditional failure probability of a prefix is
    estimated from its conditional SEEDs: ``"zv"`` uses exact
    inclusion-exclusion over all sub-collections, ``"bre"`` the largest
    single-SEED probability, ``"vre"`` the (clamped) sum of probabilities.
    """

    def __init__(self, topo: Topology, seeds: SeedCollection, rule: str = "vre",
                 order: Sequence[int] | None = None, ie_cap: int = DEFAULT_IE_CAP):
        super().__init__(topo)
        if rule not in ("zv", "bre", "vre"):
            raise ValueError(f"unknown rule {rule!r}")
        self.rule = rule
        self.tag = f"seed-{rule}"
        self.seeds = seeds
        self.ie_cap = ie_cap
        n = topo.n_links
        order = tuple(range(1, n + 1)) if order is None else tuple(order)
        if sorted(order) != list(range(1, n + 1)):
            raise ValueError("order must be a permutation of the link ids")
        self.order = order
        self._identity = order == tuple(range(1, n + 1))
        self._pos = {link: k for k, link in enumerate(order)}
        self._lp = [topo.log_p[link - 1] for link in order]
        self._lq = [topo.log_q[link - 1] for link in order]
        self._p_pos = np.array([topo.links[link - 1].p for link in order])
        for s in seeds.sets:
            for link in s:
                if not 1 <= link <= n:
                    raise ValueError(f"SEED member {link} outside 1..{n}")
        self._root = reduce_masks(self._to_pos(m) for m in seeds.masks)
        if rule == "zv" and len(self._root) > ie_cap:
            # conditional collections never outgrow the root one
            raise InclusionExclusionCapError(
                f"{len(self._root)} SEED sets exceed the inclusion-exclusion cap of {ie_cap}; "
                "use seed-bre or seed-vre instead"
            )
        self._phi_cache: dict[int, float] = {}
        self._est_cache: dict[tuple[int, ...], float] = {}
        self._trans: dict[tuple[int, ...], tuple | None] = {}
        self._density_cache: dict[int, float] = {}

    # link-id masks <-> sampling-position masks

    def _to_pos(self, mask: int) -> int:
        if self._identity:
            return mask
        out = 0
        link = 1
        while mask:
            if mask & 1:
                out |= 1 << self._pos[link]
            mask >>= 1
            link += 1
        return out

    def _from_pos(self, pmask: int) -> int:
        if self._identity:
            return pmask
        out = 0
        k = 0
        while pmask:
            if pmask & 1:
                out |= 1 << (self.order[k] - 1)
            pmask >>= 1
            k += 1
        return out

    # conditional failure estimates

    def _log_phi(self, pmask: int) -> float:
        hit = self._phi_cache.get(pmask)
        if hit is None:
            total = 0.0
            m, k = pmask, 0
            while m:
                if m & 1:
                    total += self._lp[k]
                m >>= 1
                k += 1
            self._phi_cache[pmask] = hit = total
        return hit

    def log_estimate(self, state: tuple[int, ...]) -> float:
        """Log of the estimated failure probability given a conditional SEED state."""
        if not state:
            return -math.inf
        if state[0] == 0:
            return 0.0
        hit = self._est_cache.get(state)
        if hit is not None:
            return hit
        logs = [self._log_phi(m) for m in state]
        if self.rule == "bre":
            val = max(logs)
        elif self.rule == "vre":
            top = max(logs)
            if top == -math.inf:
                val = -math.inf
            else:
                val = min(0.0, top + math.log(math.fsum(math.exp(v - top) for v in logs)))
        else:
            val = self._log_inclusion_exclusion(state)
        if len(self._est_cache) < _CACHE_LIMIT:
            self._est_cache[state] = val
        return val

    def _log_inclusion_exclusion(self, state: tuple[int, ...]) -> float:
        if len(state) > self.ie_cap:
            raise InclusionExclusionCapError(
                f"{len(state)} conditional SEEDs exceed the inclusion-exclusion cap of {self.ie_cap}; "
                "use seed-bre or seed-vre instead"
            )
        terms: list[float] = []

        def walk(start: int, union: int, size: int) -> None:
            for k in range(start, len(state)):
                u = union | state[k]
                sign = 1.0 if size % 2 == 0 else -1.0
                terms.append(sign * math.exp(self._log_phi(u)))
                walk(k + 1, u, size + 1)

        walk(0, 0, 0)
        total = min(1.0, max(0.0, math.fsum(terms)))
        return math.log(total) if total > 0 else -math.inf

    def _transition(self, state: tuple[int, ...]):
        """Branch data for the next link that touches ``state``.

        Returns ``(pos, state0, state1, logw0, logw1, q1)`` or ``None`` when
        both branches have zero estimated failure probability.
        """
        if state in self._trans:
            return self._trans[state]
        union = 0
        for m in state:
            union |= m
        j = (union & -union).bit_length() - 1
        bit = 1 << j
        s1 = reduce_masks(m & ~bit for m in state)
        s0 = tuple(m for m in state if not m & bit)
        a = self._lp[j] + self.log_estimate(s1)
        b = self._lq[j] + self.log_estimate(s0)
        if a == -math.inf and b == -math.inf:
            out = None
        else:
            norm = np.logaddexp(a, b)
            logq1, logq0 = a - norm, b - norm
            logw1 = self._lp[j] - logq1 if logq1 > -math.inf else math.nan
            logw0 = self._lq[j] - logq0 if logq0 > -math.inf else math.nan
            q1 = 1.0 if logq0 == -math.inf else math.exp(logq1)
            out = (j, s0, s1, float(logw0), float(logw1), q1)
        if len(self._trans) < _CACHE_LIMIT:
            self._trans[state] = out
        return out

    @property
    def root_log_estimate(self) -> float:
        return self.log_estimate(self._root)

    def draw(self, rng):
        state = self._root
        logw = 0.0
        pmask = 0
        decided = 0
        while state and state[0] != 0:
            t = self._transition(state)
            if t is None:
                break
            j, s0, s1, lw0, lw1, q1 = t
            decided |= 1 << j
            if rng.random() < q1:
                pmask |= 1 << j
                logw += lw1
                state = s1
            else:
                logw += lw0
                state = s0
        rest = rng.random(self.topo.n_links) < self._p_pos
        for k in np.flatnonzero(rest):
            if not (decided >> int(k)) & 1:
                pmask |= 1 << int(k)
        x = FailureConfig(self._from_pos(pmask), self.topo.n_links)
        log_q = log_config_prob(x, self.topo) - logw
        return WeightedDraw(x, logw, self.tag, log_q)

    def log_weight_of(self, x: FailureConfig) -> float:
        """``log p(x) - log q(x)``, or ``nan`` if ``q(x) = 0``."""
        pmask = self._to_pos(x.mask)
        state = self._root
        logw = 0.0
        while state and state[0] != 0:
            t = self._transition(state)
            if t is None:
                break
            j, s0, s1, lw0, lw1, q1 = t
            if (pmask >> j) & 1:
                if q1 == 0.0:
                    return math.nan
                logw += lw1
                state = s1
            else:
                if q1 == 1.0:
                    return math.nan
                logw += lw0
                state = s0
        return logw

    def log_density(self, x):
        self._check(x)
        hit = self._density_cache.get(x.mask)
        if hit is not None:
            return hit
        logw = self.log_weight_of(x)
        lp = log_config_prob(x, self.topo)
        val = -math.inf if math.isnan(logw) or lp == -math.inf else lp - logw
        if len(self._density_cache) < _CACHE_LIMIT:
            self._density_cache[x.mask] = val
        return val


class MixtureSampler(Sampler):
    """Pick component ``k`` with probability ``w_k``, then draw from it."""

    tag = "mixture"

    def __init__(self, components: Sequence[Sampler], weights: Sequence[float] | None = None):
        if not components:
            raise ValueError("mixture needs at least one component")
        topo = components[0].topo
        if any(c.topo.n_links != topo.n_links for c in components):
            raise ValueError("mixture components must share a topology")
        super().__init__(topo)
        w = np.full(len(components), 1.0 / len(components)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (len(components),) or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be positive and sum to 1")
        self.components = list(components)
        self.weights = w / w.sum()
        self._log_w = np.log(self.weights)
        self._cum = np.cumsum(self.weights)

    def draw(self, rng):
        k = min(int(np.searchsorted(self._cum, rng.random(), side="right")), len(self.components) - 1)
        d = self.components[k].draw(rng)
        log_q = self._mix_log_density(d.config, known=(k, d.log_q))
        return WeightedDraw(d.config, log_config_prob(d.config, self.topo) - log_q, self.tag, log_q)

    def _mix_log_density(self, x, known=None):
        logs = np.empty(len(self.components))
        for k, c in enumerate(self.components):
            if known is not None and known[0] == k:
                logs[k] = known[1]
            else:
                logs[k] = c.log_density(x)
        if np.any(np.isnan(logs)):
            raise SupportError("mixture component density is not evaluable", x)
        return float(np.logaddexp.reduce(self._log_w + logs))

    def log_density(self, x):
        self._check(x)
        return self._mix_log_density(x)


def make_sampler(method: str, topo: Topology, seeds: SeedCollection | None = None,
                 marginals: Sequence[float] | None = None, order: Sequence[int] | None = None,
                 ie_cap: int = DEFAULT_IE_CAP) -> Sampler:
    if method == "mc":
        return MonteCarloSampler(topo)
    if method in ("is", "baseline-is"):
        if marginals is None:
            raise ValueError("baseline-is needs marginals")
        return ProductSampler(topo, marginals)
    if method in ("seed-zv", "seed-bre", "seed-vre"):
        if seeds is None:
            raise ValueError(f"{method} needs a SEED collection")
        return SeedSampler(topo, seeds, method.split("-")[1], order=order, ie_cap=ie_cap)
    raise ValueError(f"unknown sampler method {method!r}")


def baseline_marginals(topo: Topology, indicator: Callable[[FailureConfig], int],
                       seeds: SeedCollection | None = None, n_pilot: int = 2000,
                       rng=None, limit: int | None = None) -> np.ndarray:
    """Per-link ``P[x_i = 1 | R = 1]`` for the product-form importance sampler.

    Exact by enumeration on small networks; otherwise estimated from a pilot
    run of SEED-VRE draws with self-normalized weights.  Floored at ``p_i``.
    """
    limit = exhaustive_limit() if limit is None else limit
    if topo.n_links <= limit:
        q1 = exact_marginals(topo, indicator, limit)
    else:
        if seeds is None or not seeds:
            return topo.p.copy()
        sampler = SeedSampler(topo, seeds, "vre")
        rng = as_generator(rng)
        num = np.zeros(topo.n_links)
        den = 0.0
        for _ in range(n_pilot):
            d = sampler.draw(rng)
            if indicator(d.config):
                w = d.weight
                num += w * d.config.as_array()
                den += w
        if den == 0:
            return topo.p.copy()
        q1 = num / den
    return np.clip(np.maximum(q1, topo.p), 0.0, 1.0)


# one-shot functional forms

def draw_mc(topo: Topology, rng) -> WeightedDraw:
    return MonteCarloSampler(topo).draw(as_generator(rng))


def draw_baseline_is(topo: Topology, marginals: Sequence[float], rng) -> WeightedDraw:
    return ProductSampler(topo, marginals).draw(as_generator(rng))


def draw_seed_zv(topo: Topology, seeds: SeedCollection, rng, ie_cap: int = DEFAULT_IE_CAP) -> WeightedDraw:
    return SeedSampler(topo, seeds, "zv", ie_cap=ie_cap).draw(as_generator(rng))


def draw_seed_bre(topo: Topology, seeds: SeedCollection, rng) -> WeightedDraw:
    return SeedSampler(topo, seeds, "bre").draw(as_generator(rng))


def draw_seed_vre(topo: Topology, seeds: SeedCollection, rng) -> WeightedDraw:
    return SeedSampler(topo, seeds, "vre").draw(as_generator(rng))


def draw_mixture(components: Sequence[Sampler], weights: Sequence[float], rng) -> WeightedDraw:
    return MixtureSampler(components, weights).draw(as_generator(rng))


def density(sampler: Sampler, x: FailureConfig) -> float:
    """Log-density ``log q(x)``; ``-inf`` outside the support."""
    return sampler.log_density(x)
