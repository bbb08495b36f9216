"""Exact brute-force reference computations over all ``2**n_links`` configurations.

Everything here is exponential in the number of links and refuses to run
past the exhaustive limit (default 20, overridable through the
``FAVE_EXHAUSTIVE_LIMIT`` environment variable).
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .network import FailureConfig, Topology, all_config_log_probs

DEFAULT_EXHAUSTIVE_LIMIT = 20

Indicator = Callable[[FailureConfig], int]


class ExhaustiveLimitError(ValueError):
    pass


class SupportError(ValueError):
    """The importance density is zero on a configuration that matters."""

    def __init__(self, message: str, config: FailureConfig | None = None):
        super().__init__(message if config is None else f"{message}: {config!r}")
        self.config = config


def exhaustive_limit() -> int:
    raw = os.environ.get("FAVE_EXHAUSTIVE_LIMIT")
    return int(raw) if raw else DEFAULT_EXHAUSTIVE_LIMIT


def check_exhaustive(n_links: int, limit: int | None = None) -> None:
    limit = exhaustive_limit() if limit is None else limit
    if n_links > limit:
        raise ExhaustiveLimitError(
            f"{n_links} links exceeds the exhaustive limit of {limit}; "
            "collect SEED sets by sampling instead"
        )
    if n_links > DEFAULT_EXHAUSTIVE_LIMIT:
        warnings.warn(f"exhaustive enumeration over 2**{n_links} configurations may be slow")


def failure_table(topo: Topology, indicator: Indicator, limit: int | None = None) -> np.ndarray:
    """``R(x)`` for every mask, as a 0/1 array indexed by mask."""
    n = topo.n_links
    check_exhaustive(n, limit)
    return np.fromiter((indicator(FailureConfig(m, n)) for m in range(1 << n)), dtype=np.int8, count=1 << n)


def exact_mu(topo: Topology, indicator: Indicator, limit: int | None = None) -> float:
    """Exact failure probability ``sum_x p(x) R(x)``."""
    table = failure_table(topo, indicator, limit)
    logp = all_config_log_probs(topo)
    return math.fsum(np.exp(logp[table == 1]))


def _matching(n: int, fixed: Mapping[int, int]) -> np.ndarray:
    masks = np.arange(1 << n, dtype=np.int64)
    keep = np.ones(1 << n, dtype=bool)
    for link_id, status in fixed.items():
        keep &= ((masks >> (link_id - 1)) & 1) == int(status)
    return keep


def exact_conditional(topo: Topology, indicator: Indicator, prefix: Sequence[int] = (),
                      fixed: Mapping[int, int] | None = None, limit: int | None = None) -> float:
    """``P[R = 1 | prefix]`` where ``prefix`` fixes links ``1..len(prefix)``.

    ``fixed`` maps arbitrary link ids to statuses and is merged with ``prefix``.
    """
    n = topo.n_links
    cond = {k + 1: int(b) for k, b in enumerate(prefix)}
    cond.update(fixed or {})
    prefix_prob = 1.0
    for link_id, status in cond.items():
        p = topo.link(link_id).p
        prefix_prob *= p if status else 1.0 - p
    if prefix_prob == 0.0:
        raise ValueError("conditioning event has probability zero")
    table = failure_table(topo, indicator, limit)
    logp = all_config_log_probs(topo)
    keep = _matching(n, cond) & (table == 1)
    return min(1.0, math.fsum(np.exp(logp[keep])) / prefix_prob)


def exact_marginal(topo: Topology, indicator: Indicator, link_id: int, limit: int | None = None) -> float:
    """``P[x_i = 1 | R = 1]``."""
    return float(exact_marginals(topo, indicator, limit)[link_id - 1])


def exact_marginals(topo: Topology, indicator: Indicator, limit: int | None = None) -> np.ndarray:
    n = topo.n_links
    table = failure_table(topo, indicator, limit)
    logp = all_config_log_probs(topo)
    weights = np.where(table == 1, np.exp(logp), 0.0)
    mu = math.fsum(weights)
    if mu <= 0:
        raise ValueError("marginals given failure are undefined when mu = 0")
    masks = np.arange(1 << n, dtype=np.int64)
    return np.array([math.fsum(weights[((masks >> k) & 1) == 1]) / mu for k in range(n)])


def zero_variance_density(topo: Topology, indicator: Indicator, limit: int | None = None) -> np.ndarray:
    """``q*(x) = p(x) R(x) / mu`` for every mask."""
    table = failure_table(topo, indicator, limit)
    weights = np.where(table == 1, np.exp(all_config_log_probs(topo)), 0.0)
    mu = math.fsum(weights)
    if mu <= 0:
        raise ValueError("zero-variance density is undefined when mu = 0")
    return weights / mu


def sampler_log_densities(topo: Topology, sampler, limit: int | None = None) -> np.ndarray:
    """``log q(x)`` for every mask, by deterministic density replay."""
    n = topo.n_links
    check_exhaustive(n, limit)
    return np.array([sampler.log_density(FailureConfig(m, n)) for m in range(1 << n)])


def exact_estimator_mean(topo: Topology, indicator: Indicator, sampler, limit: int | None = None) -> float:
    """``sum_x q(x) R(x) w(x)`` with ``w = p / q``, over the support of ``q``."""
    table = failure_table(topo, indicator, limit)
    logp = all_config_log_probs(topo)
    logq = sampler_log_densities(topo, sampler, limit)
    terms = []
    for m in np.nonzero((table == 1) & np.isfinite(logq))[0]:
        q = math.exp(logq[m])
        terms.append(q * math.exp(logp[m] - logq[m]))
    return math.fsum(terms)


def exact_sampler_variance(topo: Topology, indicator: Indicator, sampler, limit: int | None = None) -> float:
    """One-run variance ``sum_x q(x) (R(x) w(x) - mu)**2``.

    Equal to ``E_q[(R w)**2] - mu**2`` but summed in centered form, which
    keeps near-zero variances free of cancellation error.
    """
    n = topo.n_links
    table = failure_table(topo, indicator, limit)
    logp = all_config_log_probs(topo)
    logq = sampler_log_densities(topo, sampler, limit)
    fail = (table == 1) & np.isfinite(logp)
    missing = fail & ~np.isfinite(logq)
    if missing.any():
        m = int(np.nonzero(missing)[0][0])
        raise SupportError("importance density vanishes where p(x)R(x) > 0", FailureConfig(m, n))
    mu = math.fsum(np.exp(logp[fail]))
    terms = []
    for m in np.nonzero(np.isfinite(logq))[0]:
        q = math.exp(logq[m])
        value = math.exp(logp[m] - logq[m]) if fail[m] else 0.0
        terms.append(q * (value - mu) ** 2)
    return math.fsum(terms)


def kl_divergence(q_star, q) -> float:
    """``KL(q* || q)`` in nats for two densities over the same configurations."""
    q_star = np.asarray(q_star, dtype=float)
    q = np.asarray(q, dtype=float)
    support = q_star > 0
    if np.any(q[support] <= 0):
        bad = int(np.nonzero(support & (q <= 0))[0][0])
        raise SupportError(f"q vanishes where q* > 0 (configuration index {bad})")
    return max(0.0, math.fsum(q_star[support] * np.log(q_star[support] / q[support])))


@dataclass(frozen=True)
class VarianceBoundReport:
    mu: float
    kl: float
    lower: float
    exact: float
    upper: float
    min_q: float

    # KL near zero carries rounding noise of order 1e-15
    @property
    def lower_holds(self) -> bool:
        return self.lower <= self.exact * (1 + 1e-9) + self.mu ** 2 * 1e-12

    @property
    def upper_holds(self) -> bool:
        return self.exact <= self.upper * (1 + 1e-9) + self.mu ** 2 * 1e-12


def variance_bound_check(topo: Topology, indicator: Indicator, sampler, limit: int | None = None) -> VarianceBoundReport:
    """KL-based bounds on the one-run variance against its exact value.

    The lower side is ``mu**2 KL``.  The upper side is
    ``mu**2 sqrt(2 ln 2 KL) / min q(x)`` with KL in nats and the minimum taken
    over configurations where ``q* > 0``; it is reported, not guaranteed.
    """
    q_star = zero_variance_density(topo, indicator, limit)
    q = np.exp(sampler_log_densities(topo, sampler, limit))
    mu = exact_mu(topo, indicator, limit)
    kl = kl_divergence(q_star, q)
    exact = exact_sampler_variance(topo, indicator, sampler, limit)
    support = q_star > 0
    min_q = float(q[support].min())
    lower = mu * mu * kl
    upper = mu * mu * math.sqrt(2 * math.log(2) * kl) / min_q
    return VarianceBoundReport(mu, kl, lower, exact, upper, min_q)


@dataclass
class ExactReport:
    mu: float
    n_links: int
    table: list[dict] = field(default_factory=list)
    kl: dict[str, float] = field(default_factory=dict)
    variance: dict[str, float] = field(default_factory=dict)
    estimator_mean: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "n_links": self.n_links,
            "kl": self.kl,
            "variance": self.variance,
            "estimator_mean": self.estimator_mean,
            "table": self.table,
        }


def exact_report(topo: Topology, indicator: Indicator, samplers: Mapping[str, object] | None = None,
                 limit: int | None = None, include_table: bool = True) -> ExactReport:
    """Exact mu plus per-sampler densities, KL to ``q*`` and one-run variances."""
    samplers = dict(samplers or {})
    n = topo.n_links
    table = failure_table(topo, indicator, limit)
    logp = all_config_log_probs(topo)
    mu = exact_mu(topo, indicator, limit)
    report = ExactReport(mu=mu, n_links=n)
    q_star = zero_variance_density(topo, indicator, limit) if mu > 0 else None
    densities = {}
    for name, sampler in samplers.items():
        q = np.exp(sampler_log_densities(topo, sampler, limit))
        densities[name] = q
        report.estimator_mean[name] = exact_estimator_mean(topo, indicator, sampler, limit)
        try:
            report.variance[name] = exact_sampler_variance(topo, indicator, sampler, limit)
            report.kl[name] = kl_divergence(q_star, q) if q_star is not None else 0.0
        except SupportError:
            report.variance[name] = math.nan
            report.kl[name] = math.inf
    if include_table:
        for m in range(1 << n):
            row = {
                "config": "".join(str((m >> k) & 1) for k in range(n)),
                "p": float(np.exp(logp[m])),
                "R": int(table[m]),
            }
            for name, q in densities.items():
                row[f"q[{name}]"] = float(q[m])
            report.table.append(row)
    return report
