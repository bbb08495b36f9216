"""Scikit-learn style wrappers over the functional core.

:class:`SeedCollector` learns SEED sets from labelled failure configurations
(rows of a 0/1 matrix, one column per link, with per-flow failure labels).
:class:`FlowAvailabilityEstimator` estimates per-flow availability for a
topology and flow set.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .estimate import estimate_multi
from .network import FailureConfig, Topology
from .routing import FlowSet, NetworkEvaluator, RoutingPolicy
from .samplers import METHODS, MixtureSampler, as_generator, baseline_marginals, make_sampler
from .seed import SeedCollection, SpanIndicator, enumerate_seeds, seed_update


def check_failure_matrix(X, n_links: int | None = None) -> np.ndarray:
    """Validate a 0/1 matrix of failure configurations, one row per config."""
    X = check_array(X, dtype=np.int64, ensure_min_samples=1)
    if np.any((X != 0) & (X != 1)):
        raise ValueError("failure configurations must be 0/1")
    if n_links is not None and X.shape[1] != n_links:
        raise ValueError(f"expected {n_links} link columns, got {X.shape[1]}")
    return X


def check_probability(value: float, name: str = "probability") -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def _configs(X: np.ndarray) -> list[FailureConfig]:
    return [FailureConfig.from_bits(row) for row in X]


def _labels(y, n_rows: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != n_rows:
        raise ValueError("X and y have different numbers of rows")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("failure labels must be 0/1")
    return y


class SeedCollector(BaseEstimator):
    """Online SEED-set learner.

    ``fit`` and ``partial_fit`` apply the SEED-Updating rule to each labelled
    row in order.  ``y`` holds one 0/1 failure column per flow.
    ``transform`` returns span membership per flow, and ``predict`` the
    same for a single-flow collector.
    """

    def __init__(self, flow_ids=None):
        self.flow_ids = flow_ids

    def _init(self, n_links: int, n_flows: int):
        ids = list(self.flow_ids) if self.flow_ids is not None else list(range(1, n_flows + 1))
        if len(ids) != n_flows:
            raise ValueError("flow_ids length does not match the label columns")
        self.n_links_ = n_links
        self.collections_ = [SeedCollection((), fid) for fid in ids]

    def partial_fit(self, X, y):
        X = check_failure_matrix(X, getattr(self, "n_links_", None))
        y = _labels(y, X.shape[0])
        if not hasattr(self, "collections_"):
            self._init(X.shape[1], y.shape[1])
        elif y.shape[1] != len(self.collections_):
            raise ValueError("number of label columns changed between calls")
        colls = self.collections_
        for x, flags in zip(_configs(X), y):
            colls = seed_update(colls, x, flags)
        self.collections_ = colls
        return self

    def fit(self, X, y):
        for attr in ("collections_", "n_links_"):
            self.__dict__.pop(attr, None)
        return self.partial_fit(X, y)

    def transform(self, X):
        check_is_fitted(self, "collections_")
        X = check_failure_matrix(X, self.n_links_)
        spans = [SpanIndicator(c) for c in self.collections_]
        return np.array([[r(x) for r in spans] for x in _configs(X)], dtype=np.int64)

    def predict(self, X):
        out = self.transform(X)
        return out[:, 0] if out.shape[1] == 1 else out


class FlowAvailabilityEstimator(BaseEstimator):
    """Per-flow availability ``1 - mu`` by sampling.

    ``fit(topology, flows)`` runs ``n_samples`` draws of ``method``; SEED
    methods use ``seeds`` (a mapping flow id to collection) or enumerate
    them when omitted.  Single-flow SEED methods are run once per flow;
    ``"mixture"`` shares one stream across all flows.
    """

    def __init__(self, method="seed-vre", n_samples=10000, confidence=0.95, random_state=None,
                 policy="shortest-path-maxmin", seeds=None):
        self.method = method
        self.n_samples = n_samples
        self.confidence = confidence
        self.random_state = random_state
        self.policy = policy
        self.seeds = seeds

    def _validate(self):
        if self.method not in METHODS and self.method != "is":
            raise ValueError(f"unknown method {self.method!r}")
        if int(self.n_samples) < 1:
            raise ValueError("n_samples must be at least 1")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")
        RoutingPolicy(self.policy)

    def fit(self, topology: Topology, flows: FlowSet):
        self._validate()
        rng = as_generator(self.random_state)
        evaluator = NetworkEvaluator(topology, flows, self.policy)
        seeds = self.seeds
        if seeds is None and self.method != "mc":
            seeds = {fid: enumerate_seeds(topology, evaluator.indicator(fid), fid) for fid in flows.ids}
        n = int(self.n_samples)
        summaries = {}
        if self.method == "mc":
            summaries = estimate_multi(make_sampler("mc", topology), evaluator, n, rng, self.confidence)
        elif self.method == "mixture":
            comps = [make_sampler("seed-vre", topology, seeds[fid]) for fid in flows.ids]
            summaries = estimate_multi(MixtureSampler(comps), evaluator, n, rng, self.confidence)
        else:
            for fid in flows.ids:
                ind = {fid: evaluator.indicator(fid)}
                marg = None
                if self.method in ("is", "baseline-is"):
                    marg = baseline_marginals(topology, ind[fid], seeds[fid], rng=rng)
                sampler = make_sampler(self.method, topology, seeds[fid], marginals=marg)
                summaries.update(estimate_multi(sampler, ind, n, rng, self.confidence))
        self.flow_ids_ = list(flows.ids)
        self.summaries_ = summaries
        self.unavailability_ = np.array([summaries[fid].mean for fid in self.flow_ids_])
        self.availability_ = 1.0 - self.unavailability_
        return self

    def predict(self, flow_ids=None):
        check_is_fitted(self, "summaries_")
        if flow_ids is None:
            return self.availability_.copy()
        index = {fid: k for k, fid in enumerate(self.flow_ids_)}
        return np.array([self.availability_[index[fid]] for fid in flow_ids])
