"""Estimation loops, mergeable streaming statistics and sample-size planning."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from statistics import NormalDist
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .network import FailureConfig
from .routing import NetworkEvaluator
from .samplers import Sampler, as_generator, stream_rng

RESULT_FIELDS = ("flow_id", "method", "n", "mean", "one_run_var", "cv", "ci_lo", "ci_hi")


def z_value(confidence: float) -> float:
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    return NormalDist().inv_cdf(0.5 + confidence / 2)


@dataclass(frozen=True)
class EstimateSummary:
    """Running count, mean and sum of squared deviations of ``R(x) w(x)``."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    flow_id: int | None = None
    method: str | None = None
    confidence: float = 0.95

    @classmethod
    def from_values(cls, values, **meta) -> "EstimateSummary":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return cls(**meta)
        mean = float(v.mean())
        return cls(int(v.size), mean, float(np.square(v - mean).sum()), **meta)

    @property
    def one_run_var(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def std(self) -> float:
        return math.sqrt(self.one_run_var)

    @property
    def cv(self) -> float:
        if self.mean == 0:
            return 0.0 if self.one_run_var == 0 else math.inf
        return self.std / self.mean

    @property
    def half_width(self) -> float:
        if self.n == 0:
            return math.inf
        return z_value(self.confidence) * self.std / math.sqrt(self.n)

    @property
    def ci(self) -> tuple[float, float]:
        h = self.half_width
        return self.mean - h, self.mean + h

    def merge(self, other: "EstimateSummary") -> "EstimateSummary":
        """Pooled summary (Chan et al. pairwise update)."""
        if other.n == 0:
            return self
        if self.n == 0:
            return replace(other, flow_id=self.flow_id if self.flow_id is not None else other.flow_id,
                           method=self.method or other.method)
        if self.flow_id != other.flow_id or self.method != other.method:
            raise ValueError("cannot merge summaries of different flows or samplers")
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return replace(self, n=n, mean=mean, m2=m2)

    def to_row(self) -> dict:
        lo, hi = self.ci
        return {
            "flow_id": self.flow_id, "method": self.method, "n": self.n, "mean": self.mean,
            "one_run_var": self.one_run_var, "cv": self.cv, "ci_lo": lo, "ci_hi": hi,
        }


def merge(a: EstimateSummary, b: EstimateSummary) -> EstimateSummary:
    return a.merge(b)


def _draw_values(sampler: Sampler, indicator, n: int, rng) -> np.ndarray:
    out = np.empty(n)
    for k in range(n):
        d = sampler.draw(rng)
        out[k] = math.exp(d.log_weight) if indicator(d.config) else 0.0
    return out


def estimate(sampler: Sampler, indicator: Callable[[FailureConfig], int], n: int, rng=None,
             flow_id: int | None = None, confidence: float = 0.95, chunk: int = 4096) -> EstimateSummary:
    """Importance sampling estimate of ``P[R = 1]`` from ``n`` draws."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = as_generator(rng)
    out = EstimateSummary(flow_id=flow_id, method=sampler.tag, confidence=confidence)
    done = 0
    while done < n:
        size = min(chunk, n - done)
        vals = _draw_values(sampler, indicator, size, rng)
        out = out.merge(EstimateSummary.from_values(vals, flow_id=flow_id, method=sampler.tag, confidence=confidence))
        done += size
    return out


def _multi_values(sampler: Sampler, evaluate: Callable[[FailureConfig], Sequence[int]], n_flows: int,
                  n: int, rng) -> np.ndarray:
    out = np.zeros((n, n_flows))
    for k in range(n):
        d = sampler.draw(rng)
        fails = evaluate(d.config)
        if any(fails):
            out[k] = np.asarray(fails, dtype=float) * math.exp(d.log_weight)
    return out


def _as_evaluate(indicators) -> tuple[list[int], Callable[[FailureConfig], Sequence[int]]]:
    if isinstance(indicators, NetworkEvaluator):
        return indicators.flows.ids, indicators.results
    ids = list(indicators)
    funcs = [indicators[i] for i in ids]
    return ids, lambda x: [f(x) for f in funcs]


def estimate_multi(sampler: Sampler, indicators: NetworkEvaluator | Mapping[int, Callable], n: int, rng=None,
                   confidence: float = 0.95, chunk: int = 4096) -> dict[int, EstimateSummary]:
    """One stream of ``n`` draws shared by every flow's estimate."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = as_generator(rng)
    ids, evaluate = _as_evaluate(indicators)
    out = {fid: EstimateSummary(flow_id=fid, method=sampler.tag, confidence=confidence) for fid in ids}
    done = 0
    while done < n:
        size = min(chunk, n - done)
        vals = _multi_values(sampler, evaluate, len(ids), size, rng)
        for col, fid in enumerate(ids):
            out[fid] = out[fid].merge(
                EstimateSummary.from_values(vals[:, col], flow_id=fid, method=sampler.tag, confidence=confidence)
            )
        done += size
    return out


def _block_job(args):
    sampler, indicators, size, seed, stream, confidence = args
    return estimate_multi(sampler, indicators, size, stream_rng(seed, stream), confidence=confidence)


def estimate_parallel(sampler: Sampler, indicators: NetworkEvaluator | Mapping[int, Callable], n: int,
                      seed: int, workers: int = 1, block: int = 1000,
                      confidence: float = 0.95) -> dict[int, EstimateSummary]:
    """Block-partitioned run: block ``b`` always uses RNG stream ``b``.

    Blocks are merged in index order, so the result does not depend on
    ``workers``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    sizes = [block] * (n // block) + ([n % block] if n % block else [])
    jobs = [(sampler, indicators, size, seed, b, confidence) for b, size in enumerate(sizes)]
    if workers <= 1:
        parts = [_block_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_block_job, jobs))
    out = parts[0]
    for part in parts[1:]:
        out = {fid: out[fid].merge(part[fid]) for fid in out}
    return out


def required_samples(sigma: float, delta: float, mu: float | None = None, confidence: float = 0.95,
                     alpha: float | None = None) -> int:
    """Draws needed for a CI of width ``delta``.

    Absolute mode (``mu`` is None): ``ceil((2 alpha sigma / delta)**2)``.
    Relative mode: ``ceil((2 alpha sigma / (delta mu))**2)``.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if delta <= 0:
        raise ValueError("delta must be positive")
    alpha = z_value(confidence) if alpha is None else alpha
    if mu is not None:
        if mu == 0:
            raise ValueError("relative mode needs a non-zero mu")
        sigma = sigma / abs(mu)
    if sigma == 0:
        return 1
    return max(1, math.ceil((2 * alpha * sigma / delta) ** 2))


def variance_reduction(reference: EstimateSummary, improved: EstimateSummary) -> float:
    """``sigma_ref**2 / sigma**2`` (inf when the improved variance is zero)."""
    a, b = reference.one_run_var, improved.one_run_var
    if b == 0:
        return math.inf if a > 0 else math.nan
    return a / b


def write_results_csv(path: str | Path, summaries: Iterable[EstimateSummary], comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        writer.writeheader()
        for s in summaries:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in s.to_row().items()})


def read_results_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    rows = []
    for row in csv.DictReader(lines):
        rows.append({
            "flow_id": int(row["flow_id"]) if row["flow_id"] not in ("", "None") else None,
            "method": row["method"],
            "n": int(row["n"]),
            **{k: float(row[k]) for k in ("mean", "one_run_var", "cv", "ci_lo", "ci_hi")},
        })
    return rows
