"""Flow availability estimation under random link failures."""

from .estimate import EstimateSummary, estimate, estimate_multi, estimate_parallel, required_samples, variance_reduction
from .network import FailureConfig, Link, SchemaError, Topology, config_prob, phi, psi, psi_inv
from .oracle import exact_conditional, exact_marginals, exact_mu, exact_report, variance_bound_check
from .planning import (
    FeasibilityReport, LinkRanking, Proposal, evaluate_proposal, rank_maxflow_delta, rank_seed_importance,
    rank_utilization,
)
from .routing import Flow, FlowSet, NetworkEvaluator, RoutingPolicy, evaluate, evaluate_all
from .samplers import (
    MixtureSampler, MonteCarloSampler, ProductSampler, SeedSampler, WeightedDraw, baseline_marginals, make_sampler,
)
from .seed import (
    SeedCollection, SpanIndicator, collect_seeds, enumerate_seeds, good_coverage_subset, seed_update,
    update_cond_seed,
)

__all__ = [
    "EstimateSummary", "estimate", "estimate_multi", "estimate_parallel", "required_samples", "variance_reduction",
    "FailureConfig", "Link", "SchemaError", "Topology", "config_prob", "phi", "psi", "psi_inv",
    "exact_conditional", "exact_marginals", "exact_mu", "exact_report", "variance_bound_check",
    "FeasibilityReport", "LinkRanking", "Proposal", "evaluate_proposal", "rank_maxflow_delta",
    "rank_seed_importance", "rank_utilization",
    "Flow", "FlowSet", "NetworkEvaluator", "RoutingPolicy", "evaluate", "evaluate_all",
    "MixtureSampler", "MonteCarloSampler", "ProductSampler", "SeedSampler", "WeightedDraw",
    "baseline_marginals", "make_sampler",
    "SeedCollection", "SpanIndicator", "collect_seeds", "enumerate_seeds", "good_coverage_subset",
    "seed_update", "update_cond_seed",
]
