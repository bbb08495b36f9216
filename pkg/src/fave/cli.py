"""Command-line front end: ``fave <command> [options]``.

Exit codes: 0 success, 2 input or schema error, 3 importance density
support error, 4 undecided flows after the sample budget, 5 exhaustive or
inclusion-exclusion limit exceeded, 6 routing policy not failure-monotone.
"""

from __future__ import annotations

import argparse
import json
import math
import subprocess
import sys
from dataclasses import asdict, dataclass, field
from importlib.metadata import PackageNotFoundError, version as dist_version
from pathlib import Path

import numpy as np

from .estimate import EstimateSummary, estimate_parallel, required_samples, variance_reduction, write_results_csv
from .network import SchemaError, Topology
from .oracle import ExhaustiveLimitError, SupportError, exact_report, exhaustive_limit
from .planning import (
    Proposal, evaluate_proposal, proposal_seeds, rank_maxflow_delta, rank_seed_importance, rank_utilization,
    write_ccdf_csv, write_feasibility_csv, write_ranking_csv,
)
from .routing import FlowSet, MonotonicityError, NetworkEvaluator, RoutingPolicy
from .samplers import (
    DEFAULT_IE_CAP, InclusionExclusionCapError, MixtureSampler, baseline_marginals, make_sampler,
)
from .seed import SeedCollection, collect_seeds, enumerate_seeds, load_seeds, save_seeds

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_SUPPORT = 3
EXIT_UNDECIDED = 4
EXIT_LIMIT = 5
EXIT_MONOTONE = 6

CLI_METHODS = ("mc", "is", "seed-zv", "seed-bre", "seed-vre", "mixture")


class UsageError(ValueError):
    pass


def tool_version() -> str:
    try:
        base = dist_version("artifact")
    except PackageNotFoundError:
        base = "0+unknown"
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty"], cwd=Path(__file__).parent,
            capture_output=True, text=True, timeout=5,
        )
        if described.returncode == 0 and described.stdout.strip():
            return f"{base}+{described.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return base


@dataclass
class RunConfig:
    topology: str
    flows: str
    seeds: str | None = None
    method: str = "seed-vre"
    n: int = 10000
    seed: int | None = None
    confidence: float = 0.95
    delta: float | None = None
    delta_mode: str = "rel"
    workers: int = 1
    output: str = "results.csv"
    policy: str = RoutingPolicy.SHORTEST_PATH_MAXMIN.value
    enumerate: bool = False
    compare_mc: bool = False
    weights: str = "equal"
    flow_ids: list[int] | None = None
    block: int = 1000
    ie_cap: int = DEFAULT_IE_CAP
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.method not in CLI_METHODS:
            raise UsageError(f"unknown method {self.method!r}")
        if self.method.startswith("seed-") or self.method == "mixture":
            if self.seeds is None and not self.enumerate:
                raise UsageError(f"{self.method} needs --seeds or --enumerate")
        if self.n < 1:
            raise UsageError("--n must be at least 1")
        if not 0 < self.confidence < 1:
            raise UsageError("--confidence must lie in (0, 1)")
        if self.delta is not None and self.delta <= 0:
            raise UsageError("--delta must be positive")
        if self.workers < 1:
            raise UsageError("--workers must be at least 1")


# shared helpers

def _load_inputs(topology: str, flows: str) -> tuple[Topology, FlowSet]:
    topo = Topology.load(topology)
    return topo, FlowSet.load(flows, topo)


def _seed_map(topo: Topology, evaluator: NetworkEvaluator, seeds_path: str | None, enumerate_: bool,
              flow_ids: list[int]) -> dict[int, SeedCollection]:
    if seeds_path is not None:
        loaded = load_seeds(seeds_path)
        by_id = {c.flow_id: c for c in loaded}
        if len(loaded) == 1 and len(flow_ids) == 1 and loaded[0].flow_id is None:
            by_id = {flow_ids[0]: SeedCollection(loaded[0].sets, flow_ids[0])}
        missing = [fid for fid in flow_ids if fid not in by_id]
        if missing:
            raise SchemaError(seeds_path, f"no SEED record for flows {missing}")
        return {fid: by_id[fid] for fid in flow_ids}
    if enumerate_:
        return {fid: enumerate_seeds(topo, evaluator.indicator(fid), fid) for fid in flow_ids}
    return {}


def _mixture_weights(spec: str, k: int) -> list[float] | None:
    if spec == "equal":
        return None
    try:
        w = [float(v) for v in spec.split(",")]
    except ValueError:
        raise UsageError("--weights must be 'equal' or a comma-separated list of numbers") from None
    if len(w) != k or any(v <= 0 for v in w):
        raise UsageError(f"--weights needs {k} positive values")
    total = sum(w)
    return [v / total for v in w]


def _resolve_seed(seed: int | None) -> int:
    return int(np.random.SeedSequence().entropy % (1 << 63)) if seed is None else seed


def _write_json(path: str | Path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def _finite(v: float):
    return v if math.isfinite(v) else None


def _summary_path(output: str) -> Path:
    return Path(output).with_suffix(".json")


# estimate / estimate-multi

def run_estimate(cfg: RunConfig, shared: bool = False) -> dict:
    """Run the configured estimator; write the results CSV and JSON summary."""
    cfg.validate()
    cfg.seed = _resolve_seed(cfg.seed)
    topo, flows = _load_inputs(cfg.topology, cfg.flows)
    flow_ids = cfg.flow_ids or flows.ids
    for fid in flow_ids:
        flows.get(fid)
    evaluator = NetworkEvaluator(topo, flows, cfg.policy)
    needs_seeds = cfg.method.startswith("seed-") or cfg.method == "mixture"
    seeds = _seed_map(topo, evaluator, cfg.seeds, cfg.enumerate, flow_ids) if needs_seeds or cfg.seeds else {}
    if shared and cfg.method not in ("mc", "mixture"):
        raise UsageError("estimate-multi shares one draw stream; use --method mc or mixture")

    indicators = {fid: evaluator.indicator(fid) for fid in flow_ids}
    results: dict[int, EstimateSummary] = {}
    if cfg.method in ("mc", "mixture"):
        sampler = _shared_sampler(cfg, topo, flow_ids, seeds)
        results = estimate_parallel(sampler, indicators, cfg.n, cfg.seed, cfg.workers, cfg.block, cfg.confidence)
    else:
        for k, fid in enumerate(flow_ids):
            sampler = _flow_sampler(cfg, topo, indicators[fid], seeds.get(fid), k)
            out = estimate_parallel(sampler, {fid: indicators[fid]}, cfg.n, [cfg.seed, k],
                                    cfg.workers, cfg.block, cfg.confidence)
            results[fid] = out[fid]

    mc = {}
    if cfg.compare_mc:
        mc_sampler = make_sampler("mc", topo)
        mc = estimate_parallel(mc_sampler, indicators, cfg.n, [cfg.seed, 1 << 30],
                               cfg.workers, cfg.block, cfg.confidence)

    config = asdict(cfg)
    version = tool_version()
    comment = f"fave {version}\nconfig {json.dumps(config, default=_json_default)}"
    write_results_csv(cfg.output, [results[fid] for fid in flow_ids], comment)
    per_flow = []
    for fid in flow_ids:
        s = results[fid]
        row = s.to_row()
        row = {k: (_finite(v) if isinstance(v, float) else v) for k, v in row.items()}
        if cfg.delta is not None:
            if cfg.delta_mode == "rel" and s.mean == 0:
                row["required_n"] = None
            else:
                mu = s.mean if cfg.delta_mode == "rel" else None
                row["required_n"] = required_samples(s.std, cfg.delta, mu, cfg.confidence)
        if fid in mc:
            row["mc_mean"] = mc[fid].mean
            row["mc_one_run_var"] = mc[fid].one_run_var
            row["variance_reduction"] = _finite(variance_reduction(mc[fid], s))
        per_flow.append(row)
    doc = {"version": version, "config": config, "results": per_flow}
    _write_json(_summary_path(cfg.output), doc)
    return doc


def _shared_sampler(cfg: RunConfig, topo: Topology, flow_ids: list[int], seeds: dict):
    if cfg.method == "mc":
        return make_sampler("mc", topo)
    comps = [make_sampler("seed-vre", topo, seeds[fid]) for fid in flow_ids]
    return MixtureSampler(comps, _mixture_weights(cfg.weights, len(comps)))


def _flow_sampler(cfg: RunConfig, topo: Topology, indicator, coll: SeedCollection | None, k: int):
    if cfg.method == "is":
        marg = baseline_marginals(topo, indicator, coll, rng=[cfg.seed, k, 1])
        return make_sampler("baseline-is", topo, marginals=marg)
    return make_sampler(cfg.method, topo, coll, ie_cap=cfg.ie_cap)


# seeds

def run_enumerate_seeds(topology: str, flows: str, policy: str, output: str,
                        flow_ids: list[int] | None = None) -> list[SeedCollection]:
    topo, fs = _load_inputs(topology, flows)
    evaluator = NetworkEvaluator(topo, fs, policy)
    colls = [enumerate_seeds(topo, evaluator.indicator(fid), fid) for fid in (flow_ids or fs.ids)]
    save_seeds(output, colls)
    return colls


def run_collect_seeds(topology: str, flows: str, policy: str, output: str, n: int, seed: int | None,
                      inflation: float = 1.0, initial: str | None = None):
    if n < 0:
        raise UsageError("-n must be non-negative")
    if inflation <= 0:
        raise UsageError("--inflation must be positive")
    topo, fs = _load_inputs(topology, flows)
    evaluator = NetworkEvaluator(topo, fs, policy)
    start = None
    if initial is not None:
        start = list(_seed_map(topo, evaluator, initial, False, fs.ids).values())
    result = collect_seeds(topo, evaluator, n, _resolve_seed(seed), inflation, start)
    extra = {fid: {"coverage": result.coverage[fid], "observed_failures": result.observed_failures[fid]}
             for fid in fs.ids}
    save_seeds(output, result.collections, extra)
    return result


# planning

def run_plan_rank(args) -> list:
    topo, flows = _load_inputs(args.topology, args.flows)
    rankings = []
    metrics = args.metrics.split(",")
    for metric in metrics:
        if metric == "utilization":
            rankings.append(rank_utilization(topo, flows, args.policy, averaged=args.averaged,
                                             n=args.n, rng=args.seed))
        elif metric == "maxflow-delta":
            rankings.append(rank_maxflow_delta(topo, flows, unit=args.unit))
        elif metric == "seed-importance":
            evaluator = NetworkEvaluator(topo, flows, args.policy)
            unmet = args.unmet or flows.ids
            if args.seeds:
                seeds = _seed_map(topo, evaluator, args.seeds, False, unmet)
            else:
                seeds = proposal_seeds(topo, evaluator, rng=args.seed)
            rankings.append(rank_seed_importance(topo, flows, unmet, seeds, args.policy,
                                                 method=args.method, n=args.n, rng=args.seed,
                                                 evaluator=evaluator))
        else:
            raise UsageError(f"unknown metric {metric!r}")
    write_ranking_csv(args.output, rankings)
    return rankings


def run_plan_eval(args) -> list:
    base = Topology.load(args.topology) if args.topology else None
    proposals = [Proposal.load(p, base) for p in args.proposals]
    if not proposals:
        raise UsageError("plan-eval needs at least one proposal")
    reports = []
    for k, prop in enumerate(proposals):
        flows = FlowSet.load(args.flows, prop.apply())
        reports.append(evaluate_proposal(prop, flows, args.policy, args.method, confidence=args.confidence,
                                         batch=args.batch, budget=args.budget,
                                         rng=[_resolve_seed(args.seed), k]))
    write_feasibility_csv(args.output, reports)
    if args.ccdf:
        write_ccdf_csv(args.ccdf, reports)
    doc = {
        "version": tool_version(),
        "config": {k: v for k, v in vars(args).items() if k != "func"},
        "proposals": [{"label": r.label, "feasible": r.feasible, "undecided": r.undecided} for r in reports],
    }
    _write_json(_summary_path(args.output), doc)
    return reports


def run_oracle_check(args) -> dict:
    topo, flows = _load_inputs(args.topology, args.flows)
    evaluator = NetworkEvaluator(topo, flows, args.policy)
    out = {"version": tool_version(), "flows": []}
    for fid in args.flow_ids or flows.ids:
        ind = evaluator.indicator(fid)
        coll = enumerate_seeds(topo, ind, fid)
        samplers = {"mc": make_sampler("mc", topo)}
        if coll:
            samplers["baseline-is"] = make_sampler("baseline-is", topo, marginals=baseline_marginals(topo, ind))
            for rule in ("seed-zv", "seed-bre", "seed-vre"):
                samplers[rule] = make_sampler(rule, topo, coll)
        rep = exact_report(topo, ind, samplers, include_table=args.table)
        out["flows"].append({"flow_id": fid, "seeds": [sorted(s) for s in coll], **rep.to_dict()})
    text = json.dumps(out, indent=2, default=_json_default)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return out


# argument parsing

def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers") from None


def _add_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--topology", "-t", required=True, help="topology JSON")
    p.add_argument("--flows", "-f", required=True, help="flows JSON")
    p.add_argument("--policy", default=RoutingPolicy.SHORTEST_PATH_MAXMIN.value,
                   choices=[p.value for p in RoutingPolicy])
    p.add_argument("--flow-ids", type=_int_list, default=None, help="restrict to these flow ids")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fave", description="Flow availability estimation under link failures.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("estimate", "per-flow availability estimates"),
                            ("estimate-multi", "all flows from one shared draw stream")):
        p = sub.add_parser(name, help=help_text)
        _add_inputs(p)
        p.add_argument("--seeds", "-s", help="SEED JSON")
        p.add_argument("--method", "-m", default="seed-vre" if name == "estimate" else "mixture", choices=CLI_METHODS)
        p.add_argument("--n", "-n", type=int, default=10000, help="draws per estimate")
        p.add_argument("--seed", type=int, default=None, help="master RNG seed")
        p.add_argument("--confidence", type=float, default=0.95)
        p.add_argument("--delta", type=float, default=None, help="target CI width for required-N projection")
        p.add_argument("--delta-mode", choices=("abs", "rel"), default="rel")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--block", type=int, default=1000, help="draws per RNG stream block")
        p.add_argument("--output", "-o", default="results.csv")
        p.add_argument("--enumerate", action="store_true", help="enumerate SEED sets exhaustively")
        p.add_argument("--compare-mc", action="store_true", help="paired MC run for variance reduction")
        p.add_argument("--weights", default="equal", help="'equal' or comma-separated mixture weights")
        p.add_argument("--ie-cap", type=int, default=DEFAULT_IE_CAP)
        p.set_defaults(func=_cmd_estimate, shared=name == "estimate-multi")

    p = sub.add_parser("enumerate-seeds", help="exact SEED sets by exhaustive enumeration")
    _add_inputs(p)
    p.add_argument("--output", "-o", default="seeds.json")
    p.set_defaults(func=_cmd_enumerate)

    p = sub.add_parser("collect-seeds", help="SEED sets by sampling and SEED-Updating")
    _add_inputs(p)
    p.add_argument("--n", "-n", type=int, default=10000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--inflation", type=float, default=1.0, help="scale every p_i by this factor (capped at 1)")
    p.add_argument("--initial", help="SEED JSON to start from")
    p.add_argument("--output", "-o", default="seeds.json")
    p.set_defaults(func=_cmd_collect)

    p = sub.add_parser("plan-rank", help="link importance rankings")
    _add_inputs(p)
    p.add_argument("--metrics", default="utilization,maxflow-delta,seed-importance")
    p.add_argument("--seeds", "-s")
    p.add_argument("--unmet", type=_int_list, default=None, help="flows for seed-importance (default all)")
    p.add_argument("--method", default="seed-vre", choices=("seed-zv", "seed-bre", "seed-vre"))
    p.add_argument("--n", "-n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--unit", type=float, default=1.0, help="capacity increment for maxflow-delta")
    p.add_argument("--averaged", action="store_true", help="failure-averaged utilization")
    p.add_argument("--output", "-o", default="ranking.csv")
    p.set_defaults(func=_cmd_plan_rank)

    p = sub.add_parser("plan-eval", help="proposal feasibility against availability targets")
    p.add_argument("--flows", "-f", required=True)
    p.add_argument("--topology", "-t", help="base topology overriding each proposal's base")
    p.add_argument("--policy", default=RoutingPolicy.SHORTEST_PATH_MAXMIN.value,
                   choices=[p.value for p in RoutingPolicy])
    p.add_argument("--method", default="seed-vre", choices=("mc", "seed-zv", "seed-bre", "seed-vre"))
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--batch", type=int, default=1000)
    p.add_argument("--budget", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", "-o", default="feasibility.csv")
    p.add_argument("--ccdf", help="CCDF CSV of flow availability")
    p.add_argument("proposals", nargs="+", help="proposal JSON files")
    p.set_defaults(func=_cmd_plan_eval)

    p = sub.add_parser("oracle-check", help="exact reference values by enumeration")
    _add_inputs(p)
    p.add_argument("--table", action="store_true", help="include the per-configuration table")
    p.add_argument("--output", "-o")
    p.set_defaults(func=_cmd_oracle)
    return parser


def _cmd_estimate(args) -> int:
    cfg = RunConfig(
        topology=args.topology, flows=args.flows, seeds=args.seeds, method=args.method, n=args.n,
        seed=args.seed, confidence=args.confidence, delta=args.delta, delta_mode=args.delta_mode,
        workers=args.workers, output=args.output, policy=args.policy, enumerate=args.enumerate,
        compare_mc=args.compare_mc, weights=args.weights, flow_ids=args.flow_ids, block=args.block,
        ie_cap=args.ie_cap,
    )
    run_estimate(cfg, shared=args.shared)
    return EXIT_OK


def _cmd_enumerate(args) -> int:
    run_enumerate_seeds(args.topology, args.flows, args.policy, args.output, args.flow_ids)
    return EXIT_OK


def _cmd_collect(args) -> int:
    result = run_collect_seeds(args.topology, args.flows, args.policy, args.output, args.n, args.seed,
                               args.inflation, args.initial)
    for c in result.collections:
        print(f"flow {c.flow_id}: {len(c)} SEED sets, coverage {result.coverage[c.flow_id]:.4f}")
    return EXIT_OK


def _cmd_plan_rank(args) -> int:
    run_plan_rank(args)
    return EXIT_OK


def _cmd_plan_eval(args) -> int:
    reports = run_plan_eval(args)
    for r in reports:
        state = "feasible" if r.feasible else "infeasible"
        print(f"{r.label}: {state}" + (f" (undecided flows {r.undecided})" if r.undecided else ""))
    return EXIT_UNDECIDED if any(r.undecided for r in reports) else EXIT_OK


def _cmd_oracle(args) -> int:
    run_oracle_check(args)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, UsageError, KeyError, OSError) as exc:
        print(f"fave: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SupportError as exc:
        print(f"fave: support error: {exc}", file=sys.stderr)
        return EXIT_SUPPORT
    except (ExhaustiveLimitError, InclusionExclusionCapError) as exc:
        print(f"fave: limit exceeded: {exc} (limit {exhaustive_limit()})", file=sys.stderr)
        return EXIT_LIMIT
    except MonotonicityError as exc:
        print(f"fave: {exc}", file=sys.stderr)
        return EXIT_MONOTONE


if __name__ == "__main__":
    sys.exit(main())
