import json
import math

import pytest

from fave.network import Link, SchemaError, Topology
from fave.oracle import exact_conditional, exact_mu
from fave.planning import (
    ACHIEVED, DEFAULT_NEW_LINK_C, DEFAULT_NEW_LINK_P, UNDECIDED, UNREACHED, FeasibilityReport, FlowStatus,
    LinkRanking, Proposal, availability_ccdf, classify, conditional_failure, evaluate_proposal,
    rank_maxflow_delta, rank_seed_importance, rank_utilization, read_feasibility_csv, read_ranking_csv,
    write_ccdf_csv, write_feasibility_csv, write_ranking_csv,
)
from fave.routing import Flow, FlowSet, NetworkEvaluator, RoutingPolicy
from fave.samplers import stream_rng
from fave.seed import SeedCollection, enumerate_seeds
from _instances import diamond, diamond_flows, bypass_flows, bypass_network

BYPASS = SeedCollection(({1}, {4, 5}), flow_id=1)


def test_utilization_diamond(diamond_net, diamond_flowset):
    r = rank_utilization(diamond_net, diamond_flowset)
    assert r.score(1) == 1.0 and r.score(2) == 0.0 and r.score(3) == 0.0
    assert r.link_ids[0] == 1


def test_utilization_without_flows(diamond_net):
    r = rank_utilization(diamond_net, FlowSet(()))
    assert all(s == 0.0 for _, s in r.entries)


def test_utilization_two_flows_share_link():
    topo = Topology(("A", "B"), (Link(1, "A", "B", 0.01, 10.0),))
    flows = FlowSet((Flow(1, "A", "B", 5.0), Flow(2, "A", "B", 5.0)))
    assert rank_utilization(topo, flows).score(1) == 1.0


def test_utilization_averaged_bounded(diamond_net, diamond_flowset):
    r = rank_utilization(diamond_net, diamond_flowset, averaged=True, n=200, rng=stream_rng(2))
    assert 0.9 < r.score(1) <= 1.0


def test_maxflow_delta_diamond(diamond_net, diamond_flowset):
    r = rank_maxflow_delta(diamond_net, diamond_flowset)
    assert r.score(1) == 1.0
    assert r.score(2) == 0.0 and r.score(3) == 0.0


def test_maxflow_delta_unit(diamond_net, diamond_flowset):
    assert rank_maxflow_delta(diamond_net, diamond_flowset, unit=2.5).score(1) == 2.5
    with pytest.raises(ValueError):
        rank_maxflow_delta(diamond_net, diamond_flowset, unit=0)


def test_ranking_order_and_ties():
    r = LinkRanking.from_scores("utilization", {3: 0.5, 1: 0.5, 2: 0.9})
    assert r.link_ids == [2, 1, 3]
    assert [row["rank"] for row in r.rows()] == [1, 2, 3]


def test_rankings_deterministic(diamond_net, diamond_flowset):
    a = rank_utilization(diamond_net, diamond_flowset)
    b = rank_utilization(diamond_net, diamond_flowset)
    assert a == b


@pytest.fixture
def bypass_setup():
    topo, flows = bypass_network(), bypass_flows()
    ev = NetworkEvaluator(topo, flows)
    return topo, flows, ev


def test_seed_importance_seed_link_is_one(bypass_setup):
    topo, _, ev = bypass_setup
    est = conditional_failure(topo, ev.indicator(1), BYPASS, 1, n=50, rng=stream_rng(0))
    assert est.mean == pytest.approx(1.0, rel=1e-12)


def test_seed_importance_partial_seed_link(bypass_setup):
    topo, _, ev = bypass_setup
    est = conditional_failure(topo, ev.indicator(1), BYPASS, 4, n=200, rng=stream_rng(0))
    assert est.mean == pytest.approx(1.999e-3, rel=1e-9)
    assert exact_conditional(topo, ev.indicator(1), fixed={4: 1}) == pytest.approx(1.999e-3, rel=1e-12)


def test_seed_importance_ranking(bypass_setup):
    topo, flows, ev = bypass_setup
    r = rank_seed_importance(topo, flows, [1], {1: BYPASS}, n=200, rng=stream_rng(4))
    assert r.link_ids[0] == 1
    for j in (2, 3):
        assert r.score(j) == pytest.approx(exact_mu(topo, ev.indicator(1)), rel=1e-9)
    assert r.score(4) == pytest.approx(r.score(5))


def test_seed_importance_link_outside_seeds_scores_zero():
    topo = Topology(("A", "B", "C"), (
        Link(1, "A", "B", 0.01, math.inf), Link(2, "A", "C", 0.01, math.inf),
    ))
    flows = FlowSet((Flow(1, "A", "B", 1.0),))
    ev = NetworkEvaluator(topo, flows)
    seeds = {1: enumerate_seeds(topo, ev.indicator(1), 1)}
    r = rank_seed_importance(topo, flows, [1], seeds, n=100, rng=stream_rng(0))
    assert r.score(1) == 1.0
    assert r.score(2) == pytest.approx(0.01, rel=1e-12)
    assert exact_conditional(topo, ev.indicator(1), fixed={2: 1}) == pytest.approx(0.01)


def test_seed_importance_matches_oracle_within_ci(diamond_net, diamond_flowset):
    ev = NetworkEvaluator(diamond_net, diamond_flowset)
    coll = enumerate_seeds(diamond_net, ev.indicator(1), 1)
    for j in (1, 2, 3):
        est = conditional_failure(diamond_net, ev.indicator(1), coll, j, "seed-bre", 2000, stream_rng(j))
        exact = exact_conditional(diamond_net, ev.indicator(1), fixed={j: 1})
        lo, hi = est.ci
        assert lo - 1e-12 <= exact <= hi + 1e-12


def test_seed_importance_errors(bypass_setup):
    topo, flows, _ = bypass_setup
    with pytest.raises(ValueError):
        rank_seed_importance(topo, flows, [], {1: BYPASS})
    with pytest.raises(ValueError):
        rank_seed_importance(topo, flows, [1], {1: BYPASS}, method="mc")


def test_ranking_csv_round_trip(tmp_path, diamond_net, diamond_flowset):
    rankings = [rank_utilization(diamond_net, diamond_flowset), rank_maxflow_delta(diamond_net, diamond_flowset)]
    path = tmp_path / "rank.csv"
    write_ranking_csv(path, rankings)
    assert path.read_text().splitlines()[0] == "rank,link_id,metric,score"
    assert read_ranking_csv(path) == rankings


def test_classify():
    assert classify(0.99, 0.995, 0.99) == ACHIEVED
    assert classify(0.9, 0.98, 0.99) == UNREACHED
    assert classify(0.98, 0.995, 0.99) == UNDECIDED


def test_zero_targets_feasible(diamond_net):
    rep = evaluate_proposal(diamond_net, diamond_flows(target=0.0), rng=stream_rng(0))
    assert rep.feasible and rep.flows[0].status == ACHIEVED


def test_bypass_flow_vs_four_nines(bypass_setup):
    topo, _, _ = bypass_setup
    rep = evaluate_proposal(topo, bypass_flows(target=0.9999), rng=stream_rng(1))
    assert rep.flows[0].status == UNREACHED and not rep.feasible
    assert rep.flows[0].availability == pytest.approx(1 - 1.000999e-3, rel=1e-9)


def test_bypass_flow_vs_two_nines(bypass_setup):
    topo, _, _ = bypass_setup
    rep = evaluate_proposal(topo, bypass_flows(target=0.99), rng=stream_rng(1))
    assert rep.feasible


def test_budget_exhaustion_is_undecided():
    topo = diamond((0.3, 0.3, 0.3))
    flows = diamond_flows()
    target = 1 - exact_mu(topo, NetworkEvaluator(topo, flows).indicator(1))
    rep = evaluate_proposal(topo, diamond_flows(target=target), method="mc", batch=100, budget=300,
                            rng=stream_rng(1))
    assert rep.undecided == [1] and rep.flows[0].n == 300


def test_proposal_defaults_and_apply(diamond_net):
    prop = Proposal.from_dict({"label": "x", "added_links": [{"src": "A", "dst": "B"}]}, base=diamond_net)
    assert prop.added_links == (("A", "B", DEFAULT_NEW_LINK_P, DEFAULT_NEW_LINK_C),)
    topo = prop.apply()
    assert topo.n_links == 4 and topo.link(4).p == 0.01 and topo.link(4).c == 2500.0


def test_proposal_file_round_trip(tmp_path, diamond_net):
    diamond_net.save(tmp_path / "base.json")
    doc = {"label": "p1", "base": "base.json", "added_links": [{"src": "C", "dst": "B", "p": 0.0, "c": None}]}
    (tmp_path / "p1.json").write_text(json.dumps(doc))
    prop = Proposal.load(tmp_path / "p1.json")
    assert prop.base == diamond_net
    assert prop.to_dict() == {**doc, "added_links": [{"src": "C", "dst": "B", "p": 0.0, "c": None}]}
    inline = Proposal.from_dict({**prop.to_dict(), "base": diamond_net.to_dict()})
    assert inline.apply() == prop.apply()


@pytest.mark.parametrize("doc", [
    {"added_links": [{"src": "A", "dst": "Z"}]},
    {"added_links": [{"src": "A", "dst": "B", "p": 1.5}]},
    {"added_links": [{"src": "A", "dst": "B", "c": -1}]},
    {"added_links": [{"src": "A"}]},
    {"added_links": {}},
    {"added_links": [], "label": 3},
])
def test_proposal_schema_errors(doc, diamond_net):
    with pytest.raises(SchemaError):
        Proposal.from_dict(doc, base=diamond_net)


def test_proposal_needs_base():
    with pytest.raises(SchemaError):
        Proposal.from_dict({"added_links": []})


def test_zero_probability_parallel_link_never_hurts():
    base = diamond((0.05, 0.05, 0.05))
    flows = diamond_flows(demand=5.0, target=0.99)
    prop = Proposal(base, (("A", "B", 0.0, 10.0),), "backup")
    for policy in RoutingPolicy:
        before = NetworkEvaluator(base, flows, policy)
        after = NetworkEvaluator(prop.apply(), flows, policy)
        mu_b = exact_mu(base, before.indicator(1))
        mu_a = exact_mu(prop.apply(), after.indicator(1))
        assert mu_a <= mu_b
        r_b = evaluate_proposal(base, flows, policy, rng=stream_rng(3))
        r_a = evaluate_proposal(prop, flows, policy, rng=stream_rng(3))
        assert not (r_b.flows[0].status == ACHIEVED and r_a.flows[0].status == UNREACHED)


def test_feasibility_csv_round_trip(tmp_path):
    reps = [FeasibilityReport("a", (FlowStatus(1, 0.99, 0.995, 0.992, 0.998, ACHIEVED, 1000),
                                    FlowStatus(2, 0.999, 0.99, 0.98, 0.995, UNREACHED, 2000))),
            FeasibilityReport("b", (FlowStatus(1, 0.9, 0.9, 0.85, 0.95, UNDECIDED, 500),))]
    path = tmp_path / "f.csv"
    write_feasibility_csv(path, reps)
    assert read_feasibility_csv(path) == reps


def test_ccdf_rows(tmp_path):
    rep = FeasibilityReport("a", (FlowStatus(1, 0, 0.9, 0, 1, ACHIEVED, 1),
                                  FlowStatus(2, 0, 0.99, 0, 1, ACHIEVED, 1)))
    rows = availability_ccdf(rep)
    assert [(r["availability"], r["ccdf"]) for r in rows] == [(0.9, 1.0), (0.99, 0.5)]
    write_ccdf_csv(tmp_path / "c.csv", [rep])
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "proposal,availability,ccdf"
