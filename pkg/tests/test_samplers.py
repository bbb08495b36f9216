import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fave.network import FailureConfig, config_prob, log_config_prob, psi
from fave.oracle import (
    exact_conditional, exact_estimator_mean, exact_marginals, exact_mu, sampler_log_densities, zero_variance_density,
)
from fave.samplers import (
    AbsoluteContinuityError, InclusionExclusionCapError, MixtureSampler, MonteCarloSampler, ProductSampler,
    SeedSampler, baseline_marginals, density, draw_baseline_is, draw_mc, draw_mixture, draw_seed_bre,
    draw_seed_vre, draw_seed_zv, make_sampler, stream_rng,
)
from fave.seed import SeedCollection, SpanIndicator
from _instances import chain, parallel3, random_instance

BYPASS = SeedCollection(({1}, {4, 5}))
MU_BYPASS = 1.000999e-3


def test_mc_degenerate_probabilities():
    d = draw_mc(chain(4, 0.0), 1)
    assert d.config.mask == 0 and d.weight == 1.0
    d = draw_mc(chain(4, 1.0), 1)
    assert d.config.mask == 0b1111 and d.weight == 1.0


def test_mc_frequency_matches_exact_mu():
    topo, ind = parallel3()
    mu = exact_mu(topo, ind)
    rng = stream_rng(11)
    s = MonteCarloSampler(topo)
    hits = np.array([ind(s.draw(rng).config) for _ in range(20000)])
    assert abs(hits.mean() - mu) <= 3 * math.sqrt(mu * (1 - mu) / hits.size)


def test_baseline_is_parallel3_values():
    topo, ind = parallel3()
    marg = exact_marginals(topo, ind)
    assert marg == pytest.approx((0.50025, 1.0, 0.50025), abs=5e-6)
    s = ProductSampler(topo, marg)
    assert s.density(FailureConfig.from_bits((1, 1, 1))) == pytest.approx(0.25025, abs=5e-6)
    x = FailureConfig.from_bits((1, 1, 0))
    w = math.exp(log_config_prob(x, topo) - s.log_density(x))
    assert w == pytest.approx((0.001 * 0.2 * 0.999) / (marg[0] * 1.0 * (1 - marg[2])), rel=1e-12)


def test_baseline_is_rejects_zero_marginal():
    with pytest.raises(AbsoluteContinuityError):
        ProductSampler(chain(2, 0.1), (0.0, 0.5))


def test_zv_root_estimate_and_conditional():
    topo = chain(5, 0.001)
    s = SeedSampler(topo, BYPASS, "zv")
    assert math.exp(s.root_log_estimate) == pytest.approx(1e-3 + 1e-6 - 1e-9, rel=1e-12)
    after = s._transition(s._root)[1]
    assert math.exp(s.log_estimate(after)) == pytest.approx(1e-6, rel=1e-12)


def test_zv_draws_are_zero_variance():
    topo, ind = chain(5, 0.001), SpanIndicator(BYPASS)
    rng = stream_rng(3)
    for _ in range(200):
        d = draw_seed_zv(topo, BYPASS, rng)
        assert ind(d.config) == 1
        assert d.weight == pytest.approx(MU_BYPASS, rel=1e-9)


def test_zv_cap():
    seeds = SeedCollection(tuple({i} for i in range(1, 7)))
    with pytest.raises(InclusionExclusionCapError):
        SeedSampler(chain(6, 0.01), seeds, "zv", ie_cap=5)


def test_bre_vre_root_estimates():
    topo = chain(3, 0.01)
    seeds = SeedCollection(({1}, {2, 3}))
    bre = SeedSampler(topo, seeds, "bre")
    vre = SeedSampler(topo, seeds, "vre")
    assert math.exp(bre.root_log_estimate) == pytest.approx(0.01, rel=1e-12)
    assert math.exp(vre.root_log_estimate) == pytest.approx(0.0101, rel=1e-12)
    assert bre._transition(bre._root)[5] == pytest.approx(1 / (1 + 0.0099), rel=1e-12)


def test_vre_estimate_is_clamped():
    s = SeedSampler(chain(3, 0.9), SeedCollection(({1}, {2}, {3})), "vre")
    assert s.root_log_estimate == 0.0


def test_bypass_vre_ten_draws():
    topo, ind = chain(5, 0.001), SpanIndicator(BYPASS)
    rng = stream_rng(5)
    vals = [d.weight * ind(d.config) for d in (draw_seed_vre(topo, BYPASS, rng) for _ in range(10))]
    assert np.mean(vals) == pytest.approx(MU_BYPASS, rel=1e-9)
    assert np.var(vals, ddof=1) <= 1e-20


@pytest.mark.parametrize("rule", ["zv", "bre", "vre"])
def test_seed_sampler_unbiased_by_enumeration(rule):
    for seed in range(10):
        inst = random_instance(seed + 200)
        s = SeedSampler(inst.topo, inst.seeds(), rule)
        assert exact_estimator_mean(inst.topo, inst.indicator(), s) == pytest.approx(
            exact_mu(inst.topo, inst.indicator()), rel=1e-9)


def test_densities_sum_to_one():
    inst = random_instance(210)
    coll = inst.seeds()
    for s in (MonteCarloSampler(inst.topo), SeedSampler(inst.topo, coll, "bre"), SeedSampler(inst.topo, coll, "vre")):
        assert math.fsum(np.exp(sampler_log_densities(inst.topo, s))) == pytest.approx(1.0, abs=1e-9)


def test_density_examples():
    topo = chain(5, 0.001)
    x = psi({1}, 5)
    mc = MonteCarloSampler(topo)
    assert math.exp(density(mc, x)) == pytest.approx(config_prob(x, topo), rel=1e-12)
    zv = SeedSampler(topo, BYPASS, "zv")
    q_star = zero_variance_density(topo, SpanIndicator(BYPASS))
    assert math.exp(density(zv, x)) == pytest.approx(q_star[x.mask], rel=1e-9)
    vre = SeedSampler(topo, BYPASS, "vre")
    mix = MixtureSampler([mc, vre], (0.5, 0.5))
    for m in range(32):
        y = FailureConfig(m, 5)
        assert mix.density(y) == pytest.approx(0.5 * mc.density(y) + 0.5 * vre.density(y), rel=1e-12)


def test_density_outside_support_is_minus_inf():
    zv = SeedSampler(chain(5, 0.001), BYPASS, "zv")
    assert density(zv, FailureConfig.all_up(5)) == -math.inf


def test_draw_weights_match_density_replay():
    inst = random_instance(220, max_flows=3)
    colls = [inst.seeds(fid) for fid in inst.flows.ids]
    comps = [SeedSampler(inst.topo, c, "vre") for c in colls]
    samplers = [MonteCarloSampler(inst.topo), SeedSampler(inst.topo, colls[0], "bre"), MixtureSampler(comps)]
    rng = stream_rng(1)
    for s in samplers:
        for _ in range(100):
            d = s.draw(rng)
            expected = log_config_prob(d.config, inst.topo) - s.log_density(d.config)
            assert d.log_weight == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_normalized_branch_probabilities():
    inst = random_instance(230)
    for rule in ("zv", "bre", "vre"):
        s = SeedSampler(inst.topo, inst.seeds(), rule)
        rng = stream_rng(2)
        for _ in range(50):
            s.draw(rng)
        for t in s._trans.values():
            if t is None:
                continue
            j, s0, s1, lw0, lw1, q1 = t
            q0 = 0.0 if math.isnan(lw0) else math.exp(s._lq[j] - lw0)
            assert q0 + q1 == pytest.approx(1.0, abs=1e-12)


def test_single_component_mixture_equals_component():
    topo = chain(5, 0.001)
    vre = SeedSampler(topo, BYPASS, "vre")
    mix = MixtureSampler([vre])
    for m in range(32):
        x = FailureConfig(m, 5)
        assert mix.log_density(x) == pytest.approx(vre.log_density(x))
    d = mix.draw(stream_rng(9))
    assert d.log_weight == pytest.approx(vre.log_weight_of(d.config))


def test_mixture_weights_validated():
    mc = MonteCarloSampler(chain(2, 0.1))
    with pytest.raises(ValueError):
        MixtureSampler([mc, mc], (0.7, 0.7))
    with pytest.raises(ValueError):
        MixtureSampler([])


def test_mixture_unbiased_for_every_flow():
    inst = random_instance(240, max_flows=4)
    colls = {fid: inst.seeds(fid) for fid in inst.flows.ids}
    mix = MixtureSampler([SeedSampler(inst.topo, c, "vre") for c in colls.values()])
    for fid in inst.flows.ids:
        ind = inst.indicator(fid)
        assert exact_estimator_mean(inst.topo, ind, mix) == pytest.approx(exact_mu(inst.topo, ind), rel=1e-9)


def test_custom_order_keeps_unbiasedness():
    inst = random_instance(250)
    n = inst.topo.n_links
    order = list(range(n, 0, -1))
    s = SeedSampler(inst.topo, inst.seeds(), "vre", order=order)
    assert exact_estimator_mean(inst.topo, inst.indicator(), s) == pytest.approx(
        exact_mu(inst.topo, inst.indicator()), rel=1e-9)
    with pytest.raises(ValueError):
        SeedSampler(inst.topo, inst.seeds(), "vre", order=[1] * n)


def test_forced_first_link_matches_exact_conditional():
    topo = chain(5, 0.001)
    forced = topo.with_probabilities([0.001, 0.001, 0.001, 1.0, 0.001])
    s = SeedSampler(forced, BYPASS, "zv", order=(4, 1, 2, 3, 5))
    expected = exact_conditional(topo, SpanIndicator(BYPASS), fixed={4: 1})
    assert expected == pytest.approx(1 - 0.999 ** 2, rel=1e-12)
    assert math.exp(s.root_log_estimate) == pytest.approx(expected, rel=1e-9)


def test_empty_seed_collection_behaves_like_mc():
    topo = chain(3, 0.2)
    s = SeedSampler(topo, SeedCollection(()), "vre")
    d = s.draw(stream_rng(0))
    assert d.log_weight == 0.0


def test_make_sampler_and_functional_forms():
    topo = chain(5, 0.001)
    assert make_sampler("mc", topo).tag == "mc"
    assert make_sampler("seed-bre", topo, BYPASS).tag == "seed-bre"
    assert make_sampler("is", topo, marginals=[0.5] * 5).tag == "baseline-is"
    with pytest.raises(ValueError):
        make_sampler("seed-vre", topo)
    with pytest.raises(ValueError):
        make_sampler("bogus", topo)
    assert draw_seed_bre(topo, BYPASS, 1).sampler_tag == "seed-bre"
    assert draw_baseline_is(topo, [0.5] * 5, 1).sampler_tag == "baseline-is"
    assert draw_mixture([MonteCarloSampler(topo)], [1.0], 1).sampler_tag == "mixture"


def test_rng_streams_reproducible_and_distinct():
    a = stream_rng(42, 0).random(4)
    assert np.array_equal(a, stream_rng(42, 0).random(4))
    assert not np.array_equal(a, stream_rng(42, 1).random(4))


def test_baseline_marginals_pilot_path():
    topo, ind = chain(5, 0.001), SpanIndicator(BYPASS)
    exact = baseline_marginals(topo, ind)
    pilot = baseline_marginals(topo, ind, BYPASS, n_pilot=3000, rng=1, limit=2)
    assert pilot == pytest.approx(exact, abs=0.05)
    assert np.all(pilot >= topo.p)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 500), st.sampled_from(["bre", "vre"]))
def test_seed_samplers_unbiased_property(seed, rule):
    inst = random_instance(seed + 600, max_links=7)
    s = SeedSampler(inst.topo, inst.seeds(), rule)
    assert exact_estimator_mean(inst.topo, inst.indicator(), s) == pytest.approx(
        exact_mu(inst.topo, inst.indicator()), rel=1e-9)
