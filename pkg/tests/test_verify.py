import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mabmech.domain import AdInstance
from mabmech.env import exact_expected_clicks
from mabmech.rules import AllParams, AllRule, all_closed_form_clicks, make_rule
from mabmech.verify import (
    DegenerateAllZero,
    InvalidDimensions,
    Scenario,
    ScenarioMismatch,
    affine_maximizer_residual,
    build_hessian,
    cmon_search,
    cycle_sum,
    find_wmon_violation,
    fixed_distribution_welfare,
    hessian_build_and_check,
    homogeneity_probe,
    moments,
    myerson_payment_oracle,
    power_means,
    rule_welfare,
    single_click_realization,
    threshold_check,
    welfare_report,
    wmon_value,
)
from mabmech.verify.affine import certificate_terms, exploit_round_clicks
from mabmech.verify.report import dumps, witnesses_csv
from mabmech.verify.welfare import skew_threshold

from conftest import AllSkipRule, AntiMonotoneRule


def enumerated(rule, inst):
    return lambda x: exact_expected_clicks(rule, x, inst)


# cycle monotonicity


def test_cycle_sum_two_cycle_is_wmon():
    t = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    o = [np.array([0.0, 1.0]), np.array([1.0, 0.0])]
    # theta_0(o_0) - theta_1(o_0) + theta_1(o_1) - theta_0(o_1)
    assert cycle_sum(t, o) == -2.0


def test_rand_has_no_cycle_witnesses():
    inst = AdInstance.build([0, 0, 1], [1, 1, 1], [0.5, 0.7, 0.2], 3)
    res = cmon_search(enumerated(make_rule("rand"), inst), inst, 0, inst.values, (0.0, 0.5, 1.0))
    assert res.exhaustive and not res.witnesses
    assert res.min_cycle_sum == pytest.approx(0.0, abs=1e-12)


def test_all_has_no_cycle_witnesses():
    inst = AdInstance.build([0, 1], [1, 1], [0.5, 0.5], 3)
    for agent in (0, 1):
        res = cmon_search(enumerated(AllRule(), inst), inst, agent, inst.values, (0.0, 0.5, 1.0))
        assert not res.witnesses
        assert res.cycles_checked == 9 + 27


def test_anti_monotone_rule_has_two_cycle_witness():
    inst = AdInstance.build([0, 1], [1, 1], [0.5, 0.5], 3)
    res = cmon_search(enumerated(AntiMonotoneRule(), inst), inst, 0, inst.values, (0.0, 0.5, 1.0), k_max=2)
    assert res.witnesses and all(len(w.types) == 2 for w in res.witnesses)
    w = res.witnesses[0]
    assert w.cycle_sum < -1e-9
    assert w.cycle_sum == pytest.approx(cycle_sum(w.types, w.outcomes))
    assert set(w.to_dict()) == {"agent", "k", "cycle_sum", "types", "outcomes"}


def test_sampled_cycles_when_grid_is_large():
    inst = AdInstance.build([0, 1], [1, 1], [0.5, 0.5], 3)
    fn = lambda x: all_closed_form_clicks(x, inst)
    res = cmon_search(fn, inst, 0, inst.values, np.linspace(0, 1, 11), k_max=3, exhaustive_limit=500, samples=5000)
    assert not res.exhaustive and not res.witnesses


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.05, 1), min_size=3, max_size=3), st.lists(st.floats(0, 1), min_size=3, max_size=3))
def test_two_cycle_and_wmon_agree(ctrs, others):
    # on expected clicks a negative 2-cycle is exactly a negative WMON pair
    inst = AdInstance.build([0, 1, 0], [1, 1, 1], ctrs, 2)
    for rule in (AllRule(), AntiMonotoneRule()):
        fn = enumerated(rule, inst)
        res = cmon_search(fn, inst, 0, others, (0.0, 0.5, 1.0), k_max=2)
        ads = inst.ads_of(0)
        worst = np.inf
        for a in np.array(np.meshgrid([0, 0.5, 1], [0, 0.5, 1])).T.reshape(-1, 2):
            for c in np.array(np.meshgrid([0, 0.5, 1], [0, 0.5, 1])).T.reshape(-1, 2):
                ba, bc = np.array(others, float), np.array(others, float)
                ba[ads], bc[ads] = a, c
                worst = min(worst, float((c - a) @ (fn(bc) - fn(ba))[ads]))
        assert bool(res.witnesses) == (worst < -1e-9)


# weak monotonicity


def test_greedy_constructed_counterexample():
    inst = AdInstance.build([0, 0], [1, 1], [0.5, 0.5], 2)
    rule = make_rule("greedy", 0)
    rho = single_click_realization(2, 2, 1, [0])
    # (0,1) commits to ad 1 and earns its click; (2,2) ties to ad 0 and earns nothing
    assert wmon_value(rule, inst, [0, 1], [2, 2], rho) == -1.0
    w = find_wmon_violation(rule, inst, [0.0, 1.0, 2.0])
    assert w is not None and w.value <= -1 + 1e-9
    assert w.value == -2.0


@pytest.mark.parametrize("rule", [make_rule("rand"), AllSkipRule()], ids=["rand", "all-skip"])
def test_rules_without_violations(rule):
    inst = AdInstance.build([0, 1], [1, 1], [0.5, 0.5], 2)
    assert find_wmon_violation(rule, inst, [0.0, 0.5, 1.0]) is None


# payment identity


def test_zero_bid_pays_nothing():
    inst = AdInstance.build([0, 1], [0, 1], [0.5, 0.5], 2)
    assert myerson_payment_oracle(enumerated(AllRule(), inst), [0, 1], 0, inst) == 0.0


@pytest.mark.parametrize("b, mu", [(1.0, 1.0), (0.6, 0.3), (0.25, 0.9)])
def test_single_ad_single_agent_payment(b, mu):
    # clicks mu + b mu^2 / 4 with one exploration round in two, so pay = b^2 mu^2 / 8
    inst = AdInstance.build([0], [b], [mu], 2)
    fn = enumerated(make_rule("all-single"), inst)
    assert fn([b])[0] == pytest.approx(mu + b * mu ** 2 / 4, abs=1e-15)
    assert myerson_payment_oracle(fn, [b], 0, inst) == pytest.approx(b ** 2 * mu ** 2 / 8, abs=1e-14)


def test_linear_toy_payment():
    # transformed allocation of x -> x at delta = 1/2 is (2/3) x, so pay(1) = 1/3
    assert myerson_payment_oracle(lambda x: np.asarray(x) * 2 / 3, [1.0], 0, [0]) == pytest.approx(1 / 3, abs=1e-15)


def test_payment_identity_needs_two_nodes():
    with pytest.raises(ValueError):
        myerson_payment_oracle(lambda x: x, [1.0], 0, [0], quadrature_nodes=1)


# welfare moments


def test_moment_examples():
    uniform = power_means([0.3, 0.3, 0.3])
    assert uniform.sigma == pytest.approx(1.0) and uniform.gap == pytest.approx(0.0, abs=1e-15)
    one_good = power_means([0.8, 0, 0, 0])
    assert one_good.sigma == pytest.approx(4.0)
    s = power_means([1.0, 0.0])
    assert (s.m1, s.m2_sq, s.sigma, s.gap) == (0.5, 0.5, 2.0, 0.25)
    with pytest.raises(DegenerateAllZero):
        power_means([0.0, 0.0]).sigma


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=8).filter(any))
def test_sigma_between_one_and_m(p):
    s = power_means(p)
    assert 1 - 1e-12 <= s.sigma <= len(p) + 1e-12
    assert s.gap >= -1e-15


def test_welfare_report_all():
    inst = AdInstance.build([0, 1], [1, 0], [1, 1], 2)
    rep = welfare_report("all", [1, 0], inst, exact=True)
    assert rep.exploit_welfare == pytest.approx(0.75, abs=1e-15)
    assert rep.rand_welfare == 0.5 and rep.gap == pytest.approx(0.25)
    assert rep.identity_residual <= 1e-15


def test_welfare_report_single_agent(single_agent_example):
    rep = welfare_report("all-single", [1, 1], single_agent_example, exact=True)
    assert rep.exploit_welfare == pytest.approx(8 / 9, abs=1e-12)
    assert rep.exploration_welfare == pytest.approx(2 / 3, abs=1e-12)
    assert rep.identity_residual <= 1e-12


@pytest.mark.parametrize("name", ["rand", "all", "sampled-sp"])
def test_welfare_identity_against_enumeration(name):
    inst = AdInstance.build([0, 1, 0], [0.9, 0.3, 0.6], [0.4, 0.8, 0.7], 3)
    rep = welfare_report(name, inst.values, inst, AllParams(1), exact=True)
    assert rep.identity_residual <= 1e-12


def test_welfare_report_rejects_greedy(two_agent):
    with pytest.raises(ValueError):
        welfare_report("greedy", two_agent.values, two_agent)


# thresholds


def test_threshold_single_agent_example():
    assert skew_threshold("b", 2, 0.9, 101) == pytest.approx(2.7, abs=1e-12)
    inst = AdInstance.build([0, 0], [0.95, 0.0], [1.0, 1.0], 101)
    v = threshold_check(inst.values, inst, Scenario("b", 0.9))
    assert v.sigma == pytest.approx(2.0) and v.threshold == pytest.approx(2.7)
    assert not v.predicts_improvement and v.baseline == "rand"


def test_threshold_multi_agent():
    inst = AdInstance.build([0, 1], [1.0, 0.0], [1.0, 1.0], 2)
    v = threshold_check(inst.values, inst, Scenario("a"))
    assert v.threshold == 1.0 and v.predicts_improvement
    flat = AdInstance.build([0, 1], [0.5, 0.5], [1.0, 1.0], 2)
    assert not threshold_check(flat.values, flat, Scenario("a")).predicts_improvement


def test_threshold_large_agent():
    inst = AdInstance.build([0, 0, 1], [1.0, 0.2, 0.0], [1.0, 1.0, 1.0], 4)
    v = threshold_check(inst.values, inst, Scenario("c", 0.5, agent=0))
    assert v.threshold == pytest.approx(1 + 3 * 1 / (2 * 0.5))
    assert v.baseline == "sampled-sp"


@pytest.mark.parametrize(
    "owners, values, scenario",
    [
        ([0, 0], [0.9, 0.0], Scenario("a")),
        ([0, 1], [0.9, 0.0], Scenario("b", 0.5)),
        ([0, 0], [0.9, 0.0], Scenario("b", 0.9)),
        ([0, 0], [0.9, 0.0], Scenario("b", None)),
        ([0, 1, 1], [0.9, 0.1, 0.0], Scenario("c", 0.5, agent=0)),
        ([0, 0, 1], [0.9, 0.1, 0.3], Scenario("c", 0.5, agent=0)),
        ([0, 1], [0.9, 0.0], Scenario("z")),
    ],
)
def test_threshold_mismatches(owners, values, scenario):
    inst = AdInstance.build(owners, values, [1.0] * len(owners), 4)
    with pytest.raises(ScenarioMismatch):
        threshold_check(inst.values, inst, scenario)


# Hessian and affine-maximizer certificate


def test_hessian_examples():
    assert np.allclose(build_hessian([0.5], 2).matrix, [[16.0]], rtol=1e-14, atol=0)
    assert np.allclose(build_hessian([1.0, 1.0], 3).matrix, [[6, 3], [3, 6]], atol=1e-14)


@pytest.mark.parametrize("mu, m", [([0.5, 0.5], 2), ([], 3), ([0.5, 0.0], 3)])
def test_hessian_invalid_dimensions(mu, m):
    with pytest.raises(InvalidDimensions):
        build_hessian(mu, m)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.data())
def test_hessian_positive_definite_and_gram(m, data):
    k = data.draw(st.integers(1, m - 1))
    mu = np.array(data.draw(st.lists(st.floats(0.05, 1), min_size=k, max_size=k)))
    h = hessian_build_and_check(mu, m)
    assert h.positive_definite
    assert h.gram_relative <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.data())
def test_hessian_is_jacobian_of_gradient_map(m, data):
    k = data.draw(st.integers(1, m - 1))
    b = np.array(data.draw(st.lists(st.floats(0, 1), min_size=m, max_size=m)))
    mu = np.array(data.draw(st.lists(st.floats(0.05, 1), min_size=m, max_size=m)))
    terms = certificate_terms(b, mu, m, np.arange(k))
    f0 = terms.f(np.zeros(k))
    # f is affine, so its columns are f(e_j) - f(0)
    J = np.array([terms.f(np.eye(k)[j]) - f0 for j in range(k)]).T
    H = build_hessian(mu[:k], m).matrix
    assert np.allclose(J, H, rtol=1e-12, atol=0)


def test_exploit_round_clicks_match_rule():
    inst = AdInstance.build([0, 1, 1], [0.9, 0.4, 0.7], [0.6, 0.3, 0.8], 5)
    per_round = AllRule().expected_clicks_by_round(inst.values, inst)
    assert np.allclose(exploit_round_clicks(inst.values, inst.ctrs), per_round[-1], atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.data())
def test_affine_certificate(m, data):
    k = data.draw(st.integers(1, m - 1))
    b = np.array(data.draw(st.lists(st.floats(0, 1), min_size=m, max_size=m)))
    mu = np.array(data.draw(st.lists(st.floats(0.05, 1), min_size=m, max_size=m)))
    rep = affine_maximizer_residual(b, mu, m, np.arange(k), grid_points=200)
    assert rep.f_residual <= 1e-9 and rep.critical_residual <= 1e-9 and rep.solve_residual <= 1e-9
    assert rep.grad_residual <= 1e-6
    assert rep.grid_ok


# homogeneity


def test_homogeneity_expectations():
    inst = AdInstance.build([0, 1, 1], [0.9, 0.4, 0.7], [0.6, 0.3, 0.8], 4)
    b = inst.values
    assert homogeneity_probe(rule_welfare(make_rule("rand"), b, inst), inst.ctrs) <= 1e-12
    assert homogeneity_probe(fixed_distribution_welfare([0.2, 0.5, 0.3], b, 4), inst.ctrs) <= 1e-12
    assert homogeneity_probe(rule_welfare(AllRule(), b, inst), inst.ctrs) > 1e-6


# reports


def test_report_serialisation():
    inst = AdInstance.build([0, 0], [1, 1], [0.5, 0.5], 2)
    w = find_wmon_violation(make_rule("greedy", 0), inst, [0.0, 1.0, 2.0])
    text = witnesses_csv([w], {"seed": 3})
    lines = text.split("\r\n")
    assert lines[0].startswith("seed,") and lines[1].startswith("3,")
    doc = json.loads(dumps({"b": np.float64(1.5), "a": [w], "c": np.bool_(True)}))
    assert list(doc) == ["a", "b", "c"] and doc["a"][0]["value"] == -2.0


def test_moments_from_instance(two_agent):
    assert moments([1.0, 0.5], two_agent).m1 == pytest.approx((0.5 + 0.25) / 2)
