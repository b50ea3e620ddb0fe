import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mabmech.batch import draw_trials
from mabmech.domain import AdInstance
from mabmech.rules import AllRule, all_closed_form_clicks, make_rule
from mabmech.transform import (
    TINY,
    InvalidDelta,
    draw_rescale,
    expected_outcome_oracle,
    match_probability_estimate,
    payment_factor,
    rescale_from_uniforms,
    rescale_law,
    run_mechanism,
    run_mechanism_batch,
    run_single_parameter,
    transformed_expected_clicks,
)
from mabmech.verify import cmon_search, myerson_payment_oracle


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_delta_outside_open_interval(delta):
    with pytest.raises(InvalidDelta):
        draw_rescale(delta, 2, np.random.default_rng(0))


def test_keep_probability():
    d = draw_rescale(0.01, 10**5, np.random.default_rng(1))
    assert abs(d.is_full.mean() - 0.99) <= 0.003
    assert np.all(d.chi[d.is_full] == 1.0)


def test_scaled_branch_law():
    d = draw_rescale(0.5, 10**6, np.random.default_rng(2))
    scaled = d.chi[~d.is_full]
    # chi = gamma^2 on this branch: mean 1/3, Pr[chi <= 1/4] = Pr[gamma <= 1/2]
    assert abs(scaled.mean() - 1 / 3) <= 0.01
    assert abs((scaled <= 0.25).mean() - 0.5) <= 0.01
    assert np.all((scaled > 0) & (scaled <= 1))


def test_underflow_floor():
    d = rescale_from_uniforms([0.999], [1e-200], 0.5)
    assert d.chi[0] == TINY and not d.is_full[0]


@pytest.mark.parametrize("delta", [0.05, 0.3, 0.5, 0.9])
def test_law_mean(delta):
    chi, w, _ = rescale_law(delta, nodes=40, panels=8)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    # E[gamma^p] = 1/(p+1) with p = 1/(1-delta)
    assert chi @ w == pytest.approx(2 * (1 - delta) / (2 - delta), abs=1e-9)


def test_payment_factor():
    assert payment_factor(np.array([True, False]), 0.25).tolist() == [1.0, -3.0]


def test_toy_allocation_payment():
    # A(x) = x with b = 1: E[pay] = (1-d) - (1-d)^2/(2-d) = (1-d)/(2-d)
    _, value = expected_outcome_oracle(lambda x: x, [1.0], [1.0], 0.5, [0], 1)
    assert value[0] == pytest.approx(1 / 3, abs=1e-12)
    alloc, pay, _ = run_single_parameter(lambda x: x, [1.0], 0.5, np.random.default_rng(3), 2 * 10**5)
    assert abs(pay.mean() - 1 / 3) <= 4 * pay.std() / np.sqrt(pay.size)
    assert abs(alloc.mean() - 2 / 3) <= 4 * alloc.std() / np.sqrt(alloc.size)


def test_zero_bid_agent_pays_nothing(two_agent):
    batch = run_mechanism_batch(AllRule(), [1.0, 0.0], 0.1, two_agent, draw_trials(two_agent, 4, 2000))
    assert np.all(batch.payments[:, 1] == 0)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=3, max_size=3),
    st.lists(st.floats(0.05, 1), min_size=3, max_size=3),
    st.floats(0.01, 0.99),
    st.integers(0, 2**32),
)
def test_truthful_runs_are_individually_rational(values, ctrs, delta, seed):
    inst = AdInstance.build([0, 1, 1], values, ctrs, 3)
    batch = run_mechanism_batch(AllRule(), inst.values, delta, inst, draw_trials(inst, seed, 300))
    u = batch.utilities(inst, inst.values)
    assert np.all(u >= -1e-12)
    lo = batch.bid_values * (1 - 1 / delta)
    assert np.all((batch.payments >= lo - 1e-12) & (batch.payments <= batch.bid_values + 1e-12))


@pytest.mark.parametrize("name", ["all", "rand", "sampled-sp", "greedy"])
def test_single_run_matches_batch(name):
    inst = AdInstance.build([0, 1, 0], [0.9, 0.4, 0.2], [0.6, 0.7, 0.3], 4)
    rule = make_rule(name)
    draws = draw_trials(inst, 17, 30, start=5)
    batch = run_mechanism_batch(rule, inst.values, 0.2, inst, draws)
    for k in range(30):
        one = run_mechanism(rule, inst.values, 0.2, inst, 17, trial=5 + k)
        assert np.array_equal(one.draws.chi, batch.chi[k])
        assert tuple(-1 if a is None else a for a in one.run.actions) == tuple(batch.actions[k])
        assert np.allclose(one.payments, batch.payments[k], atol=0)


def test_rand_always_matches(two_agent):
    est = match_probability_estimate(make_rule("rand"), [1.0, 0.5], 0.5, two_agent, 5000, 0)
    assert est.frequency == 1.0


def _all_fn(inst):
    return lambda x: all_closed_form_clicks(x, inst)


@settings(max_examples=20, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=3, max_size=3),
    st.lists(st.floats(0.05, 1), min_size=3, max_size=3),
)
def test_expected_payment_follows_payment_identity(bids, ctrs):
    # at delta = 1/2 the scaled draw is gamma^2, so 8-node quadrature is exact on these polynomials
    inst = AdInstance.build([0, 1, 1], bids, ctrs, 4)
    fn = _all_fn(inst)
    _, pay = expected_outcome_oracle(fn, bids, bids, 0.5, inst.owners, 2)

    def transformed(x):
        return transformed_expected_clicks(fn, x, 0.5, inst.owners, 2)

    for i in range(2):
        assert pay[i] >= -1e-12
        assert pay[i] == pytest.approx(myerson_payment_oracle(transformed, bids, i, inst), abs=1e-12)


def test_transformed_map_stays_cyclically_monotone():
    inst = AdInstance.build([0, 0, 1], [1, 1, 1], [0.5, 0.8, 0.6], 3)

    def transformed(x):
        return transformed_expected_clicks(_all_fn(inst), x, 0.3, inst.owners, 2)

    res = cmon_search(transformed, inst, 0, [0.0, 0.0, 0.7], (0.0, 0.5, 1.0), k_max=3)
    assert res.exhaustive and not res.witnesses
