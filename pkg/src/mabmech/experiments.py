"""Experiment drivers shared by the command line and the acceptance tests."""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .batch import batch_actions, draw_trials, mean_ci, per_round_clicks, realized_clicks
from .domain import AdInstance
from .env import exact_expected_clicks
from .rules import AllParams, RandRule, default_rule_for
from .transform import check_delta, expected_outcome_oracle, run_mechanism_batch, transformed_expected_clicks
from .verify import (
    Scenario,
    ScenarioMismatch,
    affine_maximizer_residual,
    cmon_search,
    find_wmon_violation,
    hessian_build_and_check,
    homogeneity_probe,
    moments,
    myerson_payment_oracle,
    rule_welfare,
    threshold_check,
    welfare_report,
)

SCHEMA_VERSION = 1
CHUNK = 25_000


def config_hash(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def exact_clicks_fn(rule, instance: AdInstance):
    """Exact ``b -> C(b, mu)``: closed form when the rule has one, else history enumeration."""
    try:
        rule.expected_clicks(instance.values, instance)
        return lambda b: rule.expected_clicks(b, instance)
    except NotImplementedError:
        pass
    if instance.num_ads * instance.horizon > 16:
        return None
    return lambda b: exact_expected_clicks(rule, b, instance)


# ---------------------------------------------------------------- simulate


def _simulate_chunk(job):
    rule, bids, values, delta, instance, seed, lo, hi = job
    draws = draw_trials(instance, seed, hi - lo, start=lo)
    mech = run_mechanism_batch(rule, bids, delta, instance, draws)
    plain = batch_actions(rule, bids, instance, draws)
    plain_clicks = realized_clicks(plain, draws.tables)
    return {
        "chi": mech.chi,
        "payments": mech.payments,
        "utilities": mech.utilities(instance, values),
        "welfare": mech.welfare(values),
        "rule_welfare": plain_clicks @ values,
        "match": np.all(plain == mech.actions, axis=1),
    }


def _chunks(trials: int, chunk: int = CHUNK):
    return [(lo, min(trials, lo + chunk)) for lo in range(0, trials, chunk)]


def simulate_trials(rule, bids, values, delta, instance, seed, trials, workers: int = 1) -> dict:
    """Run ``trials`` executions of the transformed rule; arrays are ordered by trial index."""
    check_delta(delta)
    bids = np.asarray(bids, dtype=float)
    values = np.asarray(values, dtype=float)
    jobs = [(rule, bids, values, delta, instance, seed, lo, hi) for lo, hi in _chunks(trials)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_chunk, jobs))
    else:
        parts = [_simulate_chunk(j) for j in jobs]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _ci(x) -> dict:
    mean, hw = mean_ci(x)
    return {"mean": mean, "ci99": hw}


def simulate_summary(rule, bids, values, delta, instance, seed, trials, workers=1):
    res = simulate_trials(rule, bids, values, delta, instance, seed, trials, workers)
    n = instance.num_agents
    summary = {
        "rule": rule.name,
        "delta": delta,
        "trials": trials,
        "welfare": _ci(res["welfare"]),
        "rule_welfare": _ci(res["rule_welfare"]),
        "payments": [_ci(res["payments"][:, i]) for i in range(n)],
        "utilities": [_ci(res["utilities"][:, i]) for i in range(n)],
        "match_frequency": _ci(res["match"].astype(float)),
    }
    fn = exact_clicks_fn(rule, instance)
    if fn is not None:
        summary["expected_rule_welfare"] = float(fn(bids) @ values)
        if n <= 3:
            c = transformed_expected_clicks(fn, bids, delta, instance.owners, n, nodes=8, panels=4)
            summary["expected_welfare"] = float(c @ values)
    return res, summary


# ---------------------------------------------------------------- sweep


def _with_value(instance: AdInstance, ad: int, value: float) -> AdInstance:
    v = instance.values.copy()
    v[ad] = value
    return instance.with_values(v)


def sweep_rows(instance, parameter, values, delta, trials, seed, explore_rounds=None, ad=0, epsilon=None):
    """One row per swept value comparing the transformed ALL with Rand and the sampled rule."""
    if parameter not in ("delta", "sigma", "horizon"):
        raise ValueError("parameter must be one of delta, sigma, horizon")
    rows = []
    draws, shape = None, None
    for x in values:
        inst, d = instance, delta
        if parameter == "delta":
            d = float(x)
        elif parameter == "sigma":
            inst = _with_value(instance, ad, float(x))
        else:
            inst = instance.with_horizon(int(x))
        rule = default_rule_for(inst, explore_rounds)
        t0 = rule.params.explore_rounds
        b = inst.values
        if (inst.horizon, inst.num_ads) != shape:
            draws = draw_trials(inst, seed, trials)
            shape = (inst.horizon, inst.num_ads)
        mech = run_mechanism_batch(rule, b, d, inst, draws)
        w_mech = mech.welfare(b)
        rand_actions = batch_actions(RandRule(), b, inst, draws)
        w_rand = realized_clicks(rand_actions, draws.tables) @ b
        plain = per_round_clicks(batch_actions(rule, b, inst, draws), draws.tables) @ b
        gap = plain[:, t0:].mean(axis=1) - w_rand / inst.horizon
        diff_mean, diff_hw = mean_ci(w_mech - w_rand)
        stats = moments(b, inst)
        rep = welfare_report(rule.name, b, inst, AllParams(t0))
        sampled = welfare_report("sampled-sp", b, inst, AllParams(t0)).total
        case = "a" if inst.num_agents >= 2 else "b"
        eps = epsilon if epsilon is not None else 0.5 * float((b * inst.ctrs).max())
        try:
            predicted = threshold_check(b, inst, Scenario(case, eps if eps > 0 else None)).predicts_improvement
        except ScenarioMismatch:
            predicted = False
        gm, ghw = mean_ci(gap)
        rows.append({
            "parameter": parameter,
            "value": x,
            "delta": d,
            "horizon": inst.horizon,
            "sigma": "" if stats.degenerate else stats.sigma,
            "welfare_mechanism": float(w_mech.mean()),
            "welfare_rand": float(w_rand.mean()),
            "welfare_sampled_sp": sampled,
            "mech_minus_rand": diff_mean,
            "mech_minus_rand_ci99": diff_hw,
            "improves": bool(diff_mean - diff_hw > 0),
            "gap_per_exploit_round": gm,
            "gap_ci99": ghw,
            "predicted_gap": rep.predicted_exploit_welfare - stats.m1,
            "predicted_improvement": bool(predicted),
        })
    return rows


# ---------------------------------------------------------------- verify

CHECKS = ("cmon", "wmon", "payments", "welfare", "hessian", "affine", "homogeneity", "thresholds")
TIME_INVARIANT = ("rand",)


def _section(check, passed, expected, **detail):
    return {"check": check, "as_expected": bool(passed), "expected": expected, **detail}


def check_cmon_section(rule, instance, grid=(0.0, 0.5, 1.0), tolerance=1e-9):
    fn = exact_clicks_fn(rule, instance)
    if fn is None:
        return _section("cmon", True, "skipped", reason="no exact click oracle for this size")
    witnesses, checked, min_sum = [], 0, float("inf")
    for agent in range(instance.num_agents):
        res = cmon_search(fn, instance, agent, instance.values, list(grid), 3, tolerance)
        witnesses += res.witnesses
        checked += res.cycles_checked
        min_sum = min(min_sum, res.min_cycle_sum)
    expected = "any" if rule.name == "greedy" else "clean"
    ok = expected == "any" or not witnesses
    return _section(
        "cmon", ok, expected, grid=list(grid), tolerance=tolerance, cycles_checked=checked,
        min_cycle_sum=min_sum, witnesses=witnesses[:50], witness_count=len(witnesses),
    )


def check_wmon_section(rule, instance, tolerance=1e-9):
    grid = [0.0, 1.0, 2.0] if rule.name == "greedy" else [0.0, 0.5, 1.0]
    if instance.num_ads * instance.horizon > 16:
        return _section("wmon", True, "skipped", reason="too many click tables")
    w = find_wmon_violation(rule, instance, grid, tolerance=tolerance)
    expected = {"greedy": "violation", "rand": "clean"}.get(rule.name, "any")
    found = w is not None
    ok = expected == "any" or (expected == "violation") == found
    return _section(
        "wmon", ok, expected, grid=grid, tolerance=tolerance, verdict="violation found" if found else "clean",
        witnesses=[w] if found else [], value=w.value if found else None,
    )


def check_payments_section(rule, instance, delta, trials, seed):
    fn = exact_clicks_fn(rule, instance)
    if fn is None or instance.num_agents > 3:
        return _section("payments", True, "skipped", reason="no exact click oracle")
    n = instance.num_agents
    b = instance.values
    _, expected_pay = expected_outcome_oracle(fn, b, b, delta, instance.owners, n, nodes=8, panels=4)

    def transformed(x):
        return transformed_expected_clicks(fn, x, delta, instance.owners, n, nodes=8, panels=4)

    oracle = np.array([myerson_payment_oracle(transformed, b, i, instance, 8) for i in range(n)])
    res = simulate_trials(rule, b, b, delta, instance, seed, trials)
    agents = []
    ok = True
    for i in range(n):
        mean, hw = mean_ci(res["payments"][:, i])
        agree = abs(mean - oracle[i]) <= hw + 1e-12 and abs(expected_pay[i] - oracle[i]) <= 1e-6
        ok &= agree
        agents.append({
            "agent": i, "mc_mean": mean, "ci99": hw, "identity_oracle": float(oracle[i]),
            "direct_oracle": float(expected_pay[i]), "agree": agree,
        })
    return _section("payments", ok, "agree", agents=agents, delta=delta, trials=trials)


def check_welfare_section(rule, instance, tolerance=1e-10):
    if rule.name not in ("rand", "all", "all-single", "sampled-sp"):
        return _section("welfare", True, "skipped", reason=f"no decomposition for {rule.name}")
    t0 = getattr(getattr(rule, "params", None), "explore_rounds", 1)
    exact = instance.num_ads * instance.horizon <= 16
    rep = welfare_report(rule.name, instance.values, instance, AllParams(t0), exact=exact)
    return _section("welfare", rep.identity_residual <= tolerance, "identity", report=rep,
                    max_residual=rep.identity_residual, tolerance=tolerance, enumerated=exact)


def check_hessian_section(draws=1000, seed=0, tolerance=1e-12, max_m=8):
    rng = np.random.default_rng(seed)
    worst_eig, worst_abs, worst_rel = float("inf"), 0.0, 0.0
    for _ in range(draws):
        m = int(rng.integers(2, max_m + 1))
        k = int(rng.integers(1, m))
        h = hessian_build_and_check(rng.uniform(0.05, 1.0, k), m)
        worst_eig = min(worst_eig, h.min_eigenvalue)
        worst_abs = max(worst_abs, h.gram_residual)
        worst_rel = max(worst_rel, h.gram_relative)
    ok = worst_eig > 0 and worst_rel <= tolerance
    return _section("hessian", ok, "positive definite", draws=draws, min_eigenvalue=worst_eig,
                    gram_residual=worst_abs, gram_relative_residual=worst_rel, tolerance=tolerance)


def check_affine_section(instances=100, seed=0, tolerance=1e-9, grid_points=1000):
    rng = np.random.default_rng(seed)
    f_res = crit = 0.0
    min_gap = float("inf")
    for _ in range(instances):
        m = int(rng.integers(2, 6))
        k = int(rng.integers(1, m))
        rep = affine_maximizer_residual(rng.uniform(0, 1, m), rng.uniform(0.05, 1, m), m, np.arange(k),
                                        grid_points=grid_points, seed=int(rng.integers(2**31)))
        f_res = max(f_res, rep.f_residual)
        crit = max(crit, rep.critical_residual, rep.solve_residual)
        min_gap = min(min_gap, rep.grid_min_gap)
    ok = f_res <= tolerance and crit <= tolerance and min_gap > 0
    return _section("affine", ok, "certificate holds", instances=instances, f_residual=f_res,
                    critical_residual=crit, grid_min_gap=min_gap, tolerance=tolerance)


def check_homogeneity_section(rule, instance):
    if exact_clicks_fn(rule, instance) is None:
        return _section("homogeneity", True, "skipped", reason="no exact click oracle")
    w = rule_welfare(rule, instance.values, instance, clicks_fn=lambda r, b, inst: exact_clicks_fn(r, inst)(b))
    dev = homogeneity_probe(w, instance.ctrs)
    invariant = rule.name in TIME_INVARIANT or (rule.name == "greedy" and rule.explore_rounds == 0)
    expected = "zero" if invariant else "positive"
    ok = dev <= 1e-12 if invariant else dev > 1e-12
    return _section("homogeneity", ok, expected, max_deviation=dev)


def check_thresholds_section(instance, explore_rounds=None, deltas=(0.01, 0.02, 0.05, 0.1, 0.2)):
    b = instance.values
    products = b * instance.ctrs
    case = "a" if instance.num_agents >= 2 else "b"
    eps = 0.5 * float(products.max())
    if eps <= 0:
        return _section("thresholds", True, "skipped", reason="all values zero")
    verdict = threshold_check(b, instance, Scenario(case, eps))
    rule = default_rule_for(instance, explore_rounds)
    fn = exact_clicks_fn(rule, instance)
    rand = float(RandRule().expected_clicks(b, instance) @ b)
    mech = {d: float(transformed_expected_clicks(fn, b, d, instance.owners, instance.num_agents, 8, 4) @ b)
            for d in deltas}
    confirmed = any(w > rand for w in mech.values())
    ok = confirmed or not verdict.predicts_improvement
    return _section("thresholds", ok, "prediction confirmed", verdict=verdict, rand_welfare=rand,
                    mechanism_welfare={str(k): v for k, v in mech.items()}, confirmed=confirmed)


def run_checks(checks, rule, instance, delta, trials, seed):
    sections = []
    for name in checks:
        if name == "cmon":
            sections.append(check_cmon_section(rule, instance))
        elif name == "wmon":
            sections.append(check_wmon_section(rule, instance))
        elif name == "payments":
            sections.append(check_payments_section(rule, instance, delta, trials, seed))
        elif name == "welfare":
            sections.append(check_welfare_section(rule, instance))
        elif name == "hessian":
            sections.append(check_hessian_section(seed=seed))
        elif name == "affine":
            sections.append(check_affine_section(seed=seed))
        elif name == "homogeneity":
            sections.append(check_homogeneity_section(rule, instance))
        elif name == "thresholds":
            sections.append(check_thresholds_section(instance))
        else:
            raise ValueError(f"unknown check {name!r}; expected one of {', '.join(CHECKS)}")
    return sections


def standard_instance(rule_name: str = "all") -> AdInstance:
    """Tiny built-in instance used when no instance file is given."""
    if rule_name == "all-single":
        return AdInstance.build([0, 0], [1.0, 1.0], [1.0, 1.0], 2)
    return AdInstance.build([0, 1], [1.0, 0.5], [0.5, 0.5], 2)
