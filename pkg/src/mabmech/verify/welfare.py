"""Power-mean skew, welfare decompositions and improvement thresholds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..domain import AdInstance, check_bids
from ..env import exact_expected_clicks_by_round
from ..rules import AllParams, all_clicks_by_round, make_rule


class DegenerateAllZero(ValueError):
    """Every bid-times-CTR product is zero, so the skew is undefined."""


class ScenarioMismatch(ValueError):
    pass


@dataclass(frozen=True)
class MomentStats:
    m1: float
    m2_sq: float
    degenerate: bool
    ratio: float = float("nan")  # M_2^2 / M_1^2 computed on normalized products

    @property
    def sigma(self) -> float:
        if self.degenerate:
            raise DegenerateAllZero("sigma is undefined when all b_j mu_j are zero")
        return self.ratio

    @property
    def gap(self) -> float:
        """Per-round exploitation advantage of ALL over Rand."""
        return self.m2_sq - self.m1 ** 2


def power_means(products, denominator: int | None = None) -> MomentStats:
    """``M_1`` and ``M_2^2`` of ``products``, averaging over ``denominator`` entries."""
    p = np.asarray(products, dtype=float)
    d = len(p) if denominator is None else denominator
    m1 = float(p.sum() / d)
    m2_sq = float((p ** 2).sum() / d)
    if not np.any(p):
        return MomentStats(m1, m2_sq, True)
    # scale-free, so tiny products do not underflow
    q = p / p.max()
    return MomentStats(m1, m2_sq, False, float(d * (q ** 2).sum() / q.sum() ** 2))


def moments(bids, instance: AdInstance) -> MomentStats:
    b = np.asarray(bids, dtype=float)
    return power_means(b * instance.ctrs)


@dataclass
class WelfareReport:
    rule: str
    explore_rounds: int
    horizon: int
    exploration_welfare: float  # per exploration round
    exploit_welfare: float  # per exploitation round, W_0
    rand_welfare: float  # per round of Rand
    predicted_exploit_welfare: float
    identity_residual: float

    @property
    def total(self) -> float:
        t0 = self.explore_rounds
        return t0 * self.exploration_welfare + (self.horizon - t0) * self.exploit_welfare

    @property
    def gap(self) -> float:
        return self.exploit_welfare - self.rand_welfare

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(total=self.total, gap=self.gap)
        return d


def welfare_report(
    rule_name: str, bids, instance: AdInstance, params: AllParams = AllParams(), exact: bool = False,
    dummy_ctr: float = 0.5,
) -> WelfareReport:
    """Per-round welfare (bids read as values) split into exploration and exploitation.

    ``exploit_welfare`` comes from the rule's click vector (closed form, or
    history enumeration with ``exact=True``); ``predicted_exploit_welfare`` is
    the power-mean expression for the same quantity, and ``identity_residual``
    their absolute difference.
    """
    if rule_name not in ("rand", "all", "all-single", "sampled-sp"):
        raise ValueError(f"no welfare decomposition for rule {rule_name!r}")
    b = check_bids(bids, instance)
    T, t0 = instance.horizon, params.explore_rounds
    rule = make_rule(rule_name, t0, dummy_ctr)
    if exact:
        per_round = exact_expected_clicks_by_round(rule, b, instance, max_cells=64)
    else:
        per_round = rule.expected_clicks_by_round(b, instance)
    w = per_round @ b
    stats = moments(b, instance)
    m = instance.num_ads
    if rule_name == "rand":
        t0 = 0
        predicted = stats.m1
    elif rule_name == "all":
        predicted = stats.m1 + stats.gap
    elif rule_name == "all-single":
        star = power_means(b * instance.ctrs, m + 1)
        predicted = star.m1 + star.gap
    else:
        # each selection runs ALL on one ad per agent
        predicted = _sampled_prediction(b, instance)
    exploration = float(w[:t0].mean()) if t0 else float("nan")
    exploit = float(w[t0:].mean())
    if rule_name == "all-single":
        explore_pred = stats.m1 * m / (m + 1)
        residual = max(abs(exploit - predicted), abs(exploration - explore_pred))
    else:
        residual = abs(exploit - predicted)
    return WelfareReport(rule_name, t0, T, exploration, exploit, stats.m1, predicted, residual)


def _sampled_prediction(b, instance: AdInstance) -> float:
    rule = make_rule("sampled-sp")
    total = 0.0
    for weight, selected in rule.selections(instance):
        sub = b[selected] * instance.ctrs[selected]
        s = power_means(sub)
        total += weight * (s.m1 + s.gap)
    return total


@dataclass(frozen=True)
class Scenario:
    case: str  # "a": two or more agents; "b": single agent; "c": one agent holds k > m/2 ads
    epsilon: float | None = None
    agent: int | None = None  # the large agent in case "c"


@dataclass(frozen=True)
class ThresholdVerdict:
    case: str
    sigma: float | None
    threshold: float
    predicts_improvement: bool
    baseline: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def skew_threshold(case: str, m: int, epsilon: float | None = None, horizon: int | None = None, k: int | None = None) -> float:
    if case == "a":
        return 1.0
    if case == "b":
        return 1.0 + (m + 1) / (m * epsilon) + (m + 1) / (epsilon * (horizon - 1))
    if case == "c":
        return 1.0 + m * (m - k) / (k * epsilon)
    raise ScenarioMismatch(f"unknown case {case!r}")


def threshold_check(bids, instance: AdInstance, scenario: Scenario) -> ThresholdVerdict:
    """Whether the skew of ``bids`` clears the improvement threshold of ``scenario``.

    A positive verdict is a prediction that, for small enough delta, the
    transformed ALL beats the named baseline; simulation has to confirm it.
    """
    b = check_bids(bids, instance)
    m, n = instance.num_ads, instance.num_agents
    products = b * instance.ctrs
    case = scenario.case
    eps = scenario.epsilon
    k = None
    if case == "a":
        if n < 2:
            raise ScenarioMismatch("case a needs at least two agents")
        baseline = "rand"
    elif case == "b":
        if n != 1:
            raise ScenarioMismatch("case b needs exactly one agent")
        if instance.horizon < 2:
            raise ScenarioMismatch("case b needs T >= 2")
        baseline = "rand"
    elif case == "c":
        agent = scenario.agent if scenario.agent is not None else int(np.argmax(np.bincount(instance.owners)))
        ads = instance.ads_of(agent)
        k = len(ads)
        if not 2 * k > m:
            raise ScenarioMismatch(f"agent {agent} holds {k} of {m} ads; need more than half")
        others = np.setdiff1d(np.arange(m), ads)
        if np.any(b[others] != 0):
            raise ScenarioMismatch("case c needs zero values for every other agent")
        baseline = "sampled-sp"
    else:
        raise ScenarioMismatch(f"unknown case {case!r}")
    if case in ("b", "c"):
        if eps is None or not 0 < eps < products.max():
            raise ScenarioMismatch("epsilon must satisfy 0 < epsilon < max_j b_j mu_j")
    stats = power_means(products)
    threshold = skew_threshold(case, m, eps, instance.horizon, k)
    if stats.degenerate:
        return ThresholdVerdict(case, None, threshold, False, baseline)
    sigma = stats.sigma
    return ThresholdVerdict(case, sigma, threshold, bool(sigma > threshold), baseline)
