"""Allocation rules for the multi-parameter pay-per-click domain.

Every rule exposes its randomness as a finite mixture of *kernels*
(``branches``).  A kernel maps the observable history (tuple of
``(action, click)`` pairs) to a distribution over ``[ad_0, ..., ad_{m-1}, skip]``.
The streaming policy and the exact enumerators both consume the same kernels,
so a rule cannot behave differently under simulation and under enumeration.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .domain import AdInstance, InstanceError, check_bids
from .env import OnlineEnv, sample_action, sample_index


@dataclass(frozen=True)
class AllParams:
    explore_rounds: int = 1

    def check(self, horizon: int) -> None:
        if not 1 <= self.explore_rounds < horizon:
            raise ValueError(
                f"explore_rounds must satisfy 1 <= T0 < T; got T0={self.explore_rounds}, T={horizon}"
            )


@dataclass(frozen=True)
class ExploitDistribution:
    """Exploitation-round law: ad ``j`` w.p. ``p[j]``, otherwise uniform over all ads."""

    p: np.ndarray
    residual: float

    def probabilities(self) -> np.ndarray:
        return self.p + self.residual / len(self.p)


def exploration_counts(history, num_ads: int, explore_rounds: int) -> np.ndarray:
    n = np.zeros(num_ads)
    for a, click in history[:explore_rounds]:
        if a is not None and a < num_ads:
            n[a] += click
    return n


def exploit_distribution(bids, counts, explore_rounds: int) -> ExploitDistribution:
    p = np.asarray(bids, dtype=float) * np.asarray(counts, dtype=float) / explore_rounds
    total = np.cumsum(p)[-1]
    return ExploitDistribution(p, max(0.0, 1.0 - total))


class KernelPolicy:
    """Per-run streaming policy driven by a kernel and pre-drawn uniforms."""

    def __init__(self, kernel, uniforms):
        self.kernel = kernel
        self.uniforms = uniforms
        self.history: tuple = ()

    def step(self, env: OnlineEnv) -> None:
        t = len(self.history)
        action = sample_action(self.kernel(self.history), self.uniforms[t])
        env.choose(action)
        click = 0 if action is None else env.observe(action)
        self.history = self.history + ((action, click),)


class AllocationRule:
    name = "rule"

    def branches(self, bids, instance: AdInstance) -> list:
        raise NotImplementedError

    def start(self, bids, instance: AdInstance, uniforms) -> KernelPolicy:
        branches = self.branches(bids, instance)
        k = sample_index(np.array([w for w, _ in branches]), uniforms[0])
        return KernelPolicy(branches[k][1], uniforms[1:])

    def expected_clicks_by_round(self, bids, instance: AdInstance) -> np.ndarray:
        """Closed-form ``(T, m)`` expected clicks, where one is known."""
        raise NotImplementedError(f"{self.name} has no closed form")

    def expected_clicks(self, bids, instance: AdInstance) -> np.ndarray:
        return self.expected_clicks_by_round(bids, instance).sum(axis=0)

    def __repr__(self):
        return f"{type(self).__name__}()"


def _uniform(m: int) -> np.ndarray:
    dist = np.full(m + 1, 1.0 / m)
    dist[m] = 0.0
    return dist


class RandRule(AllocationRule):
    """Show a uniformly random ad every round; ignores bids and clicks."""

    name = "rand"

    def branches(self, bids, instance):
        dist = _uniform(instance.num_ads)
        return [(1.0, lambda history: dist)]

    def expected_clicks_by_round(self, bids, instance):
        row = instance.ctrs / instance.num_ads
        return np.tile(row, (instance.horizon, 1))


class AllRule(AllocationRule):
    """Explore uniformly for T0 rounds, then each round show ad j w.p. b_j n_j / T0,
    falling back to a uniform ad with the remaining mass."""

    name = "all"

    def __init__(self, params: AllParams = AllParams(), require_two_agents: bool = True):
        self.params = params
        self.require_two_agents = require_two_agents

    def _prepare(self, bids, instance):
        if self.require_two_agents and instance.num_agents < 2:
            raise InstanceError("ALL needs at least two agents; use the single-agent variant")
        self.params.check(instance.horizon)
        return check_bids(bids, instance)

    def branches(self, bids, instance):
        b = self._prepare(bids, instance)
        m, t0 = instance.num_ads, self.params.explore_rounds
        explore = _uniform(m)

        def kernel(history):
            if len(history) < t0:
                return explore
            n = exploration_counts(history, m, t0)
            return np.append(exploit_distribution(b, n, t0).probabilities(), 0.0)

        return [(1.0, kernel)]

    def expected_clicks_by_round(self, bids, instance):
        b = self._prepare(bids, instance)
        return all_clicks_by_round(b, instance.ctrs, instance.horizon, self.params.explore_rounds)

    def __repr__(self):
        return f"AllRule(explore_rounds={self.params.explore_rounds})"


class AllSingleAgentRule(AllocationRule):
    """ALL for one agent, run against a zero-bid dummy ad whose impressions are skips."""

    name = "all-single"

    def __init__(self, params: AllParams = AllParams(), dummy_ctr: float = 0.5):
        self.params = params
        self.dummy_ctr = dummy_ctr

    def _prepare(self, bids, instance):
        if instance.num_agents != 1:
            raise InstanceError(f"single-agent ALL needs exactly one agent, got {instance.num_agents}")
        self.params.check(instance.horizon)
        return check_bids(bids, instance)

    def branches(self, bids, instance):
        b = self._prepare(bids, instance)
        m, t0 = instance.num_ads, self.params.explore_rounds
        b_aug = np.append(b, 0.0)
        explore = np.full(m + 1, 1.0 / (m + 1))

        def kernel(history):
            if len(history) < t0:
                return explore
            # skips stand in for the dummy ad; its clicks never matter since its bid is 0
            n = np.append(exploration_counts(history, m, t0), 0.0)
            return exploit_distribution(b_aug, n, t0).probabilities()

        return [(1.0, kernel)]

    def augmented_ctrs(self, instance) -> np.ndarray:
        return np.append(instance.ctrs, self.dummy_ctr)

    def expected_clicks_by_round(self, bids, instance):
        b = self._prepare(bids, instance)
        full = all_clicks_by_round(
            np.append(b, 0.0), self.augmented_ctrs(instance), instance.horizon, self.params.explore_rounds
        )
        return full[:, :-1]

    def __repr__(self):
        return f"AllSingleAgentRule(explore_rounds={self.params.explore_rounds}, dummy_ctr={self.dummy_ctr})"


class GreedyRule(AllocationRule):
    """Explore uniformly for T0 rounds, then commit to argmax_j b_j n_j (lowest index on ties).

    With ``explore_rounds=0`` it commits to the highest bid from the first round.
    Bids may be any non-negative reals.
    """

    name = "greedy"

    def __init__(self, explore_rounds: int = 0):
        if explore_rounds < 0:
            raise ValueError("explore_rounds must be non-negative")
        self.explore_rounds = explore_rounds

    def branches(self, bids, instance):
        b = np.asarray(bids, dtype=float)
        if b.shape != (instance.num_ads,) or np.any(b < 0):
            raise ValueError("greedy needs a non-negative bid per ad")
        m, t0 = instance.num_ads, self.explore_rounds
        explore = _uniform(m)

        def kernel(history):
            if len(history) < t0:
                return explore
            score = b * exploration_counts(history, m, t0) if t0 > 0 else b
            dist = np.zeros(m + 1)
            dist[int(np.argmax(score))] = 1.0
            return dist

        return [(1.0, kernel)]

    def __repr__(self):
        return f"GreedyRule(explore_rounds={self.explore_rounds})"


class SampledSingleParamRule(AllocationRule):
    """Pick one ad per agent uniformly up front, then run a single-parameter rule on those ads."""

    name = "sampled-sp"

    def __init__(self, inner: AllocationRule | None = None, params: AllParams = AllParams()):
        self.inner = inner if inner is not None else AllRule(params, require_two_agents=False)

    def selections(self, instance: AdInstance):
        per_agent = [instance.ads_of(i) for i in range(instance.num_agents)]
        per_agent = [ads for ads in per_agent if len(ads)]
        weight = 1.0 / np.prod([len(ads) for ads in per_agent])
        for combo in itertools.product(*per_agent):
            yield weight, np.array(combo, dtype=int)

    def _sub_instance(self, instance, selected):
        owners = instance.owners[selected]
        # relabel agents densely so the inner rule sees agents 0..k-1
        _, dense = np.unique(owners, return_inverse=True)
        return AdInstance.build(
            dense, instance.values[selected], instance.ctrs[selected], instance.horizon,
        )

    def branches(self, bids, instance):
        b = np.asarray(bids, dtype=float)
        m = instance.num_ads
        out = []
        for weight, selected in self.selections(instance):
            sub = self._sub_instance(instance, selected)
            position = {int(j): k for k, j in enumerate(selected)}
            for inner_w, inner_kernel in self.inner.branches(b[selected], sub):
                out.append((weight * inner_w, _lift(inner_kernel, selected, position, m)))
        return out

    def expected_clicks_by_round(self, bids, instance):
        b = np.asarray(bids, dtype=float)
        total = np.zeros((instance.horizon, instance.num_ads))
        for weight, selected in self.selections(instance):
            sub = self._sub_instance(instance, selected)
            total[:, selected] += weight * self.inner.expected_clicks_by_round(b[selected], sub)
        return total

    def __repr__(self):
        return f"SampledSingleParamRule(inner={self.inner!r})"


def _lift(inner_kernel, selected, position, m):
    k = len(selected)

    def kernel(history):
        sub_history = tuple(
            (None if a is None else position[a], c) for a, c in history
        )
        inner = inner_kernel(sub_history)
        dist = np.zeros(m + 1)
        dist[selected] = inner[:k]
        dist[m] = inner[k]
        return dist

    return kernel


def all_clicks_by_round(bids, ctrs, horizon: int, explore_rounds: int) -> np.ndarray:
    """Closed-form per-round expected clicks of ALL.

    Exploration rounds give ``mu_j / m``; each exploitation round gives
    ``mu_j * (x_j + (1 - sum_k x_k) / m)`` with ``x_j = b_j mu_j / m``.
    """
    b = np.asarray(bids, dtype=float)
    mu = np.asarray(ctrs, dtype=float)
    m = len(mu)
    x = b * mu / m
    out = np.empty((horizon, m))
    out[:explore_rounds] = mu / m
    out[explore_rounds:] = mu * (x + (1.0 - x.sum()) / m)
    return out


def all_closed_form_clicks(bids, instance: AdInstance, params: AllParams = AllParams()) -> np.ndarray:
    return AllRule(params).expected_clicks(bids, instance)


RULE_NAMES = ("rand", "sampled-sp", "all", "all-single", "greedy")


def make_rule(name: str, explore_rounds: int | None = None, dummy_ctr: float = 0.5) -> AllocationRule:
    if name == "rand":
        return RandRule()
    if name == "greedy":
        return GreedyRule(0 if explore_rounds is None else explore_rounds)
    params = AllParams(1 if explore_rounds is None else explore_rounds)
    if name == "all":
        return AllRule(params)
    if name == "all-single":
        return AllSingleAgentRule(params, dummy_ctr)
    if name == "sampled-sp":
        return SampledSingleParamRule(params=params)
    raise ValueError(f"unknown rule {name!r}; expected one of {', '.join(RULE_NAMES)}")


def default_rule_for(instance: AdInstance, explore_rounds: int | None = None) -> AllocationRule:
    """ALL for two or more agents, the dummy-ad variant for a single agent."""
    if instance.num_agents == 1:
        return make_rule("all-single", explore_rounds)
    return make_rule("all", explore_rounds)
