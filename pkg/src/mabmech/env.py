"""T-round pay-per-click environment with Bernoulli clicks.

Two views of an allocation rule are supported:

* streaming: ``simulate`` drives a per-run policy through an :class:`OnlineEnv`
  that reveals a click bit only for the ad shown in that round;
* exact: ``exact_expected_clicks`` walks the tree of observable histories using
  the rule's per-round action distributions, and
  ``expected_clicks_by_realization`` enumerates all ``2^(mT)`` click tables.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterator, Optional, Sequence

import numpy as np

from .domain import AdInstance
from .streams import stream

if TYPE_CHECKING:
    from .rules import AllocationRule

Action = Optional[int]  # None means skip
History = tuple  # tuple of (action, click) pairs, one per past round
Kernel = Callable[[History], np.ndarray]

DEFAULT_MAX_CELLS = 16


class ContractViolation(RuntimeError):
    """A rule tried to read information it has not observed."""


class TooLargeForEnumeration(ValueError):
    pass


@dataclass(frozen=True)
class ClickRealization:
    table: np.ndarray  # shape (T, m), entries in {0, 1}

    def __post_init__(self):
        t = np.asarray(self.table)
        if t.ndim != 2:
            raise ValueError("click realization must be a T x m matrix")
        if not np.all((t == 0) | (t == 1)):
            raise ValueError("click realization entries must be 0 or 1")
        object.__setattr__(self, "table", t.astype(np.int8))

    @property
    def horizon(self) -> int:
        return self.table.shape[0]

    @property
    def num_ads(self) -> int:
        return self.table.shape[1]

    def to_json(self) -> str:
        return json.dumps(self.table.tolist())

    @classmethod
    def from_json(cls, text: str) -> "ClickRealization":
        return cls(np.array(json.loads(text), dtype=np.int8))

    def probability(self, ctrs) -> float:
        mu = np.asarray(ctrs, dtype=float)
        return float(np.prod(np.where(self.table == 1, mu, 1.0 - mu)))


def sample_realization(instance: AdInstance, rng_seed: int, trial: int = 0) -> ClickRealization:
    rng = stream(rng_seed, trial, "env")
    return ClickRealization(draw_table(rng, instance))


def draw_table(rng: np.random.Generator, instance: AdInstance) -> np.ndarray:
    u = rng.random((instance.horizon, instance.num_ads))
    return (u < instance.ctrs).astype(np.int8)


def realization_space(num_ads: int, horizon: int) -> Iterator[ClickRealization]:
    cells = num_ads * horizon
    for bits in itertools.product((0, 1), repeat=cells):
        yield ClickRealization(np.array(bits, dtype=np.int8).reshape(horizon, num_ads))


def sample_action(dist: np.ndarray, u: float) -> Action:
    """Inverse-CDF draw over ``[ad_0, ..., ad_{m-1}, skip]``."""
    cdf = np.cumsum(dist)
    idx = int(np.count_nonzero(cdf <= u))
    if idx >= len(dist):
        idx = int(np.flatnonzero(dist > 0)[-1])
    return None if idx == len(dist) - 1 else idx


def sample_index(weights: np.ndarray, u: float) -> int:
    cdf = np.cumsum(weights)
    idx = int(np.count_nonzero(cdf <= u))
    if idx >= len(weights):
        idx = int(np.flatnonzero(np.asarray(weights) > 0)[-1])
    return idx


class OnlineEnv:
    """Per-run environment: one action per round, clicks visible only for shown ads."""

    def __init__(self, realization: ClickRealization):
        self._table = realization.table
        self.horizon, self.num_ads = self._table.shape
        self.round = -1
        self.actions: list[Action] = []

    def begin_round(self) -> None:
        if self.round >= 0 and len(self.actions) != self.round + 1:
            raise ContractViolation(f"no action chosen in round {self.round}")
        self.round += 1
        if self.round >= self.horizon:
            raise ContractViolation("horizon exhausted")

    def choose(self, action: Action) -> None:
        if len(self.actions) != self.round:
            raise ContractViolation(f"more than one action in round {self.round}")
        if action is not None and not 0 <= action < self.num_ads:
            raise ValueError(f"ad index {action} out of range")
        self.actions.append(action)

    def observe(self, ad: int, t: int | None = None) -> int:
        t = self.round if t is None else t
        if t < 0 or t >= len(self.actions) or self.actions[t] != ad:
            raise ContractViolation(f"click of ad {ad} in round {t} was not observed")
        return int(self._table[t, ad])


@dataclass
class RunRecord:
    actions: tuple
    shows: np.ndarray
    observed_clicks: np.ndarray
    realized_click_vector: np.ndarray
    rng_trace: dict = field(default_factory=dict)

    @property
    def skips(self) -> int:
        return sum(a is None for a in self.actions)


def rule_uniforms(rng_seed: int, horizon: int, trial: int = 0) -> np.ndarray:
    # slot 0 picks among the rule's internal branches, slot t+1 drives round t
    return stream(rng_seed, trial, "rule").random(horizon + 1)


def run_policy(rule, bids, instance: AdInstance, realization: ClickRealization, uniforms) -> RunRecord:
    if realization.table.shape != (instance.horizon, instance.num_ads):
        raise ValueError("realization shape does not match the instance")
    env = OnlineEnv(realization)
    policy = rule.start(bids, instance, uniforms)
    for _ in range(instance.horizon):
        env.begin_round()
        policy.step(env)
        if len(env.actions) != env.round + 1:
            raise ContractViolation(f"policy chose no action in round {env.round}")
    m = instance.num_ads
    shows = np.zeros(m, dtype=int)
    clicks = np.zeros(m, dtype=int)
    for t, a in enumerate(env.actions):
        if a is not None:
            shows[a] += 1
            clicks[a] += realization.table[t, a]
    return RunRecord(tuple(env.actions), shows, clicks, clicks.astype(float))


def simulate(
    rule: "AllocationRule",
    bids,
    realization: ClickRealization,
    rng_seed: int,
    instance: AdInstance,
    trial: int = 0,
) -> RunRecord:
    record = run_policy(rule, bids, instance, realization, rule_uniforms(rng_seed, instance.horizon, trial))
    record.rng_trace = {"seed": int(rng_seed), "trial": int(trial), "stream": "rule"}
    return record


def _check_size(instance: AdInstance, max_cells: int) -> None:
    cells = instance.num_ads * instance.horizon
    if cells > max_cells:
        raise TooLargeForEnumeration(f"m*T = {cells} exceeds the enumeration cap {max_cells}")


def exact_expected_clicks_by_round(
    rule: "AllocationRule", bids, instance: AdInstance, max_cells: int = DEFAULT_MAX_CELLS
) -> np.ndarray:
    """Exact per-round expected clicks, shape ``(T, m)``.

    Expectation over click outcomes (independent Bernoulli(ctr) per shown ad)
    and over the rule's internal randomness.  Only observed cells are branched
    on; unobserved cells integrate out.
    """
    _check_size(instance, max_cells)
    mu = instance.ctrs
    m, horizon = instance.num_ads, instance.horizon
    out = np.zeros((horizon, m))

    def walk(kernel, history, prob):
        t = len(history)
        if t == horizon:
            return
        dist = kernel(history)
        for a in np.flatnonzero(dist > 0):
            pa = prob * dist[a]
            if a == m:
                walk(kernel, history + ((None, 0),), pa)
                continue
            out[t, a] += pa * mu[a]
            if mu[a] > 0:
                walk(kernel, history + ((int(a), 1),), pa * mu[a])
            if mu[a] < 1:
                walk(kernel, history + ((int(a), 0),), pa * (1.0 - mu[a]))

    for weight, kernel in rule.branches(bids, instance):
        if weight > 0:
            walk(kernel, (), weight)
    return out


def exact_expected_clicks(
    rule: "AllocationRule", bids, instance: AdInstance, max_cells: int = DEFAULT_MAX_CELLS
) -> np.ndarray:
    return exact_expected_clicks_by_round(rule, bids, instance, max_cells).sum(axis=0)


def impression_allocation(
    rule: "AllocationRule", bids, instance: AdInstance, realization: ClickRealization
) -> np.ndarray:
    """Show probabilities ``A(b, t, rho)`` for a fixed click table, shape ``(T, m)``."""
    table = realization.table
    m, horizon = instance.num_ads, instance.horizon
    out = np.zeros((horizon, m))

    def walk(kernel, history, prob):
        t = len(history)
        if t == horizon:
            return
        dist = kernel(history)
        for a in np.flatnonzero(dist > 0):
            pa = prob * dist[a]
            if a == m:
                walk(kernel, history + ((None, 0),), pa)
            else:
                out[t, a] += pa
                walk(kernel, history + ((int(a), int(table[t, a])),), pa)

    for weight, kernel in rule.branches(bids, instance):
        if weight > 0:
            walk(kernel, (), weight)
    return out


def clicks_given_realization(rule, bids, instance: AdInstance, realization: ClickRealization) -> np.ndarray:
    """Ex-post click vector ``C(b, rho) = sum_t Delta_t(rho) A(b, t, rho)``."""
    alloc = impression_allocation(rule, bids, instance, realization)
    return (alloc * realization.table).sum(axis=0)


def expected_clicks_by_realization(
    rule, bids, instance: AdInstance, max_cells: int = DEFAULT_MAX_CELLS
) -> np.ndarray:
    """``C(b, mu)`` by brute force over every click table, weighted by its probability."""
    _check_size(instance, max_cells)
    mu = instance.ctrs
    total = np.zeros(instance.num_ads)
    for rho in realization_space(instance.num_ads, instance.horizon):
        p = rho.probability(mu)
        if p > 0:
            total += p * clicks_given_realization(rule, bids, instance, rho)
    return total


def impressions_bound_ok(clicks: Sequence[float], ctrs: Sequence[float], horizon: int, tol: float = 1e-9) -> bool:
    c = np.asarray(clicks, dtype=float)
    mu = np.asarray(ctrs, dtype=float)
    return bool(np.all(c >= -tol) and np.all(c <= horizon + tol) and np.sum(c / mu) <= horizon + tol)
