"""Vectorized execution of many independent runs.

Per-trial randomness comes from the same keyed streams the streaming
simulator uses, so trial ``i`` here reproduces ``simulate(..., trial=i)``
action for action.  Rules without a vectorized path fall back to the
streaming simulator trial by trial.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import AdInstance, ValueOutOfRange
from .env import ClickRealization, draw_table, run_policy
from .rules import AllRule, AllSingleAgentRule, AllocationRule, RandRule, SampledSingleParamRule
from .streams import stream


def raw_rescale(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniforms behind the rescaling draw: a coin per agent and gamma in (0, 1]."""
    coin = rng.random(n)
    gamma = 1.0 - rng.random(n)
    return coin, gamma


@dataclass
class TrialDraws:
    tables: np.ndarray  # (N, T, m) click realizations
    uniforms: np.ndarray  # (N, T + 1) rule randomness
    coins: np.ndarray  # (N, n) rescaling coin flips
    gammas: np.ndarray  # (N, n) rescaling magnitudes
    seed: int
    start: int

    @property
    def trials(self) -> int:
        return self.tables.shape[0]

    def subset(self, lo: int, hi: int) -> "TrialDraws":
        return TrialDraws(
            self.tables[lo:hi], self.uniforms[lo:hi], self.coins[lo:hi], self.gammas[lo:hi],
            self.seed, self.start + lo,
        )


def draw_trials(instance: AdInstance, seed: int, trials: int, start: int = 0) -> TrialDraws:
    T, m, n = instance.horizon, instance.num_ads, instance.num_agents
    tables = np.empty((trials, T, m), dtype=np.int8)
    uniforms = np.empty((trials, T + 1))
    coins = np.empty((trials, n))
    gammas = np.empty((trials, n))
    for k in range(trials):
        i = start + k
        tables[k] = draw_table(stream(seed, i, "env"), instance)
        uniforms[k] = stream(seed, i, "rule").random(T + 1)
        coins[k], gammas[k] = raw_rescale(stream(seed, i, "rescale"), n)
    return TrialDraws(tables, uniforms, coins, gammas, seed, start)


def _sample_rows(dist: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF draw, same arithmetic as :func:`env.sample_action`."""
    cdf = np.cumsum(dist, axis=1)
    idx = np.count_nonzero(cdf <= u[:, None], axis=1)
    overflow = idx >= dist.shape[1]
    if np.any(overflow):
        last = dist.shape[1] - 1 - np.argmax((dist > 0)[:, ::-1], axis=1)
        idx = np.where(overflow, last, idx)
    return idx


def _all_actions(bids, tables, uniforms, t0, positions):
    """ALL on ``bids`` (N, k) whose entry ``i`` is shown as action ``positions[i]``.

    A position equal to ``m`` is the skip slot; that is how the single-agent
    dummy ad is represented.  The distribution is laid out over the full
    ``[ad_0, ..., ad_{m-1}, skip]`` vector before sampling, exactly as the
    streaming kernels do.
    """
    N, T, m = tables.shape
    k = bids.shape[1]
    positions = np.asarray(positions)
    inner_of = np.full(m + 1, -1)
    inner_of[positions] = np.arange(k)
    rows = np.arange(N)
    actions = np.full((N, T), -1, dtype=int)
    counts = np.zeros((N, k))
    for t in range(T):
        if t < t0:
            inner = np.full((N, k), 1.0 / k)
        else:
            p = bids * counts / t0
            resid = np.maximum(0.0, 1.0 - np.cumsum(p, axis=1)[:, -1])
            inner = p + (resid / k)[:, None]
        dist = np.zeros((N, m + 1))
        dist[:, positions] = inner
        idx = _sample_rows(dist, uniforms[:, t + 1])
        shown = idx < m
        actions[:, t] = np.where(shown, idx, -1)
        if t < t0:
            hit = rows[shown]
            j = idx[shown]
            counts[hit, inner_of[j]] += tables[hit, t, j]
    return actions


def _sampled_actions(rule: SampledSingleParamRule, b, instance, draws):
    selections = list(rule.selections(instance))
    weights = np.array([w for w, _ in selections])
    cdf = np.cumsum(weights)
    pick = np.count_nonzero(cdf[None, :] <= draws.uniforms[:, :1], axis=1)
    over = pick >= len(weights)
    pick[over] = np.flatnonzero(weights > 0)[-1]
    out = np.empty((draws.trials, instance.horizon), dtype=int)
    t0 = rule.inner.params.explore_rounds
    rule.inner.params.check(instance.horizon)
    for g, (_, selected) in enumerate(selections):
        rows = np.flatnonzero(pick == g)
        if rows.size:
            out[rows] = _all_actions(b[np.ix_(rows, selected)], draws.tables[rows], draws.uniforms[rows], t0, selected)
    return out


def batch_actions(rule: AllocationRule, bids, instance: AdInstance, draws: TrialDraws) -> np.ndarray:
    """Actions per trial and round, ``-1`` meaning skip; ``bids`` is ``(m,)`` or ``(N, m)``."""
    N = draws.trials
    m = instance.num_ads
    b = np.broadcast_to(np.asarray(bids, dtype=float), (N, m))
    if type(rule) is RandRule:
        dist = np.zeros((N, m + 1))
        dist[:, :m] = 1.0 / m
        return np.stack([_sample_rows(dist, draws.uniforms[:, t + 1]) for t in range(instance.horizon)], axis=1)
    sampled = type(rule) is SampledSingleParamRule and type(rule.inner) is AllRule
    if type(rule) in (AllRule, AllSingleAgentRule) or sampled:
        if np.any(b < 0.0) or np.any(b > 1.0):
            raise ValueOutOfRange("bids must lie in [0, 1]")
    if type(rule) is AllRule:
        rule._prepare(b[0], instance)
        return _all_actions(b, draws.tables, draws.uniforms, rule.params.explore_rounds, np.arange(m))
    if type(rule) is AllSingleAgentRule:
        rule._prepare(b[0], instance)
        b_aug = np.concatenate([b, np.zeros((N, 1))], axis=1)
        return _all_actions(b_aug, draws.tables, draws.uniforms, rule.params.explore_rounds, np.arange(m + 1))
    if sampled:
        return _sampled_actions(rule, b, instance, draws)
    out = np.empty((N, instance.horizon), dtype=int)
    for k in range(N):
        rec = run_policy(rule, b[k], instance, ClickRealization(draws.tables[k]), draws.uniforms[k])
        out[k] = [-1 if a is None else a for a in rec.actions]
    return out


def realized_clicks(actions: np.ndarray, tables: np.ndarray) -> np.ndarray:
    N, T, m = tables.shape
    clicks = np.zeros((N, m))
    rows = np.arange(N)
    for t in range(T):
        a = actions[:, t]
        shown = a >= 0
        np.add.at(clicks, (rows[shown], a[shown]), tables[rows[shown], t, a[shown]])
    return clicks


def per_round_clicks(actions: np.ndarray, tables: np.ndarray) -> np.ndarray:
    """Clicks per trial, round and ad, shape ``(N, T, m)``."""
    N, T, m = tables.shape
    out = np.zeros((N, T, m))
    rows = np.arange(N)
    for t in range(T):
        a = actions[:, t]
        shown = a >= 0
        out[rows[shown], t, a[shown]] = tables[rows[shown], t, a[shown]]
    return out


def mean_ci(samples, z: float = 2.5758293035489004) -> tuple[float, float]:
    """Sample mean and half-width of the normal-approximation CI (99% by default)."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        return float(x.mean()), float("nan")
    return float(x.mean()), float(z * x.std(ddof=1) / np.sqrt(x.size))
