"""Single-call bid-resampling transformation M_delta.

Each agent's bid vector is kept with probability ``1 - delta`` and otherwise
scaled by ``chi = gamma ** (1 / (1 - delta))`` with ``gamma`` uniform.  The
allocation rule is run once on the scaled bids; agent ``i`` pays its reported
value of the realized outcome, multiplied by ``1 - 1/delta`` when its bid was
scaled.  Payments use only observed clicks and the scaling draws.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .batch import TrialDraws, batch_actions, draw_trials, mean_ci, raw_rescale, realized_clicks
from .domain import AdInstance, agent_values, rescale_bids
from .env import ClickRealization, RunRecord, draw_table, run_policy
from .quadrature import gl_nodes
from .streams import stream

TINY = np.finfo(float).tiny


class InvalidDelta(ValueError):
    pass


def check_delta(delta: float) -> float:
    delta = float(delta)
    if not 0.0 < delta < 1.0:
        raise InvalidDelta(f"delta must lie strictly between 0 and 1, got {delta}")
    return delta


@dataclass(frozen=True)
class RescaleDraw:
    chi: np.ndarray
    is_full: np.ndarray


def rescale_from_uniforms(coin, gamma, delta: float) -> RescaleDraw:
    delta = check_delta(delta)
    coin = np.asarray(coin, dtype=float)
    is_full = coin < 1.0 - delta
    # gamma in (0, 1]; the floor keeps chi > 0 where the power underflows
    scaled = np.maximum(np.asarray(gamma, dtype=float) ** (1.0 / (1.0 - delta)), TINY)
    return RescaleDraw(np.where(is_full, 1.0, scaled), is_full)


def draw_rescale(delta: float, n: int, rng: np.random.Generator) -> RescaleDraw:
    check_delta(delta)
    coin, gamma = raw_rescale(rng, n)
    return rescale_from_uniforms(coin, gamma, delta)


def payment_factor(is_full, delta: float) -> np.ndarray:
    return np.where(is_full, 1.0, 1.0 - 1.0 / delta)


@dataclass
class MechanismRun:
    run: RunRecord
    draws: RescaleDraw
    modified_bids: np.ndarray
    bid_values: np.ndarray  # each agent's reported value of the realized clicks
    payments: np.ndarray


def run_mechanism(rule, bids, delta: float, instance: AdInstance, seed: int, trial: int = 0) -> MechanismRun:
    """One execution of M_delta: a single call of ``rule`` on the rescaled bids."""
    delta = check_delta(delta)
    bids = np.asarray(bids, dtype=float)
    draw = draw_rescale(delta, instance.num_agents, stream(seed, trial, "rescale"))
    modified = rescale_bids(bids, draw.chi, instance)
    realization = ClickRealization(draw_table(stream(seed, trial, "env"), instance))
    uniforms = stream(seed, trial, "rule").random(instance.horizon + 1)
    record = run_policy(rule, modified, instance, realization, uniforms)
    record.rng_trace = {"seed": int(seed), "trial": int(trial)}
    values = agent_values(instance.owners, instance.num_agents, bids, record.realized_click_vector)
    payments = values * payment_factor(draw.is_full, delta)
    return MechanismRun(record, draw, modified, values, payments)


@dataclass
class MechanismBatch:
    chi: np.ndarray  # (N, n)
    is_full: np.ndarray  # (N, n)
    actions: np.ndarray  # (N, T), -1 = skip
    clicks: np.ndarray  # (N, m)
    bid_values: np.ndarray  # (N, n)
    payments: np.ndarray  # (N, n)

    def utilities(self, instance: AdInstance, true_values) -> np.ndarray:
        v = agent_values(instance.owners, instance.num_agents, true_values, self.clicks)
        return v - self.payments

    def welfare(self, true_values) -> np.ndarray:
        return self.clicks @ np.asarray(true_values, dtype=float)


def run_mechanism_batch(rule, bids, delta: float, instance: AdInstance, draws: TrialDraws) -> MechanismBatch:
    """Vectorized ``run_mechanism`` over pre-drawn trials (trial ``k`` matches ``trial=draws.start+k``)."""
    delta = check_delta(delta)
    bids = np.asarray(bids, dtype=float)
    rd = rescale_from_uniforms(draws.coins, draws.gammas, delta)
    modified = rescale_bids(bids, rd.chi, instance)
    actions = batch_actions(rule, modified, instance, draws)
    clicks = realized_clicks(actions, draws.tables)
    values = agent_values(instance.owners, instance.num_agents, bids, clicks)
    payments = values * payment_factor(rd.is_full, delta)
    return MechanismBatch(rd.chi, rd.is_full, actions, clicks, values, payments)


@dataclass(frozen=True)
class MatchEstimate:
    frequency: float
    half_width: float  # 99% normal-approximation half-width
    std_error: float
    trials: int


def match_probability_estimate(
    rule, bids, delta: float, instance: AdInstance, trials: int, seed: int, draws: TrialDraws | None = None
) -> MatchEstimate:
    """Frequency with which A(b) and A(chi (x) b) give the same action trace under shared seeds."""
    delta = check_delta(delta)
    if draws is None:
        draws = draw_trials(instance, seed, trials)
    bids = np.asarray(bids, dtype=float)
    rd = rescale_from_uniforms(draws.coins, draws.gammas, delta)
    original = batch_actions(rule, bids, instance, draws)
    modified = batch_actions(rule, rescale_bids(bids, rd.chi, instance), instance, draws)
    same = np.all(original == modified, axis=1).astype(float)
    freq, hw = mean_ci(same)
    se = float(np.sqrt(max(freq * (1 - freq), 0.0) / same.size))
    return MatchEstimate(freq, hw, se, int(same.size))


def run_single_parameter(allocation, bids, delta: float, rng: np.random.Generator, trials: int):
    """The transformation for a single-parameter domain, vectorized over ``trials``.

    ``allocation`` maps a ``(trials, n)`` array of modified bids to allocations
    of the same shape.  Returns ``(allocations, payments, draw)``.
    """
    delta = check_delta(delta)
    b = np.atleast_1d(np.asarray(bids, dtype=float))
    coin = rng.random((trials, b.size))
    gamma = 1.0 - rng.random((trials, b.size))
    draw = rescale_from_uniforms(coin, gamma, delta)
    alloc = np.asarray(allocation(draw.chi * b), dtype=float)
    payments = b * alloc * payment_factor(draw.is_full, delta)
    return alloc, payments, draw


def rescale_law(delta: float, nodes: int = 8, panels: int = 1):
    """Discretized law of chi: the atom at 1 plus Gauss-Legendre nodes in gamma.

    Returns ``(chi, weight, is_full)``; integrals of smooth functions of
    ``gamma ** (1/(1-delta))`` are exact when that power is a polynomial of
    degree below ``2 * nodes``.
    """
    delta = check_delta(delta)
    g, w = gl_nodes(0.0, 1.0, nodes, panels)
    chi = np.concatenate([[1.0], g ** (1.0 / (1.0 - delta))])
    weight = np.concatenate([[1.0 - delta], delta * w])
    full = np.zeros(chi.size, dtype=bool)
    full[0] = True
    return chi, weight, full


def _law_grid(delta, num_agents, nodes, panels):
    chi, weight, full = rescale_law(delta, nodes, panels)
    idx = range(chi.size)
    for combo in itertools.product(idx, repeat=num_agents):
        c = np.array(combo)
        yield chi[c], float(np.prod(weight[c])), full[c]


def transformed_expected_clicks(
    expected_clicks_fn, bids, delta: float, owners, num_agents: int, nodes: int = 8, panels: int = 1
) -> np.ndarray:
    """``E_chi[C(chi (x) b)]`` by tensor-product quadrature over the agents' draws."""
    owners = np.asarray(owners, dtype=int)
    b = np.asarray(bids, dtype=float)
    total = 0.0
    for chi, w, _ in _law_grid(delta, num_agents, nodes, panels):
        total = total + w * np.asarray(expected_clicks_fn(b * chi[owners]), dtype=float)
    return np.asarray(total)


def expected_outcome_oracle(
    expected_clicks_fn, bids, true_values, delta: float, owners, num_agents: int, nodes: int = 8, panels: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Expected true value and expected payment of each agent under M_delta.

    ``expected_clicks_fn`` must give the exact expected click vector of the
    underlying rule (closed form or enumeration).
    """
    delta = check_delta(delta)
    owners = np.asarray(owners, dtype=int)
    b = np.asarray(bids, dtype=float)
    v = np.asarray(true_values, dtype=float)
    value = np.zeros(num_agents)
    pay = np.zeros(num_agents)
    for chi, w, full in _law_grid(delta, num_agents, nodes, panels):
        c = np.asarray(expected_clicks_fn(b * chi[owners]), dtype=float)
        value += w * agent_values(owners, num_agents, v, c)
        pay += w * agent_values(owners, num_agents, b, c) * payment_factor(full, delta)
    return value, pay
