"""Cycle-monotonicity search over a finite grid of one agent's reports."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..domain import AdInstance


@dataclass(frozen=True)
class CycleWitness:
    agent: int
    types: list  # the agent's reported bid blocks theta_0 .. theta_{k-1}
    cycle_sum: float
    outcomes: list  # agent-block click vectors o_0 .. o_{k-1}

    def to_dict(self) -> dict:
        return {
            "agent": self.agent,
            "k": len(self.types),
            "cycle_sum": self.cycle_sum,
            "types": [list(map(float, t)) for t in self.types],
            "outcomes": [list(map(float, o)) for o in self.outcomes],
        }


@dataclass
class CmonResult:
    witnesses: list = field(default_factory=list)
    cycles_checked: int = 0
    exhaustive: bool = True
    min_cycle_sum: float = float("inf")
    grid_size: int = 0


def cycle_sum(types, outcomes) -> float:
    """``sum_j theta_j(o_j) - theta_{j-1}(o_j)`` with indices mod k."""
    k = len(types)
    total = 0.0
    for j in range(k):
        total += float(np.dot(types[j], outcomes[j]) - np.dot(types[j - 1], outcomes[j]))
    return total


def agent_grid(grid, num_coords: int) -> np.ndarray:
    """Accept either explicit bid blocks ``(g, k)`` or per-coordinate levels ``(g,)``."""
    g = np.asarray(grid, dtype=float)
    if g.ndim == 2:
        if g.shape[1] != num_coords:
            raise ValueError(f"grid blocks must have {num_coords} coordinates")
        return g
    return np.array(list(itertools.product(g, repeat=num_coords)), dtype=float)


def cmon_search(
    expected_clicks_fn,
    instance: AdInstance,
    agent: int,
    other_bids,
    grid,
    k_max: int = 3,
    tolerance: float = 1e-9,
    exhaustive_limit: int = 2_000_000,
    samples: int = 200_000,
    seed: int = 0,
) -> CmonResult:
    """Every cycle of length 2..k_max over ``grid`` whose cycle sum is below ``-tolerance``.

    ``expected_clicks_fn(bids)`` must return the exact click vector for a full
    bid vector.  Ordered k-tuples are enumerated completely while ``|grid|**k``
    stays under ``exhaustive_limit``; beyond that, ``samples`` random cycles
    are drawn and the result is marked non-exhaustive.
    """
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    ads = instance.ads_of(agent)
    pts = agent_grid(grid, len(ads))
    base = np.array(other_bids, dtype=float)
    outcomes = np.empty_like(pts)
    for a, theta in enumerate(pts):
        b = base.copy()
        b[ads] = theta
        outcomes[a] = np.asarray(expected_clicks_fn(b), dtype=float)[ads]
    # value[a, c] = theta_a(o_c); step[a, c] is the cycle term for moving from a to c
    value = pts @ outcomes.T
    step = np.diag(value)[None, :] - value
    g = len(pts)
    result = CmonResult(grid_size=g)
    rng = np.random.default_rng(seed)

    for k in range(2, k_max + 1):
        if g ** k <= exhaustive_limit:
            sums = _all_cycle_sums(step, k)
            idx = np.argwhere(sums < -tolerance)
            result.cycles_checked += sums.size
            result.min_cycle_sum = min(result.min_cycle_sum, float(sums.min()))
            tuples = [tuple(int(v) for v in row) for row in idx]
        else:
            result.exhaustive = False
            cyc = rng.integers(0, g, size=(samples, k))
            sums = sum(step[cyc[:, j - 1], cyc[:, j]] for j in range(k))
            result.cycles_checked += samples
            result.min_cycle_sum = min(result.min_cycle_sum, float(sums.min()))
            tuples = [tuple(int(v) for v in row) for row in cyc[sums < -tolerance]]
        for tup in tuples:
            types = [pts[a] for a in tup]
            outs = [outcomes[a] for a in tup]
            result.witnesses.append(CycleWitness(agent, types, cycle_sum(types, outs), outs))
    return result


def _all_cycle_sums(step: np.ndarray, k: int) -> np.ndarray:
    g = step.shape[0]
    total = np.zeros((g,) * k)
    for j in range(k):
        a, c = (j - 1) % k, j
        shape = [1] * k
        shape[a], shape[c] = g, g
        if a < c:
            total = total + step.reshape(shape)
        else:
            total = total + step.T.reshape(shape)
    return total


def check_cmon(expected_clicks_fn, instance, agent, other_bids, grid, k_max=3, tolerance=1e-9) -> list:
    return cmon_search(expected_clicks_fn, instance, agent, other_bids, grid, k_max, tolerance).witnesses
