"""Ex-post weak-monotonicity search for a fixed click table."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..domain import AdInstance
from ..env import ClickRealization, clicks_given_realization, realization_space


@dataclass(frozen=True)
class WmonWitness:
    bids: np.ndarray
    bids_alt: np.ndarray
    realization: ClickRealization
    value: float

    def to_dict(self) -> dict:
        return {
            "bids": self.bids.tolist(),
            "bids_alt": self.bids_alt.tolist(),
            "realization": self.realization.table.tolist(),
            "value": self.value,
        }


def wmon_value(rule, instance: AdInstance, bids, bids_alt, realization: ClickRealization, agent=None) -> float:
    """``(b' - b) . (C(b', rho) - C(b, rho))`` restricted to the agent's ads."""
    b = np.asarray(bids, dtype=float)
    b2 = np.asarray(bids_alt, dtype=float)
    diff = clicks_given_realization(rule, b2, instance, realization) - clicks_given_realization(
        rule, b, instance, realization
    )
    ads = np.arange(instance.num_ads) if agent is None else instance.ads_of(agent)
    return float(np.dot((b2 - b)[ads], diff[ads]))


def single_click_realization(num_ads: int, horizon: int, ad: int, rounds) -> ClickRealization:
    """Table where ``ad`` is clicked in ``rounds`` and no other ad is ever clicked."""
    table = np.zeros((horizon, num_ads), dtype=np.int8)
    table[list(rounds), ad] = 1
    return ClickRealization(table)


def find_wmon_violation(
    rule,
    instance: AdInstance,
    bid_grid,
    realizations=None,
    agent=None,
    tolerance: float = 1e-9,
) -> WmonWitness | None:
    """Most negative ex-post WMON value over grid pairs and click tables, or ``None``.

    ``bid_grid`` holds per-coordinate levels; the agent's coordinates range over
    their product while other ads keep the first grid level.  Without explicit
    ``realizations`` every ``2^(mT)`` table is tried.
    """
    levels = np.asarray(bid_grid, dtype=float)
    m = instance.num_ads
    ads = np.arange(m) if agent is None else instance.ads_of(agent)
    vectors = []
    for block in itertools.product(levels, repeat=len(ads)):
        b = np.full(m, levels[0])
        b[ads] = block
        vectors.append(b)
    if realizations is None:
        realizations = list(realization_space(m, instance.horizon))
    best = None
    for rho in realizations:
        clicks = np.array([clicks_given_realization(rule, b, instance, rho) for b in vectors])
        B = np.array(vectors)[:, ads]
        C = clicks[:, ads]
        # vals[a, c] = (b_c - b_a) . (C_c - C_a)
        P = B @ C.T
        d = P.diagonal()
        vals = d[None, :] + d[:, None] - P - P.T
        a, c = np.unravel_index(np.argmin(vals), vals.shape)
        v = float(vals[a, c])
        if v < -tolerance and (best is None or v < best.value):
            best = WmonWitness(vectors[a], vectors[c], rho, v)
    return best
