"""Probe of the scaling identity W(z mu) = z W(mu)."""

from __future__ import annotations

import numpy as np

from ..domain import AdInstance


def homogeneity_probe(welfare, ctrs, z_grid=(0.1, 0.25, 0.5, 0.75, 1.0)) -> float:
    """Max over ``z`` of ``|W(z mu) - z W(mu)|`` for a welfare map ``W(mu)``."""
    mu = np.asarray(ctrs, dtype=float)
    base = float(welfare(mu))
    return max(abs(float(welfare(z * mu)) - z * base) for z in z_grid)


def fixed_distribution_welfare(distribution, bids, horizon: int):
    """Welfare of a rule that shows ad ``j`` with the same probability every round."""
    a = np.asarray(distribution, dtype=float)
    b = np.asarray(bids, dtype=float)
    return lambda mu: horizon * float(np.sum(a * b * mu))


def rule_welfare(rule, bids, instance: AdInstance, clicks_fn=None):
    """Expected welfare of ``rule`` as a function of the CTR vector.

    ``clicks_fn(rule, bids, instance)`` defaults to the rule's closed form.
    """
    b = np.asarray(bids, dtype=float)
    fn = clicks_fn or (lambda r, x, inst: r.expected_clicks(x, inst))
    return lambda mu: float(fn(rule, b, instance.with_ctrs(mu)) @ b)
