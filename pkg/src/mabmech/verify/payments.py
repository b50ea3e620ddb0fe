"""Payment oracle from the payment identity for dot-product valuations."""

from __future__ import annotations

import numpy as np

from ..domain import AdInstance
from ..quadrature import gl_nodes


def _owners(instance_or_owners) -> np.ndarray:
    if isinstance(instance_or_owners, AdInstance):
        return instance_or_owners.owners
    return np.asarray(instance_or_owners, dtype=int)


def myerson_payment_oracle(
    expected_clicks_fn, bids, agent: int, instance_or_owners, quadrature_nodes: int = 8, panels: int = 1
) -> float:
    """``b_i(C(b)) - int_0^1 b_i(C(b_-i, t b_i)) dt`` by composite Gauss-Legendre.

    ``b_i(C)`` is the agent's reported value of the click vector ``C``; the
    integrand varies only the agent's own bid block.
    """
    if quadrature_nodes < 2:
        raise ValueError("need at least two quadrature nodes")
    owners = _owners(instance_or_owners)
    b = np.asarray(bids, dtype=float)
    own = owners == agent
    if not np.any(b[own]):
        return 0.0

    def reported(x):
        return float(np.dot(b[own], np.asarray(expected_clicks_fn(x), dtype=float)[own]))

    ts, ws = gl_nodes(0.0, 1.0, quadrature_nodes, panels)
    integral = 0.0
    for t, w in zip(ts, ws):
        x = b.copy()
        x[own] *= t
        integral += w * reported(x)
    return reported(b) - integral
