"""Affine-maximizer certificate for one exploitation round of ALL.

For an agent owning ads ``A`` (``k = |A| < m``), the round's click vector
``p*`` on ``A`` maximizes ``b . p - G(p, mu)`` for a quadratic ``G`` that does
not depend on the agent's bids.  The helpers here build ``G``, its gradient
``f`` and its Hessian, and check the certificate numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidDimensions(ValueError):
    pass


@dataclass(frozen=True)
class HessianSpec:
    rho: np.ndarray
    tau: float
    alpha: float
    matrix: np.ndarray


def build_hessian(ctrs_subset, m: int) -> HessianSpec:
    mu = np.atleast_1d(np.asarray(ctrs_subset, dtype=float))
    k = mu.size
    if not 1 <= k < m:
        raise InvalidDimensions(f"need 1 <= k < m, got k={k}, m={m}")
    if np.any(mu <= 0):
        raise InvalidDimensions("CTRs must be positive")
    alpha = 1.0 / (m - k)
    tau = 1.0 + m - k
    rho = np.sqrt(alpha * m) / mu
    H = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            H[i, j] = tau * rho[i] ** 2 if i == j else rho[i] * rho[j]
    return HessianSpec(rho, tau, alpha, H)


def gram_vectors(spec: HessianSpec) -> np.ndarray:
    """Rows ``w_i`` in R^(k+1) with ``w_i . w_j = H_ij``."""
    k = spec.rho.size
    W = np.zeros((k, k + 1))
    W[np.arange(k), np.arange(k)] = np.sqrt(spec.tau - 1.0) * spec.rho
    W[:, k] = spec.rho
    return W


@dataclass(frozen=True)
class HessianCheck:
    spec: HessianSpec
    min_eigenvalue: float
    gram: np.ndarray
    gram_residual: float  # max |w_i . w_j - H_ij|
    gram_relative: float  # same, divided by max |H_ij|

    @property
    def positive_definite(self) -> bool:
        return self.min_eigenvalue > 0


def hessian_build_and_check(ctrs_subset, m: int) -> HessianCheck:
    spec = build_hessian(ctrs_subset, m)
    lam = float(np.linalg.eigvalsh(spec.matrix).min())
    W = gram_vectors(spec)
    resid = float(np.abs(W @ W.T - spec.matrix).max())
    return HessianCheck(spec, lam, W, resid, resid / float(np.abs(spec.matrix).max()))


@dataclass(frozen=True)
class CertificateTerms:
    ads: np.ndarray
    mu: np.ndarray  # CTRs of the agent's ads
    alpha: float
    beta: float
    m: int

    def f(self, p) -> np.ndarray:
        """Gradient map ``f_i(p)``."""
        p = np.asarray(p, dtype=float)
        mu, m = self.mu, self.m
        return p * m / mu ** 2 + np.sum(p / mu) * self.alpha * m / mu - self.beta * m / mu

    def G(self, p) -> float:
        p = np.asarray(p, dtype=float)
        mu, m, a = self.mu, self.m, self.alpha
        lin = -np.sum(p * m * self.beta / mu)
        sq = 0.5 * m * np.sum(p ** 2 * (1.0 + a) / mu ** 2)
        q = p / mu
        # each unordered pair once, so that grad G = f
        cross = m * a * (q.sum() ** 2 - np.sum(q ** 2)) / 2.0
        return float(lin + sq + cross)


def certificate_terms(bids, ctrs, m: int, agent_ads) -> CertificateTerms:
    b = np.asarray(bids, dtype=float)
    mu = np.asarray(ctrs, dtype=float)
    ads = np.asarray(agent_ads, dtype=int)
    k = ads.size
    if not 1 <= k < m or b.size != m or mu.size != m:
        raise InvalidDimensions(f"need full length-{m} vectors and 1 <= k < m")
    x = b * mu / m
    outside = np.setdiff1d(np.arange(m), ads)
    Y = float(x[outside].sum())
    alpha = 1.0 / (m - k)
    beta = 1.0 / m - alpha * (Y - k / m)
    return CertificateTerms(ads, mu[ads], alpha, beta, m)


@dataclass
class AffineReport:
    p_star: np.ndarray
    f_residual: float  # max |f_i(p*) - b_i|
    grad_residual: float  # max |dG/dp_i(p*) - b_i| by central differences
    critical_residual: float  # max |H p* - w|
    solve_residual: float  # max |H^-1 w - p*|
    grid_points: int
    grid_min_gap: float  # min over sampled p of objective(p*) - objective(p)

    @property
    def grid_ok(self) -> bool:
        return self.grid_min_gap > 0

    def max_residual(self) -> float:
        return max(self.f_residual, self.grad_residual, self.critical_residual, self.solve_residual)


def exploit_round_clicks(bids, ctrs) -> np.ndarray:
    b = np.asarray(bids, dtype=float)
    mu = np.asarray(ctrs, dtype=float)
    m = mu.size
    x = b * mu / m
    return mu * (x + (1.0 - x.sum()) / m)


def affine_maximizer_residual(
    bids, ctrs, m: int, agent_ads, grid_points: int = 1000, seed: int = 0, step: float = 1e-4
) -> AffineReport:
    """Check that ALL's exploitation-round clicks for ``agent_ads`` maximize ``b . p - G(p)``."""
    b = np.asarray(bids, dtype=float)
    terms = certificate_terms(b, ctrs, m, agent_ads)
    ads = terms.ads
    bA = b[ads]
    p_star = exploit_round_clicks(b, ctrs)[ads]
    f_res = float(np.abs(terms.f(p_star) - bA).max())

    k = ads.size
    grad = np.empty(k)
    for i in range(k):
        e = np.zeros(k)
        e[i] = step
        grad[i] = (terms.G(p_star + e) - terms.G(p_star - e)) / (2 * step)
    grad_res = float(np.abs(grad - bA).max())

    spec = build_hessian(terms.mu, m)
    w = bA + terms.beta * m / terms.mu
    crit_res = float(np.abs(spec.matrix @ p_star - w).max())
    solve_res = float(np.abs(np.linalg.solve(spec.matrix, w) - p_star).max())

    rng = np.random.default_rng(seed)
    direction = rng.normal(size=(grid_points, k))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = 10.0 ** rng.uniform(-3, 0, size=grid_points)
    best = float(bA @ p_star - terms.G(p_star))
    gaps = [best - float(bA @ p - terms.G(p)) for p in p_star + radius[:, None] * direction]
    return AffineReport(p_star, f_res, grad_res, crit_res, solve_res, grid_points, float(min(gaps)))
