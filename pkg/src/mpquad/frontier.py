"""Single-period mean-variance analytics.

Also holds the two rank-one reductions that map weights written in terms of the
second-moment matrix ``A = Sigma + m m'`` back to the usual ``Sigma`` form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from ._linalg import as_square, as_vector, cho, spd_inverse, spd_solve

__all__ = [
    "DegenerateTangencyError",
    "FrontierStats",
    "gmv_weights",
    "q_matrix",
    "frontier_stats",
    "markowitz_weights",
    "min_variance_at_target",
    "tangency_weights",
    "reduce_risky",
    "reduce_riskless",
]

TANGENCY_EPS = 1e-12


class DegenerateTangencyError(ValueError):
    """Excess-return vector is orthogonal to ``Sigma^{-1} 1``."""


@dataclass(frozen=True)
class FrontierStats:
    r_gmv: float
    v_gmv: float
    s: float


def _inputs(mu, sigma):
    mu = as_vector(mu, "mu")
    sigma = as_square(sigma, "sigma")
    if sigma.shape[0] != mu.shape[0]:
        raise ValueError(f"mu has {mu.shape[0]} entries but sigma is {sigma.shape}")
    return mu, sigma


def gmv_weights(sigma) -> np.ndarray:
    """Global minimum variance weights ``Sigma^{-1} 1 / 1' Sigma^{-1} 1``."""
    sigma = as_square(sigma, "sigma")
    x = spd_solve(sigma, np.ones(sigma.shape[0]), "sigma")
    return x / x.sum()


def q_matrix(sigma) -> np.ndarray:
    """``Sigma^{-1} - Sigma^{-1} 1 1' Sigma^{-1} / 1' Sigma^{-1} 1``.

    Satisfies ``Q 1 = 0`` and ``Q Sigma Q = Q``.
    """
    sigma = as_square(sigma, "sigma")
    inv = spd_inverse(sigma, "sigma")
    g = inv.sum(axis=1)
    return inv - np.outer(g, g) / g.sum()


def frontier_stats(mu, sigma) -> FrontierStats:
    mu, sigma = _inputs(mu, sigma)
    factor = cho(sigma, "sigma")
    ones = np.ones(mu.shape[0])
    inv_one = sla.cho_solve(factor, ones)
    inv_mu = sla.cho_solve(factor, mu)
    c = ones @ inv_one
    b = ones @ inv_mu
    # mu'Q mu written without materializing Q
    s = mu @ inv_mu - b * b / c
    return FrontierStats(r_gmv=float(b / c), v_gmv=float(1.0 / c), s=float(max(s, 0.0)))


def markowitz_weights(mu, sigma, alpha: float) -> np.ndarray:
    """Maximizer of ``mu'w - alpha/2 w' Sigma w`` subject to ``w'1 = 1``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    mu, sigma = _inputs(mu, sigma)
    return gmv_weights(sigma) + q_matrix(sigma) @ mu / alpha


def min_variance_at_target(mu, sigma, target: float) -> np.ndarray:
    """Minimum-variance fully invested portfolio with expected return ``target``."""
    mu, sigma = _inputs(mu, sigma)
    factor = cho(sigma, "sigma")
    ones = np.ones(mu.shape[0])
    inv_one = sla.cho_solve(factor, ones)
    inv_mu = sla.cho_solve(factor, mu)
    a, b, c = mu @ inv_mu, ones @ inv_mu, ones @ inv_one
    d = a * c - b * b
    if d <= 0:
        raise ValueError("mean vector is proportional to 1; every target but R_GMV is infeasible")
    lam_mu = (c * target - b) / d
    lam_one = (a - b * target) / d
    return lam_mu * inv_mu + lam_one * inv_one


def tangency_weights(mu, sigma, r_f: float) -> np.ndarray:
    """Fully invested portfolio proportional to ``Sigma^{-1}(mu - r_f 1)``."""
    mu, sigma = _inputs(mu, sigma)
    x = spd_solve(sigma, mu - r_f, "sigma")
    denom = x.sum()
    if abs(denom) < TANGENCY_EPS:
        raise DegenerateTangencyError(
            "tangency portfolio undefined: excess returns are orthogonal to Sigma^{-1} 1"
        )
    return x / denom


def reduce_risky(a_weights_alpha: float, mu, sigma) -> float:
    """Coefficient on ``Q mu`` equivalent to ``a_weights_alpha`` on ``Q_A (1 + mu)``.

    Given weights ``A^{-1}1/(1'A^{-1}1) + c Q_A (1+mu)`` with ``A = Sigma + (1+mu)(1+mu)'``,
    returns ``c'`` such that they equal ``GMV(Sigma) + c' Q mu``:
    ``c' = (c - 1 - R_GMV) / (1 + s)``.
    """
    st = frontier_stats(mu, sigma)
    return (a_weights_alpha - 1.0 - st.r_gmv) / (1.0 + st.s)


def reduce_riskless(gamma_tilde_inv: float, mu_excess, sigma) -> float:
    """Coefficient ``g'`` with ``g (Sigma + m m')^{-1} m = g' Sigma^{-1} m``."""
    mu_excess, sigma = _inputs(mu_excess, sigma)
    x = spd_solve(sigma, mu_excess, "sigma")
    return gamma_tilde_inv / (1.0 + mu_excess @ x)
