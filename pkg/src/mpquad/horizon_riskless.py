"""Multi-period quadratic-utility weights with a riskless asset.

Weights are returned for the risky assets only; the riskless share is
``1 - w.sum()``. Periods are numbered ``1..T``: ``market.r_f[i-1]`` is the
riskless return earned over period ``i`` and a decision with ``t`` periods left
is taken at time ``T - t``.

With ``c = (1/(alpha W)) / prod(R_f over the later periods) - R_f(now)`` the
exact weights are ``c * A^{-1} mu*``, the closed form under independence is
``c / (1 + mu'Sigma^{-1}mu) * Sigma^{-1} mu`` (``mu`` in excess of ``r_f``), and
the approximation used for predictable returns replaces the future-dependent
``A`` and ``mu*`` by ``Sigma + mu mu'`` and ``mu``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import frontier
from ._linalg import as_vector, spd_solve
from .moments import MomentForecast

__all__ = [
    "RisklessMarket",
    "RisklessRecursionState",
    "ApproxDiagnostics",
    "bracket",
    "riskless_recursion_iid",
    "eta_recursion",
    "weights_theorem31",
    "weights_corollary32",
    "lamps_weights",
    "approx_diagnostics",
    "tangency_multiperiod",
    "tangency_breve_form",
]


@dataclass(frozen=True, eq=False)
class RisklessMarket:
    r_f: tuple[float, ...]

    def __post_init__(self) -> None:
        r = tuple(float(x) for x in np.atleast_1d(np.asarray(self.r_f, dtype=float)))
        if not r:
            raise ValueError("r_f needs at least one period")
        if any(not np.isfinite(x) or 1.0 + x <= 0.0 for x in r):
            raise ValueError("every gross riskless return 1 + r_f must be positive and finite")
        object.__setattr__(self, "r_f", r)

    @classmethod
    def constant(cls, r_f: float, horizon: int) -> "RisklessMarket":
        return cls((float(r_f),) * horizon)

    @property
    def horizon(self) -> int:
        return len(self.r_f)

    @property
    def gross(self) -> np.ndarray:
        return 1.0 + np.asarray(self.r_f)

    def rate_for(self, t_index: int) -> float:
        """Riskless return for the decision with ``t_index`` periods left."""
        self._check(t_index)
        return self.r_f[self.horizon - t_index]

    def _check(self, t_index: int) -> None:
        if not 1 <= t_index <= self.horizon:
            raise ValueError(f"t_index must be in 1..{self.horizon}, got {t_index}")


@dataclass(frozen=True, eq=False)
class RisklessRecursionState:
    a_breve: np.ndarray
    mu_breve_star: np.ndarray
    s_tilde: float
    eta_mean: float


@dataclass(frozen=True, eq=False)
class ApproxDiagnostics:
    mse_bound: np.ndarray
    sigma_mag: float


def bracket(market: RisklessMarket, alpha: float, wealth: float, t_index: int) -> float:
    """``(1/(alpha W)) * prod(R_f later)^{-1} - R_f(now)``."""
    if not (alpha > 0 and wealth > 0):
        raise ValueError("alpha and wealth must be positive")
    market._check(t_index)
    gross = market.gross[market.horizon - t_index :]
    return 1.0 / (alpha * wealth) / np.prod(gross[1:]) - gross[0]


def _window(forecasts: Sequence[MomentForecast], t_index: int) -> list[MomentForecast]:
    forecasts = list(forecasts)
    if not 1 <= t_index <= len(forecasts):
        raise ValueError(f"t_index must be in 1..{len(forecasts)}, got {t_index}")
    return forecasts[len(forecasts) - t_index :]


def riskless_recursion_iid(forecasts: Sequence[MomentForecast], market: RisklessMarket) -> list[RisklessRecursionState]:
    """Exact states for independent returns, chronological (``states[s]`` for time ``s``)."""
    forecasts = list(forecasts)
    T = len(forecasts)
    if T < 1 or market.horizon != T:
        raise ValueError(f"need one forecast per market period, got {T} and {market.horizon}")
    s_breve = []
    for f, r in zip(forecasts, market.r_f):
        m = f.excess_mean(r)
        s_breve.append(float(m @ spd_solve(f.sigma, m, "sigma")))
    eta = eta_recursion(s_breve, T)
    states: list[RisklessRecursionState] = [None] * T  # type: ignore[list-item]
    factor = 1.0
    for s in range(T - 1, -1, -1):
        m = forecasts[s].excess_mean(market.r_f[s])
        a = factor * (forecasts[s].sigma + np.outer(m, m))
        m_star = factor * m
        s_tilde = float(m_star @ spd_solve(a, m_star, "A"))
        states[s] = RisklessRecursionState(a, m_star, s_tilde, eta[s])
        factor = 1.0 - s_tilde
    return states


def eta_recursion(s_breve: Sequence[float], horizon: int) -> list[float]:
    """Backward recursion ``eta_T = 1``, ``eta = (1 + (1 - eta_next) s) / (1 + s)``.

    ``s_breve[i]`` is ``mu'Sigma^{-1}mu`` (excess mean) for period ``i + 1``.
    Returns ``eta_1..eta_T`` in chronological order.
    """
    s_breve = [float(x) for x in s_breve]
    if horizon < 1 or len(s_breve) < horizon:
        raise ValueError(f"need {horizon} values of s, got {len(s_breve)}")
    s_breve = s_breve[len(s_breve) - horizon :]
    if any(x < 0 for x in s_breve):
        raise ValueError("s values must be non-negative")
    eta = [1.0] * horizon
    for i in range(horizon - 2, -1, -1):
        s = s_breve[i]
        eta[i] = (1.0 + (1.0 - eta[i + 1]) * s) / (1.0 + s)
    return eta


def weights_theorem31(
    state: RisklessRecursionState, market: RisklessMarket, alpha: float, wealth: float, t_index: int
) -> np.ndarray:
    c = bracket(market, alpha, wealth, t_index)
    return c * spd_solve(state.a_breve, state.mu_breve_star, "A")


def weights_corollary32(
    forecasts: Sequence[MomentForecast], market: RisklessMarket, alpha: float, wealth_now: float, t_index: int
) -> np.ndarray:
    now = _window(forecasts, t_index)[0]
    m = now.excess_mean(market.rate_for(t_index))
    x = spd_solve(now.sigma, m, "sigma")
    scale = frontier.reduce_riskless(bracket(market, alpha, wealth_now, t_index), m, now.sigma)
    return scale * x


def lamps_weights(
    forecast: MomentForecast, market: RisklessMarket, alpha: float, wealth_now: float, t_index: int
) -> np.ndarray:
    m = forecast.excess_mean(market.rate_for(t_index))
    a = forecast.sigma + np.outer(m, m)
    return bracket(market, alpha, wealth_now, t_index) * spd_solve(a, m, "Sigma + mu mu'")


def approx_diagnostics(forecast: MomentForecast) -> ApproxDiagnostics:
    """Size of the terms dropped by the one-step approximation.

    The one-step conditional prediction error of the mean forecast has mean
    square equal to the conditional variance, so the per-asset bound is the
    conditional standard deviation.
    """
    sigma = np.asarray(forecast.sigma)
    k = sigma.shape[0]
    off = np.abs(sigma[~np.eye(k, dtype=bool)])
    return ApproxDiagnostics(
        mse_bound=np.sqrt(np.clip(np.diag(sigma), 0.0, None)),
        sigma_mag=float(off.max(initial=0.0)),
    )


def tangency_multiperiod(forecast: MomentForecast, r_f: float) -> np.ndarray:
    """Multi-period tangency weights; they coincide with the single-period ones."""
    return frontier.tangency_weights(forecast.mu, forecast.sigma, r_f)


def tangency_breve_form(forecast: MomentForecast, r_f: float) -> np.ndarray:
    """Same portfolio written with ``(Sigma + mu mu')^{-1} mu`` (excess ``mu``)."""
    m = forecast.excess_mean(r_f)
    x = spd_solve(forecast.sigma + np.outer(m, m), m, "Sigma + mu mu'")
    denom = x.sum()
    if abs(denom) < frontier.TANGENCY_EPS:
        raise frontier.DegenerateTangencyError("tangency portfolio undefined")
    return x / denom
