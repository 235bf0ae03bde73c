"""Multi-period quadratic-utility weights when all wealth is held in risky assets.

Backward recursion over decision times ``0..T-1``. The state for a decision with
``t`` periods remaining is built from the second-moment matrix

    A = E[V_next * x x'],   mu* = E[R_next * x],   x = 1 + X

where ``V_next = 1/(1'A_next^{-1}1)`` and ``R_next = 1'A_next^{-1}mu*_next * V_next``
come from the following decision (``V = R = 1`` after the last one). Optimal
weights are ``A^{-1}1/(1'A^{-1}1) + Q_A mu* / (alpha W)``.

Sequences of states are returned in chronological order: ``states[s]`` is used
for the decision at time ``s`` (``T - s`` periods remaining).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import frontier
from ._linalg import NotPositiveDefiniteError, cho, rowdot, spd_inverse, spd_solve
from .moments import MomentForecast, Var1Model, conditional_means

__all__ = [
    "RiskyRecursionState",
    "recursion_iid",
    "recursion_mc",
    "decision_state_mc",
    "weights_theorem21",
    "corollary22_alpha_inv",
    "weights_corollary22",
    "markowitz_target",
    "MAX_MC_DEPTH",
]

MAX_MC_DEPTH = 6


@dataclass(frozen=True, eq=False)
class RiskyRecursionState:
    a: np.ndarray
    mu_star: np.ndarray
    q_tilde: np.ndarray
    r: float
    v: float

    @classmethod
    def from_moments(cls, a: np.ndarray, mu_star: np.ndarray) -> "RiskyRecursionState":
        a = 0.5 * (a + a.T)
        a_inv = spd_inverse(a, "A")
        g = a_inv.sum(axis=1)
        c = g.sum()
        q = a_inv - np.outer(g, g) / c
        return cls(a=a, mu_star=np.asarray(mu_star, float), q_tilde=q, r=float(g @ mu_star / c), v=float(1.0 / c))

    @property
    def s_tilde(self) -> float:
        return float(self.mu_star @ self.q_tilde @ self.mu_star)

    @property
    def gmv_part(self) -> np.ndarray:
        """``A^{-1}1 / 1'A^{-1}1``, the weights as ``alpha W`` grows without bound."""
        x = spd_solve(self.a, np.ones(self.a.shape[0]), "A")
        return x / x.sum()


def _terminal(f: MomentForecast) -> tuple[np.ndarray, np.ndarray]:
    m = f.gross_mean
    return f.sigma + np.outer(m, m), m


def recursion_iid(forecasts: Sequence[MomentForecast], horizon: int | None = None) -> list[RiskyRecursionState]:
    """Exact recursion for independent returns, one forecast per period ``1..T``."""
    forecasts = list(forecasts)
    T = len(forecasts) if horizon is None else horizon
    if T < 1 or len(forecasts) != T:
        raise ValueError(f"need exactly T >= 1 forecasts, got {len(forecasts)} for T={T}")
    states: list[RiskyRecursionState] = [None] * T  # type: ignore[list-item]
    r_next, v_next = 1.0, 1.0
    for s in range(T - 1, -1, -1):
        a, m = _terminal(forecasts[s])
        try:
            st = RiskyRecursionState.from_moments(v_next * a, r_next * m)
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(f"A is not positive definite at decision time {s}") from exc
        states[s] = st
        r_next, v_next = st.r, st.v
    return states


def _batch_rv(a: np.ndarray, mu_star: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``R`` and ``V`` for a stack of ``(A, mu*)`` pairs."""
    k = a.shape[-1]
    ones = np.broadcast_to(np.ones(k), mu_star.shape)
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("A is not positive definite for some draw") from exc
    sol = np.linalg.solve(a, np.stack([ones, mu_star], axis=-1))
    c = sol[..., 0].sum(axis=-1)
    return sol[..., 1].sum(axis=-1) / c, 1.0 / c


def _mc_moments(model: Var1Model, y: np.ndarray, remaining: int, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Estimate ``(A, mu*)`` at state ``y`` for a decision with ``remaining`` periods left."""
    if remaining == 1:
        mu = conditional_means(model, y)
        m = 1.0 + mu
        return model.sigma_x + np.outer(m, m), m
    draws = model.nu + rowdot(model.phi, y) + rowdot(model.noise_factor, rng.standard_normal((n, model.m)))
    x = 1.0 + model.select(draws)
    if remaining == 2:
        mu_next = 1.0 + conditional_means(model, draws)
        a_next = model.sigma_x + mu_next[:, :, None] * mu_next[:, None, :]
        r, v = _batch_rv(a_next, mu_next)
    else:
        r = np.empty(n)
        v = np.empty(n)
        for i in range(n):
            a_i, m_i = _mc_moments(model, draws[i], remaining - 1, n, rng)
            a_i = 0.5 * (a_i + a_i.T)
            st = RiskyRecursionState.from_moments(a_i, m_i)
            r[i], v[i] = st.r, st.v
    a = np.mean(v[:, None, None] * x[:, :, None] * x[:, None, :], axis=0)
    mu_star = np.mean(r[:, None] * x, axis=0)
    return a, mu_star


def recursion_mc(
    model: Var1Model,
    y_now,
    horizon: int,
    inner_samples: int,
    rng: np.random.Generator,
    max_depth: int = MAX_MC_DEPTH,
) -> list[RiskyRecursionState]:
    """Nested Monte-Carlo estimate of the recursion for a VAR(1) return process.

    Each expectation over next-period returns is an average over
    ``inner_samples`` draws; ``V`` and ``R`` one step ahead are recomputed per
    draw from that draw's own state. Cost grows like ``inner_samples**(T-1)``,
    so horizons above ``max_depth`` are refused.

    All states are evaluated at ``y_now``: ``states[s]`` is the state an investor
    in ``y_now`` with ``T - s`` periods left would use. For a time-dependent
    model only ``states[0]`` is the time-0 decision state.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if inner_samples < 100:
        raise ValueError("inner_samples must be at least 100")
    if horizon > max_depth:
        raise ValueError(
            f"horizon {horizon} exceeds max_depth {max_depth}; nested sampling cost is "
            f"inner_samples**(T-1)"
        )
    return [decision_state_mc(model, y_now, horizon - s, inner_samples, rng) for s in range(horizon)]


def decision_state_mc(
    model: Var1Model, y_now, remaining: int, inner_samples: int, rng: np.random.Generator
) -> RiskyRecursionState:
    """Single Monte-Carlo state for a decision at ``y_now`` with ``remaining`` periods left."""
    if remaining < 1:
        raise ValueError("remaining must be at least 1")
    y_now = np.asarray(y_now, dtype=float)
    if y_now.shape != (model.m,):
        raise ValueError(f"y_now must have {model.m} entries")
    cho(model.sigma_x, "L Sigma_eps L'")
    a, mu_star = _mc_moments(model, y_now, remaining, inner_samples, rng)
    try:
        return RiskyRecursionState.from_moments(a, mu_star)
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(
            f"estimated A not positive definite with {remaining} periods left; "
            "increase inner_samples or check the model"
        ) from exc


def weights_theorem21(state: RiskyRecursionState, alpha: float, wealth: float) -> np.ndarray:
    if not (alpha > 0 and wealth > 0):
        raise ValueError("alpha and wealth must be positive")
    return state.gmv_part + (state.q_tilde @ state.mu_star) / (alpha * wealth)


def _a_factor(f: MomentForecast) -> float:
    st = frontier.frontier_stats(f.mu, f.sigma)
    g = 1.0 + st.r_gmv
    return g / (g * g + (1.0 + st.s) * st.v_gmv)


def corollary22_alpha_inv(forecasts: Sequence[MomentForecast], alpha: float, wealth_now: float, t_index: int) -> float:
    """Effective inverse risk aversion for the decision with ``t_index`` periods left.

    ``forecasts`` covers at least the last ``t_index`` periods; only the final
    ``t_index`` entries are used.
    """
    if not (alpha > 0 and wealth_now > 0):
        raise ValueError("alpha and wealth_now must be positive")
    forecasts = list(forecasts)
    if not 1 <= t_index <= len(forecasts):
        raise ValueError(f"t_index must be in 1..{len(forecasts)}, got {t_index}")
    window = forecasts[len(forecasts) - t_index :]
    prod = 1.0
    for f in window[1:]:
        prod *= _a_factor(f)
    now = window[0]
    return frontier.reduce_risky(prod / (alpha * wealth_now), now.mu, now.sigma)


def weights_corollary22(forecasts: Sequence[MomentForecast], alpha: float, wealth_now: float, t_index: int) -> np.ndarray:
    forecasts = list(forecasts)
    alpha_inv = corollary22_alpha_inv(forecasts, alpha, wealth_now, t_index)
    now = forecasts[len(forecasts) - t_index]
    return frontier.gmv_weights(now.sigma) + alpha_inv * (frontier.q_matrix(now.sigma) @ now.mu)


def markowitz_target(forecasts: Sequence[MomentForecast], alpha: float, wealth_now: float, t_index: int) -> float:
    """Expected-return target whose minimum-variance portfolio is the optimal one."""
    forecasts = list(forecasts)
    alpha_inv = corollary22_alpha_inv(forecasts, alpha, wealth_now, t_index)
    now = forecasts[len(forecasts) - t_index]
    st = frontier.frontier_stats(now.mu, now.sigma)
    return st.r_gmv + alpha_inv * st.s
