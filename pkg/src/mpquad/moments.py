"""Return-process models: iid moment inputs and VAR(1) with embedded predictors.

A :class:`Var1Model` describes a state vector ``Y_t`` that evolves as

    Y_t = nu + Phi @ Y_{t-1} + eps_t,    eps_t ~ N(0, Sigma_eps)

and a 0/1 selector ``L`` that picks the asset returns ``X_t = L @ Y_t`` out of
the state. The one-step conditional moments of ``X_t`` are ``L nu + L Phi Y_{t-1}``
and ``L Sigma_eps L'``.

The modeled series is treated as the return series fed to the allocators;
no log-to-simple conversion is applied anywhere.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from ._linalg import (
    NotPositiveDefiniteError,
    as_square,
    as_vector,
    check_symmetric,
    cho,
    psd_factor,
    rowdot,
)

__all__ = [
    "MomentForecast",
    "Var1Model",
    "StatePath",
    "conditional_moments",
    "conditional_means",
    "certainty_equivalent_forecasts",
    "fit_var1",
    "ols_standard_errors",
    "simulate_path",
    "simulate_states",
    "iid_forecaster",
    "read_series_csv",
    "stationary_mean",
    "bsc_model",
    "international_model",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MomentForecast:
    """Conditional mean ``mu`` and covariance ``sigma`` of next-period returns."""

    mu: np.ndarray
    sigma: np.ndarray
    validate: dataclasses.InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        mu = as_vector(self.mu, "mu")
        sigma = as_square(self.sigma, "sigma")
        if sigma.shape[0] != mu.shape[0]:
            raise ValueError(
                f"mu has {mu.shape[0]} entries but sigma is {sigma.shape[0]}x{sigma.shape[1]}"
            )
        if validate:
            check_symmetric(sigma, "sigma")
            cho(sigma, "sigma")
        object.__setattr__(self, "mu", _freeze(mu))
        object.__setattr__(self, "sigma", _freeze(sigma))

    @property
    def k(self) -> int:
        return self.mu.shape[0]

    @property
    def gross_mean(self) -> np.ndarray:
        """Mean of ``1 + X``."""
        return 1.0 + self.mu

    def excess_mean(self, r_f: float) -> np.ndarray:
        """Mean of ``X - r_f 1``."""
        return self.mu - r_f


@dataclass(frozen=True, eq=False)
class Var1Model:
    nu: np.ndarray
    phi: np.ndarray
    sigma_eps: np.ndarray
    selector: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        nu = as_vector(self.nu, "nu")
        m = nu.shape[0]
        phi = as_square(self.phi, "phi")
        sigma_eps = as_square(self.sigma_eps, "sigma_eps")
        if phi.shape[0] != m or sigma_eps.shape[0] != m:
            raise ValueError(
                f"state dimension mismatch: nu has {m} entries, phi is {phi.shape}, "
                f"sigma_eps is {sigma_eps.shape}"
            )
        check_symmetric(sigma_eps, "sigma_eps")
        psd_factor(sigma_eps)  # raises when not positive semidefinite

        sel = np.array(self.selector, dtype=float)
        if sel.ndim != 2 or sel.shape[1] != m:
            raise ValueError(f"selector must be k x {m}, got shape {sel.shape}")
        if sel.shape[0] > m or sel.shape[0] == 0:
            raise ValueError("selector must have between 1 and m rows")
        if not np.all((sel == 0.0) | (sel == 1.0)) or not np.all(sel.sum(axis=1) == 1.0):
            raise ValueError("selector rows must each contain exactly one unit entry")
        cols = np.argmax(sel, axis=1)
        if len(set(cols.tolist())) != len(cols):
            raise ValueError("selector rows must be distinct")

        for field, value in (("nu", nu), ("phi", phi), ("sigma_eps", sigma_eps), ("selector", sel)):
            object.__setattr__(self, field, _freeze(value))

    @classmethod
    def with_leading_assets(cls, nu, phi, sigma_eps, n_assets: int, name: str = "") -> "Var1Model":
        """Model whose first ``n_assets`` state coordinates are the asset returns."""
        m = len(nu)
        return cls(nu, phi, sigma_eps, np.eye(n_assets, m), name=name)

    @property
    def m(self) -> int:
        return self.nu.shape[0]

    @property
    def k(self) -> int:
        return self.selector.shape[0]

    @cached_property
    def asset_index(self) -> np.ndarray:
        return _freeze(np.argmax(self.selector, axis=1))

    @cached_property
    def nu_x(self) -> np.ndarray:
        return _freeze(self.nu[self.asset_index].copy())

    @cached_property
    def phi_x(self) -> np.ndarray:
        return _freeze(self.phi[self.asset_index].copy())

    @cached_property
    def sigma_x(self) -> np.ndarray:
        idx = self.asset_index
        return _freeze(self.sigma_eps[np.ix_(idx, idx)].copy())

    @cached_property
    def noise_factor(self) -> np.ndarray:
        return _freeze(psd_factor(self.sigma_eps))

    def select(self, states: np.ndarray) -> np.ndarray:
        return states[..., self.asset_index]


@dataclass(frozen=True, eq=False)
class StatePath:
    """Simulated states ``Y_0..Y_T`` and returns ``X_1..X_T``."""

    states: np.ndarray
    returns: np.ndarray

    def __post_init__(self) -> None:
        if self.states.ndim != 2 or self.returns.ndim != 2:
            raise ValueError("states and returns must be two-dimensional")
        if self.states.shape[0] != self.returns.shape[0] + 1:
            raise ValueError("a path needs exactly one more state than returns")

    @property
    def horizon(self) -> int:
        return self.returns.shape[0]


def _check_state(model: Var1Model, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != model.m:
        raise ValueError(f"state has {y.shape[-1]} entries, model expects {model.m}")
    return y


def conditional_means(model: Var1Model, y_prev: np.ndarray) -> np.ndarray:
    """``L nu + L Phi y`` for one state or a stack of states (rows)."""
    y_prev = _check_state(model, y_prev)
    return model.nu_x + rowdot(model.phi_x, y_prev)


def conditional_moments(model: Var1Model, y_prev) -> MomentForecast:
    y_prev = _check_state(model, y_prev)
    if y_prev.ndim != 1:
        raise ValueError("y_prev must be a single state vector")
    try:
        return MomentForecast(conditional_means(model, y_prev), model.sigma_x)
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(
            "L Sigma_eps L' is not positive definite (degenerate innovation covariance)"
        ) from exc


def certainty_equivalent_forecasts(model: Var1Model, y_now, horizon: int) -> list[MomentForecast]:
    """Forecasts for the next ``horizon`` periods along the zero-innovation path.

    Each period uses the one-step conditional covariance; the state is propagated
    with its conditional mean.
    """
    y = _check_state(model, y_now).astype(float)
    out = []
    for _ in range(horizon):
        out.append(conditional_moments(model, y))
        y = model.nu + rowdot(model.phi, y)
    return out


def stationary_mean(model: Var1Model) -> np.ndarray:
    """Unconditional mean ``(I - Phi)^{-1} nu`` of a stable VAR(1)."""
    eig = np.abs(np.linalg.eigvals(model.phi))
    if eig.max(initial=0.0) >= 1.0:
        raise ValueError("VAR(1) is not stable; no stationary mean")
    return np.linalg.solve(np.eye(model.m) - model.phi, model.nu)


def _regressors(series: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = np.hstack([np.ones((series.shape[0] - 1, 1)), series[:-1]])
    return z, series[1:]


def fit_var1(series, n_assets: int | None = None, name: str = "") -> Var1Model:
    """Equation-by-equation OLS of ``Y_t`` on ``(1, Y_{t-1})``.

    The residual covariance uses denominator ``n - 1`` where ``n`` is the number
    of regression rows. ``n_assets`` marks the leading coordinates as asset
    returns (default: all of them).
    """
    y = np.asarray(series, dtype=float)
    if y.ndim != 2:
        raise ValueError("series must be a 2-D array (time x variables)")
    n_obs, m = y.shape
    if n_obs < m + 2:
        raise ValueError(f"need at least {m + 2} observations for {m} variables, got {n_obs}")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains missing or non-finite values")
    z, target = _regressors(y)
    coef, _, rank, _ = np.linalg.lstsq(z, target, rcond=None)
    if rank < z.shape[1]:
        raise np.linalg.LinAlgError(
            f"regressor matrix is rank deficient (rank {rank} < {z.shape[1]})"
        )
    resid = target - z @ coef
    n = resid.shape[0]
    sigma_eps = resid.T @ resid / (n - 1)
    sigma_eps = 0.5 * (sigma_eps + sigma_eps.T)
    k = m if n_assets is None else n_assets
    return Var1Model.with_leading_assets(coef[0], coef[1:].T, sigma_eps, k, name=name)


def ols_standard_errors(series, model: Var1Model) -> tuple[np.ndarray, np.ndarray]:
    """Conventional OLS standard errors of ``(nu, Phi)`` for a fitted model."""
    y = np.asarray(series, dtype=float)
    z, _ = _regressors(y)
    zz_inv = np.linalg.inv(z.T @ z)
    se = np.sqrt(np.outer(np.diag(model.sigma_eps), np.diag(zz_inv)))
    return se[:, 0], se[:, 1:]


def simulate_states(model: Var1Model, y0, noise: np.ndarray) -> np.ndarray:
    """Vectorised recursion over a stack of noise arrays.

    ``noise`` has shape ``(..., T, m)``; the result has shape ``(..., T + 1, m)``.
    Each leading index is processed independently of the others.
    """
    noise = np.asarray(noise, dtype=float)
    if noise.shape[-1] != model.m:
        raise ValueError(f"noise has {noise.shape[-1]} columns, model expects {model.m}")
    y0 = _check_state(model, y0)
    horizon = noise.shape[-2]
    batch = noise.shape[:-2]
    states = np.empty(batch + (horizon + 1, model.m))
    states[..., 0, :] = y0
    shocks = rowdot(model.noise_factor, noise)
    for t in range(horizon):
        states[..., t + 1, :] = model.nu + rowdot(model.phi, states[..., t, :]) + shocks[..., t, :]
    return states


def simulate_path(model: Var1Model, y0, horizon: int, noise) -> StatePath:
    noise = np.asarray(noise, dtype=float)
    if noise.shape != (horizon, model.m):
        raise ValueError(f"noise must have shape ({horizon}, {model.m}), got {noise.shape}")
    states = simulate_states(model, y0, noise)
    return StatePath(states=_freeze(states), returns=_freeze(model.select(states[1:]).copy()))


def iid_forecaster(mu, sigma=None, horizon: int | None = None) -> list[MomentForecast]:
    """Moment inputs for independent returns.

    Accepts a single ``(mu, sigma)`` pair repeated ``horizon`` times, per-period
    stacks ``mu`` of shape ``(T, k)`` with ``sigma`` of shape ``(T, k, k)``, or an
    existing list of :class:`MomentForecast` which is returned unchanged.
    """
    if isinstance(mu, (list, tuple)) and mu and all(isinstance(f, MomentForecast) for f in mu):
        if horizon is not None and len(mu) != horizon:
            raise ValueError(f"got {len(mu)} forecasts for horizon {horizon}")
        return list(mu)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if mu.ndim == 1:
        if horizon is None or horizon < 1:
            raise ValueError("horizon must be a positive count")
        f = MomentForecast(mu, sigma)
        return [f] * horizon
    if mu.ndim != 2 or sigma.ndim != 3 or sigma.shape[0] != mu.shape[0]:
        raise ValueError("per-period inputs need mu (T, k) and sigma (T, k, k)")
    if horizon is not None and horizon != mu.shape[0]:
        raise ValueError(f"got {mu.shape[0]} periods for horizon {horizon}")
    return [MomentForecast(m, s) for m, s in zip(mu, sigma)]


def read_series_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read a header row of series names followed by one numeric row per step."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        names = [h.strip() for h in header]
        if not names or any(not n for n in names):
            raise ValueError(f"{path}, line 1: header has empty column names")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(names):
                raise ValueError(
                    f"{path}, line {line}: expected {len(names)} fields, got {len(row)}"
                )
            values = []
            for name, cell in zip(names, row):
                cell = cell.strip()
                if not cell:
                    raise ValueError(f"{path}, line {line}: missing value in column {name!r}")
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}, line {line}: cannot parse {cell!r} in column {name!r}"
                    ) from None
            if not all(np.isfinite(values)):
                raise ValueError(f"{path}, line {line}: non-finite value")
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return names, np.array(rows)


def bsc_model() -> Var1Model:
    """Stock/bond/term-spread VAR(1) with the spread as sole predictor.

    State ``(r_stock, r_bond, z)``; monthly data 1945-2000.
    """
    nu = np.array([0.0059, 0.0007, -0.0028])
    phi = np.zeros((3, 3))
    phi[:, 2] = [0.0060, 0.0035, 0.9597]
    sigma = np.array(
        [
            [0.0018, 0.0002, -0.0005],
            [0.0002, 0.0006, 0.0007],
            [-0.0005, 0.0007, 0.0802],
        ]
    )
    return Var1Model.with_leading_assets(nu, phi, sigma, 2, name="bsc2006")


def international_model() -> Var1Model:
    """Five-index weekly VAR(1) (Belgium, Germany, Japan, UK, USA)."""
    nu = np.array([4.83e-04, 1.20e-03, 6.74e-04, 5.54e-04, 2.79e-05])
    phi = np.array(
        [
            [0.2011, -0.1592, 0.01892, -0.196, 0.455],
            [0.3139, -0.1231, -0.00191, -0.511, 0.434],
            [0.0487, 0.0888, -0.12131, -0.224, 0.343],
            [0.1829, -0.0889, 0.00988, -0.441, 0.382],
            [0.0766, -0.0643, -0.03049, -0.114, 0.133],
        ]
    )
    sigma = np.array(
        [
            [0.0013085186, 0.0010544496, 0.0004365753, 0.0009120373, 0.0006781289],
            [0.0010544496, 0.0013833540, 0.0005648237, 0.0010218539, 0.0008332314],
            [0.0004365753, 0.0005648237, 0.0007994341, 0.0004733366, 0.0003667012],
            [0.0009120373, 0.0010218539, 0.0004733366, 0.0010176793, 0.0006927251],
            [0.0006781289, 0.0008332314, 0.0003667012, 0.0006927251, 0.0007242233],
        ]
    )
    return Var1Model.with_leading_assets(nu, phi, sigma, 5, name="msci5")
