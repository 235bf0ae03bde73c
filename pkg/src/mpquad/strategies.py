"""Strategy policies, wealth dynamics and the Monte-Carlo comparison experiment.

Every strategy is evaluated on a batch of simulated state paths at once. Each
repetition draws its own innovations from a stream keyed by
``(master_seed, repetition)``, with row ``t`` of that draw used for period
``t + 1``. All per-path arithmetic is row-local, so a repetition's utility does
not depend on which other repetitions share its batch, on the chunking, or on
the number of worker threads.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from . import frontier
from ._linalg import NotPositiveDefiniteError, rowdot, spd_inverse
from .horizon_risky import MAX_MC_DEPTH, decision_state_mc, weights_theorem21
from .horizon_riskless import RisklessMarket
from .moments import StatePath, Var1Model, conditional_means, simulate_states, stationary_mean

__all__ = [
    "StrategyKind",
    "StrategySpec",
    "BscPolicy",
    "PolicyInputs",
    "StrategyResult",
    "SimulationReport",
    "StrategyEvaluationError",
    "gamma_to_alpha",
    "quadratic_utility",
    "wealth_step_risky",
    "wealth_step_riskless",
    "bsc_predictors",
    "bsc_fit",
    "policy_weights",
    "terminal_wealth",
    "run_path",
    "repetition_noise",
    "monte_carlo_experiment",
    "ecdf",
    "mad",
    "calibrate_rf",
]

BUDGET_TOL = 1e-8
CHUNK = 512
DEFAULT_TRAINING_PATHS = 20_000
DEFAULT_INNER_SAMPLES = 200

# spawn-key prefixes separating the independent random streams
_EVAL_STREAM = 0
_BSC_STREAM = 1
_MC_STREAM = 2


class StrategyKind(str, enum.Enum):
    LAMPS = "LAMPS"
    MTP = "MTP"
    GMV_MYOPIC = "GMV_MYOPIC"
    PARTIAL_MYOPIC = "PARTIAL_MYOPIC"
    BSC = "BSC"
    COR22_RISKY = "COR22_RISKY"
    THM21_RISKY = "THM21_RISKY"

    @property
    def fully_invested(self) -> bool:
        """Strategies that never hold the riskless asset."""
        return self in (StrategyKind.GMV_MYOPIC, StrategyKind.COR22_RISKY, StrategyKind.THM21_RISKY)

    @classmethod
    def parse(cls, name: str) -> "StrategyKind":
        key = name.strip().upper().replace("-", "_")
        aliases = {"GMV": "GMV_MYOPIC", "PM": "PARTIAL_MYOPIC", "PARTIAL": "PARTIAL_MYOPIC"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown strategy {name!r}; choose from {valid}") from None


@dataclass(frozen=True)
class StrategySpec:
    kind: StrategyKind
    gamma: float
    horizon: int
    w0: float = 1.0
    # explicit alpha, e.g. the rounded values quoted in tables; None derives it from gamma
    alpha_override: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", StrategyKind.parse(self.kind) if isinstance(self.kind, str) else self.kind)
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be at least 1, got {self.horizon}")
        if not self.w0 > 0:
            raise ValueError(f"w0 must be positive, got {self.w0}")
        if self.alpha_override is not None and not self.alpha_override > 0:
            raise ValueError("alpha_override must be positive")

    @property
    def alpha(self) -> float:
        return self.alpha_override if self.alpha_override is not None else gamma_to_alpha(self.gamma)


@dataclass(frozen=True, eq=False)
class BscPolicy:
    theta: np.ndarray
    predictor_index: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 2:
            raise ValueError("theta must be a k x p matrix")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta has non-finite entries")
        if theta.shape[1] != len(self.predictor_index) + 1:
            raise ValueError("theta needs one column for the constant plus one per predictor")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "predictor_index", tuple(int(i) for i in self.predictor_index))

    def weights(self, states: np.ndarray) -> np.ndarray:
        return rowdot(self.theta, bsc_predictors(states, self.predictor_index))


@dataclass(frozen=True, eq=False)
class PolicyInputs:
    """Everything besides the path that a strategy may need."""

    model: Var1Model
    bsc: BscPolicy | None = None
    inner_samples: int = DEFAULT_INNER_SAMPLES
    max_depth: int = MAX_MC_DEPTH


@dataclass(frozen=True, eq=False)
class StrategyResult:
    median: float
    mad: float
    exceedance: float
    samples: np.ndarray


@dataclass(frozen=True, eq=False)
class SimulationReport:
    meta: dict
    results: dict[str, StrategyResult] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "meta": dict(self.meta),
            "per_strategy": {
                name: {"median": r.median, "mad": r.mad, "exceedance": r.exceedance}
                for name, r in self.results.items()
            },
        }


class StrategyEvaluationError(RuntimeError):
    def __init__(self, strategy: str, repetition: int, cause: BaseException | str):
        self.strategy = strategy
        self.repetition = repetition
        super().__init__(f"strategy {strategy} failed on repetition {repetition}: {cause}")


def gamma_to_alpha(gamma: float) -> float:
    """Quadratic-utility ``alpha`` giving relative risk aversion ``gamma`` at unit wealth."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return gamma / (1.0 + gamma)


def quadratic_utility(wealth, alpha: float):
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return wealth - 0.5 * alpha * wealth * wealth


def wealth_step_risky(wealth: float, weights, returns) -> float:
    w = np.asarray(weights, dtype=float)
    if abs(w.sum() - 1.0) > BUDGET_TOL:
        raise ValueError(f"weights sum to {w.sum():.12g}, expected 1")
    return wealth * (1.0 + float(w @ np.asarray(returns, dtype=float)))


def wealth_step_riskless(wealth: float, risky_weights, returns, r_f: float) -> float:
    w = np.asarray(risky_weights, dtype=float)
    x = np.asarray(returns, dtype=float)
    return wealth * (1.0 + r_f + float(w @ (x - r_f)))


# --- BSC ---------------------------------------------------------------------


def bsc_predictors(states: np.ndarray, predictor_index: Sequence[int]) -> np.ndarray:
    """``z_t = (1, y_t[predictor_index])`` for one state or a stack of states."""
    states = np.asarray(states, dtype=float)
    ones = np.ones(states.shape[:-1] + (1,))
    return np.concatenate([ones, states[..., list(predictor_index)]], axis=-1)


def default_predictors(model: Var1Model) -> tuple[int, ...]:
    """State coordinates that are not asset returns."""
    assets = set(model.asset_index.tolist())
    return tuple(i for i in range(model.m) if i not in assets)


def _augmented_returns(model, market, states, predictor_index) -> np.ndarray:
    """Per path ``sum_t (prod R_f after t+1) z_t (x) (X_{t+1} - r_f)``, flattened ``(p, k)``."""
    horizon = states.shape[-2] - 1
    gross = market.gross[:horizon]
    n = states.shape[0]
    z = bsc_predictors(states[:, :-1], predictor_index)
    excess = model.select(states[:, 1:]) - np.asarray(market.r_f[:horizon])[:, None]
    out = np.zeros((n, z.shape[-1] * model.k))
    for t in range(horizon):
        scale = np.prod(gross[t + 1 :])
        out += scale * (z[:, t, :, None] * excess[:, t, None, :]).reshape(n, -1)
    return out


def bsc_fit(
    model: Var1Model,
    market: RisklessMarket,
    gamma: float,
    horizon: int,
    training_paths: int,
    rng: np.random.Generator,
    y0=None,
    w0: float = 1.0,
    predictor_index: Sequence[int] | None = None,
    alpha: float | None = None,
) -> BscPolicy:
    """Fit ``w_t = theta z_t`` by maximizing average simulated terminal utility.

    Terminal wealth is linearised in ``theta``,
    ``W_T ~ W_0 (prod R_f + theta . X)`` with ``X`` the predictor-scaled excess
    returns compounded at the riskless rate, which turns the problem into a
    single-period mean-variance choice over the augmented assets:
    ``theta = ((1 - alpha W_0 prod R_f) / (alpha W_0)) E[X X']^{-1} E[X]``.
    The linearisation is exact for ``T = 1``.
    """
    if training_paths < 1000:
        raise ValueError("training_paths must be at least 1000")
    if market.horizon < horizon:
        raise ValueError("market covers fewer periods than the horizon")
    a = gamma_to_alpha(gamma) if alpha is None else alpha
    idx = default_predictors(model) if predictor_index is None else tuple(predictor_index)
    y0 = stationary_mean(model) if y0 is None else np.asarray(y0, dtype=float)
    p = len(idx) + 1
    dim = p * model.k
    xx = np.zeros((dim, dim))
    xm = np.zeros(dim)
    done = 0
    while done < training_paths:
        n = min(CHUNK * 8, training_paths - done)
        states = simulate_states(model, y0, rng.standard_normal((n, horizon, model.m)))
        x = _augmented_returns(model, market, states, idx)
        xx += np.einsum("ni,nj->ij", x, x)
        xm += x.sum(axis=0)
        done += n
    xx /= training_paths
    xm /= training_paths
    xx = 0.5 * (xx + xx.T)
    c = np.prod(market.gross[:horizon])
    try:
        sol = spd_inverse(xx, "augmented second-moment matrix") @ xm
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(
            "augmented second-moment matrix is singular; predictors may be collinear"
        ) from exc
    theta = ((1.0 - a * w0 * c) / (a * w0)) * sol
    return BscPolicy(theta.reshape(p, model.k).T, idx)


# --- batched policy evaluation ---------------------------------------------------


def _bracket(market: RisklessMarket, alpha: float, wealth: np.ndarray, s: int, horizon: int) -> np.ndarray:
    """Riskless bracket at decision time ``s`` of a ``horizon``-period problem."""
    gross = market.gross[:horizon]
    return 1.0 / (alpha * wealth) / np.prod(gross[s + 1 :]) - gross[s]


def _solve_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # numpy factors each matrix of the stack separately, so rows stay independent
    return np.linalg.solve(a, b[..., None])[..., 0]


class _Evaluator:
    """Per-period weights for one strategy over a batch of states."""

    def __init__(self, spec: StrategySpec, inputs: PolicyInputs, market: RisklessMarket):
        self.spec = spec
        self.alpha = spec.alpha
        self.inputs = inputs
        self.model = inputs.model
        self.market = market
        sigma = self.model.sigma_x
        kind = spec.kind
        if kind in (StrategyKind.GMV_MYOPIC, StrategyKind.COR22_RISKY):
            self.gmv = frontier.gmv_weights(sigma)
        if kind is StrategyKind.COR22_RISKY:
            self.q = frontier.q_matrix(sigma)
            inv = spd_inverse(sigma, "sigma")
            self.g = inv.sum(axis=1) / inv.sum()
            self.v_gmv = 1.0 / inv.sum()
        if kind is StrategyKind.BSC and inputs.bsc is None:
            raise ValueError("BSC strategy needs a fitted BscPolicy")
        if kind is StrategyKind.THM21_RISKY:
            if spec.horizon > inputs.max_depth:
                raise ValueError(
                    f"THM21_RISKY horizon {spec.horizon} exceeds max_depth {inputs.max_depth}"
                )
            if inputs.inner_samples < 100:
                raise ValueError("inner_samples must be at least 100")

    def weights(self, y: np.ndarray, wealth: np.ndarray, s: int, rngs) -> np.ndarray:
        kind = self.spec.kind
        model, T = self.model, self.spec.horizon
        n = y.shape[0]
        if kind is StrategyKind.PARTIAL_MYOPIC:
            return np.zeros((n, model.k))
        if kind is StrategyKind.GMV_MYOPIC:
            return np.broadcast_to(self.gmv, (n, model.k))
        if kind is StrategyKind.BSC:
            return self.inputs.bsc.weights(y)
        r_f = self.market.r_f[s]
        mu = conditional_means(model, y)
        if kind is StrategyKind.MTP:
            x = _solve_rows(np.broadcast_to(model.sigma_x, (n, model.k, model.k)), mu - r_f)
            denom = x.sum(axis=-1, keepdims=True)
            if np.any(np.abs(denom) < frontier.TANGENCY_EPS):
                raise frontier.DegenerateTangencyError("tangency portfolio undefined")
            return x / denom
        if kind is StrategyKind.LAMPS:
            m = mu - r_f
            a = model.sigma_x + m[:, :, None] * m[:, None, :]
            return _bracket(self.market, self.alpha, wealth, s, T)[:, None] * _solve_rows(a, m)
        if kind is StrategyKind.COR22_RISKY:
            return self._cor22(y, mu, wealth, s)
        if kind is StrategyKind.THM21_RISKY:
            out = np.empty((n, model.k))
            for i in range(n):
                st = decision_state_mc(model, y[i], T - s, self.inputs.inner_samples, rngs[i])
                out[i] = weights_theorem21(st, self.alpha, float(wealth[i]))
            return out
        raise AssertionError(kind)

    def _cor22(self, y, mu, wealth, s):
        # certainty-equivalent forecasts for the later periods; Sigma is constant
        model, T = self.model, self.spec.horizon
        prod = np.ones(y.shape[0])
        ce = y
        for _ in range(T - s - 1):
            ce = model.nu + rowdot(model.phi, ce)
            m = conditional_means(model, ce)
            r_gmv = m @ self.g
            s_i = np.sum(rowdot(self.q, m) * m, axis=-1)
            g = 1.0 + r_gmv
            prod *= g / (g * g + (1.0 + s_i) * self.v_gmv)
        r_now = mu @ self.g
        qmu = rowdot(self.q, mu)
        s_now = np.sum(qmu * mu, axis=-1)
        a_inv = (prod / (self.alpha * wealth) - 1.0 - r_now) / (1.0 + s_now)
        return self.gmv + a_inv[:, None] * qmu


def policy_weights(
    spec: StrategySpec,
    inputs: PolicyInputs,
    market: RisklessMarket,
    states: np.ndarray,
    wealth: np.ndarray,
    s: int,
    rngs: Sequence[np.random.Generator] | None = None,
) -> np.ndarray:
    """Risky weights at decision time ``s`` for a stack of states and wealths."""
    if not 0 <= s < spec.horizon:
        raise ValueError(f"decision time must be in 0..{spec.horizon - 1}")
    states = np.atleast_2d(np.asarray(states, dtype=float))
    wealth = np.broadcast_to(np.asarray(wealth, dtype=float), states.shape[:1])
    return np.array(_Evaluator(spec, inputs, market).weights(states, wealth, s, rngs))


def terminal_wealth(
    spec: StrategySpec,
    inputs: PolicyInputs,
    market: RisklessMarket,
    states: np.ndarray,
    rngs: Sequence[np.random.Generator] | None = None,
) -> np.ndarray:
    """Terminal wealth for a batch of state paths of shape ``(n, >= T + 1, m)``.

    ``rngs`` supplies one generator per path for strategies that sample
    internally (``THM21_RISKY``).
    """
    T = spec.horizon
    if states.shape[-2] < T + 1:
        raise ValueError(f"paths cover {states.shape[-2] - 1} periods, strategy needs {T}")
    if market.horizon < T:
        raise ValueError(f"market covers {market.horizon} periods, strategy needs {T}")
    if spec.kind is StrategyKind.THM21_RISKY and (rngs is None or len(rngs) != states.shape[0]):
        raise ValueError("THM21_RISKY needs one generator per path")
    ev = _Evaluator(spec, inputs, market)
    model = inputs.model
    wealth = np.full(states.shape[0], float(spec.w0))
    for s in range(T):
        w = ev.weights(states[:, s], wealth, s, rngs)
        x = model.select(states[:, s + 1])
        if spec.kind.fully_invested:
            wealth = wealth * (1.0 + np.sum(w * x, axis=-1))
        else:
            r_f = market.r_f[s]
            wealth = wealth * (1.0 + r_f + np.sum(w * (x - r_f), axis=-1))
    return wealth


def run_path(
    spec: StrategySpec,
    inputs: PolicyInputs,
    path: StatePath,
    market: RisklessMarket,
    rng: np.random.Generator | None = None,
) -> float:
    """Terminal utility of one strategy along one simulated path."""
    if path.horizon < spec.horizon:
        raise ValueError(f"path horizon {path.horizon} is shorter than strategy horizon {spec.horizon}")
    rngs = None if rng is None else [rng]
    wealth = terminal_wealth(spec, inputs, market, np.asarray(path.states)[None], rngs)
    return float(quadratic_utility(wealth[0], spec.alpha))


# --- experiment ------------------------------------------------------------------


def _stream(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=key)))


def repetition_noise(master_seed: int, repetition: int, horizon: int, m: int) -> np.ndarray:
    """Standard normal innovations of one repetition; row ``t`` feeds period ``t + 1``."""
    return _stream(master_seed, _EVAL_STREAM, repetition).standard_normal((horizon, m))


def mad(samples) -> float:
    u = np.asarray(samples, dtype=float)
    med = np.median(u)
    return float(np.median(np.abs(u - med)))


def ecdf(samples) -> list[tuple[float, float]]:
    """Right-continuous step points ``(x, #{u <= x} / n)`` at each distinct value."""
    u = np.sort(np.asarray(samples, dtype=float).ravel())
    if u.size == 0:
        raise ValueError("ecdf needs at least one sample")
    values, counts = np.unique(u, return_counts=True)
    cum = np.cumsum(counts) / u.size
    return [(float(v), float(c)) for v, c in zip(values, cum)]


def calibrate_rf(utility: float, gamma: float, horizon: int, alpha: float | None = None, w0: float = 1.0) -> float:
    """Constant ``r_f`` at which always-riskless investing yields ``utility``.

    Solves ``U(W_0 R_f^T) = utility`` on the increasing branch of the utility.
    """
    a = gamma_to_alpha(gamma) if alpha is None else alpha
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    peak = 1.0 / (2.0 * a)
    if utility >= peak:
        raise ValueError(f"utility {utility} is not below the satiation level {peak}")
    f = lambda g: quadratic_utility(w0 * g**horizon, a) - utility  # noqa: E731
    hi = (1.0 / (a * w0)) ** (1.0 / horizon)
    lo = 0.0
    if f(lo) > 0:
        raise ValueError("utility is below U(0); no non-negative gross rate attains it")
    gross = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return gross - 1.0


def _evaluate_chunk(specs, inputs, market, y0, master_seed, start, stop, horizon):
    noise = np.stack([repetition_noise(master_seed, i, horizon, inputs.model.m) for i in range(start, stop)])
    states = simulate_states(inputs.model, y0, noise)
    out = {}
    for spec in specs:
        rngs = None
        if spec.kind is StrategyKind.THM21_RISKY:
            rngs = [_stream(master_seed, _MC_STREAM, i) for i in range(start, stop)]
        try:
            wealth = terminal_wealth(spec, inputs, market, states, rngs)
            bad = np.flatnonzero(~np.isfinite(wealth))
            if bad.size:
                raise StrategyEvaluationError(spec.kind.value, start + int(bad[0]), "non-finite wealth")
        except StrategyEvaluationError:
            raise
        except Exception as exc:
            raise _locate_failure(spec, inputs, market, states, master_seed, start, exc) from exc
        out[spec.kind.value] = quadratic_utility(wealth, spec.alpha)
    return out


def _locate_failure(spec, inputs, market, states, master_seed, start, exc):
    for j in range(states.shape[0]):
        rngs = [_stream(master_seed, _MC_STREAM, start + j)] if spec.kind is StrategyKind.THM21_RISKY else None
        try:
            terminal_wealth(spec, inputs, market, states[j : j + 1], rngs)
        except Exception as inner:
            return StrategyEvaluationError(spec.kind.value, start + j, inner)
    return StrategyEvaluationError(spec.kind.value, start, exc)


def monte_carlo_experiment(
    model: Var1Model,
    market: RisklessMarket,
    strategies: Sequence[StrategyKind | str],
    gamma: float,
    horizon: int,
    repetitions: int,
    master_seed: int,
    *,
    w0: float = 1.0,
    y0=None,
    alpha: float | None = None,
    training_paths: int = DEFAULT_TRAINING_PATHS,
    inner_samples: int = DEFAULT_INNER_SAMPLES,
    workers: int = 1,
    model_id: str | None = None,
) -> SimulationReport:
    """Compare strategies on common simulated paths.

    Each repetition's statistic is ``U(W_T)`` along its realized path.
    ``exceedance`` is the share of repetitions whose utility is strictly above
    that of the always-riskless strategy.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    kinds = []
    for k in strategies:
        k = StrategyKind.parse(k) if isinstance(k, str) else k
        if k not in kinds:
            kinds.append(k)
    if not kinds:
        raise ValueError("need at least one strategy")
    if market.horizon < horizon:
        raise ValueError(f"market covers {market.horizon} periods, horizon is {horizon}")
    market = RisklessMarket(market.r_f[:horizon])
    specs = [StrategySpec(k, gamma, horizon, w0, alpha) for k in kinds]
    a = specs[0].alpha
    y0 = stationary_mean(model) if y0 is None else np.asarray(y0, dtype=float)

    bsc = None
    if StrategyKind.BSC in kinds:
        bsc = bsc_fit(
            model, market, gamma, horizon, training_paths, _stream(master_seed, _BSC_STREAM),
            y0=y0, w0=w0, alpha=a,
        )
    inputs = PolicyInputs(model, bsc, inner_samples)

    bounds = [(i, min(i + CHUNK, repetitions)) for i in range(0, repetitions, CHUNK)]
    run = lambda b: _evaluate_chunk(specs, inputs, market, y0, master_seed, b[0], b[1], horizon)  # noqa: E731
    if workers == 1 or len(bounds) == 1:
        chunks = [run(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, bounds))

    baseline = float(quadratic_utility(w0 * np.prod(market.gross), a))
    results = {}
    for k in kinds:
        u = np.concatenate([c[k.value] for c in chunks])
        results[k.value] = StrategyResult(
            median=float(np.median(u)),
            mad=mad(u),
            exceedance=float(np.mean(u > baseline)),
            samples=u,
        )
    meta = {
        "seed": int(master_seed),
        "repetitions": int(repetitions),
        "model_id": model_id if model_id is not None else (model.name or "var1"),
        "gamma": float(gamma),
        "alpha": float(a),
        "horizon": int(horizon),
        "w0": float(w0),
        "r_f": [float(r) for r in market.r_f],
        "y0": [float(v) for v in y0],
        "partial_myopic_utility": baseline,
        "training_paths": int(training_paths) if bsc is not None else None,
        "bsc_theta": bsc.theta.tolist() if bsc is not None else None,
    }
    return SimulationReport(meta, results)
