"""Closed-form multi-period portfolio weights under quadratic utility."""

from .moments import MomentForecast, Var1Model, bsc_model, fit_var1, international_model
from .horizon_riskless import RisklessMarket
from .strategies import StrategyKind, StrategySpec, gamma_to_alpha, monte_carlo_experiment

__all__ = [
    "MomentForecast",
    "Var1Model",
    "RisklessMarket",
    "StrategyKind",
    "StrategySpec",
    "bsc_model",
    "international_model",
    "fit_var1",
    "gamma_to_alpha",
    "monte_carlo_experiment",
]

__version__ = "0.1.0"
