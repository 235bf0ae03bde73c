"""Command-line front end.

Subcommands: ``fit``, ``weights``, ``simulate``, ``compare`` and ``ecdf``.
Experiment settings come from a JSON config file; command-line flags override
individual fields. Config schema (all keys optional except ``r_f`` for
strategies that use the riskless asset)::

    {
      "model": {"preset": "bsc" | "international"}
             | {"json": "model.json"}
             | {"csv": "series.csv", "n_assets": 2}
             | {"nu": [...], "phi": [[...]], "sigma_eps": [[...]], "n_assets": 2},
      "gammas": [5, 10, 20],
      "alphas": null,               # optional list parallel to gammas
      "horizons": [6, 12],
      "repetitions": 1000,
      "master_seed": 0,
      "r_f": 0.0003 | "calibrate" | "calibrate:<utility>,<gamma>,<T>",
      "strategies": ["LAMPS", "GMV_MYOPIC", "PARTIAL_MYOPIC", "BSC"],
      "w0": 1.0,
      "y0": null,                   # start state; default is the stationary mean
      "training_paths": 20000,
      "inner_samples": 200,
      "workers": 1,
      "out": "out"
    }
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import frontier, horizon_riskless, moments, report
from .horizon_risky import decision_state_mc, weights_corollary22, weights_theorem21
from .horizon_riskless import RisklessMarket
from .strategies import (
    DEFAULT_INNER_SAMPLES,
    DEFAULT_TRAINING_PATHS,
    StrategyEvaluationError,
    StrategyKind,
    bsc_fit,
    calibrate_rf,
    gamma_to_alpha,
    monte_carlo_experiment,
    repetition_noise,
    _stream,
    _BSC_STREAM,
    _MC_STREAM,
)

DEFAULT_CALIBRATION = (0.5837, 5.0, 6)

DEFAULTS = {
    "model": {"preset": "bsc"},
    "gammas": [5.0, 10.0, 20.0],
    "alphas": None,
    "horizons": [6, 12],
    "repetitions": 1000,
    "master_seed": 0,
    "r_f": None,
    "strategies": ["LAMPS", "GMV_MYOPIC", "PARTIAL_MYOPIC", "BSC"],
    "w0": 1.0,
    "y0": None,
    "training_paths": DEFAULT_TRAINING_PATHS,
    "inner_samples": DEFAULT_INNER_SAMPLES,
    "workers": 1,
    "out": "out",
}

PRESETS = {"bsc": moments.bsc_model, "international": moments.international_model}


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def load_config(path: str | None, overrides: dict) -> dict:
    cfg = dict(DEFAULTS)
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        cfg.update(data)
        cfg["_base"] = str(Path(path).resolve().parent)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if not cfg["gammas"] or not cfg["horizons"] or not cfg["strategies"]:
        raise ConfigError("gammas, horizons and strategies must be nonempty")
    if int(cfg["repetitions"]) < 1:
        raise ConfigError("repetitions must be at least 1")
    if cfg["alphas"] is not None and len(cfg["alphas"]) != len(cfg["gammas"]):
        raise ConfigError("alphas must have one entry per gamma")
    cfg["strategies"] = [StrategyKind.parse(s).value for s in cfg["strategies"]]
    return cfg


def _resolve(cfg: dict, p: str) -> Path:
    path = Path(p)
    if not path.is_absolute() and "_base" in cfg:
        path = Path(cfg["_base"]) / path
    return path


def build_model(cfg: dict) -> moments.Var1Model:
    spec = cfg["model"]
    if not isinstance(spec, dict):
        raise ConfigError("model must be an object")
    if "preset" in spec:
        try:
            return PRESETS[spec["preset"]]()
        except KeyError:
            raise ConfigError(f"unknown model preset {spec['preset']!r}; choose from {sorted(PRESETS)}") from None
    if "json" in spec:
        return report.model_from_dict(json.loads(_resolve(cfg, spec["json"]).read_text()))
    if "csv" in spec:
        _, data = moments.read_series_csv(_resolve(cfg, spec["csv"]))
        return moments.fit_var1(data, spec.get("n_assets"))
    return report.model_from_dict(spec)


def alpha_for(cfg: dict, gamma: float) -> float:
    if cfg["alphas"] is not None:
        for g, a in zip(cfg["gammas"], cfg["alphas"]):
            if float(g) == float(gamma):
                return float(a)
    return gamma_to_alpha(gamma)


def resolve_rf(cfg: dict) -> float | None:
    rf = cfg["r_f"]
    if rf is None or isinstance(rf, (int, float)):
        return None if rf is None else float(rf)
    text = str(rf).strip()
    if text == "calibrate":
        u, g, t = DEFAULT_CALIBRATION
    elif text.startswith("calibrate:"):
        try:
            u, g, t = text.split(":", 1)[1].split(",")
            u, g, t = float(u), float(g), int(t)
        except ValueError:
            raise ConfigError(f"r_f {text!r}: expected calibrate:<utility>,<gamma>,<T>") from None
    else:
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"r_f {text!r} is neither a number nor a calibrate directive") from None
    return calibrate_rf(u, g, t, alpha=alpha_for(cfg, g) if cfg["alphas"] is not None else None, w0=float(cfg["w0"]))


def _market(cfg: dict, horizon: int, needed: bool) -> RisklessMarket:
    rf = resolve_rf(cfg)
    if rf is None:
        if needed:
            raise ConfigError("r_f is required for the chosen strategies (number or 'calibrate')")
        rf = 0.0
    return RisklessMarket.constant(rf, horizon)


def _needs_rf(strategies) -> bool:
    return any(not StrategyKind(s).fully_invested for s in strategies)


def _y0(cfg, model) -> np.ndarray:
    return moments.stationary_mean(model) if cfg["y0"] is None else np.asarray(cfg["y0"], dtype=float)


# --- subcommands -------------------------------------------------------------------


def cmd_fit(args) -> int:
    names, data = moments.read_series_csv(args.csv)
    model = moments.fit_var1(data, args.assets, name=Path(args.csv).stem)
    se_nu, se_phi = moments.ols_standard_errors(data, model)
    doc = report.model_to_dict(model)
    doc["columns"] = names
    doc["observations"] = int(data.shape[0])
    doc["stderr"] = {"nu": se_nu.tolist(), "phi": se_phi.tolist()}
    text = report.dumps_json(doc)
    if args.out:
        report.write_text_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def strategy_weights(kind: StrategyKind, cfg: dict, model, market, gamma: float, y, wealth: float, s: int, horizon: int):
    """Risky weights of one strategy at decision time ``s`` (library calls only)."""
    alpha = alpha_for(cfg, gamma)
    t_index = horizon - s
    f = moments.conditional_moments(model, y)
    if kind is StrategyKind.LAMPS:
        return horizon_riskless.lamps_weights(f, market, alpha, wealth, t_index)
    if kind is StrategyKind.MTP:
        return horizon_riskless.tangency_multiperiod(f, market.r_f[s])
    if kind is StrategyKind.GMV_MYOPIC:
        return frontier.gmv_weights(f.sigma)
    if kind is StrategyKind.PARTIAL_MYOPIC:
        return np.zeros(model.k)
    if kind is StrategyKind.COR22_RISKY:
        forecasts = moments.certainty_equivalent_forecasts(model, y, t_index)
        return weights_corollary22(forecasts, alpha, wealth, t_index)
    if kind is StrategyKind.THM21_RISKY:
        rng = _stream(int(cfg["master_seed"]), _MC_STREAM)
        st = decision_state_mc(model, y, t_index, int(cfg["inner_samples"]), rng)
        return weights_theorem21(st, alpha, wealth)
    if kind is StrategyKind.BSC:
        y0 = _y0(cfg, model)
        policy = bsc_fit(
            model, market, gamma, horizon, int(cfg["training_paths"]),
            _stream(int(cfg["master_seed"]), _BSC_STREAM), y0=y0, w0=float(cfg["w0"]), alpha=alpha,
        )
        return policy.weights(np.asarray(y, dtype=float)[None])[0]
    raise AssertionError(kind)


def cmd_weights(args, cfg) -> int:
    model = build_model(cfg)
    horizon = int(cfg["horizons"][0])
    if not 0 <= args.period < horizon:
        raise ConfigError(f"period must be in 0..{horizon - 1}")
    market = _market(cfg, horizon, _needs_rf(cfg["strategies"]))
    y = _y0(cfg, model) if args.state is None else np.asarray(_floats(args.state))
    if y.shape != (model.m,):
        raise ConfigError(f"state needs {model.m} entries")
    lines = ["strategy,gamma,asset,weight"]
    for gamma in cfg["gammas"]:
        for name in cfg["strategies"]:
            kind = StrategyKind(name)
            try:
                w = strategy_weights(kind, cfg, model, market, float(gamma), y, args.wealth, args.period, horizon)
            except Exception as exc:
                raise StrategyEvaluationError(name, args.period, exc) from exc
            for i, wi in enumerate(w):
                lines.append(f"{name},{report.fmt(gamma)},{i},{report.fmt(wi)}")
            cash = 0.0 if kind.fully_invested else 1.0 - float(np.sum(w))
            lines.append(f"{name},{report.fmt(gamma)},riskless,{report.fmt(cash)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        report.write_text_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_simulate(args, cfg) -> int:
    model = build_model(cfg)
    horizon = max(int(h) for h in cfg["horizons"])
    y0 = _y0(cfg, model)
    seed = int(cfg["master_seed"])
    header = "repetition,period," + ",".join(f"y{j}" for j in range(model.m))
    lines = [header]
    for i in range(int(cfg["repetitions"])):
        states = moments.simulate_states(model, y0, repetition_noise(seed, i, horizon, model.m))
        for t, row in enumerate(states):
            lines.append(f"{i},{t}," + ",".join(report.fmt(v) for v in row))
    stager = report.OutputStager(cfg["out"])
    stager.add("paths.csv", "\n".join(lines) + "\n")
    stager.commit()
    return 0


def _label(x: float) -> str:
    return f"{float(x):g}"


def comparison_files(cfg: dict) -> dict[str, str]:
    """Run every (gamma, T) cell and return the output files as text."""
    model = build_model(cfg)
    files: dict[str, str] = {}
    rows = []
    cells = []
    rf = resolve_rf(cfg)
    if rf is None and _needs_rf(cfg["strategies"]):
        raise ConfigError("r_f is required for the chosen strategies (number or 'calibrate')")
    rf = 0.0 if rf is None else rf
    y0 = _y0(cfg, model)
    for horizon in cfg["horizons"]:
        horizon = int(horizon)
        for gamma in cfg["gammas"]:
            gamma = float(gamma)
            try:
                rep = monte_carlo_experiment(
                    model,
                    RisklessMarket.constant(rf, horizon),
                    cfg["strategies"],
                    gamma,
                    horizon,
                    int(cfg["repetitions"]),
                    int(cfg["master_seed"]),
                    w0=float(cfg["w0"]),
                    y0=y0,
                    alpha=alpha_for(cfg, gamma),
                    training_paths=int(cfg["training_paths"]),
                    inner_samples=int(cfg["inner_samples"]),
                    workers=int(cfg["workers"]),
                )
            except Exception as exc:
                raise RuntimeError(f"cell gamma={_label(gamma)}, T={horizon}: {exc}") from exc
            prefix = f"cells/g{_label(gamma)}_T{horizon}/"
            files.update(report.report_files(rep, prefix))
            cells.append({"gamma": gamma, "horizon": horizon, "dir": prefix.rstrip("/"), **rep.to_dict()})
            for name, r in rep.results.items():
                rows.append((horizon, name, gamma, r))
    files["table.csv"] = _table_csv(rows)
    files["table.md"] = _table_md(rows, cfg)
    public = {k: v for k, v in cfg.items() if not k.startswith("_") and k not in ("workers", "out")}
    public["r_f_value"] = rf
    files["summary.json"] = report.dumps_json({"config": public, "cells": cells})
    return files


def _table_csv(rows) -> str:
    lines = ["horizon,strategy,gamma,median,mad,exceedance"]
    for horizon, name, gamma, r in rows:
        lines.append(
            f"{horizon},{name},{report.fmt(gamma)},{report.fmt(r.median)},{report.fmt(r.mad)},{report.fmt(r.exceedance)}"
        )
    return "\n".join(lines) + "\n"


def _table_md(rows, cfg) -> str:
    gammas = [float(g) for g in cfg["gammas"]]
    out = ["| T | strategy | " + " | ".join(f"gamma={_label(g)}" for g in gammas) + " |"]
    out.append("|---|---|" + "---|" * len(gammas))
    for horizon in [int(h) for h in cfg["horizons"]]:
        for name in cfg["strategies"]:
            cells = []
            for g in gammas:
                r = next(r for h, n, gg, r in rows if h == horizon and n == name and gg == g)
                cells.append(f"{r.median:.4f} ({r.mad:.4f})")
            out.append(f"| {horizon} | {name} | " + " | ".join(cells) + " |")
    return "\n".join(out) + "\n"


def cmd_compare(args, cfg) -> int:
    files = comparison_files(cfg)
    stager = report.OutputStager(cfg["out"])
    for rel, text in files.items():
        stager.add(rel, text)
    stager.commit()
    return 0


def cmd_ecdf(args) -> int:
    samples = report.read_samples_csv(args.samples)
    names = list(samples) if not args.column else [args.column]
    stager = report.OutputStager(args.out)
    for name in names:
        if name not in samples:
            raise ConfigError(f"column {name!r} not in {args.samples}")
        stager.add(f"ecdf_{name}.csv", report.ecdf_csv(samples[name]))
    stager.commit()
    return 0


# --- argument parsing ----------------------------------------------------------------


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--reps", type=int, help="repetitions per cell")
    p.add_argument("--gamma", type=_floats, help="comma-separated relative risk aversions")
    p.add_argument("--alpha", type=_floats, help="comma-separated alphas overriding gamma/(1+gamma)")
    p.add_argument("--horizon", type=_ints, help="comma-separated horizons")
    p.add_argument("--rf", help="riskless rate per period, 'calibrate' or 'calibrate:u,gamma,T'")
    p.add_argument("--strategies", type=_names, help="comma-separated strategy names")
    p.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--out", help="output directory")


def _overrides(args) -> dict:
    return {
        "master_seed": args.seed,
        "repetitions": args.reps,
        "gammas": args.gamma,
        "alphas": args.alpha,
        "horizons": args.horizon,
        "r_f": args.rf,
        "strategies": args.strategies,
        "workers": args.workers,
        "out": args.out,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpquad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a VAR(1) to a CSV of series")
    p.add_argument("csv")
    p.add_argument("--assets", type=int, help="number of leading columns that are asset returns")
    p.add_argument("--out", help="model JSON path (default: stdout)")

    p = sub.add_parser("weights", help="print per-strategy weights at one state")
    _experiment_flags(p)
    p.add_argument("--state", help="comma-separated state vector (default: stationary mean)")
    p.add_argument("--wealth", type=float, default=1.0)
    p.add_argument("--period", type=int, default=0, help="decision time 0..T-1 of the first horizon")

    p = sub.add_parser("simulate", help="write simulated state paths")
    _experiment_flags(p)

    p = sub.add_parser("compare", help="run the strategy comparison grid")
    _experiment_flags(p)

    p = sub.add_parser("ecdf", help="ECDF files from a samples CSV")
    p.add_argument("samples")
    p.add_argument("--column", help="single strategy column (default: all)")
    p.add_argument("--out", default=".", help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fit":
            return cmd_fit(args)
        if args.command == "ecdf":
            return cmd_ecdf(args)
        if args.command == "weights" and args.out is not None:
            # for weights, --out is a file rather than a directory
            out, args.out = args.out, None
            cfg = load_config(args.config, _overrides(args))
            args.out = out
        else:
            cfg = load_config(args.config, _overrides(args))
        handler = {"weights": cmd_weights, "simulate": cmd_simulate, "compare": cmd_compare}[args.command]
        return handler(args, cfg)
    except (ValueError, OSError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"mpquad {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
