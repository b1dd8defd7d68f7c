"""
figures.py

Figure recipes: each writes the CSV series behind one plot, plus a metadata.conf
(configparser) recording the hyperparameters it used. Plotting itself is left to any tool
that reads CSV.

    intro-left      max queries certified at tau=0.1 by each worst-case bound, over n
    intro-right     GnC queries answered vs the worst-case bound and the baselines, over n
    two-round       worst-case RMSE bound vs realized RMSE, Gaussian and Thresholdout
    gnc-lowvar      MGF vs Chernoff holdout tolerance on a low-variance distribution
    gnc-beta        GnC at beta = 0.05 and 0.005
    gnc-guess       GnC with Gaussian, Thresholdout and empirical guesses
    gnc-responsive  responsive width schedule: certified width and realized error per query

`desk` scale finishes in minutes; `paper` scale uses the long horizons (40,000 queries)
and 20 runs per point.
"""

import configparser
import logging
import os
from dataclasses import asdict, replace

import numpy as np

from bounds import (
    baseline_max_queries,
    bnsssu_width,
    dfhprr_width,
    gaussian_width_rzcw,
    max_queries,
    xr17_width,
)
from core import ConfigError
from harness import (
    RMSE_FIELDS,
    ExperimentConfig,
    emit_csv,
    queries_answered,
    resolve_defaults,
    rmse_experiment,
    run_experiment,
    strategy_variant,
)

TAU = 0.1
BETA = 0.05

SCALES = {
    "desk": {
        "n_bounds": [10**3, 10**4, 10**5, 10**6],
        "n_gnc": [2000, 5000],
        "horizon": 2000,
        "runs": 3,
        "rmse_n": 5000,
        "rmse_k": [100, 1000],
        "rmse_runs": 5,
        "responsive_horizon": 1000,
    },
    "paper": {
        "n_bounds": [int(n) for n in np.geomspace(10**3, 10**6, 16)],
        "n_gnc": [int(n) for n in np.geomspace(10**3, 10**5, 8)],
        "horizon": 40000,
        "runs": 20,
        "rmse_n": 5000,
        "rmse_k": [1000, 5000, 10000, 20000, 50000],
        "rmse_runs": 100,
        "responsive_horizon": 40000,
    },
}

QUERY_FIELDS = ["series", "n", "k_mean", "k_std"]
BOUND_K_FIELDS = ["bound_name", "n", "max_k"]
TRACE_FIELDS = ["query_index", "width_mean", "empirical_error_mean", "runs_active"]


def write_metadata(out_dir, recipe, scale, params):
    config = configparser.ConfigParser()
    config["figure"] = {"id": recipe, "scale": scale}
    for section, values in params.items():
        config[section] = {key: str(value) for key, value in values.items() if value is not None}
    path = os.path.join(out_dir, "metadata.conf")
    with open(path, "w") as configfile:
        config.write(configfile)
    return path


def _gnc_config(n, seed, horizon, runs, workers, **overrides):
    base = ExperimentConfig(mechanism="gnc", n=n, k=horizon, beta=BETA, strategy="quadratic", tau=TAU,
                            runs=runs, seed=seed, workers=workers)
    return resolve_defaults(replace(base, **overrides))


def intro_left(out_dir, scale, seed, workers):
    s = SCALES[scale]
    bounds = {
        "rzcw": gaussian_width_rzcw,
        "bnsssu": lambda p: bnsssu_width("gaussian", p),
        "dfhprr": lambda p: dfhprr_width("gaussian", p),
        "xr17": xr17_width,
    }
    rows = []
    for n in s["n_bounds"]:
        for name, fn in bounds.items():
            rows.append({"bound_name": name, "n": n, "max_k": max_queries(fn, n, TAU, BETA)})
        rows.append({"bound_name": "baseline", "n": n, "max_k": baseline_max_queries(n, TAU, BETA)})
        logging.info(f"intro-left n={n} done")
    emit_csv(rows, os.path.join(out_dir, "intro_left.csv"), BOUND_K_FIELDS)
    write_metadata(out_dir, "intro-left", scale, {"bounds": {"tau": TAU, "beta": BETA}})


def intro_right(out_dir, scale, seed, workers):
    s = SCALES[scale]
    rows = []
    params = {}
    for n in s["n_gnc"]:
        cfg = _gnc_config(n, seed, s["horizon"], s["runs"], workers)
        k_mean, k_std = queries_answered(cfg)
        rows.append({"series": "gnc-gauss", "n": n, "k_mean": k_mean, "k_std": k_std})
        rows.append({"series": "bound-rzcw", "n": n, "k_mean": max_queries(gaussian_width_rzcw, n, TAU, BETA),
                     "k_std": 0.0})
        rows.append({"series": "baseline", "n": n, "k_mean": baseline_max_queries(n, TAU, BETA), "k_std": 0.0})
        params[f"gnc n={n}"] = asdict(cfg)
    emit_csv(rows, os.path.join(out_dir, "intro_right.csv"), QUERY_FIELDS)
    write_metadata(out_dir, "intro-right", scale, params)


def _two_round_params(cfg, k_values):
    thresholdout = cfg.mechanism == "thresholdout"
    return {"n": cfg.n, "runs": cfg.runs, "k_values": k_values, "strategy": cfg.strategy,
            "strategy_variant": strategy_variant(cfg),
            "rho": None if thresholdout else "optimized per k",
            "sigma": "1/sqrt(n)" if thresholdout else None,
            "threshold": "2 sigma" if thresholdout else None,
            "budget": "k+1" if thresholdout else None}


def two_round(out_dir, scale, seed, workers):
    s = SCALES[scale]
    params = {}
    for mechanism in ("gaussian", "thresholdout"):
        cfg = ExperimentConfig(mechanism=mechanism, n=s["rmse_n"], k=s["rmse_k"][0], beta=BETA,
                               runs=s["rmse_runs"], seed=seed, workers=workers)
        rows = rmse_experiment(cfg, s["rmse_k"])
        emit_csv(rows, os.path.join(out_dir, f"two_round_{mechanism}.csv"), RMSE_FIELDS)
        params[mechanism] = _two_round_params(cfg, s["rmse_k"])
    write_metadata(out_dir, "two-round", scale, params)


def _gnc_series(out_dir, name, scale, seed, workers, variants, **common):
    s = SCALES[scale]
    rows = []
    params = {}
    for label, overrides in variants.items():
        for n in s["n_gnc"]:
            cfg = _gnc_config(n, seed, s["horizon"], s["runs"], workers, **common, **overrides)
            k_mean, k_std = queries_answered(cfg)
            rows.append({"series": label, "n": n, "k_mean": k_mean, "k_std": k_std})
            params[f"{label} n={n}"] = asdict(cfg)
    emit_csv(rows, os.path.join(out_dir, f"{name.replace('-', '_')}.csv"), QUERY_FIELDS)
    write_metadata(out_dir, name, scale, params)


def gnc_lowvar(out_dir, scale, seed, workers):
    # guess noise sd 0.002 so the holdout tolerance dominates
    variants = {"mgf": {"tol": "mgf"}, "chernoff": {"tol": "chernoff"}}
    s = SCALES[scale]
    rows, params = [], {}
    for label, overrides in variants.items():
        for n in s["n_gnc"]:
            n_g = n // 2
            cfg = _gnc_config(n, seed, s["horizon"], s["runs"], workers, tau=0.05, beta=0.05,
                              bias_profile="lowvar", guess_rho=1.0 / (2.0 * n_g ** 2 * 0.002 ** 2),
                              truth_samples=20000, **overrides)
            k_mean, k_std = queries_answered(cfg)
            rows.append({"series": label, "n": n, "k_mean": k_mean, "k_std": k_std})
            params[f"{label} n={n}"] = asdict(cfg)
    emit_csv(rows, os.path.join(out_dir, "gnc_lowvar.csv"), QUERY_FIELDS)
    write_metadata(out_dir, "gnc-lowvar", scale, params)


def gnc_beta(out_dir, scale, seed, workers):
    _gnc_series(out_dir, "gnc-beta", scale, seed, workers,
                {"beta=0.05": {"beta": 0.05}, "beta=0.005": {"beta": 0.005}})


def gnc_guess(out_dir, scale, seed, workers):
    _gnc_series(out_dir, "gnc-guess", scale, seed, workers,
                {"gaussian": {"guess": "gaussian"}, "thresholdout": {"guess": "thresholdout"},
                 "empirical": {"guess": "empirical"}})


def error_trace(transcripts, horizon):
    """Mean certified width and mean running-max realized error per query index."""
    widths = np.full((len(transcripts), horizon), np.nan)
    errors = np.full((len(transcripts), horizon), np.nan)
    for r, t in enumerate(transcripts):
        running = t.running_max_error()
        for i, entry in enumerate(t.entries[:horizon]):
            widths[r, i] = entry.answer.width
            errors[r, i] = running[i]
    active = np.sum(~np.isnan(widths), axis=0)
    rows = []
    for i in range(horizon):
        if active[i] == 0:
            break
        rows.append({"query_index": i + 1, "width_mean": float(np.nanmean(widths[:, i])),
                     "empirical_error_mean": float(np.nanmean(errors[:, i])), "runs_active": int(active[i])})
    return rows


def gnc_responsive(out_dir, scale, seed, workers):
    s = SCALES[scale]
    n = s["n_gnc"][-1]
    cfg = _gnc_config(n, seed, s["responsive_horizon"], s["runs"], workers, tau=0.05, growth=1.4, cap=0.17)
    rows = error_trace(run_experiment(cfg), cfg.effective_horizon)
    emit_csv(rows, os.path.join(out_dir, "gnc_responsive.csv"), TRACE_FIELDS)
    write_metadata(out_dir, "gnc-responsive", scale, {"gnc": asdict(cfg)})


RECIPES = {
    "intro-left": intro_left,
    "intro-right": intro_right,
    "two-round": two_round,
    "gnc-lowvar": gnc_lowvar,
    "gnc-beta": gnc_beta,
    "gnc-guess": gnc_guess,
    "gnc-responsive": gnc_responsive,
}


def run_figure(figure_id, out_dir, scale="desk", seed=0, workers=1):
    if figure_id not in RECIPES:
        raise ConfigError(f"unknown figure {figure_id!r}; expected one of {', '.join(RECIPES)}")
    if scale not in SCALES:
        raise ConfigError(f"unknown scale {scale!r}")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create {out_dir}: {e}") from e
    logging.info(f"Figure {figure_id} at {scale} scale into {out_dir}")
    RECIPES[figure_id](out_dir, scale, seed, workers)
