"""
harness.py
----------

Seeded experiment execution for adaptive data analysis runs.

1. **ExperimentConfig**
   - Immutable, validated description of one experiment (mechanism, analyst strategy,
     data distribution, n, k, beta, target width, runs, base seed, GnC guess settings).
   - `resolve_defaults(cfg)` fills the tuned mechanism hyperparameters that were left unset.

2. **run_interaction(cfg, run_index)**
   - One analyst-vs-mechanism interaction, deterministic in (seed, run_index). Independent
     Philox streams are derived per purpose (data, mechanism noise, truth sampling, splits,
     guesses) from SeedSequence(seed, spawn_key=(run_index, purpose)).

3. **run_experiment(cfg)** / **summarize(cfg, transcripts)**
   - All runs in run-index order (ProcessPoolExecutor when workers > 1) and the per-run
     `RunResult` table with its mean/std aggregate.

4. **queries_answered(cfg)** / **rmse_experiment(cfg, k_values)**
   - Queries answered before the width target is violated, from the bound inversion for
     bound-based mechanisms and from simulation otherwise; worst-case RMSE bound against the
     realized RMSE of the single-adaptive query (plus the RMSE of each run's max error).

5. **emit_csv / read_csv / transcript_rows / bound_rows / coverage_rate**
   - CSV codec (17 significant digits, booleans as 1/0, missing values empty) and the
     in-process coverage statistic that `coverage_audit.py` recomputes from a finished file.
"""

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from itertools import repeat

import numpy as np
import pandas as pd
import psutil

from adversary import STRATEGIES, make_strategy, next_query, record_answer
from bounds import (
    BoundParams,
    dfhprr_width,
    gaussian_rmse_bound,
    gaussian_rmse_rho,
    gaussian_width_rzcw,
    max_queries,
    sample_split_width,
    thresholdout_rmse_bound,
    thresholdout_width,
    width_for,
)
from core import (
    BudgetExhaustedError,
    ConfigError,
    IntervalAnswer,
    ProductDistribution,
    SignAgreement,
    StrategyDone,
    Transcript,
    make_rng,
    sample_dataset,
    true_value,
)
from mechanisms import (
    TOL_KINDS,
    GUESS_KINDS,
    Guesser,
    GuessResponse,
    NoiseMechConfig,
    WidthSchedule,
    gnc_init,
    gnc_step,
    holdout_size_needed,
    noise_answer,
    sample_split_answer,
    thresholdout_answer,
    thresholdout_init,
)

MECHANISMS = ("gaussian", "laplace", "empirical", "thresholdout", "gnc", "split")
BOUND_BASED = ("gaussian", "laplace", "thresholdout", "split")
BIAS_PROFILES = ("uniform", "lowvar")
PURPOSES = {"data": 0, "mechanism": 1, "truth": 2, "split": 3, "guess": 4}

SIMULATION_FIELDS = ["run_id", "query_index", "query_kind", "answer", "width", "truth",
                     "abs_error", "failed", "beta_i"]
BOUND_FIELDS = ["bound_name", "n", "k", "beta", "tau", "vacuous", "opt_lambda", "opt_rho",
                "opt_eps_prime", "opt_delta", "opt_gamma"]
RMSE_FIELDS = ["k", "upper_bound_rmse", "realized_rmse_mean", "realized_rmse_std", "max_error_rmse"]

SIMULATION_SCHEMA = {"run_id": int, "query_index": int, "query_kind": str, "answer": float,
                     "width": float, "truth": float, "abs_error": float, "failed": bool,
                     "beta_i": float}
BOUND_SCHEMA = {"bound_name": str, "n": int, "k": int, "beta": float, "tau": float, "vacuous": bool,
                "opt_lambda": float, "opt_rho": float, "opt_eps_prime": float, "opt_delta": float,
                "opt_gamma": float}
RMSE_SCHEMA = {name: float for name in RMSE_FIELDS} | {"k": int}

FLOAT_FORMAT = ".17g"


@dataclass(frozen=True)
class ExperimentConfig:
    mechanism: str
    n: int
    k: int
    beta: float = 0.05
    strategy: str = "single"
    tau: float | None = None
    runs: int = 1
    seed: int = 0
    rho: float | None = None
    eps_prime: float | None = None
    sigma: float | None = None
    threshold: float | None = None
    train_size: int | None = None
    budget: int | None = None
    guess: str = "gaussian"
    guess_rho: float | None = None
    n_g: int | None = None
    tol: str = "mgf"
    growth: float | None = None
    cap: float | None = None
    bias_profile: str = "uniform"
    p_feature: float = 0.9
    agreement_mode: bool = True
    clamp_eps: float | None = None
    truth_samples: int = 10**6
    horizon: int | None = None
    stop_on_violation: bool = False
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"unknown mechanism {self.mechanism!r}; expected one of {', '.join(MECHANISMS)}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.guess not in GUESS_KINDS:
            raise ConfigError(f"unknown guess mechanism {self.guess!r}")
        if self.tol not in TOL_KINDS:
            raise ConfigError(f"unknown holdout tolerance {self.tol!r}")
        if self.bias_profile not in BIAS_PROFILES:
            raise ConfigError(f"unknown bias profile {self.bias_profile!r}")
        if self.n < 2 or self.k < 1:
            raise ConfigError(f"need n >= 2 and k >= 1, got n={self.n}, k={self.k}")
        if not 0 < self.beta < 1:
            raise ConfigError(f"beta must be in (0, 1), got {self.beta}")
        if self.runs < 1 or self.workers < 1:
            raise ConfigError("runs and workers must be >= 1")
        if self.tau is not None and not 0 < self.tau < 1:
            raise ConfigError(f"tau must be in (0, 1), got {self.tau}")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.truth_samples < 1:
            raise ConfigError("truth_samples must be >= 1")
        if self.mechanism == "gnc":
            if self.tau is None:
                raise ConfigError("guess and check needs a target width tau")
            if self.n_g is not None and not 1 <= self.n_g < self.n:
                raise ConfigError(f"guess set size must be in [1, {self.n - 1}], got {self.n_g}")
            # validates growth/cap together
            WidthSchedule(self.tau, self.growth, self.cap)
        if self.train_size is not None and not 1 <= self.train_size < self.n:
            raise ConfigError(f"train size must be in [1, {self.n - 1}], got {self.train_size}")

    @property
    def effective_horizon(self):
        default = self.k + 1 if self.strategy == "single" else self.k
        return min(default, self.horizon) if self.horizon is not None else default

    @property
    def holdout_size(self):
        return self.n - (self.n_g if self.n_g is not None else self.n // 2)


def resolve_defaults(cfg):
    """Fill unset hyperparameters: optimized rho / eps', sigma = 1/sqrt(n), T = 2 sigma, B = horizon."""
    K = cfg.effective_horizon
    updates = {}
    if cfg.mechanism == "gaussian" and cfg.rho is None:
        updates["rho"] = gaussian_width_rzcw(BoundParams(cfg.n, K, cfg.beta)).optimizer["rho"]
    if cfg.mechanism == "laplace" and cfg.eps_prime is None:
        result = dfhprr_width("laplace", BoundParams(cfg.n, K, cfg.beta))
        updates["eps_prime"] = result.optimizer.get("eps_prime", 1.0 / math.sqrt(K))
    if cfg.mechanism == "thresholdout":
        train = cfg.train_size if cfg.train_size is not None else cfg.n // 2
        sigma = cfg.sigma if cfg.sigma is not None else 1.0 / math.sqrt(cfg.n)
        updates.update(train_size=train, sigma=sigma,
                       threshold=cfg.threshold if cfg.threshold is not None else 2.0 * sigma,
                       budget=cfg.budget if cfg.budget is not None else K)
    if cfg.mechanism == "gnc":
        n_g = cfg.n_g if cfg.n_g is not None else cfg.n // 2
        updates["n_g"] = n_g
        if cfg.guess == "gaussian" and cfg.guess_rho is None:
            updates["guess_rho"] = 2.0 / n_g
        if cfg.guess == "thresholdout":
            sigma = cfg.sigma if cfg.sigma is not None else 1.0 / math.sqrt(n_g)
            updates.update(sigma=sigma, threshold=cfg.threshold if cfg.threshold is not None else 2.0 * sigma,
                           budget=cfg.budget if cfg.budget is not None else K)
    if cfg.clamp_eps is None:
        updates["clamp_eps"] = 1.0 / (2.0 * cfg.n)
    return replace(cfg, **updates) if updates else cfg


def certified_width(cfg):
    """Width reported with every answer of a non-GnC mechanism; capped at the trivial width 1."""
    if cfg.tau is not None:
        return cfg.tau
    K = cfg.effective_horizon
    if cfg.mechanism == "gaussian":
        tau = gaussian_width_rzcw(BoundParams(cfg.n, K, cfg.beta, rho=cfg.rho)).tau
    elif cfg.mechanism == "laplace":
        tau = dfhprr_width("laplace", BoundParams(cfg.n, K, cfg.beta, eps_prime=cfg.eps_prime)).tau
    elif cfg.mechanism == "thresholdout":
        tau = thresholdout_width(_thresholdout_params(cfg, K)).tau
    elif cfg.mechanism == "split":
        tau = sample_split_width(BoundParams(cfg.n, K, cfg.beta))
    else:
        tau = 1.0
    return min(tau, 1.0)


def _thresholdout_params(cfg, k):
    return BoundParams(cfg.n, k, cfg.beta, sigma=cfg.sigma, T=cfg.threshold,
                       h=cfg.n - cfg.train_size, budget_b=cfg.budget)


def distribution_for(cfg):
    d = cfg.k + 1
    if cfg.bias_profile == "lowvar":
        return ProductDistribution.low_variance(d, p_feature=cfg.p_feature)
    return ProductDistribution.uniform(d)


def run_seed(base_seed, run_index, purpose):
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(run_index, PURPOSES[purpose]))


def run_streams(base_seed, run_index):
    return {purpose: make_rng(run_seed(base_seed, run_index, purpose)) for purpose in PURPOSES}


class Responder:
    """Turns a query into an IntervalAnswer for the configured mechanism."""

    def __init__(self, cfg, X, streams):
        self.cfg = cfg
        self.X = X
        self.rng = streams["mechanism"]
        self.width = certified_width(cfg) if cfg.mechanism != "gnc" else None
        self.index = 0
        if cfg.mechanism in ("gaussian", "laplace", "empirical"):
            self.noise = NoiseMechConfig(cfg.mechanism, cfg.n, rho=cfg.rho if cfg.mechanism == "gaussian" else None,
                                         eps_prime=cfg.eps_prime if cfg.mechanism == "laplace" else None)
        elif cfg.mechanism == "thresholdout":
            self.state = thresholdout_init(X, cfg.train_size, cfg.threshold, cfg.sigma, cfg.budget,
                                           streams["split"])
        elif cfg.mechanism == "gnc":
            self.state = gnc_init(X, cfg.n_g, cfg.beta, streams["split"], tol_kind=cfg.tol)
            self.guesser = Guesser(cfg.guess, self.state.guess_set, streams["guess"], rho=cfg.guess_rho,
                                   sigma=cfg.sigma, threshold=cfg.threshold, budget=cfg.budget)
            self.schedule = WidthSchedule(cfg.tau, cfg.growth, cfg.cap)
            self.tau = cfg.tau
            needed = holdout_size_needed(cfg.tau, cfg.beta)
            if needed > self.state.holdout.n:
                logging.warning(f"Holdout of {self.state.holdout.n} rows cannot pass a check at "
                                f"tau={cfg.tau}; {needed} rows needed")

    def __call__(self, q):
        self.index += 1
        cfg = self.cfg
        if cfg.mechanism in ("gaussian", "laplace", "empirical"):
            return IntervalAnswer(noise_answer(self.noise, q, self.X, self.rng), self.width)
        if cfg.mechanism == "thresholdout":
            return IntervalAnswer(thresholdout_answer(self.state, q, self.rng), self.width)
        if cfg.mechanism == "split":
            return IntervalAnswer(sample_split_answer(self.X, q, self.index, cfg.effective_horizon), self.width)
        answer = gnc_step(self.state, q, GuessResponse(self.guesser.answer(q), self.tau))
        self.tau = self.schedule.next(self.tau, answer.failed)
        return answer


def check_memory_usage():
    process = psutil.Process(os.getpid())
    mem_info = process.memory_info()
    logging.debug(f"Memory usage: RSS = {mem_info.rss / (1024 * 1024):.2f} MB")


def strategy_variant(cfg):
    """Analyst variant for the mechanism; the thresholdout one only ever sees released answers."""
    return "thresholdout" if cfg.mechanism == "thresholdout" else "standard"


def run_interaction(cfg, run_index):
    """Run one full interaction and return its transcript."""
    cfg = resolve_defaults(cfg)
    streams = run_streams(cfg.seed, run_index)
    D = distribution_for(cfg)
    X = sample_dataset(D, cfg.n, streams["data"])
    analyst = make_strategy(cfg.strategy, cfg.k, clamp_eps=cfg.clamp_eps, agreement_mode=cfg.agreement_mode,
                            variant=strategy_variant(cfg), horizon=cfg.horizon)
    logging.debug(f"Run {run_index}: {cfg.strategy} analyst, {analyst.variant} variant, horizon {analyst.horizon}")
    respond = Responder(cfg, X, streams)
    transcript = Transcript(run_index)

    while True:
        try:
            q = next_query(analyst)
        except StrategyDone:
            break
        try:
            answer = respond(q)
        except BudgetExhaustedError as e:
            logging.info(f"Run {run_index}: {e}")
            break
        truth, _ = true_value(q, D, samples=cfg.truth_samples, seed=streams["truth"])
        transcript.record(q, answer, truth)
        record_answer(analyst, answer.point)
        if answer.is_bottom:
            break
        if cfg.stop_on_violation and _violates(cfg, transcript.entries[-1]):
            break

    if cfg.mechanism == "gnc":
        logging.debug(f"Run {run_index}: {respond.state.f} failed checks, "
                      f"budget spent {respond.state.spent_budget():.4g} of {cfg.beta}")
    check_memory_usage()
    return transcript


def _violates(cfg, entry):
    if cfg.mechanism == "gnc":
        return entry.answer.width > cfg.tau
    return cfg.tau is not None and entry.abs_error > cfg.tau


def queries_before_violation(cfg, transcript):
    """Answered queries before the first width or error above tau."""
    count = 0
    for entry in transcript.entries:
        if _violates(cfg, entry):
            break
        count += 1
    return count


def run_experiment(cfg):
    """Transcripts of all runs, in run-index order."""
    cfg = resolve_defaults(cfg)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as executor:
            return list(executor.map(run_interaction, repeat(cfg), range(cfg.runs)))
    return [run_interaction(cfg, run_index) for run_index in range(cfg.runs)]


@dataclass(frozen=True)
class RunResult:
    run_index: int
    answered: int
    max_abs_error: float
    adaptive_error: float | None
    failures: int
    halted: bool


def run_result(cfg, transcript):
    adaptive = [e.abs_error for e in transcript.entries
                if isinstance(e.query, SignAgreement) and e.abs_error is not None]
    return RunResult(transcript.run_index, queries_before_violation(cfg, transcript),
                     transcript.max_abs_error(), adaptive[-1] if adaptive else None,
                     transcript.failures, transcript.terminal)


def summarize(cfg, transcripts):
    """Per-run table and the (mean, std) of each numeric column."""
    table = pd.DataFrame([asdict(run_result(cfg, t)) for t in transcripts])
    table = table.sort_values("run_index").reset_index(drop=True)
    numeric = table[["answered", "max_abs_error", "failures"]].astype(float)
    aggregate = pd.DataFrame({"mean": numeric.mean(), "std": numeric.std(ddof=0)})
    return table, aggregate


def coverage_rate(transcripts):
    """Fraction of transcripts in which some answered interval missed its population value."""
    if not transcripts:
        return 0.0
    return sum(1 for t in transcripts if t.has_miss()) / len(transcripts)


def _bound_fn(cfg):
    if cfg.mechanism == "gaussian":
        return gaussian_width_rzcw, {}
    if cfg.mechanism == "laplace":
        return (lambda p: dfhprr_width("laplace", p)), {}
    if cfg.mechanism == "split":
        return sample_split_width, {}
    return thresholdout_width, dict(sigma=cfg.sigma, T=cfg.threshold, h=cfg.n - cfg.train_size,
                                    budget_b=cfg.budget)


def queries_answered(cfg, transcripts=None):
    """(k_mean, k_std): bound inversion for bound-based mechanisms, simulation otherwise."""
    if cfg.tau is None:
        raise ConfigError("queries_answered needs a target width tau")
    cfg = resolve_defaults(cfg)
    if cfg.mechanism in BOUND_BASED and transcripts is None:
        width_fn, fixed = _bound_fn(cfg)
        k = max_queries(width_fn, cfg.n, cfg.tau, cfg.beta, **fixed)
        return float(min(k, cfg.effective_horizon)), 0.0
    if transcripts is None:
        transcripts = run_experiment(cfg)
    counts = np.array([queries_before_violation(cfg, t) for t in transcripts], dtype=np.float64)
    return float(counts.mean()), float(counts.std())


def rmse_experiment(cfg, k_values):
    """Rows of (k, upper bound, realized RMSE of the adaptive query and its std, RMSE of each run's max error)."""
    if cfg.mechanism not in ("gaussian", "thresholdout", "empirical"):
        raise ConfigError(f"rmse experiment supports gaussian, thresholdout and empirical, not {cfg.mechanism!r}")
    rows = []
    for k in k_values:
        base = replace(cfg, k=k, strategy="single", horizon=None, tau=None)
        if base.mechanism == "gaussian" and cfg.rho is None:
            base = replace(base, rho=gaussian_rmse_rho(BoundParams(base.n, k + 1, base.beta)))
        if base.mechanism == "thresholdout" and cfg.budget is None:
            base = replace(base, budget=k + 1)
        base = resolve_defaults(base)
        if base.mechanism == "gaussian":
            upper = gaussian_rmse_bound(BoundParams(base.n, k + 1, base.beta, rho=base.rho))
        elif base.mechanism == "thresholdout":
            upper = thresholdout_rmse_bound(_thresholdout_params(base, k + 1))
        else:
            upper = math.nan
        results = [run_result(base, t) for t in run_experiment(base)]
        max_errors = np.array([r.max_abs_error for r in results])
        adaptive = np.array([r.adaptive_error for r in results if r.adaptive_error is not None])
        rows.append({
            "k": k,
            "upper_bound_rmse": upper,
            "realized_rmse_mean": float(np.sqrt(np.mean(adaptive ** 2))) if adaptive.size else math.nan,
            "realized_rmse_std": float(np.std(adaptive)) if adaptive.size else math.nan,
            "max_error_rmse": float(np.sqrt(np.mean(max_errors ** 2))),
        })
        logging.info(f"rmse k={k}: bound {upper:.4g}, realized {rows[-1]['realized_rmse_mean']:.4g}")
    return rows


# CSV codec
def format_value(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    return str(value)


def emit_csv(rows, path, fieldnames):
    """Write rows (dicts) as UTF-8 CSV with the given header; an empty row set gives a header-only file."""
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, mode="w", newline="", encoding="utf-8") as file:
            writer = csv.DictWriter(file, fieldnames=fieldnames)
            writer.writeheader()
            for row in rows:
                writer.writerow({name: format_value(row.get(name)) for name in fieldnames})
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    logging.info(f"Wrote {len(rows)} rows to {path}")


def _parse(kind, text):
    if text == "":
        return None
    if kind is bool:
        return text == "1"
    return kind(text)


def read_csv(path, schema):
    """Read a CSV written by emit_csv back into typed dicts."""
    try:
        with open(path, mode="r", newline="", encoding="utf-8") as file:
            reader = csv.DictReader(file)
            return [{name: _parse(schema.get(name, str), text) for name, text in row.items()} for row in reader]
    except OSError as e:
        raise OSError(f"cannot read {path}: {e}") from e


def transcript_rows(transcript):
    return [{
        "run_id": transcript.run_index,
        "query_index": i,
        "query_kind": entry.query.kind,
        "answer": entry.answer.point,
        "width": entry.answer.width,
        "truth": entry.truth,
        "abs_error": entry.abs_error,
        "failed": entry.answer.failed,
        "beta_i": entry.answer.beta_i,
    } for i, entry in enumerate(transcript.rows(), start=1)]


def bound_rows(name, n_values, k_values, beta, mech="gaussian", **fixed):
    rows = []
    for n in n_values:
        for k in k_values:
            result = width_for(name, BoundParams(n, k, beta, **fixed), mech=mech)
            opt = result.optimizer
            rows.append({
                "bound_name": name if name not in ("dfhprr", "bnsssu") else f"{name}-{mech}",
                "n": n, "k": k, "beta": beta, "tau": result.tau, "vacuous": result.vacuous,
                "opt_lambda": opt.get("lambda"), "opt_rho": opt.get("rho"),
                "opt_eps_prime": opt.get("eps_prime"), "opt_delta": opt.get("delta"),
                "opt_gamma": opt.get("gamma"),
            })
    return rows


def emit_bound_sweep(path, name, n_values, k_values, beta, mech="gaussian", **fixed):
    rows = bound_rows(name, n_values, k_values, beta, mech, **fixed)
    emit_csv(rows, path, BOUND_FIELDS)
    return rows


def simulate(cfg):
    """Run the experiment, write the simulation CSV when cfg.out is set, return (transcripts, summary)."""
    transcripts = run_experiment(cfg)
    if cfg.out:
        emit_csv([row for t in transcripts for row in transcript_rows(t)], cfg.out, SIMULATION_FIELDS)
    table, aggregate = summarize(cfg, transcripts)
    logging.info(f"{cfg.mechanism}: {cfg.runs} runs, answered mean {aggregate.loc['answered', 'mean']:.2f}, "
                 f"coverage misses {coverage_rate(transcripts):.3f}")
    return transcripts, (table, aggregate)
