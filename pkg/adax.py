"""
ADAX Command Line
-----------------

Runs worst-case bound computations, seeded adaptive-analysis simulations, RMSE experiments and
figure recipes, writing every result as CSV.

1. **create_or_load_config(config_file)**
   - Loads `adax.conf` ([DEFAULT] section) over the `CONFIG` defaults, or writes the defaults
     to a new file when it does not exist.

2. **init_log() / log(message, level)**
   - File logging through the `logging` package; `log` maps levels 1-4 and 7/8 onto logging
     levels, drops messages above `CONFIG['debug']` and echoes to the screen when enabled.

3. **parse_args(argv)**
   - Subcommands:
     - `bound --name {rzcw|dfhprr|bnsssu|xr17|thresholdout|split|discretize} --n .. --k .. --beta ..`
       with optional `--rho/--eps-prime/--sigma/--threshold/--holdout/--budget`, `--mech` for the
       two prior-work bounds, and `--sweep n=a:b:steps` (or `k=...`) for log-spaced sweeps.
     - `simulate --mechanism {gaussian|laplace|empirical|thresholdout|gnc|split} ...`
     - `rmse --mechanism {gaussian|thresholdout} --n .. --k-sweep a:b:steps ...`
     - `figure --id {intro-left|intro-right|two-round|gnc-lowvar|gnc-beta|gnc-guess|gnc-responsive}`

4. **resolve_seed(args)**
   - `--seed`, then the `ADAX_SEED` environment variable, then `CONFIG['default_seed']`.

5. **main(argv)**
   - Step-by-step driver. Returns the exit code: 0 on success, 2 on a configuration error,
     3 on an I/O error, 1 on anything else.

**Note:** every library module logs through `logging` directly; only this script prints.
"""

import argparse
import configparser
import logging
import os
import sys
import time
import traceback
from datetime import datetime

import numpy as np

import harness
from adax_startup import adax_startup
from bounds import BOUND_NAMES, BoundParams, width_for
from core import ConfigError
from figures import RECIPES, SCALES, run_figure
from harness import (
    BOUND_FIELDS,
    MECHANISMS,
    RMSE_FIELDS,
    ExperimentConfig,
    coverage_rate,
    emit_bound_sweep,
    emit_csv,
    queries_answered,
    resolve_defaults,
    rmse_experiment,
    simulate,
)

# Configuration dictionary
CONFIG = {
    'version': '1.00',
    'debug': 1,
    'level': logging.INFO,  # Set Logging level
    'log_to_screen': True,
    'log_file': 'adax.log',
    'show_banner': True,
    'horizon_cap': 40000,
    'truth_samples': 1000000,
    'float_digits': 17,
    'workers': 1,
    'default_seed': 0,
    'output_dir': './',
}

CONFIG_TYPES = {
    'version': str,
    'debug': int,
    'level': int,
    'log_to_screen': bool,
    'log_file': str,
    'show_banner': bool,
    'horizon_cap': int,
    'truth_samples': int,
    'float_digits': int,
    'workers': int,
    'default_seed': int,
    'output_dir': str,
}


def create_or_load_config(config_file='adax.conf'):
    """
    Create or load the adax.conf file. A missing file is created from the CONFIG defaults;
    an existing one overrides them key by key. A value of the wrong type is a ConfigError.
    """
    config_parser = configparser.ConfigParser()

    if not os.path.exists(config_file):
        config_parser['DEFAULT'] = {key: str(value) for key, value in CONFIG.items()}
        try:
            with open(config_file, 'w') as configfile:
                config_parser.write(configfile)
        except OSError as e:
            raise OSError(f"cannot write {config_file}: {e}") from e
        return

    config_parser.read(config_file)
    for key, expected_type in CONFIG_TYPES.items():
        if key not in config_parser['DEFAULT']:
            continue
        try:
            if expected_type == int:
                CONFIG[key] = config_parser.getint('DEFAULT', key)
            elif expected_type == bool:
                CONFIG[key] = config_parser.getboolean('DEFAULT', key)
            elif expected_type == float:
                CONFIG[key] = config_parser.getfloat('DEFAULT', key)
            else:
                CONFIG[key] = config_parser.get('DEFAULT', key)
        except ValueError as e:
            raise ConfigError(f"Error reading configuration key '{key}' in {config_file}: {e}") from e


def init_log():
    """Initializes the logging configuration."""
    logging.basicConfig(
        filename=CONFIG.get('log_file', 'adax.log'),
        level=CONFIG.get('level', logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )


def log(message, level=1):
    """
    Logging controlled by the debug level and log_to_screen flag.
    - Level 1: Info
    - Level 2: Warning
    - Level 3: Error
    - Level 4: Critical
    - Level 7 and 8: Debug levels
    """
    level_mapping = {
        1: logging.INFO,
        2: logging.WARNING,
        3: logging.ERROR,
        4: logging.CRITICAL,
        7: logging.DEBUG,
        8: logging.DEBUG
    }

    if level > CONFIG['debug']:
        return

    if CONFIG.get('log_to_screen', False):
        print(f"{datetime.now().strftime('%Y-%m-%d %H:%M:%S')} - {message}")

    logging.log(level_mapping.get(level, logging.INFO), message)


def print_settings():
    log("----- ADAX Configuration -----", 1)
    log(f"LOG_FILE: {CONFIG['log_file']}", 1)
    log(f"HORIZON_CAP: {CONFIG['horizon_cap']} queries", 1)
    log(f"TRUTH_SAMPLES: {CONFIG['truth_samples']}", 1)
    log(f"WORKERS: {CONFIG['workers']}", 1)
    log(f"OUTPUT_DIR: {CONFIG['output_dir']}", 1)
    log(f"DEBUG_LEVEL: {CONFIG['debug']}", 1)
    log("------------------------------", 1)
    sys.stdout.flush()


def parse_sweep(text):
    """'a:b:steps' -> sorted unique log-spaced integers from a to b."""
    try:
        a, b, steps = (float(part) for part in text.split(':'))
    except ValueError as e:
        raise ConfigError(f"sweep must look like a:b:steps, got {text!r}") from e
    if a < 1 or b < a or steps < 1:
        raise ConfigError(f"invalid sweep {text!r}")
    return sorted({int(round(v)) for v in np.geomspace(a, b, int(steps))})


def parse_named_sweep(text):
    name, _, spec = text.partition('=')
    if name not in ('n', 'k'):
        raise ConfigError(f"sweep variable must be n or k, got {name!r}")
    return name, parse_sweep(spec)


def parse_schedule(text):
    try:
        growth, cap = (float(part) for part in text.split(','))
    except ValueError as e:
        raise ConfigError(f"schedule must look like growth,cap, got {text!r}") from e
    return growth, cap


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description='ADAX adaptive data analysis toolkit')
    parser.add_argument('--config', help='Configuration file', type=str, default='adax.conf')
    sub = parser.add_subparsers(dest='command', required=True)

    bound = sub.add_parser('bound', help='Evaluate a worst-case width')
    bound.add_argument('--name', choices=BOUND_NAMES, required=True)
    bound.add_argument('--mech', choices=('gaussian', 'laplace'), default='gaussian')
    bound.add_argument('--n', type=int, required=True)
    bound.add_argument('--k', type=int, required=True)
    bound.add_argument('--beta', type=float, default=0.05)
    bound.add_argument('--rho', type=float)
    bound.add_argument('--eps-prime', type=float)
    bound.add_argument('--sigma', type=float)
    bound.add_argument('--threshold', type=float)
    bound.add_argument('--holdout', type=int)
    bound.add_argument('--budget', type=int)
    bound.add_argument('--sweep', type=str, help='n=a:b:steps or k=a:b:steps')
    bound.add_argument('--out', type=str)

    sim = sub.add_parser('simulate', help='Run seeded analyst-vs-mechanism interactions')
    sim.add_argument('--mechanism', choices=MECHANISMS, required=True)
    sim.add_argument('--guess', choices=('gaussian', 'thresholdout', 'empirical'), default='gaussian')
    sim.add_argument('--strategy', choices=('single', 'quadratic'), default='single')
    sim.add_argument('--n', type=int, required=True)
    sim.add_argument('--k', type=int, required=True)
    sim.add_argument('--beta', type=float, default=0.05)
    sim.add_argument('--tau', type=float)
    sim.add_argument('--runs', type=int, default=1)
    sim.add_argument('--seed', type=int)
    sim.add_argument('--out', type=str)
    sim.add_argument('--tol', choices=('chernoff', 'mgf'), default='mgf')
    sim.add_argument('--split', type=int, help='guess set size n_g')
    sim.add_argument('--schedule', type=str, help='growth,cap for responsive widths')
    sim.add_argument('--rho', type=float)
    sim.add_argument('--guess-rho', type=float)
    sim.add_argument('--eps-prime', type=float)
    sim.add_argument('--sigma', type=float)
    sim.add_argument('--threshold', type=float)
    sim.add_argument('--budget', type=int)
    sim.add_argument('--bias', choices=('uniform', 'lowvar'), default='uniform')
    sim.add_argument('--horizon', type=int)
    sim.add_argument('--literal-query', action='store_true', help='adaptive query without the target column')
    sim.add_argument('--stop-on-violation', action='store_true')

    rmse = sub.add_parser('rmse', help='Worst-case RMSE bound vs realized RMSE')
    rmse.add_argument('--mechanism', choices=('gaussian', 'thresholdout'), required=True)
    rmse.add_argument('--n', type=int, required=True)
    rmse.add_argument('--k-sweep', type=str, required=True)
    rmse.add_argument('--beta', type=float, default=0.05)
    rmse.add_argument('--runs', type=int, default=20)
    rmse.add_argument('--seed', type=int)
    rmse.add_argument('--out', type=str)

    figure = sub.add_parser('figure', help='Regenerate the data behind a figure')
    figure.add_argument('--id', choices=list(RECIPES), required=True)
    figure.add_argument('--scale', choices=list(SCALES), default='desk')
    figure.add_argument('--seed', type=int)
    figure.add_argument('--out', type=str, required=True)

    return parser.parse_args(argv)


def resolve_seed(args):
    if getattr(args, 'seed', None) is not None:
        return args.seed
    env = os.environ.get('ADAX_SEED')
    if env:
        try:
            return int(env)
        except ValueError as e:
            raise ConfigError(f"ADAX_SEED must be an integer, got {env!r}") from e
    return CONFIG['default_seed']


def output_path(args, default_name):
    return args.out if args.out else os.path.join(CONFIG['output_dir'], default_name)


def start_timer():
    return time.time()


def stop_timer(start_time):
    return time.time() - start_time


def run_bound(args):
    fixed = {'rho': args.rho, 'eps_prime': args.eps_prime, 'sigma': args.sigma, 'T': args.threshold,
             'h': args.holdout, 'budget_b': args.budget}
    fixed = {key: value for key, value in fixed.items() if value is not None}
    n_values, k_values = [args.n], [args.k]
    if args.sweep:
        name, values = parse_named_sweep(args.sweep)
        if name == 'n':
            n_values = values
        else:
            k_values = values
    if not args.sweep and not args.out:
        result = width_for(args.name, BoundParams(args.n, args.k, args.beta, **fixed), mech=args.mech)
        log(f"{args.name}: tau = {result.tau:.6g}{' (vacuous)' if result.vacuous else ''} {result.optimizer}", 1)
        return
    path = output_path(args, 'bounds.csv')
    rows = emit_bound_sweep(path, args.name, n_values, k_values, args.beta, args.mech, **fixed)
    log(f"Wrote {len(rows)} {args.name} rows ({', '.join(BOUND_FIELDS[:5])}, ...) to {path}", 1)


def run_simulate(args, seed):
    growth, cap = parse_schedule(args.schedule) if args.schedule else (None, None)
    cfg = ExperimentConfig(
        mechanism=args.mechanism, guess=args.guess, strategy=args.strategy, n=args.n, k=args.k,
        beta=args.beta, tau=args.tau, runs=args.runs, seed=seed, tol=args.tol, n_g=args.split,
        growth=growth, cap=cap, rho=args.rho, guess_rho=args.guess_rho, eps_prime=args.eps_prime,
        sigma=args.sigma, threshold=args.threshold, budget=args.budget, bias_profile=args.bias,
        horizon=args.horizon if args.horizon is not None else CONFIG['horizon_cap'],
        agreement_mode=not args.literal_query, stop_on_violation=args.stop_on_violation,
        truth_samples=CONFIG['truth_samples'], workers=CONFIG['workers'],
        out=output_path(args, 'simulation.csv'))
    cfg = resolve_defaults(cfg)
    transcripts, (table, aggregate) = simulate(cfg)
    log(f"Simulation written to {cfg.out}", 1)
    log(f"Per-run summary:\n{table.to_string(index=False)}", 1)
    log(f"Miss rate over {cfg.runs} runs: {coverage_rate(transcripts):.4f}", 1)
    if cfg.tau is not None:
        k_mean, k_std = queries_answered(cfg, transcripts)
        log(f"Queries answered before exceeding tau={cfg.tau}: {k_mean:.2f} +/- {k_std:.2f}", 1)


def run_rmse(args, seed):
    cfg = ExperimentConfig(mechanism=args.mechanism, n=args.n, k=1, beta=args.beta, runs=args.runs,
                           seed=seed, truth_samples=CONFIG['truth_samples'], workers=CONFIG['workers'])
    rows = rmse_experiment(cfg, parse_sweep(args.k_sweep))
    path = output_path(args, 'rmse.csv')
    emit_csv(rows, path, RMSE_FIELDS)
    for row in rows:
        log(f"k={row['k']}: bound {row['upper_bound_rmse']:.5g}, realized {row['realized_rmse_mean']:.5g}", 1)


# main function
def main(argv=None):
    try:
        # Step 1: Parse command-line arguments
        args = parse_args(argv)
        start_time = start_timer()

        # Step 2: Create or load adax.conf file
        create_or_load_config(args.config)
        harness.FLOAT_FORMAT = f".{CONFIG['float_digits']}g"

        # Step 3: Initialize logging
        init_log()
        log(f"ADAX {args.command} starting.", 1)

        # Step 4: Print system settings and the startup screen
        print_settings()
        seed = resolve_seed(args)
        if CONFIG['show_banner']:
            adax_startup(version=CONFIG['version'], command=args.command, seed=seed,
                         horizon_cap=CONFIG['horizon_cap'], workers=CONFIG['workers'],
                         debug_level=CONFIG['debug'], log_file=CONFIG['log_file'])

        # Step 5: Dispatch the subcommand
        if args.command == 'bound':
            run_bound(args)
        elif args.command == 'simulate':
            run_simulate(args, seed)
        elif args.command == 'rmse':
            run_rmse(args, seed)
        else:
            run_figure(args.id, args.out, scale=args.scale, seed=seed, workers=CONFIG['workers'])

        # Step 6: Log the total runtime
        log(f"Total runtime: {stop_timer(start_time):.2f} s", 1)
        return 0

    except ConfigError as e:
        log(f"Configuration error: {e}", 1)
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        log(f"I/O error: {e}", 1)
        print(f"error: {e}", file=sys.stderr)
        return 3
    except Exception as e:
        log(f"An error occurred during execution: {e}", 1)
        logging.error(traceback.format_exc())
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
