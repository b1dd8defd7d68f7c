"""
coverage_audit.py

This script recomputes simultaneous coverage from a finished simulation CSV alone (the file
written by `adax.py simulate`). For every run it flags whether any answered interval missed
its population value (abs_error >= width), then reports the fraction of runs with a miss.
The per-run flags are written to a second CSV.

Usage:
    python3 coverage_audit.py simulation.csv [--runs-out coverage_runs.csv]

Configuration:
    - INPUT_FILE: default simulation CSV to audit (default: 'simulation.csv').
    - RUNS_FILE: output CSV with one row per run (default: 'coverage_runs.csv').

Notes:
    - Rows whose answer is empty are bottom answers: they end the run and never count as a miss.
    - The miss rate matches `harness.coverage_rate` on the in-memory transcripts exactly.
"""

import argparse
import logging

import pandas as pd

INPUT_FILE = 'simulation.csv'
RUNS_FILE = 'coverage_runs.csv'
REQUIRED_COLUMNS = ['run_id', 'answer', 'width', 'abs_error', 'failed']


def load_simulation(input_file):
    try:
        frame = pd.read_csv(input_file, float_precision='round_trip')
    except OSError as e:
        raise OSError(f"cannot read {input_file}: {e}") from e
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{input_file} lacks columns {missing}")
    return frame


def run_coverage(frame):
    """One row per run: queries answered, failed checks, max error and whether any interval missed."""
    answered = frame[frame['answer'].notna()]
    misses = answered['abs_error'] >= answered['width']
    per_run = pd.DataFrame({
        'run_id': answered['run_id'],
        'missed': misses,
        'abs_error': answered['abs_error'],
        'failed': answered['failed'].astype(int),
    }).groupby('run_id').agg(answered=('missed', 'size'), missed=('missed', 'any'),
                             max_abs_error=('abs_error', 'max'), failures=('failed', 'sum'))
    all_runs = pd.Index(sorted(frame['run_id'].unique()), name='run_id')
    per_run = per_run.reindex(all_runs)
    per_run['answered'] = per_run['answered'].fillna(0).astype(int)
    per_run['failures'] = per_run['failures'].fillna(0).astype(int)
    per_run['missed'] = per_run['missed'].astype('boolean').fillna(False).astype(bool)
    return per_run.reset_index()


def miss_rate(per_run):
    if per_run.empty:
        return 0.0
    return float(per_run['missed'].sum()) / len(per_run)


def audit(input_file, runs_file=None):
    per_run = run_coverage(load_simulation(input_file))
    rate = miss_rate(per_run)
    if runs_file:
        out = per_run.copy()
        out['missed'] = out['missed'].astype(int)
        out.to_csv(runs_file, index=False)
    logging.info(f"Coverage audit of {input_file}: {len(per_run)} runs, miss rate {rate:.6f}")
    return rate, per_run


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description='Recompute coverage from a simulation CSV')
    parser.add_argument('input', nargs='?', default=INPUT_FILE)
    parser.add_argument('--runs-out', default=RUNS_FILE)
    args = parser.parse_args()
    rate, per_run = audit(args.input, args.runs_out)
    print(f"Runs: {len(per_run)}, runs with a miss: {int(per_run['missed'].sum())}, miss rate: {rate:.6f}")
    print(f"Per-run flags written to {args.runs_out}.")
