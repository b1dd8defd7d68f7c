import math

import pytest

from bounds import gaussian_width_rzcw, max_queries
from harness import ExperimentConfig, coverage_rate, queries_answered, rmse_experiment, run_experiment

pytestmark = pytest.mark.slow

RMSE_N = 5000
RMSE_K = [1000, 10000]


@pytest.fixture(scope="module")
def gaussian_rmse_rows():
    cfg = ExperimentConfig(mechanism="gaussian", n=RMSE_N, k=RMSE_K[0], runs=20, seed=1)
    return {row["k"]: row for row in rmse_experiment(cfg, RMSE_K)}


@pytest.fixture(scope="module")
def thresholdout_rmse_row():
    cfg = ExperimentConfig(mechanism="thresholdout", n=RMSE_N, k=RMSE_K[-1], runs=20, seed=1)
    return rmse_experiment(cfg, [RMSE_K[-1]])[0]


def _gnc(n, tau, beta, horizon, **overrides):
    return ExperimentConfig(mechanism="gnc", n=n, k=horizon, beta=beta, strategy="quadratic", tau=tau,
                            runs=5, seed=5, **overrides)


@pytest.fixture(scope="module")
def gnc_k_at_beta_005():
    return queries_answered(_gnc(5000, 0.1, 0.05, 5000))


class TestRmseTightness:

    @pytest.mark.parametrize("k", RMSE_K)
    def test_gaussian_bound_within_factor(self, gaussian_rmse_rows, k):
        # adaptive query error; expected ratio about 3.7 at k=1000 and 4.4 at k=10000
        row = gaussian_rmse_rows[k]
        ratio = row["upper_bound_rmse"] / row["realized_rmse_mean"]
        assert 1.0 <= ratio <= 6.0, f"gaussian bound/realized at k={k}: expected in [1, 6], got {ratio:.3f}"

    @pytest.mark.parametrize("k", RMSE_K)
    def test_max_error_sits_between(self, gaussian_rmse_rows, k):
        row = gaussian_rmse_rows[k]
        assert row["realized_rmse_mean"] <= row["max_error_rmse"] <= row["upper_bound_rmse"]

    def test_thresholdout_gap_is_wider(self, gaussian_rmse_rows, thresholdout_rmse_row):
        gaussian = gaussian_rmse_rows[RMSE_K[-1]]
        gaussian_ratio = gaussian["upper_bound_rmse"] / gaussian["realized_rmse_mean"]
        thresholdout_ratio = thresholdout_rmse_row["upper_bound_rmse"] / thresholdout_rmse_row["realized_rmse_mean"]
        assert thresholdout_ratio >= 2.0 * gaussian_ratio, \
            f"expected thresholdout ratio >= {2.0 * gaussian_ratio:.3f}, got {thresholdout_ratio:.3f}"


class TestGncCoverage:

    def test_miss_rate_within_beta(self):
        runs, beta = 2000, 0.2
        cfg = ExperimentConfig(mechanism="gnc", n=400, k=30, beta=beta, strategy="quadratic", tau=0.2,
                               runs=runs, seed=8)
        rate = coverage_rate(run_experiment(cfg))
        limit = beta + 3.0 * math.sqrt(beta * (1.0 - beta) / runs)
        assert rate <= limit, f"expected miss rate <= {limit:.4f}, got {rate:.4f}"


class TestGncQueries:

    def test_beats_worst_case_bound(self, gnc_k_at_beta_005):
        k_mean, _ = gnc_k_at_beta_005
        worst_case = max(max_queries(gaussian_width_rzcw, 5000, 0.1, 0.05), 1)
        assert k_mean >= 10 * worst_case, f"expected >= {10 * worst_case} queries, got {k_mean:.1f}"

    def test_small_beta_costs_little(self, gnc_k_at_beta_005):
        k_mean, _ = gnc_k_at_beta_005
        k_small, _ = queries_answered(_gnc(5000, 0.1, 0.005, 5000))
        assert k_small >= 0.5 * k_mean, f"beta=0.005 answered {k_small:.1f} vs {k_mean:.1f} at beta=0.05"

    def test_mgf_tolerance_helps_low_variance(self):
        n = 4000
        n_g = n // 2
        common = dict(bias_profile="lowvar", guess_rho=1.0 / (2.0 * n_g ** 2 * 0.002 ** 2), truth_samples=20000)
        k_mgf, _ = queries_answered(_gnc(n, 0.05, 0.05, 300, tol="mgf", **common))
        k_chernoff, _ = queries_answered(_gnc(n, 0.05, 0.05, 300, tol="chernoff", **common))
        assert k_mgf > k_chernoff, f"mgf {k_mgf:.1f} vs chernoff {k_chernoff:.1f}"
