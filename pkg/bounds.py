"""
bounds.py
---------

Worst-case confidence widths and RMSE bounds for answering k adaptively chosen statistical
queries, together with the composition/conversion formulas they use.

Functions:
1. **min_lambda_objective(B)**: min over lambda of (B - ln(1 - lambda)) / lambda.
2. **gaussian_width_rzcw(p)**: mutual-information width for the Gaussian mechanism (rho optimized when absent).
3. **gaussian_tail_width / laplace_tail_width**: union-bounded noise widths.
4. **advanced_composition / zcdp_to_dp**: privacy parameter conversions.
5. **dfhprr_width(mech, p)**: transfer-theorem program, solved per free parameter by bisection.
6. **bnsssu_width(mech, p)**: extended-monitor bound, 2-D grid refinement over (noise, delta).
7. **xr17_width(p)**: earlier information-theoretic width, kept for comparison.
8. **laplace_max_moments(b, m)**: first two moments of the maximum of m Laplace(b) draws.
9. **thresholdout_width / thresholdout_rmse_bound / gaussian_rmse_bound**: RMSE-based bounds.
10. **sample_split_width / discretization_width**: the two non-private baselines.
11. **max_queries(width_fn, n, tau, beta)**: largest k a width function certifies at tau.

Every width is returned either as a float or as a `WidthResult` carrying the chosen free
parameters. Vacuous regimes return tau >= 1 (or +inf) with `vacuous` set, never an error.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc, erfcinv

from core import ConfigError
from solvers import bracket_golden, refine_grid_1d, refine_grid_2d, smallest_feasible

LAMBDA_MIN = 1e-12
LAMBDA_MAX = 1.0 - 1e-12
LOG_RHO_RANGE = (math.log(1e-14), math.log(1e4))
EPS_RANGE = (1e-8, 1e1)
RHO_RANGE = (1e-14, 1e2)
DELTA_RANGE = (1e-30, 0.5)
QUANTILE_TAIL = 1e-12
QUAD_RTOL = 1e-10
DISCRETIZATION_GRID = np.geomspace(1e-4, 1.0, 200)
K_LIMIT = 1 << 40


@dataclass(frozen=True)
class BoundParams:
    n: int
    k: int
    beta: float
    rho: float | None = None
    eps_prime: float | None = None
    delta: float | None = None
    sigma: float | None = None
    T: float | None = None
    h: int | None = None
    budget_b: int | None = None

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise ConfigError(f"n and k must be >= 1, got n={self.n}, k={self.k}")
        if not 0 < self.beta < 1:
            raise ConfigError(f"beta must be in (0, 1), got {self.beta}")
        for name in ("rho", "eps_prime", "delta", "sigma", "T", "h", "budget_b"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive when set, got {value}")


@dataclass(frozen=True)
class WidthResult:
    tau: float
    optimizer: dict = field(default_factory=dict)
    objective_trace: list | None = None
    vacuous: bool = False

    @classmethod
    def of(cls, tau, optimizer=None, objective_trace=None):
        return cls(tau, optimizer or {}, objective_trace, vacuous=not tau < 1.0)


def _tau(result):
    return result.tau if isinstance(result, WidthResult) else float(result)


# Scalar ingredients
def lambda_objective(B, lam):
    return (B - math.log1p(-lam)) / lam


def min_lambda_objective(B):
    """Return (value, lambda_star) minimizing (B - ln(1 - lambda)) / lambda over (0, 1)."""
    if B < 0:
        raise ConfigError(f"B must be >= 0, got {B}")
    lam, value = bracket_golden(lambda x: lambda_objective(B, x), LAMBDA_MIN, LAMBDA_MAX)
    return value, lam


def gaussian_sample_width(n, k, beta, rho):
    """Union-bounded Gaussian noise width at confidence beta/2."""
    return math.sqrt(math.log(4.0 * k / beta) / rho) / (2.0 * n)


def gaussian_tail_width(sigma, k, beta):
    return sigma * math.sqrt(2.0 * math.log(2.0 * k / beta))


def laplace_tail_width(b, k, beta):
    return b * math.log(k / beta)


def advanced_composition(eps_prime, k, delta):
    """Epsilon after k-fold adaptive composition of eps'-DP steps."""
    return math.tanh(eps_prime / 2.0) * eps_prime * k + eps_prime * math.sqrt(2.0 * k * math.log(1.0 / delta))


def zcdp_to_dp(rho, delta):
    """Epsilon of a rho-zCDP algorithm at the given delta."""
    log_term = max(0.0, math.log(math.sqrt(math.pi * rho) / delta))
    return rho + 2.0 * math.sqrt(rho * log_term)


# Gaussian mechanism, mutual-information widths
def _rzcw_tau(n, k, beta, rho):
    value, lam = min_lambda_objective(2.0 * rho * k * n)
    return math.sqrt(value / (2.0 * n * beta)) + gaussian_sample_width(n, k, beta, rho), lam


def gaussian_width_rzcw(p):
    if p.rho is not None:
        tau, lam = _rzcw_tau(p.n, p.k, p.beta, p.rho)
        return WidthResult.of(tau, {"lambda": lam, "rho": p.rho})
    log_rho, tau = bracket_golden(lambda lr: _rzcw_tau(p.n, p.k, p.beta, math.exp(lr))[0], *LOG_RHO_RANGE)
    rho = math.exp(log_rho)
    _, lam = _rzcw_tau(p.n, p.k, p.beta, rho)
    logging.debug(f"rzcw n={p.n} k={p.k}: rho*={rho:.4g}, tau={tau:.6g}")
    return WidthResult.of(tau, {"lambda": lam, "rho": rho})


def _xr17_tau(n, k, beta, rho):
    first = math.sqrt((2.0 / n) * (2.0 * rho * k * n / beta + math.log(4.0 / beta)))
    return first + gaussian_sample_width(n, k, beta, rho)


def xr17_optimum(p):
    """(tau, rho) for the earlier information-theoretic width; rho optimized when absent."""
    if p.rho is not None:
        return _xr17_tau(p.n, p.k, p.beta, p.rho), p.rho
    log_rho, tau = bracket_golden(lambda lr: _xr17_tau(p.n, p.k, p.beta, math.exp(lr)), *LOG_RHO_RANGE)
    return tau, math.exp(log_rho)


def xr17_width(p):
    return xr17_optimum(p)[0]


# Transfer-theorem program
def _dfhprr_terms(mech, n, k, beta, x):
    """(tau', c, D, E) such that ((u - c)^2 - D) * u >= E for u = tau - tau'."""
    if mech == "laplace":
        tau_prime = math.log(2.0 * k / beta) / (n * x)
        c = 4.0 * x * k * math.tanh(x / 2.0)
        return tau_prime, c, 0.0, 256.0 * x * x * k * math.log(16.0 / beta)
    tau_prime = gaussian_sample_width(n, k, beta, x)
    c = 4.0 * x * k
    D = 32.0 * x * k * math.log(math.pi * x * k)
    return tau_prime, c, D, 64.0 * x * k * math.log(16.0 / beta)


def _dfhprr_tau(mech, n, k, beta, x):
    tau_prime, c, D, E = _dfhprr_terms(mech, n, k, beta, x)
    floor = math.sqrt(48.0 / n * math.log(8.0 / beta))
    start = max(floor, c + math.sqrt(max(D, 0.0)))

    def feasible(u):
        return ((u - c) ** 2 - D) * u >= E

    u = smallest_feasible(feasible, start)
    if u is None:
        return math.inf
    return tau_prime + u


def dfhprr_width(mech, p):
    """
    Smallest tau of the transfer-theorem program for the Laplace or Gaussian mechanism.

    For every free parameter (eps' or rho) on a refining log grid, the smallest feasible
    u = tau - tau' is found by bisection (the constraint is monotone once u >= c). The
    overall minimum is returned; an everywhere-infeasible program gives tau = inf.
    """
    if mech not in ("laplace", "gaussian"):
        raise ConfigError(f"unknown mechanism {mech!r}")
    fixed = p.eps_prime if mech == "laplace" else p.rho
    name = "eps_prime" if mech == "laplace" else "rho"
    if fixed is not None:
        tau = _dfhprr_tau(mech, p.n, p.k, p.beta, fixed)
        return WidthResult.of(tau, {name: fixed})
    x, tau = refine_grid_1d(lambda v: _dfhprr_tau(mech, p.n, p.k, p.beta, v),
                            EPS_RANGE if mech == "laplace" else RHO_RANGE)
    if not math.isfinite(tau):
        return WidthResult(math.inf, {}, vacuous=True)
    return WidthResult.of(tau, {name: x})


# Extended-monitor bound
def monitor_prefactor(beta):
    s = math.floor(1.0 / beta)
    return 1.0 / -math.expm1(s * math.log1p(-beta))


def _bnsssu_objective(mech, n, k, beta):
    s = math.floor(1.0 / beta)

    def objective(x, delta):
        if mech == "laplace":
            psi = np.tanh(x / 2.0) * x * k + x * np.sqrt(2.0 * k * np.log(1.0 / delta))
            sample = np.maximum(np.log(k / (2.0 * delta)), 0.0) / (x * n)
        else:
            log_term = np.maximum(np.log(np.sqrt(np.pi * x) / delta), 0.0)
            psi = k * x + 2.0 * np.sqrt(k * x * log_term)
            sample = np.sqrt(np.maximum(np.log(k / delta), 0.0) / (n * n * x))
        return np.expm1(psi) + 6.0 * delta * s + sample

    return objective


def bnsssu_width(mech, p):
    if mech not in ("laplace", "gaussian"):
        raise ConfigError(f"unknown mechanism {mech!r}")
    objective = _bnsssu_objective(mech, p.n, p.k, p.beta)
    x, delta, value = refine_grid_2d(objective, EPS_RANGE if mech == "laplace" else RHO_RANGE, DELTA_RANGE)
    tau = monitor_prefactor(p.beta) * value
    name = "eps_prime" if mech == "laplace" else "rho"
    return WidthResult.of(tau, {name: x, "delta": delta})


# Thresholdout
def laplace_max_moments(b, m):
    """(E[M], E[M^2]) for M the maximum of m i.i.d. Laplace(0, b) variables."""
    if m < 1 or not b > 0:
        raise ConfigError(f"need m >= 1 and b > 0, got m={m}, b={b}")

    def log_cdf(x):
        if x < 0:
            return x / b - math.log(2.0)
        return math.log1p(-0.5 * math.exp(-x / b))

    def upper_tail(x):
        return -math.expm1(m * log_cdf(x))

    def lower_mass(x):
        return math.exp(m * log_cdf(x))

    x_hi = b * (max(math.log(m / 2.0), 0.0) + math.log(1.0 / QUANTILE_TAIL))
    x_lo = b * (math.log(2.0) + math.log(QUANTILE_TAIL) / m)
    bp = b * math.log(m / 2.0)
    points = [bp] if 0.0 < bp < x_hi else None
    opts = dict(epsabs=0.0, epsrel=QUAD_RTOL, limit=200)

    pos_mean, _ = quad(upper_tail, 0.0, x_hi, points=points, **opts)
    neg_mean, _ = quad(lower_mass, x_lo, 0.0, **opts)
    pos_sq, _ = quad(lambda x: 2.0 * x * upper_tail(x), 0.0, x_hi, points=points, **opts)
    neg_sq, _ = quad(lambda x: -2.0 * x * lower_mass(x), x_lo, 0.0, **opts)
    return pos_mean - neg_mean, pos_sq + neg_sq


def _thresholdout_parts(p):
    if p.sigma is None or p.T is None or p.h is None or p.budget_b is None:
        raise ConfigError("thresholdout bound needs sigma, T, h and budget_b")
    w_mean, w_sq = laplace_max_moments(4.0 * p.sigma, p.k)
    y_mean, y_sq = laplace_max_moments(2.0 * p.sigma, p.budget_b)
    psi = w_sq + 2.0 * w_mean * y_mean + y_sq + 2.0 * p.T * (w_mean + y_mean)
    xi, _ = min_lambda_objective(2.0 * p.budget_b / (p.sigma ** 2 * p.h))
    return psi, xi


def thresholdout_mse_bound(p):
    psi, xi = _thresholdout_parts(p)
    base = p.T ** 2 + psi
    return base + xi / (4.0 * p.h) + math.sqrt((xi / p.h) * base)


def thresholdout_rmse_bound(p):
    return math.sqrt(thresholdout_mse_bound(p))


def thresholdout_width(p):
    """Chebyshev width sqrt(MSE / beta) for Thresholdout with holdout size h and budget B."""
    return WidthResult.of(math.sqrt(thresholdout_mse_bound(p) / p.beta),
                          {"sigma": p.sigma, "T": p.T, "budget_b": p.budget_b})


# Gaussian RMSE
def max_chi2_mean(k):
    """E[max of k independent chi-square(1) variables]."""

    def tail(y):
        if y <= 0.0:
            return 1.0
        return -math.expm1(k * math.log1p(-float(erfc(math.sqrt(y / 2.0)))))

    y_hi = 2.0 * float(erfcinv(QUANTILE_TAIL / k)) ** 2
    points = [2.0 * float(erfcinv(1.0 / k)) ** 2] if k > 1 else None
    value, _ = quad(tail, 0.0, y_hi, points=points, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
    return value


def _gaussian_mse(n, k, rho, noise_term):
    value, _ = min_lambda_objective(2.0 * rho * k * n)
    return value / (2.0 * n) + 2.0 * noise_term / (2.0 * n * n * rho)


def gaussian_rmse_rho(p):
    """rho minimizing the Gaussian RMSE bound at (n, k)."""
    noise = max_chi2_mean(p.k)
    log_rho, _ = bracket_golden(lambda lr: _gaussian_mse(p.n, p.k, math.exp(lr), noise), *LOG_RHO_RANGE)
    return math.exp(log_rho)


def gaussian_rmse_bound(p):
    rho = p.rho if p.rho is not None else gaussian_rmse_rho(p)
    return math.sqrt(_gaussian_mse(p.n, p.k, rho, max_chi2_mean(p.k)))


# Baselines
def sample_split_width(p):
    return math.sqrt(p.k * math.log(2.0 * p.k / p.beta) / (2.0 * p.n))


def _discretization_at(p, gamma):
    log_term = (math.log(2.0 / p.beta) + (p.k - 1) * math.log(math.floor(1.0 / gamma) + 1)
                + math.log(p.k * (p.k + 1)))
    return gamma / 2.0 + math.sqrt(log_term / (2.0 * p.n))


def discretization_width(p, gamma=None):
    """Rounded-answer width; optimized over a log grid of gamma when not given."""
    if gamma is not None:
        return _discretization_at(p, gamma)
    return min(_discretization_at(p, float(g)) for g in DISCRETIZATION_GRID)


# Inversion in k
def max_queries(width_fn, n, tau, beta, **fixed):
    """Largest k with width_fn(BoundParams(n, k, beta, ...)) <= tau; 0 if even k = 1 fails."""

    def fits(k):
        return _tau(width_fn(BoundParams(n=n, k=k, beta=beta, **fixed))) <= tau

    if not fits(1):
        return 0
    lo, hi = 1, 2
    while fits(hi):
        lo, hi = hi, hi * 2
        if hi > K_LIMIT:
            return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return lo


def baseline_max_queries(n, tau, beta):
    return max(max_queries(sample_split_width, n, tau, beta),
               max_queries(discretization_width, n, tau, beta))


BOUND_NAMES = ("rzcw", "dfhprr", "bnsssu", "xr17", "thresholdout", "split", "discretize")


def width_for(name, p, mech="gaussian"):
    """Evaluate the named bound as a WidthResult (used by the CLI and bound sweeps)."""
    if name == "rzcw":
        return gaussian_width_rzcw(p)
    if name == "dfhprr":
        return dfhprr_width(mech, p)
    if name == "bnsssu":
        return bnsssu_width(mech, p)
    if name == "xr17":
        tau, rho = xr17_optimum(p)
        return WidthResult.of(tau, {"rho": rho})
    if name == "thresholdout":
        return thresholdout_width(p)
    if name == "split":
        return WidthResult.of(sample_split_width(p))
    if name == "discretize":
        widths = [_discretization_at(p, float(g)) for g in DISCRETIZATION_GRID]
        i = int(np.argmin(widths))
        return WidthResult.of(widths[i], {"gamma": float(DISCRETIZATION_GRID[i])})
    raise ConfigError(f"unknown bound {name!r}; expected one of {', '.join(BOUND_NAMES)}")
