"""
mechanisms.py
-------------

Answer mechanisms for adaptively chosen statistical queries.

1. **noise_answer(cfg, q, X, rng)**
   - Empirical mean plus one Gaussian (variance 1/(2 n^2 rho)) or Laplace (scale 1/(n eps'))
     draw. Answers are never clipped.

2. **thresholdout_init(...) / thresholdout_answer(st, q, rng)**
   - Reusable holdout: the training answer is released unless the noisy train/holdout gap
     trips the noisy threshold, in which case a noisy holdout answer is released and the
     threshold is redrawn. After `overflow_budget` holdout answers the mechanism emits a
     bottom answer and halts, or keeps going and counts the overflow.

3. **Guess and Check**
   - `gnc_init` splits X into a guess set and a holdout, `gnc_step` validates one guess
     (a_g, tau_i) against the holdout. Per-query confidence budgets beta_i are computed in log
     space from the transcript count nu and the weights c_j = 6 / (pi^2 (j+1)^2).
   - Holdout tolerances: `holdout_tol_chernoff` (Hoeffding) and `holdout_tol_mgf`
     (binomial moment generating function, tighter for low-variance queries).
   - On a failed check the holdout answer is released rounded down to a multiple of gamma_f.

4. **Guess mechanisms and width schedules**
   - `Guesser` produces a_g from the guess set (gaussian, thresholdout or empirical),
     `WidthSchedule` produces tau_i (fixed, or multiplied by `growth` up to `cap` after each
     failed check).

5. **sample_split_answer(X, q, i, k_max)**
   - Baseline: the i-th query is answered on its own block of n // k_max rows.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect, brentq

from core import (
    BudgetExhaustedError,
    ConfigError,
    IntervalAnswer,
    MechanismHaltedError,
    eval_query,
    make_rng,
)

NOISE_KINDS = ("gaussian", "laplace", "empirical")
TOL_KINDS = ("chernoff", "mgf")
GUESS_KINDS = ("gaussian", "thresholdout", "empirical")

# binomial MGF solver settings
ELL_UPPER = 50.0
ELL_TOL = 1e-12
TAU_TOL = 1e-6

LOG_C_NORMALIZER = math.log(6.0) - 2.0 * math.log(math.pi)
LN2 = math.log(2.0)


# Noise-adding mechanisms
@dataclass(frozen=True)
class NoiseMechConfig:
    kind: str
    n: int
    rho: float | None = None
    eps_prime: float | None = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise mechanism {self.kind!r}")
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.kind == "gaussian" and (self.rho is None or self.rho <= 0 or self.eps_prime is not None):
            raise ConfigError("gaussian mechanism needs rho > 0 and no eps_prime")
        if self.kind == "laplace" and (self.eps_prime is None or self.eps_prime <= 0 or self.rho is not None):
            raise ConfigError("laplace mechanism needs eps_prime > 0 and no rho")
        if self.kind == "empirical" and (self.rho is not None or self.eps_prime is not None):
            raise ConfigError("empirical mechanism takes no noise parameter")

    @property
    def noise_scale(self):
        """Gaussian standard deviation or Laplace scale; 0 for the empirical kind."""
        if self.kind == "gaussian":
            return math.sqrt(1.0 / (2.0 * self.n ** 2 * self.rho))
        if self.kind == "laplace":
            return 1.0 / (self.n * self.eps_prime)
        return 0.0


def noise_answer(cfg, q, X, rng):
    if X.n != cfg.n:
        raise ConfigError(f"mechanism configured for n={cfg.n}, dataset has n={X.n}")
    value = eval_query(q, X)
    if cfg.kind == "gaussian":
        return value + float(rng.normal(0.0, cfg.noise_scale))
    if cfg.kind == "laplace":
        return value + float(rng.laplace(0.0, cfg.noise_scale))
    return value


def _laplace(rng, scale):
    # zero scale consumes no randomness
    if scale == 0:
        return 0.0
    return float(rng.laplace(0.0, scale))


def _split_rows(X, first_size, rng):
    perm = rng.permutation(X.n)
    return X.take_rows(np.sort(perm[:first_size])), X.take_rows(np.sort(perm[first_size:]))


# Thresholdout
@dataclass
class ThresholdoutState:
    train: object
    holdout: object
    T: float
    sigma: float
    T_hat: float
    overflow_budget: int
    used: int = 0
    on_overflow: str = "halt"
    halted: bool = False
    overflowed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.overflow_budget < 0:
            raise ConfigError(f"overflow budget must be >= 0, got {self.overflow_budget}")
        if self.on_overflow not in ("halt", "flag"):
            raise ConfigError(f"on_overflow must be 'halt' or 'flag', got {self.on_overflow!r}")


def thresholdout_init(X, train_size, T, sigma, budget, rng, on_overflow="halt"):
    """Randomly split X into train/holdout and draw the first noisy threshold."""
    if not 1 <= train_size < X.n:
        raise ConfigError(f"train size must be in [1, {X.n - 1}], got {train_size}")
    train, holdout = _split_rows(X, train_size, rng)
    T_hat = T + _laplace(rng, 2.0 * sigma)
    return ThresholdoutState(train, holdout, T, sigma, T_hat, budget, on_overflow=on_overflow)


def thresholdout_answer(st, q, rng):
    """One Thresholdout answer, or None when the holdout budget is spent."""
    if st.halted:
        raise MechanismHaltedError("thresholdout has halted")
    a_t = eval_query(q, st.train)
    a_h = eval_query(q, st.holdout)
    if abs(a_h - a_t) <= st.T_hat + _laplace(rng, 4.0 * st.sigma):
        return a_t

    if st.used >= st.overflow_budget:
        if st.on_overflow == "halt":
            st.halted = True
            logging.info(f"Thresholdout halted after {st.used} holdout answers")
            return None
        st.overflowed += 1
    else:
        st.used += 1
    st.T_hat = st.T + _laplace(rng, 2.0 * st.sigma)
    return a_h + _laplace(rng, st.sigma)


# Guess and Check: budget ledger
def log_c_weight(j):
    """ln c_j with c_j = 6 / (pi^2 (j+1)^2); sum over j >= 0 is 1."""
    return LOG_C_NORMALIZER - 2.0 * math.log(j + 1)


def transcript_count_log(i, f, gammas):
    """ln nu, nu = C(i-1, f) * prod(1/gamma_j), with nu = 1 when f = 0."""
    if f != len(gammas):
        raise ConfigError(f"failure count {f} does not match {len(gammas)} gammas")
    if f == 0:
        return 0.0
    if f > i - 1:
        raise ConfigError(f"{f} failures cannot precede query {i}")
    log_binom = math.lgamma(i) - math.lgamma(f + 1) - math.lgamma(i - f)
    return log_binom - math.fsum(math.log(g) for g in gammas)


def log_beta_budget(i, f, gammas, beta):
    """ln beta_i, with beta_i = beta * c_{i-1} * c_f / nu."""
    return math.log(beta) + log_c_weight(i - 1) + log_c_weight(f) - transcript_count_log(i, f, gammas)


def beta_budget(i, f, gammas, beta):
    """Per-query confidence budget; underflows to 0 once nu is large, use log_beta_budget there."""
    return math.exp(log_beta_budget(i, f, gammas, beta))


def _log_budget(beta_i, log_beta_i):
    if log_beta_i is None:
        if not 0 < beta_i < 1:
            raise ConfigError(f"beta_i must be in (0, 1), got {beta_i}")
        return math.log(beta_i)
    if not log_beta_i < 0:
        raise ConfigError(f"ln beta_i must be negative, got {log_beta_i}")
    return log_beta_i


# Guess and Check: holdout tolerances
def holdout_tol_chernoff(beta_i, n_h, log_beta_i=None):
    """sqrt(ln(2 / beta_i) / (2 n_h)); pass log_beta_i when beta_i is below float range."""
    log_beta_i = _log_budget(beta_i, log_beta_i)
    return math.sqrt((LN2 - log_beta_i) / (2.0 * n_h))


def solve_ell(mu, tau_prime):
    """Stationary point of ln(1 + mu(e^l - 1)) - l(mu + tau'), capped at ELL_UPPER."""
    target = mu + tau_prime

    def slope(ell):
        return mu * math.exp(ell) / (1.0 + mu * math.expm1(ell)) - target

    if slope(ELL_UPPER) <= 0:
        return ELL_UPPER
    return bisect(slope, 0.0, ELL_UPPER, xtol=ELL_TOL)


def binomial_mgf_log_bound(n, mu, tau_prime, ell=None):
    """ln of ((1 + mu(e^l - 1)) / e^{l(mu + tau')})^n, bounding P(Bin(n, mu)/n >= mu + tau')."""
    if ell is None:
        ell = solve_ell(mu, tau_prime)
    return n * (math.log1p(mu * math.expm1(ell)) - ell * (mu + tau_prime))


def holdout_tol_mgf(beta_i, a_g, tau, a_h, n_h, log_beta_i=None):
    """
    Smallest tau' in (0, tau) whose binomial-MGF tail bound is at most beta_i / 2.

    The mean is mu = a_g - tau when a_g > a_h, otherwise 1 - a_g - tau (the mirrored
    tail). A non-positive mean makes the requirement vacuous and the smallest search
    value is returned. Returns None when no tau' below tau works.
    """
    log_target = _log_budget(beta_i, log_beta_i) - LN2
    mu = a_g - tau if a_g > a_h else 1.0 - a_g - tau
    if mu <= 0.0 or mu >= 1.0:
        return TAU_TOL

    def excess(tau_prime):
        return binomial_mgf_log_bound(n_h, mu, tau_prime) - log_target

    # the bound is 0 at tau' = 0 and decreasing in tau'
    if excess(tau) > 0:
        return None
    tau_prime = brentq(excess, 0.0, tau, xtol=TAU_TOL) + TAU_TOL
    if tau_prime >= tau:
        return None
    return tau_prime


def gamma_discretization(tau_i, beta_i, n_h, log_beta_i=None):
    """Largest gamma with 2 exp(-2 (tau_i - gamma)^2 n_h) <= beta_i, floored at 0."""
    return max(0.0, tau_i - holdout_tol_chernoff(beta_i, n_h, log_beta_i=log_beta_i))


def floor_to_grid(y, gamma):
    return math.floor(y / gamma) * gamma


def holdout_size_needed(tau, beta, i=1):
    """Smallest n_h whose Chernoff tolerance at query i (no failures) is below tau."""
    log_term = LN2 - log_beta_budget(i, 0, [], beta)
    return math.floor(log_term / (2.0 * tau ** 2)) + 1


# Guess and Check: protocol
@dataclass(frozen=True)
class GuessResponse:
    a_g: float
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"guessed width must be positive, got {self.tau}")


@dataclass
class GnCState:
    guess_set: object
    holdout: object
    beta: float
    tol_kind: str = "mgf"
    f: int = 0
    gammas: list = field(default_factory=list)
    i: int = 1
    halted: bool = False
    spent: list = field(default_factory=list)

    def __post_init__(self):
        if self.tol_kind not in TOL_KINDS:
            raise ConfigError(f"unknown holdout tolerance {self.tol_kind!r}")
        if not 0 < self.beta < 1:
            raise ConfigError(f"beta must be in (0, 1), got {self.beta}")

    def spent_budget(self):
        """Sum over answered queries of beta_i * nu, i.e. beta * c_{i-1} * c_f."""
        return math.fsum(self.spent)


def gnc_init(X, n_g, beta, rng, tol_kind="mgf"):
    if not 1 <= n_g < X.n:
        raise ConfigError(f"guess set size must be in [1, {X.n - 1}], got {n_g}")
    guess_set, holdout = _split_rows(X, n_g, rng)
    return GnCState(guess_set, holdout, beta, tol_kind)


def gnc_step(st, q, guess):
    """Validate one guess against the holdout and return the certified answer."""
    if st.halted:
        raise MechanismHaltedError("guess and check has halted")
    log_beta_i = log_beta_budget(st.i, st.f, st.gammas, st.beta)
    beta_i = math.exp(log_beta_i)
    a_h = eval_query(q, st.holdout)
    n_h = st.holdout.n
    if st.tol_kind == "chernoff":
        tau_h = holdout_tol_chernoff(beta_i, n_h, log_beta_i=log_beta_i)
    else:
        tau_h = holdout_tol_mgf(beta_i, guess.a_g, guess.tau, a_h, n_h, log_beta_i=log_beta_i)
    st.spent.append(math.exp(math.log(st.beta) + log_c_weight(st.i - 1) + log_c_weight(st.f)))

    if tau_h is not None and abs(guess.a_g - a_h) <= guess.tau - tau_h:
        st.i += 1
        return IntervalAnswer(guess.a_g, guess.tau, failed=False, beta_i=beta_i)

    gamma = gamma_discretization(guess.tau, beta_i, n_h, log_beta_i=log_beta_i)
    if gamma <= 0.0:
        st.halted = True
        logging.info(f"Guess and check halted at query {st.i} after {st.f} failures")
        return IntervalAnswer(None, guess.tau, failed=True, beta_i=beta_i)
    st.gammas.append(gamma)
    st.f += 1
    st.i += 1
    logging.debug(f"Check failed at query {st.i - 1}: gamma={gamma:.6g}, failures={st.f}")
    return IntervalAnswer(floor_to_grid(a_h, gamma), guess.tau, failed=True, beta_i=beta_i)


# Guess mechanisms and width schedules
@dataclass(frozen=True)
class WidthSchedule:
    tau_1: float
    growth: float | None = None
    cap: float | None = None

    def __post_init__(self):
        if not 0 < self.tau_1 < 1:
            raise ConfigError(f"initial width must be in (0, 1), got {self.tau_1}")
        if (self.growth is None) != (self.cap is None):
            raise ConfigError("a responsive schedule needs both growth and cap")
        if self.growth is not None and not (self.growth > 1 and 0 < self.cap < 1):
            raise ConfigError(f"schedule needs growth > 1 and cap in (0, 1), got {self.growth}, {self.cap}")

    def next(self, tau, failed):
        if failed and self.growth is not None:
            return min(self.growth * tau, self.cap)
        return tau


class Guesser:
    """Guess mechanism run on the guess set only; guesses are clipped to [0, 1]."""

    def __init__(self, kind, guess_set, rng, rho=None, sigma=None, threshold=None, budget=None):
        if kind not in GUESS_KINDS:
            raise ConfigError(f"unknown guess mechanism {kind!r}")
        self.kind = kind
        self.guess_set = guess_set
        self.rng = make_rng(rng)
        self.noise = None
        self.thresholdout = None
        if kind == "gaussian":
            self.noise = NoiseMechConfig("gaussian", guess_set.n, rho=rho)
        elif kind == "thresholdout":
            self.thresholdout = thresholdout_init(
                guess_set, guess_set.n // 2, threshold, sigma,
                budget if budget is not None else 0, self.rng, on_overflow="flag")

    def answer(self, q):
        if self.noise is not None:
            value = noise_answer(self.noise, q, self.guess_set, self.rng)
        elif self.thresholdout is not None:
            value = thresholdout_answer(self.thresholdout, q, self.rng)
        else:
            value = eval_query(q, self.guess_set)
        return min(max(value, 0.0), 1.0)


# Sample splitting baseline
def split_block(n, i, k_max):
    block = n // k_max
    return slice((i - 1) * block, i * block)


def sample_split_answer(X, q, i, k_max):
    if i > k_max:
        raise BudgetExhaustedError(f"query {i} exceeds the {k_max} available blocks")
    if X.n < k_max:
        raise ConfigError(f"cannot split {X.n} rows into {k_max} blocks")
    return eval_query(q, X.take_rows(split_block(X.n, i, k_max)))
