"""
adversary.py

Analyst strategies that try to make a mechanism overfit.

Both strategies ask Correlation(j) queries at nonadaptive indices and, at the adaptive
indices S, a SignAgreement query built from the answers seen so far: weight
w_i = ln(a_i / (1 - a_i)) on each earlier nonadaptive feature i, answers clamped to
[clamp_eps, 1 - clamp_eps]. In agreement mode the query asks whether the weighted vote
agrees with the target column; its population value is 0.5 under the uniform
distribution while its empirical value on the sample is pushed towards 1.

    single     S = {k+1}, horizon k+1
    quadratic  S = perfect squares 4, 9, 16, ... <= k, horizon k

Usage:
    st = make_strategy("single", k=1000, n=5000)
    while True:
        try:
            q = next_query(st)
        except StrategyDone:
            break
        record_answer(st, mechanism(q))
"""

import math
from dataclasses import dataclass, field

from core import ConfigError, Correlation, ProtocolError, SignAgreement, StrategyDone

STRATEGIES = ("single", "quadratic")
VARIANTS = ("standard", "thresholdout")


def single_adaptive_set(k):
    return frozenset({k + 1})


def quadratic_adaptive_set(k):
    return frozenset(l * l for l in range(2, math.isqrt(k) + 1))


@dataclass
class StrategyState:
    k: int
    adaptive_set: frozenset
    horizon: int
    clamp_eps: float
    agreement_mode: bool = True
    # the thresholdout variant builds the same query from the released answers,
    # which is all the analyst ever sees
    variant: str = "standard"
    answers: dict = field(default_factory=dict)
    j: int = 1
    pending: object = None
    halted: bool = False
    success: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not 0 < self.clamp_eps < 0.5:
            raise ConfigError(f"clamp_eps must be in (0, 0.5), got {self.clamp_eps}")
        if any(not 1 <= i <= self.k + 1 for i in self.adaptive_set):
            raise ConfigError("adaptive indices must lie in [1, k+1]")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown strategy variant {self.variant!r}")

    @property
    def done(self):
        return self.halted or self.j > self.horizon


def make_strategy(name, k, n=None, clamp_eps=None, agreement_mode=True, variant="standard", horizon=None):
    """Build the named strategy; clamp_eps defaults to 1/(2n)."""
    if name == "single":
        adaptive, default_horizon = single_adaptive_set(k), k + 1
    elif name == "quadratic":
        adaptive, default_horizon = quadratic_adaptive_set(k), k
    else:
        raise ConfigError(f"unknown strategy {name!r}; expected one of {', '.join(STRATEGIES)}")
    if clamp_eps is None:
        if n is None:
            raise ConfigError("clamp_eps or n is required")
        clamp_eps = 1.0 / (2.0 * n)
    return StrategyState(k, adaptive, horizon if horizon is not None else default_horizon,
                         clamp_eps, agreement_mode, variant)


def log_odds(a, clamp_eps):
    a = min(max(a, clamp_eps), 1.0 - clamp_eps)
    return math.log(a / (1.0 - a))


def adaptive_query(st):
    weights = {i: log_odds(a, st.clamp_eps) for i, a in st.answers.items()
               if i < st.j and i not in st.adaptive_set}
    return SignAgreement.from_map(weights, include_target=st.agreement_mode)


def next_query(st):
    if st.pending is not None:
        raise ProtocolError(f"query {st.j} is still waiting for an answer")
    if st.done:
        raise StrategyDone(f"no queries left after {st.j - 1}")
    q = adaptive_query(st) if st.j in st.adaptive_set else Correlation(st.j)
    st.pending = q
    return q


def record_answer(st, a):
    """Store the answer to the pending query; None (bottom) halts the strategy."""
    if st.pending is None:
        raise ProtocolError("answer received with no query pending")
    st.pending = None
    if a is None:
        st.halted = True
        st.success = False
        return st
    st.answers[st.j] = float(a)
    st.j += 1
    return st
