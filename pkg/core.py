"""
core.py
-------

Domain types shared by every other module of the ADAX toolkit.

1. **SampleMatrix**
   - The hidden dataset X: n rows of d = k+1 signed binary features, the last
     column being the target x(d).
   - Stored as a read-only, column-major int8 array so column sweeps stay cheap.

2. **ProductDistribution**
   - Independent coordinates; `biases[j]` is the probability that coordinate j+1
     equals +1. `uniform(d)` and `low_variance(d)` build the two profiles used by
     the experiments.

3. **Correlation / SignAgreement / Constant**
   - The statistical queries. Column indices are 1-based, as written in the
     analyst strategy; the target column is never a valid feature index.

4. **eval_query(q, X)** / **true_value(q, D, mode)** / **sample_dataset(D, n, seed)**
   - Empirical value, population value (closed form, brute force or Monte
     Carlo) and seeded sampling.

5. **IntervalAnswer / TranscriptEntry / Transcript**
   - What a mechanism returns per query and the record of one interaction.

All errors raised by the toolkit derive from `AdaxError`.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import ClassVar, Mapping

import numpy as np


# Exceptions
class AdaxError(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidQueryError(AdaxError):
    """A query references columns the dataset does not have."""


class ModeUnsupportedError(AdaxError):
    """Exact population value requested for a query with no exact method."""


class ConfigError(AdaxError, ValueError):
    """Invalid parameters or configuration."""


class MechanismHaltedError(AdaxError):
    """A halted mechanism was asked another query."""


class BudgetExhaustedError(AdaxError):
    """A mechanism with a fixed query budget has used all of it."""


class ProtocolError(AdaxError):
    """Analyst/mechanism exchange out of order."""


class StrategyDone(AdaxError):
    """The analyst has no further queries (horizon reached or halted)."""


# Cells generated per block when sampling or brute forcing
BLOCK_CELLS = 1 << 22
MAX_EXACT_SUPPORT = 20


def make_rng(seed):
    """Return a Philox-backed Generator for an int, SeedSequence or existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2:
            raise ConfigError(f"sample matrix must be 2-D, got shape {cells.shape}")
        n, d = cells.shape
        if n < 1 or d < 2:
            raise ConfigError(f"sample matrix needs n >= 1 and d >= 2, got {n}x{d}")
        if not np.all((cells == 1) | (cells == -1)):
            raise ConfigError("sample matrix cells must be -1 or +1")
        cells = np.asfortranarray(cells, dtype=np.int8)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def n(self):
        return self.cells.shape[0]

    @property
    def d(self):
        return self.cells.shape[1]

    def column(self, j):
        return self.cells[:, j - 1]

    def take_rows(self, rows):
        """Sub-matrix on the given row indices or slice."""
        return SampleMatrix(self.cells[rows])


@dataclass(frozen=True, eq=False)
class ProductDistribution:
    biases: np.ndarray

    def __post_init__(self):
        biases = np.array(self.biases, dtype=np.float64)
        if biases.ndim != 1 or biases.size < 2:
            raise ConfigError("biases must be a vector with at least 2 entries")
        if np.any(biases < 0.0) or np.any(biases > 1.0):
            raise ConfigError("every bias must lie in [0, 1]")
        biases.setflags(write=False)
        object.__setattr__(self, "biases", biases)

    @classmethod
    def uniform(cls, d):
        return cls(np.full(d, 0.5))

    @classmethod
    def low_variance(cls, d, p_feature=0.9, p_target=1.0):
        """Features +1 w.p. p_feature, target fixed, so every Correlation truth is p_feature."""
        biases = np.full(d, p_feature)
        biases[-1] = p_target
        return cls(biases)

    @property
    def d(self):
        return self.biases.size


# Queries
@dataclass(frozen=True)
class Correlation:
    j: int
    kind: ClassVar[str] = "correlation"


@dataclass(frozen=True)
class SignAgreement:
    indices: tuple = ()
    weights: tuple = ()
    include_target: bool = True
    kind: ClassVar[str] = "sign_agreement"

    def __post_init__(self):
        if len(self.indices) != len(self.weights):
            raise InvalidQueryError("indices and weights differ in length")

    @classmethod
    def from_map(cls, weights: Mapping[int, float], include_target=True):
        items = sorted(weights.items())
        return cls(tuple(int(i) for i, _ in items), tuple(float(w) for _, w in items), include_target)

    @property
    def weight_map(self):
        return dict(zip(self.indices, self.weights))


@dataclass(frozen=True)
class Constant:
    c: float
    kind: ClassVar[str] = "constant"

    def __post_init__(self):
        if not 0.0 <= self.c <= 1.0:
            raise InvalidQueryError(f"constant query value {self.c} outside [0, 1]")


QuerySpec = Correlation | SignAgreement | Constant


def _check_feature_index(j, d):
    if not 1 <= j <= d - 1:
        raise InvalidQueryError(f"feature index {j} outside [1, {d - 1}]")


def _sign_predictions(q, cells):
    """+1/-1 per row for sign(sum_i w_i x(i)), with sign(0) = +1."""
    if not q.indices:
        return np.ones(cells.shape[0], dtype=np.int8)
    idx = np.asarray(q.indices, dtype=np.intp) - 1
    weights = np.asarray(q.weights, dtype=np.float64)
    scores = np.zeros(cells.shape[0], dtype=np.float64)
    chunk = max(1, BLOCK_CELLS // cells.shape[0])
    for start in range(0, idx.size, chunk):
        scores += cells[:, idx[start:start + chunk]] @ weights[start:start + chunk]
    return np.where(scores >= 0.0, 1, -1).astype(np.int8)


def eval_query(q, X):
    """Empirical mean of q over the rows of X."""
    match q:
        case Constant(c=c):
            return float(c)
        case Correlation(j=j):
            _check_feature_index(j, X.d)
            return float(np.mean(X.cells[:, j - 1] == X.cells[:, -1]))
        case SignAgreement():
            for j in q.indices:
                _check_feature_index(j, X.d)
            pred = _sign_predictions(q, X.cells)
            if q.include_target:
                return float(np.mean(pred == X.cells[:, -1]))
            return float(np.mean(pred == 1))
    raise InvalidQueryError(f"unknown query type {type(q).__name__}")


def _nonzero_part(q):
    pairs = [(i, w) for i, w in zip(q.indices, q.weights) if w != 0.0]
    return SignAgreement(tuple(i for i, _ in pairs), tuple(w for _, w in pairs), q.include_target)


def _exact_sign_agreement(q, biases):
    """Brute force over the 2^m feature patterns of the support."""
    m = len(q.indices)
    p = biases[np.asarray(q.indices, dtype=np.intp) - 1]
    w = np.asarray(q.weights, dtype=np.float64)
    shifts = np.arange(m)
    chunk = max(1, BLOCK_CELLS // max(m, 1))
    p_plus = 0.0
    for start in range(0, 1 << m, chunk):
        codes = np.arange(start, min(start + chunk, 1 << m))
        bits = ((codes[:, None] >> shifts) & 1).astype(bool)
        probs = np.prod(np.where(bits, p, 1.0 - p), axis=1)
        scores = np.where(bits, 1.0, -1.0) @ w
        p_plus += float(probs[scores >= 0.0].sum())
    if q.include_target:
        p_d = biases[-1]
        return p_plus * p_d + (1.0 - p_plus) * (1.0 - p_d)
    return p_plus


def _sampled_value(q, D, samples, rng):
    """Monte Carlo mean and standard error, sampling only the columns q reads."""
    if isinstance(q, Constant):
        return float(q.c), 0.0
    if isinstance(q, SignAgreement) and not q.indices:
        # predicts +1 on every row, so only the target column matters
        if not q.include_target:
            return 1.0, 0.0
        mean = rng.binomial(samples, D.biases[-1]) / samples
        return float(mean), math.sqrt(mean * (1.0 - mean) / samples)
    if isinstance(q, Correlation):
        cols = [q.j]
        local = Correlation(1)
    else:
        cols = list(q.indices)
        local = SignAgreement(tuple(range(1, len(cols) + 1)), q.weights, q.include_target)
    biases = np.append(D.biases[np.asarray(cols, dtype=np.intp) - 1], D.biases[-1])
    width = biases.size
    chunk = max(1, BLOCK_CELLS // width)
    hits = 0.0
    for start in range(0, samples, chunk):
        rows = min(chunk, samples - start)
        cells = np.where(rng.random((rows, width)) < biases, 1, -1).astype(np.int8)
        hits += eval_query(local, SampleMatrix(cells)) * rows
    mean = hits / samples
    return mean, math.sqrt(max(mean * (1.0 - mean), 0.0) / samples)


def true_value(q, D, mode="auto", samples=10**6, seed=0):
    """
    Population value of q under D as (value, std_err).

    mode 'exact' uses closed forms or brute force (SignAgreement support <= 20),
    'sampled' always uses Monte Carlo with `samples` draws, 'auto' prefers exact.
    """
    if mode not in ("exact", "sampled", "auto"):
        raise ConfigError(f"unknown truth mode {mode!r}")
    match q:
        case Constant(c=c):
            return float(c), 0.0
        case Correlation(j=j):
            _check_feature_index(j, D.d)
            if mode == "sampled":
                return _sampled_value(q, D, samples, make_rng(seed))
            p_j, p_d = D.biases[j - 1], D.biases[-1]
            return float((1.0 + (2.0 * p_j - 1.0) * (2.0 * p_d - 1.0)) / 2.0), 0.0
        case SignAgreement():
            for j in q.indices:
                _check_feature_index(j, D.d)
            if mode == "sampled":
                return _sampled_value(q, D, samples, make_rng(seed))
            reduced = _nonzero_part(q)
            # target independent of the prediction and symmetric
            if reduced.include_target and D.biases[-1] == 0.5:
                return 0.5, 0.0
            if len(reduced.indices) <= MAX_EXACT_SUPPORT:
                return float(_exact_sign_agreement(reduced, D.biases)), 0.0
            if mode == "exact":
                raise ModeUnsupportedError(
                    f"exact value needs support <= {MAX_EXACT_SUPPORT}, got {len(reduced.indices)}")
            logging.debug(f"Monte Carlo truth over {len(reduced.indices)} columns, {samples} samples")
            return _sampled_value(reduced, D, samples, make_rng(seed))
    raise InvalidQueryError(f"unknown query type {type(q).__name__}")


def sample_dataset(D, n, seed):
    """Draw n i.i.d. rows from D; deterministic given seed."""
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    rng = make_rng(seed)
    cells = np.empty((n, D.d), dtype=np.int8, order="F")
    block = max(1, BLOCK_CELLS // n)
    for start in range(0, D.d, block):
        stop = min(start + block, D.d)
        u = rng.random((n, stop - start))
        cells[:, start:stop] = np.where(u < D.biases[start:stop], 1, -1)
    return SampleMatrix(cells)


# Answers and transcripts
@dataclass(frozen=True)
class IntervalAnswer:
    point: float | None
    width: float
    failed: bool = False
    beta_i: float | None = None

    def __post_init__(self):
        if self.point is not None and not self.width > 0:
            raise ConfigError(f"answer {self.point} needs a positive width, got {self.width}")

    @property
    def is_bottom(self):
        return self.point is None

    def covers(self, truth):
        return self.point is not None and abs(truth - self.point) < self.width


@dataclass(frozen=True)
class TranscriptEntry:
    query: QuerySpec
    answer: IntervalAnswer
    truth: float
    abs_error: float | None

    @property
    def missed(self):
        return self.answer.point is not None and self.abs_error >= self.answer.width


@dataclass
class Transcript:
    """Ordered record of one interaction.

    `entries` holds answered queries only; a bottom answer ends the interaction and is kept apart in `bottom`.
    """
    run_index: int = 0
    entries: list = field(default_factory=list)
    bottom: TranscriptEntry | None = None

    def record(self, query, answer, truth):
        if self.terminal:
            raise ProtocolError(f"run {self.run_index} already ended with a bottom answer")
        if answer.point is None:
            self.bottom = TranscriptEntry(query, answer, float(truth), None)
            return
        self.entries.append(TranscriptEntry(query, answer, float(truth), abs(answer.point - truth)))

    @property
    def terminal(self):
        return self.bottom is not None

    @property
    def answered(self):
        return len(self.entries)

    @property
    def failures(self):
        """Failed checks that still released an answer."""
        return sum(1 for e in self.entries if e.answer.failed)

    def rows(self):
        """Answered entries followed by the bottom entry, if any."""
        return self.entries + ([self.bottom] if self.bottom is not None else [])

    def has_miss(self):
        return any(e.missed for e in self.entries)

    def running_max_error(self):
        errors = [e.abs_error for e in self.entries]
        return np.maximum.accumulate(np.asarray(errors, dtype=np.float64)) if errors else np.zeros(0)

    def max_abs_error(self):
        return max((e.abs_error for e in self.entries), default=0.0)
