import math

import numpy as np
import pytest

from adversary import (
    adaptive_query,
    log_odds,
    make_strategy,
    next_query,
    quadratic_adaptive_set,
    record_answer,
    single_adaptive_set,
)
from core import (
    ConfigError,
    Correlation,
    ProductDistribution,
    ProtocolError,
    SignAgreement,
    StrategyDone,
    eval_query,
    sample_dataset,
)
from harness import ExperimentConfig, run_experiment


def _play(st, answer_fn):
    queries = []
    while True:
        try:
            q = next_query(st)
        except StrategyDone:
            return queries
        queries.append(q)
        record_answer(st, answer_fn(q))


class TestAdaptiveSets:

    def test_single(self):
        assert single_adaptive_set(10) == {11}

    @pytest.mark.parametrize("k,expected", [(3, set()), (4, {4}), (20, {4, 9, 16}), (25, {4, 9, 16, 25})])
    def test_quadratic(self, k, expected):
        assert quadratic_adaptive_set(k) == expected


class TestStrategyFlow:

    def test_single_strategy_sequence(self):
        st = make_strategy("single", 3, n=100)
        queries = _play(st, lambda q: 0.5)
        assert queries[:3] == [Correlation(1), Correlation(2), Correlation(3)]
        assert isinstance(queries[3], SignAgreement)
        assert len(queries) == 4
        assert st.success

    def test_quadratic_strategy_sequence(self):
        st = make_strategy("quadratic", 10, n=100)
        queries = _play(st, lambda q: 0.6)
        adaptive = [i for i, q in enumerate(queries, start=1) if isinstance(q, SignAgreement)]
        assert adaptive == [4, 9]
        assert len(queries) == 10
        assert queries[8].indices == (1, 2, 3, 5, 6, 7, 8)

    def test_neutral_answers_give_zero_weights(self, tiny_matrix):
        st = make_strategy("single", 2, n=4)
        _play(st, lambda q: 0.5 if isinstance(q, Correlation) else eval_query(q, tiny_matrix))
        q = adaptive_query(st)
        assert q.weights == (0.0, 0.0)
        # every prediction is +1, so agreement is the share of positive targets
        assert eval_query(q, tiny_matrix) == pytest.approx(0.75)

    def test_weights_are_log_odds(self):
        st = make_strategy("single", 2, clamp_eps=1e-3)
        next_query(st)
        record_answer(st, 0.8)
        next_query(st)
        record_answer(st, 0.0)
        q = next_query(st)
        assert q.weight_map[1] == pytest.approx(math.log(4.0))
        assert q.weight_map[2] == pytest.approx(math.log(1e-3 / (1 - 1e-3)))

    def test_literal_mode_drops_target(self):
        st = make_strategy("single", 1, n=10, agreement_mode=False)
        next_query(st)
        record_answer(st, 0.7)
        assert next_query(st).include_target is False

    def test_bottom_halts(self):
        st = make_strategy("quadratic", 10, n=100)
        next_query(st)
        record_answer(st, None)
        assert st.halted and not st.success
        with pytest.raises(StrategyDone):
            next_query(st)

    def test_horizon_override(self):
        st = make_strategy("quadratic", 100, n=100, horizon=5)
        assert len(_play(st, lambda q: 0.5)) == 5


class TestProtocolErrors:

    def test_answer_without_query(self):
        st = make_strategy("single", 3, n=10)
        with pytest.raises(ProtocolError):
            record_answer(st, 0.5)

    def test_two_queries_without_answer(self):
        st = make_strategy("single", 3, n=10)
        next_query(st)
        with pytest.raises(ProtocolError):
            next_query(st)

    @pytest.mark.parametrize("kwargs", [
        {"name": "random", "k": 3, "n": 10},
        {"name": "single", "k": 0, "n": 10},
        {"name": "single", "k": 3},
        {"name": "single", "k": 3, "clamp_eps": 0.5},
        {"name": "single", "k": 3, "n": 10, "variant": "other"},
    ])
    def test_invalid_strategies(self, kwargs):
        with pytest.raises(ConfigError):
            make_strategy(**kwargs)

    def test_log_odds_clamps(self):
        assert log_odds(1.0, 0.01) == pytest.approx(math.log(99.0))


class TestOverfitting:

    def test_empirical_answers_overfit(self):
        cfg = ExperimentConfig(mechanism="empirical", n=100, k=2000, runs=20, seed=3)
        transcripts = run_experiment(cfg)
        final = np.array([t.entries[-1].answer.point for t in transcripts])
        errors = np.array([t.entries[-1].abs_error for t in transcripts])
        assert all(isinstance(t.entries[-1].query, SignAgreement) for t in transcripts)
        assert final.mean() > 0.9, f"adaptive empirical answer: expected > 0.9, got {final.mean():.3f}"
        assert errors.mean() >= 0.35

    def test_literal_mode_does_not_overfit(self):
        D = ProductDistribution.uniform(1001)
        deviations = []
        for seed in range(20):
            X = sample_dataset(D, 100, seed=seed)
            st = make_strategy("single", 1000, n=100, agreement_mode=False)
            queries = _play(st, lambda q: eval_query(q, X))
            deviations.append(abs(eval_query(queries[-1], X) - 0.5))
        assert np.mean(deviations) < 0.15
