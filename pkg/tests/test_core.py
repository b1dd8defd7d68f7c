import itertools

import numpy as np
import pytest

from core import (
    ConfigError,
    Constant,
    Correlation,
    IntervalAnswer,
    InvalidQueryError,
    ModeUnsupportedError,
    ProtocolError,
    ProductDistribution,
    SampleMatrix,
    SignAgreement,
    Transcript,
    _exact_sign_agreement,
    eval_query,
    make_rng,
    sample_dataset,
    true_value,
)


class TestSampleMatrix:

    def test_rejects_non_sign_cells(self):
        with pytest.raises(ConfigError):
            SampleMatrix(np.array([[1, 0], [1, -1]]))

    def test_rejects_single_column(self):
        with pytest.raises(ConfigError):
            SampleMatrix(np.ones((3, 1)))

    def test_read_only_and_shape(self, tiny_matrix):
        assert tiny_matrix.n == 4
        assert tiny_matrix.d == 3
        assert not tiny_matrix.cells.flags.writeable
        with pytest.raises(ValueError):
            tiny_matrix.cells[0, 0] = -1

    def test_take_rows(self, tiny_matrix):
        sub = tiny_matrix.take_rows(slice(0, 2))
        assert sub.n == 2
        np.testing.assert_array_equal(sub.column(3), [1, -1])


class TestEvalQuery:

    @pytest.mark.parametrize("query,expected", [
        (Correlation(1), 0.25),
        (Correlation(2), 0.75),
        (Constant(0.3), 0.3),
        (SignAgreement((1, 2), (1.0, 1.0)), 0.5),
        (SignAgreement((1, 2), (1.0, 1.0), include_target=False), 0.75),
        (SignAgreement(), 0.75),
    ])
    def test_values_on_tiny_matrix(self, tiny_matrix, query, expected):
        assert eval_query(query, tiny_matrix) == pytest.approx(expected)

    def test_zero_score_counts_as_positive(self, tiny_matrix):
        # rows 2 and 3 score exactly 0 and predict +1
        q = SignAgreement((1, 2), (1.0, 1.0), include_target=False)
        assert eval_query(q, tiny_matrix) == pytest.approx(0.75)

    @pytest.mark.parametrize("query", [Correlation(0), Correlation(3), SignAgreement((3,), (1.0,))])
    def test_target_column_is_not_a_feature(self, tiny_matrix, query):
        with pytest.raises(InvalidQueryError):
            eval_query(query, tiny_matrix)

    def test_constant_outside_unit_interval(self):
        with pytest.raises(InvalidQueryError):
            Constant(1.5)

    def test_from_map_sorts_indices(self):
        q = SignAgreement.from_map({3: 0.5, 1: -2.0})
        assert q.indices == (1, 3)
        assert q.weight_map == {1: -2.0, 3: 0.5}

    @pytest.mark.parametrize("seed", range(20))
    def test_value_stays_in_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(1, 30)), int(rng.integers(2, 9))
        X = SampleMatrix(rng.choice(np.array([-1, 1], dtype=np.int8), size=(n, d)))
        for _ in range(10):
            m = int(rng.integers(0, d))
            indices = tuple(int(j) for j in np.sort(rng.choice(np.arange(1, d), size=m, replace=False)))
            queries = [
                Correlation(int(rng.integers(1, d))),
                Constant(float(rng.random())),
                SignAgreement(indices, tuple(float(w) for w in rng.normal(size=m)), bool(rng.integers(2))),
            ]
            for q in queries:
                value = eval_query(q, X)
                assert 0.0 <= value <= 1.0, f"{q} on {n}x{d}: expected a value in [0, 1], got {value}"


class TestTrueValue:

    def test_correlation_closed_form(self):
        D = ProductDistribution([0.9, 0.5, 1.0])
        assert true_value(Correlation(1), D)[0] == pytest.approx(0.9)
        assert true_value(Correlation(2), D)[0] == pytest.approx(0.5)

    def test_single_feature_sign_query_matches_correlation(self):
        D = ProductDistribution([0.7, 0.8])
        value, std_err = true_value(SignAgreement((1,), (1.0,)), D, mode="exact")
        assert value == pytest.approx(0.7 * 0.8 + 0.3 * 0.2)
        assert std_err == 0.0

    def test_uniform_target_gives_one_half(self):
        D = ProductDistribution.uniform(40)
        q = SignAgreement(tuple(range(1, 40)), tuple(float(i) for i in range(1, 40)))
        assert true_value(q, D) == (0.5, 0.0)

    def test_exact_mode_refuses_large_support(self):
        D = ProductDistribution(np.full(23, 0.6))
        q = SignAgreement(tuple(range(1, 22)), (1.0,) * 21)
        with pytest.raises(ModeUnsupportedError):
            true_value(q, D, mode="exact")

    def test_sampled_agrees_with_exact(self):
        D = ProductDistribution([0.7, 0.6, 0.8, 0.9])
        q = SignAgreement((1, 2, 3), (1.0, 0.5, 0.25))
        exact, _ = true_value(q, D, mode="exact")
        sampled, std_err = true_value(q, D, mode="sampled", samples=200000, seed=3)
        assert abs(sampled - exact) < 5 * std_err + 1e-3, (
            f"Monte Carlo {sampled:.5f} +/- {std_err:.5f} vs exact {exact:.5f}")

    def test_zero_weights_are_ignored(self):
        D = ProductDistribution(np.full(30, 0.6))
        support = (1, 2)
        q = SignAgreement(tuple(range(1, 26)), tuple(1.0 if i in support else 0.0 for i in range(1, 26)))
        reduced = SignAgreement(support, (1.0, 1.0))
        assert true_value(q, D, mode="exact")[0] == pytest.approx(true_value(reduced, D, mode="exact")[0])

    @pytest.mark.parametrize("include_target,expected", [(True, 0.3), (False, 1.0)])
    def test_empty_sign_query(self, include_target, expected):
        D = ProductDistribution([0.7, 0.3])
        q = SignAgreement(include_target=include_target)
        assert true_value(q, D, mode="exact")[0] == pytest.approx(expected)
        sampled, std_err = true_value(q, D, mode="sampled", samples=100000, seed=4)
        assert abs(sampled - expected) <= 5 * std_err + 1e-12, f"expected {expected}, got {sampled:.5f}"


def _brute_force_agreement(q, p_target=0.5):
    """Enumerate the 16 patterns of three uniform features and the target."""
    total = 0.0
    for *x, y in itertools.product([-1, 1], repeat=4):
        pred = 1 if np.dot(q.weights, x) >= 0.0 else -1
        prob = 0.125 * (p_target if y == 1 else 1.0 - p_target)
        total += prob * (pred == y if q.include_target else pred == 1)
    return total


class TestUniformSignAgreement:

    QUERIES = [
        SignAgreement((1, 2, 3), (1.0, 1.0, 1.0)),
        SignAgreement((1, 2, 3), (1.0, -2.0, 0.5), include_target=False),
        SignAgreement((1, 2, 3), (1.0, 1.0, -2.0), include_target=False),
        SignAgreement((1, 2, 3), (0.5, 0.5, 1.0), include_target=False),
    ]

    @pytest.mark.parametrize("q", QUERIES)
    def test_exact_matches_enumeration(self, q):
        D = ProductDistribution.uniform(4)
        assert _exact_sign_agreement(q, D.biases) == pytest.approx(_brute_force_agreement(q), abs=1e-12)
        assert true_value(q, D, mode="exact")[0] == pytest.approx(_brute_force_agreement(q), abs=1e-12)

    def test_exact_with_skewed_target(self):
        # the uniform-target shortcut does not apply here
        D = ProductDistribution([0.5, 0.5, 0.5, 0.8])
        q = SignAgreement((1, 2, 3), (1.0, -2.0, 0.5))
        assert true_value(q, D, mode="exact")[0] == pytest.approx(_brute_force_agreement(q, 0.8), abs=1e-12)

    @pytest.mark.parametrize("q", QUERIES)
    def test_sampled_within_five_standard_errors(self, q):
        expected = _brute_force_agreement(q)
        sampled, std_err = true_value(q, ProductDistribution.uniform(4), mode="sampled", samples=100000, seed=6)
        assert std_err > 0
        assert abs(sampled - expected) <= 5 * std_err, (
            f"Monte Carlo {sampled:.5f} +/- {std_err:.5f} vs enumerated {expected:.5f}")


class TestSampleDataset:

    def test_deterministic_in_seed(self):
        D = ProductDistribution.uniform(6)
        a = sample_dataset(D, 500, seed=11)
        b = sample_dataset(D, 500, seed=11)
        c = sample_dataset(D, 500, seed=12)
        np.testing.assert_array_equal(a.cells, b.cells)
        assert not np.array_equal(a.cells, c.cells)

    def test_column_biases(self):
        D = ProductDistribution([0.9, 0.2, 0.5])
        X = sample_dataset(D, 100000, seed=make_rng(5))
        means = X.cells.mean(axis=0)
        np.testing.assert_allclose(means, 2 * D.biases - 1, atol=0.02)


class TestAnswersAndTranscripts:

    def test_interval_needs_positive_width(self):
        with pytest.raises(ConfigError, match="positive width"):
            IntervalAnswer(0.5, 0.0)
        assert IntervalAnswer(None, 0.1).is_bottom

    def test_covers_is_strict(self):
        answer = IntervalAnswer(0.5, 0.25)
        assert answer.covers(0.7)
        assert not answer.covers(0.75)
        assert not answer.covers(0.25)

    def test_record_and_running_max(self):
        t = Transcript(run_index=3)
        t.record(Correlation(1), IntervalAnswer(0.6, 0.2), 0.5)
        t.record(Correlation(2), IntervalAnswer(0.45, 0.2, failed=True), 0.5)
        t.record(Correlation(3), IntervalAnswer(0.9, 0.2), 0.5)
        np.testing.assert_allclose(t.running_max_error(), [0.1, 0.1, 0.4])
        assert t.failures == 1
        assert t.has_miss()
        assert t.max_abs_error() == pytest.approx(0.4)

    def test_bottom_answer_is_terminal(self):
        t = Transcript()
        t.record(Correlation(1), IntervalAnswer(0.4, 0.1), 0.5)
        t.record(Correlation(2), IntervalAnswer(None, 0.1, failed=True), 0.5)
        assert t.terminal
        assert t.answered == len(t.entries) == 1
        assert t.bottom.abs_error is None and t.bottom.query == Correlation(2)
        assert [e.query for e in t.rows()] == [Correlation(1), Correlation(2)]
        assert t.failures == 0
        assert not t.has_miss()

    def test_nothing_recorded_after_bottom(self):
        t = Transcript(run_index=2)
        t.record(Correlation(1), IntervalAnswer(None, 0.1, failed=True), 0.5)
        with pytest.raises(ProtocolError, match="run 2"):
            t.record(Correlation(2), IntervalAnswer(0.5, 0.1), 0.5)
        assert t.entries == [] and t.max_abs_error() == 0.0
        assert not t.has_miss()
