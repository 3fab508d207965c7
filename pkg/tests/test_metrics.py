"""Metric tests against hand cases and brute-force recomputations."""

import numpy as np
import pytest

from proplearn.errors import DataError, MetricUndefinedError
from proplearn.metrics import (
    accuracy,
    balanced_accuracy,
    evaluate_classification,
    evaluate_ranking,
    f1,
    hit_at_k,
    map_at_k,
    rank_of_target,
    roc_auc,
)


def _brute_auc(y_true, scores):
    wins, pairs = 0.0, 0
    for i in np.flatnonzero(y_true == 1):
        for j in np.flatnonzero(y_true != 1):
            pairs += 1
            if scores[i] > scores[j]:
                wins += 1.0
            elif scores[i] == scores[j]:
                wins += 0.5
    return wins / pairs


class TestHandCases:
    def test_auc_hand_case(self):
        """Scores (0.9, 0.8, 0.3, 0.1) with labels (1, 0, 1, 0): 3 of the
        4 positive-negative pairs are ordered correctly, so AUC = 0.75."""
        auc = roc_auc(np.array([1, 0, 1, 0]), np.array([0.9, 0.8, 0.3, 0.1]))
        assert auc == pytest.approx(0.75, abs=1e-12)

    def test_map_at_10_rank_three(self):
        """Target sits at rank 3, so MAP@10 = 1/3."""
        scores = np.array([0.9, 0.8, 0.5, 0.2])
        assert map_at_k(scores, 2, 10) == pytest.approx(1 / 3, abs=1e-12)

    def test_perfect_and_worst_auc(self):
        y = np.array([1, 1, 0, 0])
        assert roc_auc(y, np.array([4.0, 3.0, 2.0, 1.0])) == 1.0
        assert roc_auc(y, np.array([1.0, 2.0, 3.0, 4.0])) == 0.0

    def test_all_tied_scores_give_half(self):
        assert roc_auc(np.array([1, 0, 1, 0]), np.zeros(4)) == pytest.approx(0.5)

    def test_accuracy_and_f1(self):
        y_true = np.array([1, 1, 0, 0, 1])
        y_pred = np.array([1, 0, 0, 1, 1])
        assert accuracy(y_true, y_pred) == pytest.approx(0.6)
        # tp = 2, fp = 1, fn = 1 -> F1 = 4 / 6
        assert f1(y_true, y_pred) == pytest.approx(2 / 3, abs=1e-12)

    def test_balanced_accuracy_weights_classes_equally(self):
        """9 of 10 negatives right, 0 of 2 positives: bacc = 0.45."""
        y_true = np.array([0] * 10 + [1] * 2)
        y_pred = np.array([0] * 9 + [1] + [0] * 2)
        assert balanced_accuracy(y_true, y_pred) == pytest.approx(0.45, abs=1e-12)

    def test_rank_is_optimistic_under_ties(self):
        """Ties do not push the target down: rank counts only strictly
        larger scores."""
        scores = np.array([0.5, 0.5, 0.5, 0.9])
        assert rank_of_target(scores, 0) == 2
        assert rank_of_target(scores, 3) == 1

    def test_hit_at_k_boundary(self):
        scores = np.array([0.9, 0.8, 0.7])
        assert hit_at_k(scores, 2, 3) == 1.0
        assert hit_at_k(scores, 2, 2) == 0.0


class TestBruteForceOracles:
    @pytest.mark.parametrize("seed", range(100))
    def test_auc_matches_pair_counting(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 25))
        y = rng.integers(0, 2, size=n)
        if len(np.unique(y)) < 2:
            y[0], y[1] = 0, 1
        # coarse grid forces plenty of ties
        scores = rng.integers(0, 5, size=n).astype(float)
        np.testing.assert_allclose(roc_auc(y, scores), _brute_auc(y, scores),
                                   atol=1e-12)

    @pytest.mark.parametrize("seed", range(30))
    def test_balanced_accuracy_matches_loops(self, seed):
        rng = np.random.default_rng(200 + seed)
        n = int(rng.integers(5, 30))
        n_classes = int(rng.integers(2, 5))
        y_true = rng.integers(0, n_classes, size=n)
        y_pred = rng.integers(0, n_classes, size=n)
        expected = np.mean([
            np.mean([p == c for t, p in zip(y_true, y_pred) if t == c])
            for c in sorted(set(y_true.tolist()))
        ])
        np.testing.assert_allclose(balanced_accuracy(y_true, y_pred), expected,
                                   atol=1e-12)

    @pytest.mark.parametrize("seed", range(30))
    def test_ranking_matches_sorting(self, seed):
        rng = np.random.default_rng(400 + seed)
        n = int(rng.integers(3, 40))
        scores = rng.integers(0, 6, size=n).astype(float)
        target = int(rng.integers(0, n))
        expected_rank = 1 + int((scores > scores[target]).sum())
        assert rank_of_target(scores, target) == expected_rank
        for k in (1, 3, 10):
            assert hit_at_k(scores, target, k) == (1.0 if expected_rank <= k else 0.0)
            expected_map = 1.0 / expected_rank if expected_rank <= k else 0.0
            np.testing.assert_allclose(map_at_k(scores, target, k), expected_map,
                                       atol=1e-12)


class TestEdgeCases:
    def test_single_class_auc_is_undefined(self):
        with pytest.raises(MetricUndefinedError):
            roc_auc(np.ones(4), np.arange(4.0))
        with pytest.raises(MetricUndefinedError):
            roc_auc(np.zeros(4), np.arange(4.0))

    def test_empty_inputs_rejected(self):
        with pytest.raises(DataError):
            accuracy([], [])
        with pytest.raises(DataError):
            roc_auc([], [])

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            accuracy([1, 0], [1])

    def test_f1_degenerate_cases(self):
        assert f1(np.zeros(3), np.zeros(3)) == 0.0
        assert f1(np.ones(3), np.ones(3)) == 1.0

    def test_target_out_of_range(self):
        with pytest.raises(DataError):
            rank_of_target(np.array([1.0]), 5)

    def test_bad_k(self):
        with pytest.raises(DataError):
            hit_at_k(np.array([1.0, 2.0]), 0, 0)


class TestSuites:
    def test_classification_suite_keys(self):
        y_true = np.array([1, 0, 1, 0])
        y_pred = np.array([1, 0, 0, 0])
        scores = np.array([0.9, 0.2, 0.4, 0.1])
        out = evaluate_classification(y_true, y_pred, scores)
        assert set(out) == {"acc", "bacc", "f1", "auc"}
        assert out["acc"] == pytest.approx(0.75)

    def test_classification_suite_omits_undefined_auc(self):
        out = evaluate_classification(np.ones(3), np.ones(3), np.arange(3.0))
        assert "auc" not in out

    def test_ranking_suite_averages_queries(self):
        queries = [
            (np.array([0.9, 0.1, 0.5]), 0),  # rank 1
            (np.array([0.9, 0.1, 0.5]), 1),  # rank 3
        ]
        out = evaluate_ranking(queries, ks=(2, 10))
        assert out["hit@2"] == pytest.approx(0.5)
        assert out["map@10"] == pytest.approx((1.0 + 1 / 3) / 2)

    def test_ranking_suite_needs_queries(self):
        with pytest.raises(DataError):
            evaluate_ranking([])
