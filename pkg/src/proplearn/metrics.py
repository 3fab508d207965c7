"""Evaluation metrics for the three tasks.

Classification: accuracy, per-class-recall mean (balanced accuracy),
positive-class F1, and a Mann-Whitney ROC AUC with tie-averaged ranks.
Ranking: optimistic rank of the single held-out target, Hit@K, and the
single-target average precision (1 / rank when ranked inside the cut).
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, MetricUndefinedError

PRIMARY_METRIC = {"graph": "acc", "node": "bacc", "link": "map@100"}


def _paired(y_true, y_pred) -> tuple:
    y_true = np.asarray(y_true).reshape(-1)
    y_pred = np.asarray(y_pred).reshape(-1)
    if y_true.size == 0 or y_true.shape != y_pred.shape:
        raise DataError("metrics need non-empty, equal-length label vectors")
    return y_true, y_pred


def accuracy(y_true, y_pred) -> float:
    y_true, y_pred = _paired(y_true, y_pred)
    return float((y_true == y_pred).mean())


def balanced_accuracy(y_true, y_pred) -> float:
    """Mean recall over the classes present in the reference labels."""
    y_true, y_pred = _paired(y_true, y_pred)
    recalls = [float((y_pred[y_true == c] == c).mean()) for c in np.unique(y_true)]
    return float(np.mean(recalls))


def f1(y_true, y_pred, positive: int = 1) -> float:
    """Positive-class F1; 0 when the class is absent on both sides."""
    y_true, y_pred = _paired(y_true, y_pred)
    tp = float(((y_true == positive) & (y_pred == positive)).sum())
    fp = float(((y_true != positive) & (y_pred == positive)).sum())
    fn = float(((y_true == positive) & (y_pred != positive)).sum())
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their group's mean rank."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.shape[0], dtype=np.float64)
    i = 0
    while i < scores.shape[0]:
        j = i
        while j + 1 < scores.shape[0] and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_auc(y_true, scores) -> float:
    """Probability a positive outscores a negative, ties counting half."""
    y_true = np.asarray(y_true).reshape(-1)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if y_true.size == 0 or y_true.shape != scores.shape:
        raise DataError("roc_auc needs matching labels and scores")
    positives = y_true == 1
    n_pos = int(positives.sum())
    n_neg = y_true.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("roc_auc needs both classes present")
    ranks = _average_ranks(scores)
    return float((ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def rank_of_target(scores, target: int) -> int:
    """Optimistic 1-based rank: 1 + the number of strictly larger scores."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if not 0 <= target < scores.shape[0]:
        raise DataError("target index out of range")
    return int(1 + (scores > scores[target]).sum())


def hit_at_k(scores, target: int, k: int) -> float:
    if k < 1:
        raise DataError("k must be positive")
    return 1.0 if rank_of_target(scores, target) <= k else 0.0


def map_at_k(scores, target: int, k: int) -> float:
    """Average precision with a single relevant item: 1 / rank inside
    the top k, otherwise 0."""
    if k < 1:
        raise DataError("k must be positive")
    rank = rank_of_target(scores, target)
    return 1.0 / rank if rank <= k else 0.0


def evaluate_classification(y_true, y_pred, positive_scores=None) -> dict:
    """acc, bacc, f1, and (when scores are given and both classes occur)
    auc. A single-class reference set silently omits auc; callers that
    need a hard failure should call roc_auc directly."""
    out = {
        "acc": accuracy(y_true, y_pred),
        "bacc": balanced_accuracy(y_true, y_pred),
        "f1": f1(y_true, y_pred),
    }
    if positive_scores is not None:
        try:
            out["auc"] = roc_auc(y_true, positive_scores)
        except MetricUndefinedError:
            pass
    return out


def evaluate_ranking(queries, ks=(10, 100)) -> dict:
    """Mean Hit@K and MAP@K over (scores, target) queries."""
    queries = list(queries)
    if not queries:
        raise DataError("ranking evaluation needs at least one query")
    out = {}
    for k in ks:
        out[f"hit@{k}"] = float(np.mean([hit_at_k(s, t, k) for s, t in queries]))
        out[f"map@{k}"] = float(np.mean([map_at_k(s, t, k) for s, t in queries]))
    return out
