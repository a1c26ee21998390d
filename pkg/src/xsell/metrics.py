"""Binary classification metrics for imbalanced problems.

Precision, recall, the recall-weighted F_beta score, and a rank-based
(Mann-Whitney) ROC AUC with midrank tie handling. AUC computed this way is
identical to the trapezoidal area under the ROC curve but exact under ties.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DataError


class Rate(NamedTuple):
    """A ratio metric plus a flag marking a 0/0 denominator.

    The degenerate case is defined as 0 rather than NaN so reports stay
    arithmetic-friendly, but the flag keeps it visible.
    """

    value: float
    degenerate: bool = False


def confusion(labels, predictions) -> tuple[int, int, int, int]:
    """Count (tp, fp, tn, fn) for boolean labels and predictions."""
    y = np.asarray(labels, dtype=bool)
    p = np.asarray(predictions, dtype=bool)
    if y.shape != p.shape:
        raise DataError(f"labels and predictions differ in length: {y.shape} vs {p.shape}")
    tp = int(np.sum(y & p))
    fp = int(np.sum(~y & p))
    tn = int(np.sum(~y & ~p))
    fn = int(np.sum(y & ~p))
    return tp, fp, tn, fn


def precision(tp: int, fp: int) -> Rate:
    """tp / (tp + fp); 0 with the degenerate flag when nothing was flagged."""
    if tp < 0 or fp < 0:
        raise DataError("confusion counts must be non-negative")
    if tp + fp == 0:
        return Rate(0.0, degenerate=True)
    return Rate(tp / (tp + fp))


def recall(tp: int, fn: int) -> Rate:
    """tp / (tp + fn); 0 with the degenerate flag when no positives exist."""
    if tp < 0 or fn < 0:
        raise DataError("confusion counts must be non-negative")
    if tp + fn == 0:
        return Rate(0.0, degenerate=True)
    return Rate(tp / (tp + fn))


def f_beta(precision_value: float, recall_value: float, beta: float = 2.0) -> float:
    """(1 + beta^2) P R / (beta^2 P + R), 0 when both P and R are 0.

    beta = 2 weighs recall four times higher than precision.
    """
    if not 0.0 <= precision_value <= 1.0 or not 0.0 <= recall_value <= 1.0:
        raise DataError("precision and recall must lie in [0, 1]")
    if beta <= 0.0:
        raise DataError(f"beta must be positive, got {beta}")
    if precision_value * recall_value == 0.0:
        # either input zero scores zero; also dodges denormal underflow in
        # the denominator when the other input is subnormal
        return 0.0
    b2 = beta * beta
    return (1.0 + b2) * precision_value * recall_value / (b2 * precision_value + recall_value)


def midranks(values) -> np.ndarray:
    """1-based ranks with ties replaced by the mean rank of the tied group."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(v.shape[0], dtype=float)
    i = 0
    while i < v.shape[0]:
        j = i
        while j + 1 < v.shape[0] and v[order[j + 1]] == v[order[i]]:
            j += 1
        # positions i..j (0-based) share the average of ranks i+1..j+1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(labels, scores) -> float:
    """AUC as the Mann-Whitney statistic: P(score+ > score-) with ties at 0.5.

    Computed from the rank sum of the positives with midranks, so results are
    exact under ties and equal to all-pairs counting.
    """
    y = np.asarray(labels, dtype=bool)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise DataError(f"labels and scores differ in length: {y.shape} vs {s.shape}")
    n_pos = int(np.sum(y))
    n_neg = y.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC requires both classes to be present")
    ranks = midranks(s)
    rank_sum_pos = float(np.sum(ranks[y]))
    # rank sums are half-integers, so the numerator below is exact in floats
    wins_plus_half_ties = rank_sum_pos - 0.5 * n_pos * (n_pos + 1)
    return wins_plus_half_ties / (n_pos * n_neg)
