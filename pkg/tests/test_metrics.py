"""Metric definitions against hand arithmetic and all-pairs oracles."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from xsell.errors import DataError
from xsell.metrics import confusion, f_beta, midranks, precision, recall, roc_auc


def test_confusion_all_correct_positives():
    labels = [True, True, False]
    preds = [True, True, False]
    assert confusion(labels, preds) == (2, 0, 1, 0)


def test_confusion_all_negative_predictions():
    labels = [True] * 3 + [False] * 7
    preds = [False] * 10
    assert confusion(labels, preds) == (0, 0, 7, 3)


def test_confusion_matches_row_enumeration_oracle():
    rng = np.random.default_rng(7)
    labels = rng.random(200) < 0.3
    preds = rng.random(200) < 0.5
    tp = fp = tn = fn = 0
    for y, p in zip(labels, preds):
        if y and p:
            tp += 1
        elif not y and p:
            fp += 1
        elif not y and not p:
            tn += 1
        else:
            fn += 1
    assert confusion(labels, preds) == (tp, fp, tn, fn)


def test_confusion_length_mismatch():
    with pytest.raises(DataError):
        confusion([True], [True, False])


def test_precision_recall_degenerate_zero_over_zero():
    p = precision(0, 0)
    assert p.value == 0.0 and p.degenerate
    r = recall(0, 0)
    assert r.value == 0.0 and r.degenerate


def test_precision_half():
    assert precision(5, 5) == (0.5, False)


def test_precision_flagged_regime():
    # all 1508 actual buyers recovered among 45,000 flagged customers
    p = precision(1508, 45_000 - 1508)
    assert p.value == pytest.approx(0.0335, abs=5e-4)
    assert recall(1508, 0).value == 1.0


def test_f2_reference_rows():
    # published-results arithmetic: recall weighted four times precision
    assert f_beta(0.032, 0.972, 2.0) == pytest.approx(0.141, abs=5e-4)
    assert f_beta(0.038, 0.963, 2.0) == pytest.approx(0.164, abs=5e-4)
    assert f_beta(0.106, 0.833, 2.0) == pytest.approx(0.351, abs=5e-4)


def test_f_beta_zero_when_both_zero():
    assert f_beta(0.0, 0.0, 2.0) == 0.0


@given(x=hs.floats(0.0, 1.0), beta=hs.floats(0.1, 10.0))
@settings(max_examples=100, deadline=None)
def test_f_beta_identity_when_precision_equals_recall(x, beta):
    if x == 0.0:
        assert f_beta(x, x, beta) == 0.0
    else:
        assert f_beta(x, x, beta) == pytest.approx(x, rel=1e-12)


@given(p=hs.floats(0.0, 1.0), r=hs.floats(0.0, 1.0), beta=hs.floats(0.1, 10.0))
@settings(max_examples=200, deadline=None)
def test_f_beta_bounded_by_max(p, r, beta):
    value = f_beta(p, r, beta)
    assert 0.0 <= value <= max(p, r) + 1e-12


def _all_pairs_auc(labels, scores):
    pos = [s for y, s in zip(labels, scores) if y]
    neg = [s for y, s in zip(labels, scores) if not y]
    wins = sum(1 for a in pos for b in neg if a > b)
    ties = sum(1 for a in pos for b in neg if a == b)
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def test_auc_perfect_separation():
    labels = [False] * 5 + [True] * 5
    scores = list(range(10))
    assert roc_auc(labels, scores) == 1.0


def test_auc_constant_scores_is_half():
    labels = [True, False, True, False]
    assert roc_auc(labels, [3.0] * 4) == 0.5


def test_auc_matches_all_pairs_counting_with_ties():
    rng = np.random.default_rng(11)
    labels = rng.random(50) < 0.4
    labels[0] = True
    labels[1] = False
    scores = rng.integers(0, 8, 50).astype(float)  # heavy ties
    assert roc_auc(labels, scores) == _all_pairs_auc(labels, scores)


def test_auc_single_class_rejected():
    with pytest.raises(DataError):
        roc_auc([True, True], [0.1, 0.2])


@given(hs.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_auc_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 80))
    labels = rng.random(n) < 0.5
    if labels.all() or not labels.any():
        labels[0] = True
        labels[1] = False
    scores = rng.normal(size=n)
    transformed = np.exp(scores) + 3.0 * scores
    assert roc_auc(labels, scores) == pytest.approx(roc_auc(labels, transformed), abs=1e-12)


def test_midranks_tie_groups():
    assert midranks([10.0, 20.0, 20.0, 30.0]).tolist() == [1.0, 2.5, 2.5, 4.0]
    assert midranks([5.0, 5.0, 5.0]).tolist() == [2.0, 2.0, 2.0]
