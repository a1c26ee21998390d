"""Stratified k-fold cross-validation harness.

Folds are assigned round-robin over seed-shuffled rows ordered positives
first, which bounds both the per-fold size spread and the per-fold positive
count spread at one. Each fold's model handle is retained so attribution can
run per test fold afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensembles import EnsembleModel, _derived_seed, make_params, predict_proba_many
from .ensembles import BALANCED_RF, RUSBOOST, fit_balanced_rf, fit_rusboost
from .errors import ConfigError, DataError
from .metrics import confusion, f_beta, precision, recall, roc_auc


@dataclass
class FoldAssignment:
    fold_of_row: np.ndarray
    k: int
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.nonzero(self.fold_of_row == fold)[0]

    def train_indices(self, fold: int) -> np.ndarray:
        return np.nonzero(self.fold_of_row != fold)[0]


def stratified_kfold(labels, k: int, seed: int = 0) -> FoldAssignment:
    """Fold ids per row with per-class counts balanced to within one."""
    if k < 2:
        raise ConfigError(f"cross-validation needs k >= 2, got k={k}")
    y = np.asarray(labels, dtype=bool)
    n_pos = int(np.sum(y))
    n_neg = y.shape[0] - n_pos
    if n_pos < k or n_neg < k:
        raise DataError(
            f"every class needs at least k={k} members, got {n_pos} positives / {n_neg} negatives"
        )
    rng = np.random.default_rng(seed)
    pos = np.nonzero(y)[0]
    neg = np.nonzero(~y)[0]
    rng.shuffle(pos)
    rng.shuffle(neg)
    ordered = np.concatenate([pos, neg])
    fold_of_row = np.empty(y.shape[0], dtype=np.int64)
    fold_of_row[ordered] = np.arange(y.shape[0]) % k
    return FoldAssignment(fold_of_row=fold_of_row, k=k, seed=seed)


@dataclass
class MetricsReport:
    """Per-fold and mean-over-folds metrics for one (case, model) pair."""

    per_fold: list[dict]
    mean: dict
    model_kind: str
    seed: int
    case: dict | None = None

    def to_json_dict(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "seed": self.seed,
            "case": self.case,
            "mean": self.mean,
            "per_fold": self.per_fold,
        }


@dataclass
class CVResult:
    report: MetricsReport
    oof_scores: np.ndarray
    folds: FoldAssignment
    fold_models: list[EnsembleModel] = field(default_factory=list)


_METRIC_KEYS = ("auc", "precision", "recall", "f2", "tp", "fp", "tn", "fn")


def _fold_metrics(fold: int, labels: np.ndarray, scores: np.ndarray, threshold: float) -> dict:
    predictions = scores >= threshold
    tp, fp, tn, fn = confusion(labels, predictions)
    p = precision(tp, fp)
    r = recall(tp, fn)
    return {
        "fold": fold,
        "auc": roc_auc(labels, scores),
        "precision": p.value,
        "precision_degenerate": p.degenerate,
        "recall": r.value,
        "recall_degenerate": r.degenerate,
        "f2": f_beta(p.value, r.value, 2.0),
        "tp": tp,
        "fp": fp,
        "tn": tn,
        "fn": fn,
    }


def _fit_model(kind: str, X, y, params, seed: int, feature_names) -> EnsembleModel:
    if kind == BALANCED_RF:
        return fit_balanced_rf(X, y, params, seed=seed, feature_names=feature_names)
    if kind == RUSBOOST:
        return fit_rusboost(X, y, params, seed=seed, feature_names=feature_names)
    raise ConfigError(f"unknown model kind: {kind!r}")


def cross_validate(
    rows,
    labels,
    kind: str,
    params=None,
    k: int = 10,
    seed: int = 0,
    threshold: float = 0.5,
    feature_names: list[str] | None = None,
    case: dict | None = None,
    keep_models: bool = True,
) -> CVResult:
    """Train on k-1 folds, score the held-out fold, keep out-of-fold scores.

    Confusion-based metrics use the given score threshold; AUC is
    threshold-free. Trained per-fold models are retained as handles for
    attribution unless keep_models is False.
    """
    X = np.ascontiguousarray(rows, dtype=float)
    y = np.asarray(labels, dtype=bool)
    if isinstance(params, dict) or params is None:
        params = make_params(kind, params)
    folds = stratified_kfold(y, k, seed=seed)
    oof = np.full(y.shape[0], np.nan)
    per_fold: list[dict] = []
    models: list[EnsembleModel] = []
    for fold in range(k):
        train_idx = folds.train_indices(fold)
        test_idx = folds.test_indices(fold)
        try:
            model = _fit_model(kind, X[train_idx], y[train_idx], params, _derived_seed(seed, fold), feature_names)
        except Exception as exc:
            raise type(exc)(f"fold {fold}: {exc}") from exc
        scores = predict_proba_many(model, X[test_idx])
        oof[test_idx] = scores
        per_fold.append(_fold_metrics(fold, y[test_idx], scores, threshold))
        if keep_models:
            models.append(model)
    mean = {key: float(np.mean([m[key] for m in per_fold])) for key in _METRIC_KEYS}
    report = MetricsReport(per_fold=per_fold, mean=mean, model_kind=kind, seed=seed, case=case)
    return CVResult(report=report, oof_scores=oof, folds=folds, fold_models=models)
