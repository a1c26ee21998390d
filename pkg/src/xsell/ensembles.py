"""Imbalance-aware tree ensembles: balanced random forest and random
under-sampling boosting, plus the shared majority undersampler and a
randomized hyperparameter search.

Both ensembles equalize class counts per fitted tree by randomly
undersampling the majority (negative) class. All randomness flows from
explicit integer seeds, so a fitted model is a pure function of
(data, params, seed) regardless of parallelism.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .tree import Tree, TreeParams, _splitmix64, fit_tree

_FORMAT_VERSION = 1
_ALPHA_CAP_LOG = math.log(1e12)  # stage weight for a perfect round, kept finite
_MAX_ROUND_RETRIES = 10

BALANCED_RF = "balanced_rf"
RUSBOOST = "rusboost"


@dataclass(frozen=True)
class BalancedRFParams:
    n_estimators: int = 1600
    max_depth: Optional[int] = 50
    min_samples_split: int = 5
    min_samples_leaf: int = 2
    max_features: str | float = "sqrt"

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ConfigError(f"n_estimators must be >= 1, got {self.n_estimators}")


@dataclass(frozen=True)
class RUSBoostParams:
    n_estimators: int = 200
    learning_rate: float = 0.1
    replacement: bool = True
    base_max_depth: int = 1
    base_min_samples_split: int = 2
    base_min_samples_leaf: int = 1

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ConfigError(f"n_estimators must be >= 1, got {self.n_estimators}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")


@dataclass
class EnsembleModel:
    """A trained ensemble: trees plus per-tree weights and sampling metadata.

    tree_weights are uniform 1/n for the balanced forest and the boosting
    stage weights for the boosted model.
    """

    kind: str
    trees: list[Tree]
    tree_weights: np.ndarray
    params: BalancedRFParams | RUSBoostParams
    seed: int
    feature_names: list[str]

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def save(self, path) -> None:
        payload = {
            "format_version": _FORMAT_VERSION,
            "kind": self.kind,
            "params": asdict(self.params),
            "seed": self.seed,
            "feature_names": list(self.feature_names),
            "tree_weights": [float(w) for w in self.tree_weights],
            "trees": [t.to_json_dict() for t in self.trees],
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "EnsembleModel":
        payload = json.loads(Path(path).read_text())
        if payload.get("format_version") != _FORMAT_VERSION:
            raise DataError(f"unsupported model format version in {path}")
        kind = payload["kind"]
        params_cls = BalancedRFParams if kind == BALANCED_RF else RUSBoostParams
        return cls(
            kind=kind,
            trees=[Tree.from_json_dict(d) for d in payload["trees"]],
            tree_weights=np.asarray(payload["tree_weights"], dtype=float),
            params=params_cls(**payload["params"]),
            seed=int(payload["seed"]),
            feature_names=list(payload["feature_names"]),
        )


def _derived_seed(*parts: int) -> int:
    state = 0
    for p in parts:
        state, out = _splitmix64(state ^ (int(p) & 0xFFFFFFFFFFFFFFFF))
        state ^= out
    return state


def _class_indices(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(minority indices, majority indices); positives are the minority on ties."""
    y = np.asarray(labels, dtype=bool)
    pos = np.nonzero(y)[0]
    neg = np.nonzero(~y)[0]
    if pos.shape[0] == 0 or neg.shape[0] == 0:
        raise DataError("both classes must be present")
    if pos.shape[0] <= neg.shape[0]:
        return pos, neg
    return neg, pos


def undersample_majority(labels, weights=None, seed=0, replacement: bool = False) -> np.ndarray:
    """All minority indices plus majority indices drawn down to the same count.

    Majority draws are uniform unless ``weights`` gives a sampling
    distribution over rows (boosting). ``replacement`` selects the boosted
    variant; the forest draws without replacement.
    """
    minority, majority = _class_indices(labels)
    rng = np.random.default_rng(seed)
    if weights is None:
        p = None
    else:
        w = np.asarray(weights, dtype=float)[majority]
        total = w.sum()
        if total <= 0:
            raise DataError("majority sampling weights sum to zero")
        p = w / total
    drawn = rng.choice(majority, size=minority.shape[0], replace=replacement, p=p)
    return np.concatenate([minority, drawn])


def fit_balanced_rf(
    rows,
    labels,
    params: BalancedRFParams | None = None,
    seed: int = 0,
    feature_names: list[str] | None = None,
) -> EnsembleModel:
    """Forest of trees, each on a bootstrapped minority + undersampled majority."""
    params = params or BalancedRFParams()
    X = np.ascontiguousarray(rows, dtype=float)
    y = np.asarray(labels, dtype=bool)
    minority, majority = _class_indices(y)
    n_min = minority.shape[0]
    trees: list[Tree] = []
    for t in range(params.n_estimators):
        rng = np.random.default_rng([seed & 0xFFFFFFFF, t])
        boot_min = rng.choice(minority, size=n_min, replace=True)
        under_maj = rng.choice(majority, size=n_min, replace=False)
        train_idx = np.concatenate([boot_min, under_maj])
        tree_params = TreeParams(
            max_depth=params.max_depth,
            min_samples_split=params.min_samples_split,
            min_samples_leaf=params.min_samples_leaf,
            max_features=params.max_features,
            seed=_derived_seed(seed, t),
        )
        trees.append(fit_tree(X[train_idx], y[train_idx], np.ones(train_idx.shape[0]), tree_params))
    weights = np.full(len(trees), 1.0 / len(trees))
    names = list(feature_names) if feature_names is not None else _default_names(X.shape[1])
    return EnsembleModel(BALANCED_RF, trees, weights, params, seed, names)


def fit_rusboost(
    rows,
    labels,
    params: RUSBoostParams | None = None,
    seed: int = 0,
    feature_names: list[str] | None = None,
) -> EnsembleModel:
    """Boosting rounds over weight-distribution undersampled balanced sets.

    Each round draws the majority with replacement from the current sample
    weight distribution, fits a weighted base tree, and scores its weighted
    error on the full training set as the confidence-weighted absolute error
    sum(w * |leaf_fraction - y|). Hard-vote error would cross 0.5 within a
    few rounds here: a tree fit on a balanced sample flags roughly half the
    majority mass, so the soft degree-of-error is what keeps the round
    accept/reject contract workable at 100:1 imbalance. Rounds with error
    >= 0.5 are discarded and redrawn (up to 10 times); a zero-error round
    terminates boosting early with a finite capped stage weight.
    """
    params = params or RUSBoostParams()
    X = np.ascontiguousarray(rows, dtype=float)
    y = np.asarray(labels, dtype=bool)
    _class_indices(y)  # raises on single-class input
    n = X.shape[0]
    w = np.full(n, 1.0 / n)
    trees: list[Tree] = []
    alphas: list[float] = []
    for t in range(params.n_estimators):
        for retry in range(_MAX_ROUND_RETRIES):
            idx = undersample_majority(
                y, weights=w, seed=[seed & 0xFFFFFFFF, t, retry], replacement=params.replacement
            )
            sample_w = w[idx]
            tree_params = TreeParams(
                max_depth=params.base_max_depth,
                min_samples_split=params.base_min_samples_split,
                min_samples_leaf=params.base_min_samples_leaf,
                max_features="all",
                seed=_derived_seed(seed, t, retry),
            )
            tree = fit_tree(X[idx], y[idx], sample_w / sample_w.sum(), tree_params)
            degree_wrong = np.abs(tree.predict(X) - y.astype(float))
            error = float(np.sum(w * degree_wrong))
            if error < 0.5:
                break
        else:
            raise NumericError(
                f"boosting round {t}: weighted error stayed >= 0.5 after {_MAX_ROUND_RETRIES} resampling retries"
            )
        if error == 0.0:
            trees.append(tree)
            alphas.append(params.learning_rate * _ALPHA_CAP_LOG)
            break
        alpha = params.learning_rate * math.log((1.0 - error) / error)
        trees.append(tree)
        alphas.append(alpha)
        w = w * np.exp(alpha * degree_wrong)
        w = w / w.sum()
    names = list(feature_names) if feature_names is not None else _default_names(X.shape[1])
    return EnsembleModel(RUSBOOST, trees, np.asarray(alphas), params, seed, names)


def _default_names(n_features: int) -> list[str]:
    return [f"x{i}" for i in range(n_features)]


def predict_proba_many(model: EnsembleModel, rows) -> np.ndarray:
    """Score in [0, 1] per row: mean leaf fraction for the forest, the
    stage-weight-normalized hard vote for the boosted model."""
    X = np.ascontiguousarray(rows, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DataError(f"expected a (n, {model.n_features}) matrix, got shape {X.shape}")
    per_tree = np.stack([t.predict(X) for t in model.trees])
    if model.kind == BALANCED_RF:
        return per_tree.mean(axis=0)
    weights = np.asarray(model.tree_weights, dtype=float)
    votes = (per_tree >= 0.5).astype(float)
    return weights @ votes / weights.sum()


def predict_proba(model: EnsembleModel, row) -> float:
    x = np.asarray(row, dtype=float)
    return float(predict_proba_many(model, x.reshape(1, -1))[0])


def decision_margin(model: EnsembleModel, rows) -> np.ndarray:
    """The continuous output the SHAP attributions sum to.

    Identical to predict_proba for the forest. For the boosted model it is
    the normalized soft vote (stage-weighted mean of leaf fractions): hard
    votes are step functions and cannot carry additive attributions.
    """
    X = np.ascontiguousarray(rows, dtype=float)
    per_tree = np.stack([t.predict(X) for t in model.trees])
    if model.kind == BALANCED_RF:
        return per_tree.mean(axis=0)
    weights = np.asarray(model.tree_weights, dtype=float)
    return weights @ per_tree / weights.sum()


def classify(model: EnsembleModel, row, threshold: float = 0.5) -> bool:
    """predict_proba >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must be in (0, 1), got {threshold}")
    return predict_proba(model, row) >= threshold


DEFAULT_SEARCH_SPACE = {
    BALANCED_RF: {
        "n_estimators": [200, 400, 800, 1600],
        "max_depth": [10, 25, 50, None],
        "min_samples_split": [2, 5, 10],
        "min_samples_leaf": [1, 2, 4],
        "max_features": ["sqrt", "log2"],
    },
    RUSBOOST: {
        "n_estimators": [50, 100, 200],
        "learning_rate": [0.05, 0.1, 0.5, 1.0],
        "base_max_depth": [1, 2, 3],
    },
}


def random_param_search(
    space: dict,
    rows,
    labels,
    kind: str,
    n_iter: int,
    k_folds: int = 10,
    seed: int = 0,
) -> tuple[dict, list[dict]]:
    """Sample n_iter configurations, score each by stratified k-fold mean AUC.

    Returns (best parameter record, per-candidate AUC table); ties go to the
    first-sampled candidate.
    """
    from .crossval import cross_validate  # local import: crossval builds on this module

    if n_iter < 1:
        raise ConfigError(f"n_iter must be >= 1, got {n_iter}")
    if not space:
        raise ConfigError("parameter space must not be empty")
    names = sorted(space)
    table: list[dict] = []
    best: dict | None = None
    best_auc = -1.0
    for i in range(n_iter):
        rng = np.random.default_rng([seed & 0xFFFFFFFF, i])
        candidate = {name: space[name][int(rng.integers(len(space[name])))] for name in names}
        result = cross_validate(rows, labels, kind, candidate, k_folds, seed=_derived_seed(seed, i))
        mean_auc = result.report.mean["auc"]
        table.append({"params": candidate, "mean_auc": mean_auc})
        if mean_auc > best_auc:
            best_auc = mean_auc
            best = candidate
    assert best is not None
    return best, table


def make_params(kind: str, overrides: dict | None = None) -> BalancedRFParams | RUSBoostParams:
    """Parameter record for a model kind with defaults plus overrides."""
    overrides = overrides or {}
    if kind == BALANCED_RF:
        return BalancedRFParams(**overrides)
    if kind == RUSBOOST:
        return RUSBoostParams(**overrides)
    raise ConfigError(f"unknown model kind: {kind!r}")
