"""Exact per-instance SHAP attributions for tree ensembles.

The fast path is the path-dependent polynomial-time recursion over root-leaf
paths (node weights marginalize absent features). A definitional brute-force
Shapley enumerator over feature subsets serves as the testing oracle, using
the same node-weight marginalization so both routes answer the same game.

Output space: probability (mean leaf fraction) for balanced forests, the
alpha-weighted soft vote margin for boosted models. Additivity holds exactly
in the respective space.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .ensembles import EnsembleModel, decision_margin
from .errors import DataError, NumericError
from .tree import Tree

_MAX_BRUTE_FEATURES = 12


@dataclass
class ShapMatrix:
    """Per-instance, per-feature attributions for one model on one fold.

    Invariant (local accuracy): base_value + sum(values[i]) equals the model
    output for instance i in the model's SHAP output space.
    """

    values: np.ndarray
    base_value: float
    feature_names: list[str]
    fold_id: int = -1
    instance_ids: list[str] = field(default_factory=list)
    model_ref: str = ""

    @property
    def n_instances(self) -> int:
        return self.values.shape[0]

    def save(self, csv_path, json_path) -> None:
        """Wide CSV of attributions plus a JSON metadata sidecar."""
        csv_path = Path(csv_path)
        json_path = Path(json_path)
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["instance_id"] + list(self.feature_names))
            for i in range(self.n_instances):
                iid = self.instance_ids[i] if self.instance_ids else str(i)
                writer.writerow([iid] + [repr(float(v)) for v in self.values[i]])
        meta = {
            "base_value": self.base_value,
            "fold_id": self.fold_id,
            "model_ref": self.model_ref,
            "n_instances": self.n_instances,
            "feature_names": list(self.feature_names),
        }
        json_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, csv_path, json_path) -> "ShapMatrix":
        meta = json.loads(Path(json_path).read_text())
        ids: list[str] = []
        rows: list[list[float]] = []
        with open(csv_path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            for rec in reader:
                ids.append(rec[0])
                rows.append([float(v) for v in rec[1:]])
        values = np.asarray(rows, dtype=float) if rows else np.zeros((0, len(header) - 1))
        return cls(
            values=values,
            base_value=float(meta["base_value"]),
            feature_names=list(meta["feature_names"]),
            fold_id=int(meta["fold_id"]),
            instance_ids=ids,
            model_ref=meta.get("model_ref", ""),
        )


def _check_tree_weights(tree: Tree) -> None:
    internal = tree.children_left >= 0
    if np.any(tree.node_weight[internal] <= 0):
        raise NumericError("tree has a zero-weight internal node; SHAP is undefined")


def expected_value(tree: Tree) -> float:
    """Node-weight average of leaf values: the model output with no feature known."""
    return float(_kernels.expected_leaf_value(tree.children_left, tree.node_weight, tree.value))


def tree_shap(tree: Tree, row) -> tuple[np.ndarray, float]:
    """(attributions, base value) of one tree for one instance."""
    x = np.asarray(row, dtype=float)
    if x.shape[0] != tree.n_features:
        raise DataError(f"row has {x.shape[0]} features, tree expects {tree.n_features}")
    _check_tree_weights(tree)
    phi = np.zeros(tree.n_features, dtype=float)
    _kernels.tree_shap_single(
        tree.children_left,
        tree.children_right,
        tree.feature,
        tree.threshold,
        tree.node_weight,
        tree.value,
        x,
        tree.max_depth_reached,
        phi,
    )
    return phi, expected_value(tree)


def subset_expectation(tree: Tree, row, feature_subset) -> float:
    """Expected tree output when only the subset's features are known.

    Absent features are marginalized by following both branches weighted by
    node weights — the same coalition game the fast path answers.
    """
    x = np.asarray(row, dtype=float)
    known = set(int(f) for f in feature_subset)

    def walk(node: int, weight: float) -> float:
        if tree.children_left[node] < 0:
            return weight * tree.value[node]
        f = int(tree.feature[node])
        left = int(tree.children_left[node])
        right = int(tree.children_right[node])
        if f in known:
            child = left if x[f] <= tree.threshold[node] else right
            return walk(child, weight)
        w_node = tree.node_weight[node]
        return walk(left, weight * tree.node_weight[left] / w_node) + walk(
            right, weight * tree.node_weight[right] / w_node
        )

    return walk(0, 1.0)


def brute_force_shapley(value_fn, row, n_features: int) -> np.ndarray:
    """Exact Shapley values by enumerating all 2^d feature subsets.

    value_fn(row, subset) must return the model output with exactly the
    subset's features known. Capped at 12 features.
    """
    if n_features > _MAX_BRUTE_FEATURES:
        raise DataError(
            f"brute-force Shapley enumerates 2^d subsets; d={n_features} exceeds the cap of {_MAX_BRUTE_FEATURES}"
        )
    values = {}
    for mask in range(1 << n_features):
        subset = tuple(i for i in range(n_features) if mask & (1 << i))
        values[mask] = value_fn(row, subset)
    fact = [math.factorial(k) for k in range(n_features + 1)]
    phi = np.zeros(n_features, dtype=float)
    for i in range(n_features):
        bit = 1 << i
        for mask in range(1 << n_features):
            if mask & bit:
                continue
            size = bin(mask).count("1")
            weight = fact[size] * fact[n_features - size - 1] / fact[n_features]
            phi[i] += weight * (values[mask | bit] - values[mask])
    return phi


def model_shap_output(model: EnsembleModel, rows) -> np.ndarray:
    """The model output SHAP explains: probability for forests, margin for boosting."""
    return decision_margin(model, np.ascontiguousarray(rows, dtype=float))


def ensemble_shap(
    model: EnsembleModel,
    rows,
    fold_id: int = -1,
    instance_ids: list[str] | None = None,
    model_ref: str = "",
) -> ShapMatrix:
    """Per-instance attributions for a whole ensemble.

    Balanced forests average per-tree attributions in probability space;
    boosted models combine them by normalized stage weights in margin space.
    Base values combine identically.
    """
    X = np.ascontiguousarray(rows, dtype=float)
    if X.ndim != 2:
        raise DataError("ensemble_shap expects a 2-D matrix of instances")
    if X.shape[1] != model.n_features:
        raise DataError(f"instances have {X.shape[1]} features, model expects {model.n_features}")
    weights = np.asarray(model.tree_weights, dtype=float)
    if model.kind == "balanced_rf":
        combine = np.full(len(model.trees), 1.0 / len(model.trees))
    else:
        combine = weights / weights.sum()

    total = np.zeros((X.shape[0], X.shape[1]), dtype=float)
    base = 0.0
    scratch = np.zeros_like(total)
    for tree_obj, cw in zip(model.trees, combine):
        _check_tree_weights(tree_obj)
        scratch[:] = 0.0
        _kernels.tree_shap_batch(
            tree_obj.children_left,
            tree_obj.children_right,
            tree_obj.feature,
            tree_obj.threshold,
            tree_obj.node_weight,
            tree_obj.value,
            X,
            tree_obj.max_depth_reached,
            scratch,
        )
        total += cw * scratch
        base += cw * expected_value(tree_obj)
    return ShapMatrix(
        values=total,
        base_value=float(base),
        feature_names=list(model.feature_names),
        fold_id=fold_id,
        instance_ids=list(instance_ids) if instance_ids is not None else [],
        model_ref=model_ref or f"{model.kind}/seed={model.seed}",
    )


@dataclass
class FeatureSummary:
    """One feature's row in the importance ranking."""

    rank: int
    feature: str
    mean_abs_shap: float
    direction: int  # sign of the feature-value vs attribution association


@dataclass
class BeeswarmPoint:
    instance_id: str
    feature: str
    shap_value: float
    feature_value_scaled: float  # min-max normalized for color
    jitter: float  # deterministic vertical offset for overlapping points


def shap_summary(
    shap: ShapMatrix,
    feature_values,
    top_k: int = 20,
    jitter_seed: int = 0,
) -> tuple[list[FeatureSummary], list[BeeswarmPoint]]:
    """Importance ranking plus plot-ready point records.

    Features rank by mean absolute attribution, descending, ties broken by
    name. The direction is the sign of the correlation between raw feature
    values and attributions (how "high value" shifts the prediction). Jitter
    offsets are seeded data, never render-time randomness.
    """
    if shap.n_instances == 0:
        raise DataError("cannot summarize an empty attribution matrix")
    X = np.asarray(feature_values, dtype=float)
    if X.shape != shap.values.shape:
        raise DataError(f"feature values {X.shape} do not match attributions {shap.values.shape}")

    mean_abs = np.mean(np.abs(shap.values), axis=0)
    order = sorted(range(len(shap.feature_names)), key=lambda j: (-mean_abs[j], shap.feature_names[j]))
    top = order[: min(top_k, len(order))]

    summaries: list[FeatureSummary] = []
    points: list[BeeswarmPoint] = []
    for rank, j in enumerate(top, start=1):
        name = shap.feature_names[j]
        col = X[:, j]
        sv = shap.values[:, j]
        vx = col - col.mean()
        vy = sv - sv.mean()
        denom = math.sqrt(float(vx @ vx) * float(vy @ vy))
        direction = int(np.sign(float(vx @ vy))) if denom > 0 else 0
        summaries.append(FeatureSummary(rank=rank, feature=name, mean_abs_shap=float(mean_abs[j]), direction=direction))

        lo, hi = float(col.min()), float(col.max())
        span = hi - lo
        rng = np.random.default_rng([jitter_seed & 0xFFFFFFFF, j])
        offsets = rng.uniform(-0.4, 0.4, size=col.shape[0])
        for i in range(col.shape[0]):
            iid = shap.instance_ids[i] if shap.instance_ids else str(i)
            scaled = (col[i] - lo) / span if span > 0 else 0.5
            points.append(
                BeeswarmPoint(
                    instance_id=iid,
                    feature=name,
                    shap_value=float(sv[i]),
                    feature_value_scaled=float(scaled),
                    jitter=float(offsets[i]),
                )
            )
    return summaries, points


def save_summary(summaries: list[FeatureSummary], points: list[BeeswarmPoint], csv_path, json_path) -> None:
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "feature", "shap_value", "feature_value_scaled", "jitter"])
        for p in points:
            writer.writerow([p.instance_id, p.feature, repr(p.shap_value), repr(p.feature_value_scaled), repr(p.jitter)])
    payload = [
        {
            "rank": s.rank,
            "feature": s.feature,
            "mean_abs_shap": s.mean_abs_shap,
            "direction": s.direction,
        }
        for s in summaries
    ]
    Path(json_path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
