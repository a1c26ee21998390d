"""Weighted CART decision trees for binary classification.

The common base learner for both ensembles and the input structure for the
SHAP attribution module. Trees are stored as flat node arrays (node 0 is the
root, -1 marks leaf children), which is also their JSON wire format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .errors import ConfigError, DataError

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(state: int) -> tuple[int, int]:
    """One step of the splitmix64 generator: (next_state, output)."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


@dataclass(frozen=True)
class TreeParams:
    """Growth limits and per-split feature sampling policy.

    max_features: "all", "sqrt" (ceil of the square root), "log2", or a
    fraction in (0, 1]. max_depth None means unlimited.
    """

    max_depth: Optional[int] = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: str | float = "all"
    seed: int = 0

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigError(f"max_depth must be >= 0 or None, got {self.max_depth}")
        if self.min_samples_split < 1 or self.min_samples_leaf < 1:
            raise ConfigError("min_samples_split and min_samples_leaf must be positive")
        if self.min_samples_leaf > self.min_samples_split:
            raise ConfigError(
                f"min_samples_leaf ({self.min_samples_leaf}) must not exceed "
                f"min_samples_split ({self.min_samples_split})"
            )
        if isinstance(self.max_features, float) and not 0.0 < self.max_features <= 1.0:
            raise ConfigError(f"fractional max_features must be in (0, 1], got {self.max_features}")
        if isinstance(self.max_features, str) and self.max_features not in ("all", "sqrt", "log2"):
            raise ConfigError(f"unknown max_features policy: {self.max_features!r}")

    def n_candidate_features(self, n_features: int) -> int:
        if self.max_features == "all":
            return n_features
        if self.max_features == "sqrt":
            return min(n_features, math.ceil(math.sqrt(n_features)))
        if self.max_features == "log2":
            return min(n_features, max(1, math.ceil(math.log2(n_features))))
        return min(n_features, max(1, math.ceil(self.max_features * n_features)))


@dataclass
class Tree:
    """A fitted tree as parallel node arrays.

    children_left/children_right are -1 at leaves; value holds the weighted
    positive fraction of the training rows reaching each node (the leaf
    prediction); node_weight the summed training weight reaching it.
    """

    children_left: np.ndarray
    children_right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    node_weight: np.ndarray
    value: np.ndarray
    n_features: int
    max_depth_reached: int
    params: TreeParams = field(default_factory=TreeParams)

    @property
    def n_nodes(self) -> int:
        return self.children_left.shape[0]

    def predict_row(self, row) -> float:
        x = np.asarray(row, dtype=float)
        if x.shape[0] != self.n_features:
            raise DataError(f"row has {x.shape[0]} features, tree expects {self.n_features}")
        return float(
            _kernels.predict_rows(
                self.children_left,
                self.children_right,
                self.feature,
                self.threshold,
                self.value,
                x.reshape(1, -1),
            )[0]
        )

    def predict(self, rows) -> np.ndarray:
        X = np.ascontiguousarray(rows, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"expected a (n, {self.n_features}) matrix, got shape {X.shape}")
        return _kernels.predict_rows(
            self.children_left,
            self.children_right,
            self.feature,
            self.threshold,
            self.value,
            X,
        )

    def to_json_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "max_depth_reached": self.max_depth_reached,
            "children_left": self.children_left.tolist(),
            "children_right": self.children_right.tolist(),
            "feature": self.feature.tolist(),
            "threshold": [None if self.children_left[i] < 0 else self.threshold[i] for i in range(self.n_nodes)],
            "node_weight": self.node_weight.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Tree":
        thresholds = [0.0 if t is None else float(t) for t in d["threshold"]]
        return cls(
            children_left=np.asarray(d["children_left"], dtype=np.int64),
            children_right=np.asarray(d["children_right"], dtype=np.int64),
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(thresholds, dtype=np.float64),
            node_weight=np.asarray(d["node_weight"], dtype=np.float64),
            value=np.asarray(d["value"], dtype=np.float64),
            n_features=int(d["n_features"]),
            max_depth_reached=int(d["max_depth_reached"]),
        )


def gini_impurity(counts) -> float:
    """1 - p0^2 - p1^2 for a pair of non-negative weighted class counts."""
    c0, c1 = float(counts[0]), float(counts[1])
    if c0 < 0 or c1 < 0:
        raise DataError("class counts must be non-negative")
    total = c0 + c1
    if total == 0:
        raise DataError("gini impurity is undefined for an empty node")
    p0 = c0 / total
    p1 = c1 / total
    return 1.0 - p0 * p0 - p1 * p1


def node_feature_subset(tree_seed: int, node_id: int, n_features: int, n_pick: int) -> np.ndarray:
    """Deterministic feature subset for one node, independent of growth order.

    A splitmix64 stream keyed by (tree seed, heap-path node id) drives a
    partial Fisher-Yates shuffle; the result is returned sorted so the split
    scan visits features in ascending index order.
    """
    if n_pick >= n_features:
        return np.arange(n_features, dtype=np.int64)
    state = (tree_seed ^ ((node_id * _GOLDEN) & _MASK64)) & _MASK64
    pool = list(range(n_features))
    for i in range(n_pick):
        state, r = _splitmix64(state)
        j = i + int(r % (n_features - i))
        pool[i], pool[j] = pool[j], pool[i]
    return np.array(sorted(pool[:n_pick]), dtype=np.int64)


def best_split(rows, labels, weights, candidate_features, min_samples_leaf: int = 1):
    """Best (feature, threshold, gain) over the candidate features, or None.

    Gain is the weighted Gini decrease relative to the parent; thresholds are
    midpoints between consecutive distinct sorted values; ties resolve to the
    lowest feature index, then the lowest threshold.
    """
    X = np.ascontiguousarray(rows, dtype=np.float64)
    y = np.asarray(labels, dtype=np.uint8)
    w = np.asarray(weights, dtype=np.float64)
    feats = np.asarray(candidate_features, dtype=np.int64)
    idx = np.arange(X.shape[0], dtype=np.int64)
    f, thr, gain = _kernels.best_split_scan(X, idx, feats, y, w, min_samples_leaf)
    if f < 0:
        return None
    return int(f), float(thr), float(gain)


def fit_tree(rows, labels, weights, params: TreeParams) -> Tree:
    """Grow a weighted CART tree honoring the params' stopping rules.

    Rows at exactly a threshold go left. min_samples_* count weight-bearing
    rows, so scaling all weights by a positive constant changes nothing.
    """
    X = np.ascontiguousarray(rows, dtype=np.float64)
    y = np.asarray(labels, dtype=np.uint8)
    w = np.asarray(weights, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("fit_tree requires a non-empty 2-D feature matrix")
    if not (X.shape[0] == y.shape[0] == w.shape[0]):
        raise DataError("rows, labels, and weights must have equal length")
    if np.any(w < 0):
        raise DataError("sample weights must be non-negative")

    keep = np.nonzero(w > 0)[0].astype(np.int64)
    if keep.shape[0] == 0:
        raise DataError("fit_tree requires at least one weight-bearing row")

    n_features = X.shape[1]
    depth_cap = params.max_depth if params.max_depth is not None else 1 << 30
    n_pick = params.n_candidate_features(n_features)

    children_left: list[int] = []
    children_right: list[int] = []
    feature: list[int] = []
    threshold: list[float] = []
    node_weight: list[float] = []
    pos_weight: list[float] = []
    value: list[float] = []
    max_depth_reached = 0

    def new_node(idx: np.ndarray) -> int:
        slot = len(children_left)
        wsub = w[idx]
        wtot = float(np.sum(wsub))
        wpos = float(np.sum(wsub[y[idx] == 1]))
        children_left.append(-1)
        children_right.append(-1)
        feature.append(-1)
        threshold.append(0.0)
        node_weight.append(wtot)
        pos_weight.append(wpos)
        value.append(wpos / wtot)
        return slot

    # (row indices, depth, heap-path id, slot) — explicit stack, left first
    root_slot = new_node(keep)
    stack = [(keep, 0, 1, root_slot)]
    while stack:
        idx, depth, node_id, slot = stack.pop()
        max_depth_reached = max(max_depth_reached, depth)
        if depth >= depth_cap or idx.shape[0] < params.min_samples_split:
            continue
        if pos_weight[slot] == 0.0 or pos_weight[slot] == node_weight[slot]:
            continue  # pure node
        feats = node_feature_subset(params.seed, node_id, n_features, n_pick)
        f, thr, gain = _kernels.best_split_scan(X, idx, feats, y, w, params.min_samples_leaf)
        if f < 0:
            continue
        go_left = X[idx, f] <= thr
        left_idx = idx[go_left]
        right_idx = idx[~go_left]
        left_slot = new_node(left_idx)
        right_slot = new_node(right_idx)
        children_left[slot] = left_slot
        children_right[slot] = right_slot
        feature[slot] = int(f)
        threshold[slot] = float(thr)
        stack.append((right_idx, depth + 1, 2 * node_id + 1, right_slot))
        stack.append((left_idx, depth + 1, 2 * node_id, left_slot))

    return Tree(
        children_left=np.asarray(children_left, dtype=np.int64),
        children_right=np.asarray(children_right, dtype=np.int64),
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        node_weight=np.asarray(node_weight, dtype=np.float64),
        value=np.asarray(value, dtype=np.float64),
        n_features=n_features,
        max_depth_reached=max_depth_reached,
        params=params,
    )


def predict_tree(tree: Tree, row) -> float:
    """Leaf fraction the row lands in; values at a threshold go left."""
    return tree.predict_row(row)
