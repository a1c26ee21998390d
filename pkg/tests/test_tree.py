"""CART learner against exhaustive split enumeration and a reference grower."""

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from xsell.errors import ConfigError, DataError
from xsell.tree import Tree, TreeParams, best_split, fit_tree, gini_impurity, predict_tree


def test_gini_pure_node():
    assert gini_impurity((10.0, 0.0)) == 0.0


def test_gini_maximal():
    assert gini_impurity((5.0, 5.0)) == 0.5


def test_gini_hand_value():
    # 1 - 0.75^2 - 0.25^2
    assert gini_impurity((3.0, 1.0)) == pytest.approx(0.375, abs=1e-12)


def test_gini_empty_node_rejected():
    with pytest.raises(DataError):
        gini_impurity((0.0, 0.0))


def _exhaustive_best_split(X, y, w, feats, min_leaf):
    """Brute force over every (feature, midpoint) with the tie rules."""

    def gini(wp, wn):
        tot = wp + wn
        if tot == 0:
            return 0.0
        p, q = wp / tot, wn / tot
        return 1.0 - p * p - q * q

    w_pos = float(np.sum(w[y]))
    w_neg = float(np.sum(w[~y]))
    parent = gini(w_pos, w_neg)
    total = w_pos + w_neg
    best = None
    for f in sorted(feats):
        values = sorted(set(X[:, f]))
        for lo, hi in zip(values, values[1:]):
            thr = 0.5 * (lo + hi)
            left = X[:, f] <= thr
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            wl_pos = float(np.sum(w[left & y]))
            wl_neg = float(np.sum(w[left & ~y]))
            wr_pos = w_pos - wl_pos
            wr_neg = w_neg - wl_neg
            wl, wr = wl_pos + wl_neg, wr_pos + wr_neg
            gain = parent - (wl * gini(wl_pos, wl_neg) + wr * gini(wr_pos, wr_neg)) / total
            if gain > 1e-12 and (best is None or gain > best[2]):
                best = (f, thr, gain)
    return best


def test_best_split_perfectly_separable_gain_equals_parent_impurity():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([False, False, True, True])
    w = np.ones(4)
    f, thr, gain = best_split(X, y, w, [0])
    assert f == 0 and thr == 1.5
    assert gain == pytest.approx(0.5, abs=1e-12)  # parent impurity of a 50/50 node


def test_best_split_constant_features_returns_none():
    X = np.ones((6, 3))
    y = np.array([True, False, True, False, True, False])
    assert best_split(X, y, np.ones(6), [0, 1, 2]) is None


def test_best_split_matches_exhaustive_oracle():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(12, 4)).round(1)
    y = rng.random(12) < 0.5
    y[0], y[1] = True, False
    w = rng.uniform(0.5, 2.0, 12)
    got = best_split(X, y, w, [0, 1, 2, 3])
    expected = _exhaustive_best_split(X, y, w, [0, 1, 2, 3], 1)
    assert got is not None and expected is not None
    assert got[0] == expected[0]
    assert got[1] == pytest.approx(expected[1], abs=1e-12)
    assert got[2] == pytest.approx(expected[2], rel=1e-9)


def test_fit_tree_depth_zero_single_leaf():
    X = np.arange(10.0).reshape(-1, 1)
    y = np.array([True] * 3 + [False] * 7)
    tree = fit_tree(X, y, np.ones(10), TreeParams(max_depth=0))
    assert tree.n_nodes == 1
    assert tree.value[0] == pytest.approx(0.3)


def test_fit_tree_separable_reaches_perfect_training_accuracy():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(80, 3))
    y = X[:, 1] > 0.2  # axis-aligned separable concept
    tree = fit_tree(X, y, np.ones(80), TreeParams())
    assert np.array_equal(tree.predict(X) >= 0.5, y)


def _reference_grow(X, y, w, max_depth, min_split, min_leaf, depth=0):
    """Desk-scale recursive reference grower (max_features=all)."""
    w_pos = float(np.sum(w[y]))
    w_tot = float(np.sum(w))
    node = {"weight": w_tot, "value": w_pos / w_tot}
    if depth >= max_depth or len(y) < min_split or w_pos == 0.0 or w_pos == w_tot:
        return node
    best = _exhaustive_best_split(X, y, w, range(X.shape[1]), min_leaf)
    if best is None:
        return node
    f, thr, _ = best
    left = X[:, f] <= thr
    node["feature"] = f
    node["threshold"] = thr
    node["left"] = _reference_grow(X[left], y[left], w[left], max_depth, min_split, min_leaf, depth + 1)
    node["right"] = _reference_grow(X[~left], y[~left], w[~left], max_depth, min_split, min_leaf, depth + 1)
    return node


def _tree_to_nested(tree: Tree, slot=0):
    node = {"weight": tree.node_weight[slot], "value": tree.value[slot]}
    if tree.children_left[slot] >= 0:
        node["feature"] = int(tree.feature[slot])
        node["threshold"] = float(tree.threshold[slot])
        node["left"] = _tree_to_nested(tree, int(tree.children_left[slot]))
        node["right"] = _tree_to_nested(tree, int(tree.children_right[slot]))
    return node


def _assert_same_structure(a, b):
    assert a["weight"] == pytest.approx(b["weight"], rel=1e-12)
    assert a["value"] == pytest.approx(b["value"], rel=1e-12)
    assert ("feature" in a) == ("feature" in b)
    if "feature" in a:
        assert a["feature"] == b["feature"]
        assert a["threshold"] == pytest.approx(b["threshold"], abs=1e-12)
        _assert_same_structure(a["left"], b["left"])
        _assert_same_structure(a["right"], b["right"])


def test_fit_tree_matches_reference_grower_depth2():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(30, 3)).round(2)
    y = rng.random(30) < 0.45
    y[:2] = [True, False]
    w = rng.uniform(0.2, 3.0, 30)
    tree = fit_tree(X, y, w, TreeParams(max_depth=2, min_samples_split=2, min_samples_leaf=1))
    expected = _reference_grow(X, y, w, 2, 2, 1)
    _assert_same_structure(_tree_to_nested(tree), expected)


def test_predict_single_leaf_tree():
    X = np.zeros((4, 2))
    y = np.array([True, False, False, False])
    tree = fit_tree(X, y, np.ones(4), TreeParams(max_depth=0))
    assert predict_tree(tree, [123.0, -5.0]) == pytest.approx(0.25)


def test_predict_exact_threshold_goes_left():
    X = np.array([[0.0], [2.0]])
    y = np.array([True, False])
    tree = fit_tree(X, y, np.ones(2), TreeParams())
    thr = float(tree.threshold[0])
    left_value = tree.value[int(tree.children_left[0])]
    assert predict_tree(tree, [thr]) == left_value


def test_predict_matches_manual_walk_oracle():
    rng = np.random.default_rng(31)
    X = rng.normal(size=(120, 5))
    y = rng.random(120) < 0.5
    y[:2] = [True, False]
    tree = fit_tree(X, y, np.ones(120), TreeParams(max_depth=6, seed=4))

    def walk(row):
        node = 0
        while tree.children_left[node] >= 0:
            if row[tree.feature[node]] <= tree.threshold[node]:
                node = int(tree.children_left[node])
            else:
                node = int(tree.children_right[node])
        return tree.value[node]

    rows = rng.normal(size=(100, 5))
    expected = np.array([walk(r) for r in rows])
    assert np.array_equal(tree.predict(rows), expected)


def test_node_weights_sum_along_tree():
    rng = np.random.default_rng(17)
    X = rng.normal(size=(200, 4))
    y = rng.random(200) < 0.3
    y[:2] = [True, False]
    w = rng.uniform(0.1, 5.0, 200)
    tree = fit_tree(X, y, w, TreeParams(max_depth=8, seed=1))
    for slot in range(tree.n_nodes):
        left, right = tree.children_left[slot], tree.children_right[slot]
        if left >= 0:
            combined = tree.node_weight[left] + tree.node_weight[right]
            assert combined == pytest.approx(tree.node_weight[slot], rel=1e-9)
            # weights never increase root to leaf
            assert tree.node_weight[left] <= tree.node_weight[slot] + 1e-12
            assert tree.node_weight[right] <= tree.node_weight[slot] + 1e-12


@given(scale=hs.floats(0.01, 100.0))
@settings(max_examples=25, deadline=None)
def test_weight_scaling_leaves_structure_and_fractions_unchanged(scale):
    rng = np.random.default_rng(23)
    X = rng.normal(size=(40, 3))
    y = rng.random(40) < 0.4
    y[:2] = [True, False]
    w = rng.uniform(0.5, 2.0, 40)
    base = fit_tree(X, y, w, TreeParams(max_depth=3, seed=8))
    scaled = fit_tree(X, y, w * scale, TreeParams(max_depth=3, seed=8))
    assert np.array_equal(base.children_left, scaled.children_left)
    assert np.array_equal(base.feature, scaled.feature)
    assert np.allclose(base.threshold, scaled.threshold, atol=1e-12)
    assert np.allclose(base.value, scaled.value, rtol=1e-9)
    assert np.allclose(scaled.node_weight, base.node_weight * scale, rtol=1e-9)


def test_fit_deterministic_same_seed():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(100, 8))
    y = rng.random(100) < 0.4
    y[:2] = [True, False]
    params = TreeParams(max_depth=6, max_features="sqrt", seed=77)
    a = fit_tree(X, y, np.ones(100), params)
    b = fit_tree(X, y, np.ones(100), params)
    assert json.dumps(a.to_json_dict()) == json.dumps(b.to_json_dict())


def test_tree_json_round_trip():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 4))
    y = rng.random(50) < 0.5
    y[:2] = [True, False]
    tree = fit_tree(X, y, np.ones(50), TreeParams(max_depth=4, seed=2))
    clone = Tree.from_json_dict(json.loads(json.dumps(tree.to_json_dict())))
    rows = rng.normal(size=(20, 4))
    assert np.array_equal(tree.predict(rows), clone.predict(rows))


def test_params_validation():
    with pytest.raises(ConfigError):
        TreeParams(min_samples_leaf=5, min_samples_split=2)
    with pytest.raises(ConfigError):
        TreeParams(max_features="median")
    with pytest.raises(ConfigError):
        TreeParams(max_features=1.5)


def test_fit_rejects_empty_and_mismatched_data():
    with pytest.raises(DataError):
        fit_tree(np.zeros((0, 2)), np.zeros(0, dtype=bool), np.zeros(0), TreeParams())
    with pytest.raises(DataError):
        fit_tree(np.zeros((3, 2)), np.array([True, False]), np.ones(3), TreeParams())


def test_predict_dimension_mismatch():
    X = np.zeros((4, 2))
    y = np.array([True, False, True, False])
    tree = fit_tree(X, y, np.ones(4), TreeParams(max_depth=0))
    with pytest.raises(DataError):
        tree.predict_row([1.0, 2.0, 3.0])
