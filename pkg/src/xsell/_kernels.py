"""Numba kernels for the hot loops: split scanning, tree prediction, and
per-instance SHAP attribution.

All kernels are single-threaded and allocation-light so results are
bit-identical regardless of how many worker threads drive them.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_MIN_GAIN = 1e-12  # impurity units; scale-invariant because gains are weight-normalized


@njit(cache=True, nogil=True)
def best_split_scan(X, rows, feats, y, w, min_leaf):
    """Scan candidate features for the impurity-optimal threshold.

    Thresholds sit at midpoints between consecutive distinct sorted values.
    Features are scanned in ascending index order and thresholds in ascending
    value order with strict gain improvement, which makes ties resolve to the
    lowest feature index, then the lowest threshold.

    Returns (feature, threshold, gain); feature is -1 when no split has a
    positive gain.
    """
    n = rows.shape[0]
    w_total = 0.0
    w_pos = 0.0
    for i in range(n):
        w_total += w[rows[i]]
        if y[rows[i]] == 1:
            w_pos += w[rows[i]]
    if w_total <= 0.0:
        return -1, 0.0, 0.0
    p1 = w_pos / w_total
    gini_parent = 1.0 - p1 * p1 - (1.0 - p1) * (1.0 - p1)

    best_feat = -1
    best_thr = 0.0
    best_gain = _MIN_GAIN

    vals = np.empty(n, np.float64)
    for fi in range(feats.shape[0]):
        f = feats[fi]
        for i in range(n):
            vals[i] = X[rows[i], f]
        order = np.argsort(vals, kind="mergesort")
        cum_w = 0.0
        cum_wp = 0.0
        for i in range(1, n):
            prev = order[i - 1]
            cum_w += w[rows[prev]]
            if y[rows[prev]] == 1:
                cum_wp += w[rows[prev]]
            if vals[prev] == vals[order[i]]:
                continue
            if i < min_leaf or n - i < min_leaf:
                continue
            w_left = cum_w
            w_right = w_total - cum_w
            if w_left <= 0.0 or w_right <= 0.0:
                continue
            pl = cum_wp / w_left
            pr = (w_pos - cum_wp) / w_right
            gini_left = 1.0 - pl * pl - (1.0 - pl) * (1.0 - pl)
            gini_right = 1.0 - pr * pr - (1.0 - pr) * (1.0 - pr)
            gain = gini_parent - (w_left * gini_left + w_right * gini_right) / w_total
            if gain > best_gain:
                best_gain = gain
                best_feat = f
                best_thr = 0.5 * (vals[prev] + vals[order[i]])
    if best_feat < 0:
        return -1, 0.0, 0.0
    return best_feat, best_thr, best_gain


@njit(cache=True, nogil=True)
def predict_rows(children_left, children_right, feature, threshold, value, X):
    """Leaf fraction reached by each row; values <= threshold go left."""
    n = X.shape[0]
    out = np.empty(n, np.float64)
    for i in range(n):
        node = 0
        while children_left[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = children_left[node]
            else:
                node = children_right[node]
        out[i] = value[node]
    return out


@njit(cache=True, nogil=True)
def expected_leaf_value(children_left, node_weight, value):
    """Training-weight average of leaf values (the SHAP base value)."""
    total = 0.0
    for node in range(children_left.shape[0]):
        if children_left[node] < 0:
            total += node_weight[node] * value[node]
    return total / node_weight[0]


@njit(cache=True, nogil=True)
def tree_shap_single(
    children_left,
    children_right,
    feature,
    threshold,
    node_weight,
    value,
    x,
    max_depth,
    phi,
):
    """Path-dependent SHAP attributions of one tree for one instance.

    Walks every root-leaf path once, maintaining for each feature on the path
    the fraction of weighted training paths that flow through when the
    feature is excluded (zero fraction, from node weights) or included (one
    fraction, 0/1 from the instance's own branch). Permutation weights are
    carried incrementally and unwound at the leaves, which keeps the whole
    computation polynomial in depth. Adds into ``phi`` in place.
    """
    bufcap = (max_depth + 2) * (max_depth + 3) // 2 + 4
    pd = np.empty(bufcap, np.int64)
    pz = np.empty(bufcap, np.float64)
    po = np.empty(bufcap, np.float64)
    pw = np.empty(bufcap, np.float64)

    scap = 2 * (max_depth + 3)
    st_node = np.empty(scap, np.int64)
    st_off = np.empty(scap, np.int64)
    st_len = np.empty(scap, np.int64)
    st_pz = np.empty(scap, np.float64)
    st_po = np.empty(scap, np.float64)
    st_feat = np.empty(scap, np.int64)

    st_node[0] = 0
    st_off[0] = 0
    st_len[0] = 0
    st_pz[0] = 1.0
    st_po[0] = 1.0
    st_feat[0] = -1
    top = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        parent_off = st_off[top]
        parent_len = st_len[top]
        in_pz = st_pz[top]
        in_po = st_po[top]
        in_feat = st_feat[top]

        off = parent_off + parent_len
        for i in range(parent_len):
            pd[off + i] = pd[parent_off + i]
            pz[off + i] = pz[parent_off + i]
            po[off + i] = po[parent_off + i]
            pw[off + i] = pw[parent_off + i]

        # extend the path with the incoming edge
        pd[off + parent_len] = in_feat
        pz[off + parent_len] = in_pz
        po[off + parent_len] = in_po
        pw[off + parent_len] = 1.0 if parent_len == 0 else 0.0
        length = parent_len + 1
        for i in range(parent_len - 1, -1, -1):
            pw[off + i + 1] += in_po * pw[off + i] * (i + 1.0) / length
            pw[off + i] = in_pz * pw[off + i] * (length - 1.0 - i) / length

        if children_left[node] < 0:
            leaf = value[node]
            for i in range(1, length):
                # weight the leaf would carry with element i unwound
                one_frac = po[off + i]
                zero_frac = pz[off + i]
                nxt = pw[off + length - 1]
                total = 0.0
                for j in range(length - 2, -1, -1):
                    if one_frac != 0.0:
                        tmp = nxt * length / ((j + 1.0) * one_frac)
                        total += tmp
                        nxt = pw[off + j] - tmp * zero_frac * (length - 1.0 - j) / length
                    else:
                        total += pw[off + j] * length / (zero_frac * (length - 1.0 - j))
                phi[pd[off + i]] += total * (po[off + i] - pz[off + i]) * leaf
        else:
            f = feature[node]
            left = children_left[node]
            right = children_right[node]
            if x[f] <= threshold[node]:
                hot = left
                cold = right
            else:
                hot = right
                cold = left
            w_node = node_weight[node]
            hot_zero = node_weight[hot] / w_node
            cold_zero = node_weight[cold] / w_node

            inc_zero = 1.0
            inc_one = 1.0
            k = -1
            for i in range(length):
                if pd[off + i] == f:
                    k = i
                    break
            if k >= 0:
                inc_zero = pz[off + k]
                inc_one = po[off + k]
                # unwind the previous occurrence of this feature
                nxt = pw[off + length - 1]
                for j in range(length - 2, -1, -1):
                    if inc_one != 0.0:
                        tmp = pw[off + j]
                        pw[off + j] = nxt * length / ((j + 1.0) * inc_one)
                        nxt = tmp - pw[off + j] * inc_zero * (length - 1.0 - j) / length
                    else:
                        pw[off + j] = pw[off + j] * length / (inc_zero * (length - 1.0 - j))
                for j in range(k, length - 1):
                    pd[off + j] = pd[off + j + 1]
                    pz[off + j] = pz[off + j + 1]
                    po[off + j] = po[off + j + 1]
                length -= 1

            # LIFO: push cold first so the hot branch is explored first
            st_node[top] = cold
            st_off[top] = off
            st_len[top] = length
            st_pz[top] = inc_zero * cold_zero
            st_po[top] = 0.0
            st_feat[top] = f
            top += 1
            st_node[top] = hot
            st_off[top] = off
            st_len[top] = length
            st_pz[top] = inc_zero * hot_zero
            st_po[top] = inc_one
            st_feat[top] = f
            top += 1


@njit(cache=True, nogil=True)
def tree_shap_batch(
    children_left,
    children_right,
    feature,
    threshold,
    node_weight,
    value,
    X,
    max_depth,
    out,
):
    """Per-instance SHAP for a batch of rows; writes into out (n, d)."""
    for r in range(X.shape[0]):
        tree_shap_single(
            children_left,
            children_right,
            feature,
            threshold,
            node_weight,
            value,
            X[r],
            max_depth,
            out[r],
        )
