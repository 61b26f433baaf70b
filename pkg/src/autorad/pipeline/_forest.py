"""Compiled CART trees for the random forest (Gini impurity, binary labels).

Bootstrap samples are represented by per-row multiplicities and every
column is sorted once per forest, so split search is a linear scan.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _best_split(X, y, w, order, node_of, node, feats, n_node, pos_node):
    n = X.shape[0]
    parent = 1.0 - (pos_node / n_node) ** 2 - (1.0 - pos_node / n_node) ** 2
    best_gain = 1e-12
    best_f = -1
    best_t = 0.0
    for f in feats:
        nl = 0.0
        pl = 0.0
        prev = 0.0
        have_prev = False
        for k in range(n):
            i = order[k, f]
            if node_of[i] != node or w[i] == 0:
                continue
            v = X[i, f]
            if have_prev and v > prev and nl > 0 and nl < n_node:
                nr = n_node - nl
                a = pl / nl
                b = (pos_node - pl) / nr
                gini = (nl * (1.0 - a * a - (1 - a) * (1 - a)) + nr * (1.0 - b * b - (1 - b) * (1 - b))) / n_node
                gain = parent - gini
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    t = 0.5 * (prev + v)
                    best_t = t if t < v else prev
            nl += w[i]
            pl += w[i] * y[i]
            prev = v
            have_prev = True
    return best_f, best_t


@njit(cache=True)
def build_tree(X, y, order, seed, max_depth, max_features, bootstrap):
    """Grow one tree; returns (feature, threshold, left, right, value) arrays.

    ``value`` is the positive fraction of (bootstrap-weighted) training rows
    in a leaf; internal nodes carry ``feature >= 0``.
    """
    np.random.seed(seed)
    n, d = X.shape
    w = np.zeros(n)
    if bootstrap:
        for _ in range(n):
            w[np.random.randint(0, n)] += 1.0
    else:
        w[:] = 1.0
    cap = 2 * n + 1
    feature = -np.ones(cap, dtype=np.int64)
    threshold = np.zeros(cap)
    left = -np.ones(cap, dtype=np.int64)
    right = -np.ones(cap, dtype=np.int64)
    value = np.zeros(cap)
    depth = np.zeros(cap, dtype=np.int64)
    node_of = np.zeros(n, dtype=np.int64)
    all_feats = np.arange(d)
    stack = np.empty(cap, dtype=np.int64)
    stack[0] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack[top]
        cnt = 0.0
        pos = 0.0
        for i in range(n):
            if node_of[i] == node:
                cnt += w[i]
                pos += w[i] * y[i]
        value[node] = pos / cnt if cnt > 0 else 0.0
        if depth[node] >= max_depth or pos == 0.0 or pos == cnt or cnt < 2:
            continue
        # partial Fisher-Yates: the first max_features entries become a random subset
        for j in range(max_features):
            r = j + np.random.randint(0, d - j)
            tmp = all_feats[j]
            all_feats[j] = all_feats[r]
            all_feats[r] = tmp
        f, t = _best_split(X, y, w, order, node_of, node, all_feats[:max_features], cnt, pos)
        if f < 0:
            continue
        feature[node] = f
        threshold[node] = t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        depth[n_nodes] = depth[node] + 1
        depth[n_nodes + 1] = depth[node] + 1
        for i in range(n):
            if node_of[i] == node:
                node_of[i] = n_nodes if X[i, f] <= t else n_nodes + 1
        stack[top] = n_nodes + 1
        stack[top + 1] = n_nodes
        top += 2
        n_nodes += 2
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def build_forest(X, y, seeds, max_depth, max_features):
    n, d = X.shape
    order = np.empty((n, d), dtype=np.int64)
    for f in range(d):
        order[:, f] = np.argsort(X[:, f], kind="mergesort")
    n_trees = seeds.size
    parts_f = []
    parts_t = []
    parts_l = []
    parts_r = []
    parts_v = []
    offsets = np.zeros(n_trees + 1, dtype=np.int64)
    for k in range(n_trees):
        f, t, l, r, v = build_tree(X, y, order, seeds[k], max_depth, max_features, True)
        parts_f.append(f)
        parts_t.append(t)
        parts_l.append(l)
        parts_r.append(r)
        parts_v.append(v)
        offsets[k + 1] = offsets[k] + f.size
    total = offsets[-1]
    feature = np.empty(total, dtype=np.int64)
    threshold = np.empty(total)
    left = np.empty(total, dtype=np.int64)
    right = np.empty(total, dtype=np.int64)
    value = np.empty(total)
    for k in range(n_trees):
        a = offsets[k]
        b = offsets[k + 1]
        feature[a:b] = parts_f[k]
        threshold[a:b] = parts_t[k]
        left[a:b] = parts_l[k]
        right[a:b] = parts_r[k]
        value[a:b] = parts_v[k]
    return feature, threshold, left, right, value, offsets


@njit(cache=True)
def predict_votes(X, feature, threshold, left, right, value, offsets):
    """Fraction of trees voting positive per row (a leaf at exactly 0.5 gives half a vote)."""
    n = X.shape[0]
    n_trees = offsets.size - 1
    out = np.zeros(n)
    for t in range(n_trees):
        base = offsets[t]
        for i in range(n):
            node = 0
            while feature[base + node] >= 0:
                if X[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            v = value[base + node]
            if v > 0.5:
                out[i] += 1.0
            elif v == 0.5:
                out[i] += 0.5
    return out / n_trees
