"""CART regression trees grown by variance reduction.

The tree is stored as flat arrays (``feature``, ``threshold``, ``left``,
``right``, ``value``); a node with ``feature == -1`` is a leaf predicting
the mean response of its training samples. Rows with
``x[feature] <= threshold`` go left.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .base import BaseLearner

_NO_LIMIT = 1 << 30


@njit(cache=True)
def _best_split(X, y, samples, start, end, features, min_leaf):
    m = end - start
    total = 0.0
    for t in range(start, end):
        total += y[samples[t]]
    parent = total * total / m
    best_score = parent
    best_f = -1
    best_thr = 0.0
    xs = np.empty(m)
    ys = np.empty(m)
    for f in features:
        for t in range(m):
            xs[t] = X[samples[start + t], f]
        order = np.argsort(xs)
        xs_sorted = xs[order]
        if xs_sorted[0] == xs_sorted[m - 1]:
            continue
        for t in range(m):
            ys[t] = y[samples[start + order[t]]]
        left = 0.0
        for i in range(1, m - min_leaf + 1):
            left += ys[i - 1]
            if i < min_leaf or xs_sorted[i - 1] == xs_sorted[i]:
                continue
            right = total - left
            score = left * left / i + right * right / (m - i)
            if score > best_score + 1e-12 * abs(best_score) + 1e-300:
                best_score = score
                best_f = f
                thr = 0.5 * (xs_sorted[i - 1] + xs_sorted[i])
                if thr >= xs_sorted[i]:
                    thr = xs_sorted[i - 1]
                best_thr = thr
    return best_f, best_thr


@njit(cache=True)
def build_tree(X, y, samples, min_leaf, max_depth, min_dev, mtry, seed):
    """Grow a tree on ``samples`` (row indices, duplicates allowed).

    A node is split only if its within-node sum of squares is at least
    ``min_dev`` times that of the root.

    ``mtry < d`` draws that many candidate features per node using numba's
    generator seeded with ``seed``.
    """
    np.random.seed(seed)
    n = samples.shape[0]
    d = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    samples = samples.copy()
    perm = np.arange(d)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    top = 1
    n_nodes = 1
    root_dev = 0.0

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        m = end - start
        s = 0.0
        ss = 0.0
        ymin = np.inf
        ymax = -np.inf
        for t in range(start, end):
            v = y[samples[t]]
            s += v
            ss += v * v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        value[node] = s / m
        count[node] = m
        dev = max(ss - s * s / m, 0.0)
        if node == 0:
            root_dev = dev
        if m < 2 * min_leaf or depth >= max_depth or ymin == ymax or dev < min_dev * root_dev:
            continue
        if mtry < d:
            for i in range(mtry):
                j = i + np.random.randint(d - i)
                tmp = perm[i]
                perm[i] = perm[j]
                perm[j] = tmp
            feats = perm[:mtry].copy()
        else:
            feats = perm.copy()
        f, thr = _best_split(X, y, samples, start, end, feats, min_leaf)
        if f < 0:
            continue
        # partition samples[start:end] in place around the threshold
        lo = start
        hi = end - 1
        while lo <= hi:
            if X[samples[lo], f] <= thr:
                lo += 1
            else:
                tmp = samples[lo]
                samples[lo] = samples[hi]
                samples[hi] = tmp
                hi -= 1
        mid = lo
        feature[node] = f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        for child, c_start, c_end in ((n_nodes, start, mid), (n_nodes + 1, mid, end)):
            stack_node[top] = child
            stack_start[top] = c_start
            stack_end[top] = c_end
            stack_depth[top] = depth + 1
            top += 1
        n_nodes += 2

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        count[:n_nodes].copy(),
    )


@njit(cache=True)
def _apply(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


class RegressionTree(BaseLearner):
    """Single CART tree.

    Parameters
    ----------
    min_leaf : int
        Minimum number of samples in each child of a split.
    max_depth : int or None
        Depth limit; ``None`` means unlimited.
    min_dev : float
        A node is split only if its sum of squares is at least ``min_dev``
        times the root's. The default 0.01 matches the stopping rule of the
        classic S/R ``tree`` implementation; use 0 for fully grown trees.
    mtry : int or None
        Candidate features drawn per node (all when ``None``).
    """

    name = "tree"

    def __init__(self, min_leaf=5, max_depth=12, min_dev=0.01, mtry=None):
        super().__init__()
        if min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if not min_dev >= 0:
            raise ValueError("min_dev must be >= 0")
        self.min_leaf = int(min_leaf)
        self.max_depth = max_depth
        self.min_dev = float(min_dev)
        self.mtry = mtry

    def get_params(self):
        return {"min_leaf": self.min_leaf, "max_depth": self.max_depth,
                "min_dev": self.min_dev, "mtry": self.mtry}

    def _fit(self, X, y, seed, samples=None):
        d = X.shape[1]
        mtry = d if self.mtry is None else int(min(max(self.mtry, 1), d))
        if samples is None:
            samples = np.arange(X.shape[0], dtype=np.int64)
        depth = _NO_LIMIT if self.max_depth is None else int(self.max_depth)
        seed = 0 if seed is None else int(seed) % (2**32)
        (self.feature_, self.threshold_, self.left_, self.right_,
         self.value_, self.count_) = build_tree(
            np.ascontiguousarray(X), y, samples, self.min_leaf, depth, self.min_dev, mtry, seed
        )

    def fit_samples(self, X, y, samples, seed=None):
        """Fit on the rows listed in ``samples`` (a bootstrap draw, say)."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.n_features_ = X.shape[1]
        self._fit(X, y, seed, np.asarray(samples, dtype=np.int64))
        return self

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.ascontiguousarray(self._check_X(X))
        return _apply(X, self.feature_, self.threshold_, self.left_, self.right_)

    def _predict(self, X):
        return self.value_[self.apply(X)]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature_ < 0))

    @property
    def leaf_counts(self) -> np.ndarray:
        return self.count_[self.feature_ < 0]
