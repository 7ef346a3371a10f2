from __future__ import annotations

import math

import numpy as np

from .base import BaseLearner
from .tree import RegressionTree


class RandomForest(BaseLearner):
    """Bagged CART trees with per-node feature subsampling.

    Each tree sees a bootstrap sample of the rows and ``mtry`` random
    candidate features at every node (default ``ceil(d / 3)``). The
    prediction is the plain mean of the member trees, which are kept in
    ``trees_``.
    """

    name = "rf"

    def __init__(self, n_trees=300, mtry=None, min_leaf=5, max_depth=None):
        super().__init__()
        if n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        self.n_trees = int(n_trees)
        self.mtry = mtry
        self.min_leaf = min_leaf
        self.max_depth = max_depth

    def get_params(self):
        return {"n_trees": self.n_trees, "mtry": self.mtry,
                "min_leaf": self.min_leaf, "max_depth": self.max_depth}

    def _fit(self, X, y, seed):
        n, d = X.shape
        mtry = self.mtry if self.mtry is not None else math.ceil(d / 3)
        ss = np.random.SeedSequence(0 if seed is None else seed)
        boot_ss, tree_ss = ss.spawn(2)
        rng = np.random.default_rng(boot_ss)
        tree_seeds = tree_ss.generate_state(self.n_trees)
        X = np.ascontiguousarray(X)
        self.trees_ = []
        for t in range(self.n_trees):
            samples = rng.integers(0, n, size=n)
            tree = RegressionTree(min_leaf=self.min_leaf, max_depth=self.max_depth, min_dev=0.0, mtry=mtry)
            tree.fit_samples(X, y, samples, seed=int(tree_seeds[t]))
            self.trees_.append(tree)

    def _predict(self, X):
        out = np.zeros(X.shape[0])
        for tree in self.trees_:
            out += tree.predict(X)
        return out / len(self.trees_)
