from __future__ import annotations

import warnings

import numpy as np

from .base import BaseLearner, Standardizer

# query chunk size is chosen so one (chunk, n, d) difference block stays small
_BLOCK_ELEMS = 4_000_000


class KNN(BaseLearner):
    """Brute-force k-nearest-neighbour regression.

    Features are standardized with training statistics. Distances are
    Euclidean; equal distances are resolved in favour of the lower training
    row index. ``k`` larger than the training size is clamped with a warning.
    """

    name = "knn"

    def __init__(self, k=5, standardize=True):
        super().__init__()
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = int(k)
        self.standardize = standardize

    def get_params(self):
        return {"k": self.k, "standardize": self.standardize}

    def _fit(self, X, y, seed):
        n = X.shape[0]
        self.k_ = self.k
        if self.k > n:
            warnings.warn(f"k={self.k} exceeds the {n} training rows; using k={n}", stacklevel=3)
            self.k_ = n
        self._scaler = Standardizer(X) if self.standardize else None
        self._X = self._scale(X)
        self._y = y

    def _scale(self, X):
        return self._scaler(X) if self._scaler is not None else X

    def neighbors(self, X) -> np.ndarray:
        """Indices of the ``k`` nearest training rows, nearest first."""
        Q = self._scale(self._check_X(X))
        n, d = self._X.shape
        step = max(1, _BLOCK_ELEMS // max(1, n * d))
        out = np.empty((Q.shape[0], self.k_), dtype=np.intp)
        for start in range(0, Q.shape[0], step):
            block = Q[start:start + step]
            # accumulate coordinates left to right so tied distances compare equal
            dist = np.zeros((block.shape[0], n))
            for j in range(d):
                dj = block[:, j, None] - self._X[None, :, j]
                dist += dj * dj
            out[start:start + step] = np.argsort(dist, axis=1, kind="stable")[:, : self.k_]
        return out

    def _predict(self, X):
        return self._y[self.neighbors(X)].mean(axis=1)
