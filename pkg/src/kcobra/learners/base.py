from __future__ import annotations

import numpy as np


class NotFittedError(RuntimeError):
    pass


class BaseLearner:
    """Common fit/predict contract for the base regression machines.

    Subclasses implement ``_fit(X, y, seed)`` and ``_predict(X)``; this class
    handles validation and dimensionality checks. ``fit`` copies its inputs,
    so the caller's arrays are never modified.
    """

    name = "base"

    def __init__(self):
        self.n_features_ = None

    def fit(self, X, y, seed=None):
        X = np.array(X, dtype=float, copy=True)
        y = np.array(y, dtype=float, copy=True).reshape(-1)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError(f"expected a non-empty 2-D feature matrix, got shape {X.shape}")
        if X.shape[1] < 1:
            raise ValueError(f"{self.name} needs at least one feature")
        if X.shape[0] != y.shape[0]:
            raise ValueError("features and responses are not row-aligned")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("training data must be finite")
        self.n_features_ = X.shape[1]
        self._fit(X, y, seed)
        return self

    def _check_X(self, X) -> np.ndarray:
        if self.n_features_ is None:
            raise NotFittedError(f"{self.name} is not fitted")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features_:
            raise ValueError(
                f"{self.name} was fitted on {self.n_features_} features, got shape {X.shape}"
            )
        return X

    def predict(self, X) -> np.ndarray:
        """Predict a batch of rows; a 1-D input is treated as a single row."""
        return self._predict(self._check_X(X))

    def predict_one(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("predict_one expects a single feature vector")
        return float(self.predict(x)[0])

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({params})"

    def get_params(self) -> dict:
        return {}


class Standardizer:
    """Zero-mean, unit-variance scaling using training statistics.

    Constant columns keep scale 1 so they map to 0 instead of NaN.
    """

    def __init__(self, X):
        self.mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        self.scale = scale

    def __call__(self, X):
        return (X - self.mean) / self.scale


def kfold_ids(n: int, n_folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold label per row: one shuffle, then round-robin assignment."""
    ids = np.empty(n, dtype=np.intp)
    ids[rng.permutation(n)] = np.arange(n) % n_folds
    return ids
