"""Base regression machines behind a single fit/predict contract."""

from __future__ import annotations

import numpy as np

from ..data import Dataset
from .base import BaseLearner, NotFittedError
from .forest import RandomForest
from .knn import KNN
from .linear import Lasso, Ridge
from .tree import RegressionTree

__all__ = [
    "BaseLearner",
    "NotFittedError",
    "Ridge",
    "Lasso",
    "KNN",
    "RegressionTree",
    "RandomForest",
    "LEARNERS",
    "make_learner",
    "fit",
    "predict",
    "predict_all",
]

LEARNERS = {
    "ridge": Ridge,
    "lasso": Lasso,
    "knn": KNN,
    "tree": RegressionTree,
    "rf": RandomForest,
}


def make_learner(name: str, **params) -> BaseLearner:
    """Build an unfitted learner from its config name (``ridge``, ``rf``, ...)."""
    try:
        cls = LEARNERS[name]
    except KeyError:
        raise ValueError(f"unknown learner {name!r}; expected one of {sorted(LEARNERS)}") from None
    return cls(**params)


def fit(learner: BaseLearner, train: Dataset, seed=None) -> BaseLearner:
    return learner.fit(train.X, train.y, seed=seed)


def predict(learner: BaseLearner, x) -> float:
    return learner.predict_one(x)


def predict_all(learners, points) -> np.ndarray:
    """Prediction matrix with one row per point and one column per learner."""
    learners = list(learners)
    if not learners:
        raise ValueError("need at least one learner")
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None, :]
    return np.column_stack([lrn.predict(points) for lrn in learners])
