from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True, eq=False)
class Dataset:
    """Row-aligned features ``X`` (n, d) and responses ``y`` (n,).

    ``clean`` optionally holds the noise-free part of ``y`` for synthetic
    data generated in debug mode.
    """

    X: np.ndarray
    y: np.ndarray
    clean: Optional[np.ndarray] = None
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise ValueError(f"features must be a 2-D matrix, got shape {X.shape}")
        n, d = X.shape
        if n < 1 or d < 1:
            raise ValueError(f"dataset needs n >= 1 and d >= 1, got ({n}, {d})")
        if y.shape[0] != n:
            raise ValueError(f"{n} feature rows but {y.shape[0]} responses")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        clean = None if self.clean is None else np.asarray(self.clean)[idx]
        return Dataset(self.X[idx], self.y[idx], clean, self.feature_names)
