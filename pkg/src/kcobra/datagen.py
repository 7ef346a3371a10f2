"""Synthetic benchmark models, train/aggregate/test splits and CSV loading.

Inputs are either i.i.d. Uniform(-1, 1) (``uncorrelated``) or rows of
N(0, Sigma) with ``Sigma_ij = 2^-|i-j|`` drawn through the Cholesky factor
of Sigma (``correlated``). Random numbers come from numpy's PCG64 bit
generator; normal draws use numpy's ziggurat sampler.

Gaussian noise terms written ``N(0, s)`` in the model table are drawn with
standard deviation ``s``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .data import Dataset

logger = logging.getLogger(__name__)

__all__ = [
    "REGIMES",
    "MODELS",
    "SplitSpec",
    "CsvReport",
    "correlated_cov",
    "sample_inputs",
    "model_signal",
    "gen_model",
    "split_indices",
    "split",
    "load_csv",
]

REGIMES = ("uncorrelated", "correlated")


def _ind(cond):
    return cond.astype(float)


def _m1(X):
    return X[:, 0] ** 2 + np.exp(-X[:, 1] ** 2)


def _m2(X):
    return X[:, 0] * X[:, 1] + X[:, 2] ** 2 - X[:, 3] * X[:, 6] + X[:, 7] * X[:, 9] - X[:, 5] ** 2


def _m3(X):
    return -np.sin(2 * X[:, 0]) + X[:, 1] ** 2 + X[:, 2] - np.exp(-X[:, 3])


def _m4(X):
    s3 = np.sin(2 * np.pi * X[:, 2])
    a4 = 2 * np.pi * X[:, 3]
    return (
        X[:, 0]
        + (2 * X[:, 1] - 1) ** 2
        + s3 / (2 - s3)
        + np.sin(a4)
        + 2 * np.cos(a4)
        + 3 * np.sin(a4) ** 2
        + 4 * np.cos(a4) ** 2
    )


def _m5(X):
    return (
        _ind(X[:, 0] > 0)
        + X[:, 1] ** 3
        + _ind(X[:, 3] + X[:, 5] - X[:, 7] - X[:, 8] > 1 + X[:, 13])
        + np.exp(-X[:, 1] ** 2)
    )


def _m6(X):
    return np.sum(X[:, :10] < 0, axis=1).astype(float)


def _m7(X):
    return X[:, 0] ** 2 + X[:, 1] ** 2 * X[:, 2] * np.exp(-np.abs(X[:, 3])) + X[:, 5] - X[:, 7]


def _m8_latent(X):
    return X[:, 0] + X[:, 3] ** 3 + X[:, 8] + np.sin(X[:, 11] * X[:, 17])


def _m8(X):
    return _ind(_m8_latent(X) > 0.38)


def _m9(X):
    return X[:, 0] + 3 * X[:, 2] ** 2 - 2 * np.exp(-X[:, 4]) + X[:, 5]


def _m10_powers(X):
    j = np.arange(2, X.shape[1] + 1, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        return X[:, 1:] ** j


def _m10(X):
    P = _m10_powers(X)
    with np.errstate(invalid="ignore"):
        rest = np.cos(P) - 2 * np.sin(P) - np.exp(-np.abs(X[:, 1:]))
    return np.exp(X[:, 0]) + np.exp(-X[:, 0]) + rest.sum(axis=1)


def _gauss_noise(sd):
    def draw(rng, X, signal):
        return signal + rng.normal(0.0, sd, size=signal.shape[0])

    return draw


def _m6_noise(rng, X, signal):
    return signal - _ind(rng.standard_normal(signal.shape[0]) > 1.25)


def _m8_noise(rng, X, signal):
    return _ind(_m8_latent(X) + rng.normal(0.0, 0.01, size=X.shape[0]) > 0.38)


def _no_noise(rng, X, signal):
    return signal.copy()


@dataclass(frozen=True)
class SyntheticModel:
    id: int
    n: int
    d: int
    signal: Callable
    noise: Callable


MODELS = {
    1: SyntheticModel(1, 800, 50, _m1, _no_noise),
    2: SyntheticModel(2, 600, 100, _m2, _gauss_noise(0.5)),
    3: SyntheticModel(3, 600, 100, _m3, _gauss_noise(0.5)),
    4: SyntheticModel(4, 600, 100, _m4, _gauss_noise(0.5)),
    5: SyntheticModel(5, 700, 20, _m5, _gauss_noise(0.05)),
    6: SyntheticModel(6, 500, 30, _m6, _m6_noise),
    7: SyntheticModel(7, 600, 300, _m7, _gauss_noise(0.5)),
    8: SyntheticModel(8, 600, 50, _m8, _m8_noise),
    9: SyntheticModel(9, 500, 1000, _m9, _no_noise),
    10: SyntheticModel(10, 500, 1500, _m10, _no_noise),
}


def _check_regime(regime):
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")


def correlated_cov(d: int) -> np.ndarray:
    """``Sigma_ij = 2^-|i-j|``."""
    idx = np.arange(d)
    return 2.0 ** -np.abs(idx[:, None] - idx[None, :])


def sample_inputs(regime: str, n: int, d: int, seed) -> np.ndarray:
    """Draw an ``(n, d)`` input matrix for the given regime."""
    _check_regime(regime)
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if regime == "uncorrelated":
        return rng.uniform(-1.0, 1.0, size=(n, d))
    L = np.linalg.cholesky(correlated_cov(d))
    return rng.standard_normal((n, d)) @ L.T


def model_signal(model_id: int, X) -> np.ndarray:
    """Noise-free part of the response for model ``model_id`` at inputs ``X``."""
    model = _get_model(model_id)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < model.d:
        raise ValueError(f"model {model_id} needs {model.d} input columns")
    return model.signal(X)


def _get_model(model_id):
    try:
        return MODELS[int(model_id)]
    except (KeyError, ValueError, TypeError):
        raise ValueError(f"unknown model id {model_id!r}; expected 1..10") from None


# AR(1) structure of Sigma: the precision matrix is tridiagonal, which gives
# closed-form full conditionals for single coordinates.
_RHO = 0.5


def _redraw_coordinate(rng, x, j, regime):
    d = x.shape[0]
    if regime == "uncorrelated":
        return rng.uniform(-1.0, 1.0)
    if d == 1:
        return rng.standard_normal()
    if j == 0 or j == d - 1:
        nb = x[1] if j == 0 else x[d - 2]
        return _RHO * nb + math.sqrt(1 - _RHO**2) * rng.standard_normal()
    mean = _RHO * (x[j - 1] + x[j + 1]) / (1 + _RHO**2)
    sd = math.sqrt((1 - _RHO**2) / (1 + _RHO**2))
    return mean + sd * rng.standard_normal()


def _repair_model10(rng, X, regime, max_rounds=10_000):
    """Redraw coordinates whose power ``x_j^j`` overflows.

    Each offending coordinate is resampled from its conditional distribution
    given the rest of its row until every term is finite, so ``n`` stays
    exact. Uniform inputs never overflow.
    """
    signal = _m10(X)
    bad_rows = np.flatnonzero(~np.isfinite(signal))
    for i in bad_rows:
        x = X[i]
        for _ in range(max_rounds):
            P = _m10_powers(x[None, :])[0]
            bad = np.flatnonzero(~np.isfinite(P)) + 1
            if bad.size == 0:
                break
            for j in bad:
                x[j] = _redraw_coordinate(rng, x, j, regime)
        else:
            raise RuntimeError("could not draw a finite row for model 10")
    if bad_rows.size:
        logger.debug("model 10: repaired %d rows with overflowing powers", bad_rows.size)
    return X


def gen_model(model_id: int, regime: str = "uncorrelated", seed=0, n: Optional[int] = None,
              debug: bool = False) -> Dataset:
    """Generate a synthetic dataset.

    Parameters
    ----------
    model_id : int
        1..10.
    regime : {"uncorrelated", "correlated"}
    seed : int
        Same ``(model_id, regime, seed, n)`` always yields the same data.
    n : int, optional
        Override the model's standard sample size.
    debug : bool
        Keep the noise-free response in ``Dataset.clean``.
    """
    model = _get_model(model_id)
    _check_regime(regime)
    n = model.n if n is None else int(n)
    rng = np.random.default_rng(seed)
    X = sample_inputs(regime, n, model.d, rng)
    if model.id == 10:
        X = _repair_model10(rng, X, regime)
    signal = model.signal(X)
    y = model.noise(rng, X, signal)
    names = tuple(f"x{j + 1}" for j in range(model.d))
    return Dataset(X, y, clean=signal if debug else None, feature_names=names)


@dataclass(frozen=True)
class SplitSpec:
    """Test share of all rows and the machine-fitting share of the rest."""

    test_fraction: float = 0.2
    dk_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie strictly between 0 and 1")
        if not 0 < self.dk_fraction < 1:
            raise ValueError("dk_fraction must lie strictly between 0 and 1")

    def sizes(self, n: int):
        """``(k, l, test)`` row counts for ``n`` rows."""
        n_test = int(math.floor(self.test_fraction * n + 0.5))
        n_train = n - n_test
        k = int(math.ceil(self.dk_fraction * n_train - 1e-9))
        return k, n_train - k, n_test


def split_indices(n: int, spec: SplitSpec):
    """Disjoint index arrays ``(train_k, train_l, test)`` covering ``range(n)``."""
    k, l, n_test = spec.sizes(n)
    if min(k, l, n_test) < 1:
        raise ValueError(f"split of {n} rows into {(k, l, n_test)} leaves an empty part")
    perm = np.random.default_rng(spec.seed).permutation(n)
    return perm[n_test:n_test + k], perm[n_test + k:], perm[:n_test]


def split(dataset: Dataset, spec: SplitSpec):
    """Split into machine-fitting, aggregation and test parts."""
    ik, il, it = split_indices(dataset.n, spec)
    return dataset.subset(ik), dataset.subset(il), dataset.subset(it)


@dataclass
class CsvReport:
    n_rows_read: int
    n_dropped: int
    excluded_columns: list = field(default_factory=list)

    def __str__(self):
        msg = f"read {self.n_rows_read} rows, dropped {self.n_dropped} with missing values"
        if self.excluded_columns:
            msg += f"; excluded non-numeric columns: {', '.join(self.excluded_columns)}"
        return msg


_MISSING = {"", "na", "nan", "null", "none", "?"}


def _parse(cell):
    text = cell.strip()
    if text.lower() in _MISSING:
        return None
    return float(text)


def load_csv(path, target: str, features: Optional[Sequence[str]] = None,
             mappings: Optional[dict] = None, delimiter: str = ","):
    """Load a numeric regression dataset from a headed CSV file.

    Columns whose every non-missing cell is non-numeric are treated as
    categorical and left out unless listed in ``mappings``
    (``{column: {label: number}}``). A column that mixes numbers and text
    is an error naming the offending cell. Rows with any missing selected
    value are dropped and counted in the returned :class:`CsvReport`.

    Returns ``(dataset, report)``.
    """
    mappings = mappings or {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if target not in header:
        raise ValueError(f"{path}: target column {target!r} not found")
    if features is None:
        features = [h for h in header if h != target]
    else:
        features = list(features)
        missing = [f for f in features if f not in header]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
    for lineno, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise ValueError(f"{path}: line {lineno} has {len(r)} fields, expected {len(header)}")

    def column(name, required):
        c = header.index(name)
        mapping = mappings.get(name)
        out = []
        numeric_seen = text_seen = None
        for lineno, r in enumerate(rows, start=2):
            cell = r[c]
            if mapping is not None:
                key = cell.strip()
                if key.lower() in _MISSING:
                    out.append(None)
                elif key in mapping:
                    out.append(float(mapping[key]))
                else:
                    raise ValueError(f"{path}: line {lineno}, column {name!r}: unmapped value {key!r}")
                continue
            try:
                v = _parse(cell)
                if v is not None and numeric_seen is None:
                    numeric_seen = (lineno, cell)
                out.append(v)
            except ValueError:
                if text_seen is None:
                    text_seen = (lineno, cell)
                out.append(None)
        if text_seen is not None:
            if numeric_seen is None and not required:
                return None
            lineno, cell = text_seen
            raise ValueError(f"{path}: line {lineno}, column {name!r}: cannot parse {cell!r} as a number")
        return out

    y = column(target, True)
    kept, cols, excluded = [], [], []
    for name in features:
        values = column(name, name in mappings)
        if values is None:
            excluded.append(name)
            continue
        kept.append(name)
        cols.append(values)
    if not kept:
        raise ValueError(f"{path}: no numeric feature columns")
    good = [i for i in range(len(rows)) if y[i] is not None and all(c[i] is not None for c in cols)]
    X = np.array([[c[i] for c in cols] for i in good], dtype=float).reshape(len(good), len(kept))
    yv = np.array([y[i] for i in good], dtype=float)
    report = CsvReport(len(rows), len(rows) - len(good), excluded)
    if report.n_dropped:
        logger.info("%s: %s", path, report)
    return Dataset(X, yv, feature_names=tuple(kept)), report
