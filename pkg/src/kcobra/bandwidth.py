"""Bandwidth selection for the aggregation weights.

Two validation objectives are provided:

* :class:`CvObjective`, the kappa-fold cross-validation error on the
  aggregation sample,
  ``phi(h) = (1/kappa) sum_p sum_{j in F_p} (g_h(j) - Y_j)^2``, where
  ``g_h(j)`` only uses the rows outside fold ``F_p``;
* :class:`HoldoutObjective`, the mean squared error of an aggregate built on
  one half of the sample and scored on the other half.

Either can be minimised over a grid of ``h`` (:func:`fit_bandwidth_grid`,
and jointly with the relaxed-COBRA agreement fraction in
:func:`fit_alpha_grid`) or, for gaussian / exp4 kernels with a
multiplicative bandwidth, by gradient descent (:func:`fit_bandwidth_gd`).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .aggregation import (
    CobraRelaxed,
    KernelPerCoord,
    KernelVector,
    PairStats,
    PredictionMatrix,
    _fallback_value,
    dlog_mass_dh,
    log_mass,
    normalize_log_mass,
)
from .errors import ConfigError, DivergedError, NotDifferentiableError
from .learners.base import kfold_ids

__all__ = [
    "CvObjective",
    "HoldoutObjective",
    "GdConfig",
    "GridConfig",
    "GdResult",
    "GridResult",
    "AlphaGridResult",
    "TraceStep",
    "cv_error",
    "cv_grad",
    "fit_bandwidth_gd",
    "fit_bandwidth_grid",
    "fit_alpha_grid",
]

H_FLOOR = 1e-8


class _Block:
    """One validation block: query rows scored against a training side."""

    __slots__ = ("stats", "y_train", "y_val", "fallback_value")

    def __init__(self, pm: PredictionMatrix, train_idx, val_idx, fallback):
        self.stats = PairStats(pm.values[train_idx], pm.values[val_idx])
        self.y_train = pm.responses[train_idx]
        self.y_val = pm.responses[val_idx]
        self.fallback_value = _fallback_value(self.y_train, fallback)


class _BlockObjective:
    """Sum of squared validation errors over blocks, times ``self.scale``."""

    blocks: list
    scale: float

    def __init__(self, scheme):
        self.scheme = scheme

    def with_scheme(self, scheme):
        """Same blocks and folds, different weighting scheme."""
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.scheme = scheme
        return clone

    @property
    def supports_analytic(self) -> bool:
        s = self.scheme
        return (
            isinstance(s, (KernelVector, KernelPerCoord))
            and s.spec.smooth
            and s.bw.parametrization == "multiplicative"
        )

    def _block_terms(self, block, scheme, need_grad):
        lm = log_mass(scheme, block.stats)
        W = normalize_log_mass(lm)
        has_mass = np.any(W > 0, axis=-1)
        g = np.sum(W * block.y_train, axis=-1)
        g = np.where(has_mass, g, block.fallback_value)
        resid = g - block.y_val
        if not need_grad:
            return float(np.sum(resid * resid)), None
        slope = dlog_mass_dh(scheme, block.stats)
        # d g / dh = sum_i W_i * dlogK_i/dh * (Y_i - g)
        dg = np.sum(W * slope * (block.y_train[None, :] - g[:, None]), axis=-1)
        dg = np.where(has_mass, dg, 0.0)
        return float(np.sum(resid * resid)), float(np.sum(2.0 * dg * resid))

    def _check_h(self, h):
        if not (h > 0 and math.isfinite(h)):
            raise ValueError(f"h must be positive and finite, got {h!r}")

    def value(self, h: float) -> float:
        self._check_h(h)
        scheme = self.scheme.with_h(h)
        total = 0.0
        for block in self.blocks:
            total += self._block_terms(block, scheme, False)[0]
        return total * self.scale

    __call__ = value

    def value_and_grad(self, h: float, mode: str = "analytic", step: Optional[float] = None):
        if mode == "analytic":
            if not self.supports_analytic:
                raise NotDifferentiableError(
                    f"analytic gradient needs a gaussian/exp4 kernel with multiplicative bandwidth, "
                    f"got {self.scheme!r}"
                )
            self._check_h(h)
            scheme = self.scheme.with_h(h)
            val = grad = 0.0
            for block in self.blocks:
                v, g = self._block_terms(block, scheme, True)
                val += v
                grad += g
            return val * self.scale, grad * self.scale
        if mode == "numerical":
            return self.value(h), self.numerical_grad(h, step)
        raise ValueError(f"unknown gradient mode {mode!r}")

    def grad(self, h: float, mode: str = "analytic", step: Optional[float] = None) -> float:
        if mode == "numerical":
            return self.numerical_grad(h, step)
        return self.value_and_grad(h, mode)[1]

    def numerical_grad(self, h: float, step: Optional[float] = None) -> float:
        """Central difference ``(phi(h+s) - phi(h-s)) / 2s``, ``s = 1e-5 max(h, 1)`` by default."""
        s = 1e-5 * max(h, 1.0) if step is None else float(step)
        if h - s <= 0:
            s = 0.5 * h
        return (self.value(h + s) - self.value(h - s)) / (2.0 * s)


class CvObjective(_BlockObjective):
    """kappa-fold cross-validation error of an aggregation scheme as a function of ``h``.

    Parameters
    ----------
    pm : PredictionMatrix
        Predictions and responses on the aggregation sample.
    scheme : weight scheme
        Its ``h`` is ignored; every evaluation rebinds it.
    n_folds : int
        Number of folds kappa (>= 2).
    seed : int
        Seeds the single shuffle preceding round-robin fold assignment.
    folds : array-like, optional
        Explicit fold label per row, overriding ``n_folds``/``seed``.
    fallback : {"mean", "zero"}
        Prediction used for a held-out row with no consensus.
    """

    def __init__(self, pm: PredictionMatrix, scheme, n_folds=5, seed=0, folds=None, fallback="mean"):
        super().__init__(scheme)
        if folds is None:
            if n_folds < 2:
                raise ConfigError("cross-validation needs at least 2 folds")
            if n_folds > pm.l:
                raise ConfigError(f"{n_folds} folds cannot be filled from {pm.l} rows")
            folds = kfold_ids(pm.l, n_folds, np.random.default_rng(seed))
        folds = np.asarray(folds, dtype=np.intp)
        if folds.shape != (pm.l,):
            raise ConfigError("need one fold label per row")
        labels = np.unique(folds)
        if labels.size < 2:
            raise ConfigError("cross-validation needs at least 2 non-empty folds")
        self.pm = pm
        self.fold_ids = folds
        self.n_folds = int(labels.size)
        self.blocks = [
            _Block(pm, np.flatnonzero(folds != p), np.flatnonzero(folds == p), fallback)
            for p in labels
        ]
        self.scale = 1.0 / self.n_folds


class HoldoutObjective(_BlockObjective):
    """Mean squared error on ``pm_val`` of the aggregate built on ``pm_fit``."""

    def __init__(self, pm_fit: PredictionMatrix, pm_val: PredictionMatrix, scheme, fallback="mean"):
        super().__init__(scheme)
        joined = PredictionMatrix(
            np.vstack([pm_fit.values, pm_val.values]),
            np.concatenate([pm_fit.responses, pm_val.responses]),
        )
        fit_idx = np.arange(pm_fit.l)
        val_idx = np.arange(pm_fit.l, joined.l)
        self.pm_fit = pm_fit
        self.pm_val = pm_val
        self.blocks = [_Block(joined, fit_idx, val_idx, fallback)]
        self.scale = 1.0 / pm_val.l


def cv_error(obj: CvObjective, h: float) -> float:
    return obj.value(h)


def cv_grad(obj: CvObjective, h: float, mode: str = "analytic", step: Optional[float] = None) -> float:
    return obj.grad(h, mode, step)


# --------------------------------------------------------------------------
# gradient descent


@dataclass(frozen=True)
class GdConfig:
    h0: float = 1.0
    lr: float = 0.1
    delta: float = 1e-6
    max_iter: int = 300
    grad_mode: str = "analytic"
    step: Optional[float] = None
    max_halvings: int = 20
    growth: float = 2.0

    def __post_init__(self):
        if not (self.h0 >= 0 and math.isfinite(self.h0)):
            raise ConfigError("h0 must be a non-negative finite number")
        if not self.lr > 0:
            raise ConfigError("learning rate must be positive")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.grad_mode not in ("analytic", "numerical"):
            raise ConfigError(f"unknown grad_mode {self.grad_mode!r}")
        if self.max_halvings < 0:
            raise ConfigError("max_halvings must be >= 0")
        if not self.growth >= 1.0:
            raise ConfigError("growth must be >= 1")


@dataclass(frozen=True)
class TraceStep:
    """One iterate: ``h``, objective, gradient, and the step size used to leave it.

    The next iterate is ``max(h - lr * grad, H_FLOOR)``; ``projected`` marks
    that the floor was applied. The final entry has ``lr = 0``.
    """

    h: float
    value: float
    grad: float
    lr: float = 0.0
    projected: bool = False


@dataclass
class GdResult:
    h_star: float
    value: float
    trace: list
    stop_reason: str
    n_iter: int
    seconds: float = 0.0

    @property
    def projected(self) -> bool:
        return any(step.projected for step in self.trace)


def _value_and_grad(obj, h, cfg):
    if hasattr(obj, "value_and_grad"):
        return obj.value_and_grad(h, cfg.grad_mode, cfg.step)
    value, grad = obj(h)
    return float(value), float(grad)


def _value(obj, h):
    return obj.value(h) if hasattr(obj, "value") else float(obj(h)[0])


def fit_bandwidth_gd(obj, cfg: GdConfig = GdConfig()) -> GdResult:
    """Gradient descent on ``h`` with step halving and positivity projection.

    Iterates ``h <- h - lr * dphi/dh`` while ``|dphi/dh| > delta``, for at
    most ``cfg.max_iter`` updates. A step that increases the objective is
    retried with half the step size, up to ``cfg.max_halvings`` times. The
    step size carries over between iterations and is multiplied by
    ``cfg.growth`` after a step accepted without halving (``growth=1`` keeps
    the plain fixed-rate iteration). Steps landing at or below zero are
    projected onto ``1e-8``. Every trace entry records the step size it used.

    ``obj`` is a :class:`CvObjective`/:class:`HoldoutObjective` or any
    callable returning ``(value, grad)``.

    Raises :class:`DivergedError` (carrying the trace) on a non-finite
    objective or gradient.
    """
    t0 = time.perf_counter()
    trace = []
    h = float(cfg.h0)
    lr = cfg.lr
    stop = "max_iter"
    n_iter = 0

    def checked(h):
        value, grad = _value_and_grad(obj, h, cfg)
        if not (math.isfinite(value) and math.isfinite(grad)):
            trace.append(TraceStep(h, value, grad))
            raise DivergedError(f"non-finite objective or gradient at h={h!r}", trace)
        return value, grad

    value, grad = checked(h)
    while True:
        if abs(grad) <= cfg.delta:
            stop = "converged"
            break
        if n_iter >= cfg.max_iter:
            break
        for attempt in range(cfg.max_halvings + 1):
            candidate = h - lr * grad
            projected = candidate < H_FLOOR
            h_new = max(candidate, H_FLOOR)
            new_value = _value(obj, h_new)
            if not math.isfinite(new_value):
                trace.append(TraceStep(h, value, grad, lr, projected))
                raise DivergedError(f"non-finite objective at h={h_new!r}", trace)
            if new_value <= value or attempt == cfg.max_halvings:
                break
            lr *= 0.5
        trace.append(TraceStep(h, value, grad, lr, projected))
        if attempt == 0:
            lr *= cfg.growth
        n_iter += 1
        if projected and h_new == h:
            stop = "projected"
            break
        h = h_new
        value, grad = checked(h)
    trace.append(TraceStep(h, value, grad))
    return GdResult(h, value, trace, stop, n_iter, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# grid search


@dataclass(frozen=True)
class GridConfig:
    h_min: float = 1e-10
    h_max: float = 10.0
    n_points: int = 500
    spacing: str = "linear"

    def __post_init__(self):
        if not (0 < self.h_min < self.h_max):
            raise ConfigError("grid needs 0 < h_min < h_max")
        if self.n_points < 2:
            raise ConfigError("grid needs at least 2 points")
        if self.spacing not in ("linear", "log"):
            raise ConfigError(f"unknown grid spacing {self.spacing!r}")

    def values(self) -> np.ndarray:
        if self.spacing == "linear":
            return np.linspace(self.h_min, self.h_max, self.n_points)
        return np.geomspace(self.h_min, self.h_max, self.n_points)


@dataclass
class GridResult:
    h_star: float
    value: float
    hs: np.ndarray
    errors: np.ndarray
    seconds: float = 0.0


@dataclass
class AlphaGridResult:
    alpha_star: float
    h_star: float
    value: float
    alphas: np.ndarray
    hs: np.ndarray
    table: np.ndarray = field(repr=False)
    seconds: float = 0.0


def fit_bandwidth_grid(obj, grid: GridConfig = GridConfig()) -> GridResult:
    """Evaluate the objective at every grid node; ties go to the smallest ``h``."""
    t0 = time.perf_counter()
    hs = grid.values() if isinstance(grid, GridConfig) else np.sort(np.asarray(grid, dtype=float))
    errors = np.array([_value(obj, float(h)) for h in hs])
    best = int(np.argmin(errors))
    return GridResult(float(hs[best]), float(errors[best]), hs, errors, time.perf_counter() - t0)


def fit_alpha_grid(obj, grid: GridConfig, M: int) -> AlphaGridResult:
    """Joint search over ``alpha in {1/M, ..., 1}`` and the ``h`` grid for relaxed COBRA.

    Ties prefer the larger ``alpha``, then the smaller ``h``.
    """
    if not isinstance(obj.scheme, CobraRelaxed):
        raise ConfigError("alpha search needs a cobra-relaxed objective")
    t0 = time.perf_counter()
    hs = grid.values() if isinstance(grid, GridConfig) else np.sort(np.asarray(grid, dtype=float))
    alphas = np.arange(M, 0, -1) / M
    table = np.empty((len(alphas), len(hs)))
    for a, alpha in enumerate(alphas):
        sub = obj.with_scheme(CobraRelaxed(h=1.0, alpha=float(alpha)))
        for k, h in enumerate(hs):
            table[a, k] = sub.value(float(h))
    # alphas descend and hs ascend, so the first flat argmin is the preferred tie
    a, k = np.unravel_index(int(np.argmin(table)), table.shape)
    return AlphaGridResult(
        float(alphas[a]), float(hs[k]), float(table[a, k]), alphas, hs, table,
        time.perf_counter() - t0,
    )
