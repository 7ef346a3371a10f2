"""Consensual aggregation: weights over the aggregation sample and the combiner.

Given base-machine predictions ``P`` (l, M) on the aggregation sample with
responses ``Y`` and the predictions ``q`` (M,) at a query point, every
scheme produces non-negative weights ``W`` over the ``l`` rows and the
aggregate prediction ``sum_i W_i Y_i``:

* ``CobraFull(h)``: row i counts iff ``|P[i, m] - q[m]| < h`` for every m.
* ``CobraRelaxed(h, alpha)``: row i counts iff at least ``alpha * M``
  coordinates agree within ``h``.
* ``KernelVector(spec, bw)``: ``W_i ∝ K_h(P[i] - q)`` on the whole vector.
* ``KernelPerCoord(spec, bw)``: ``W_i ∝ sum_m K_h(P[i, m] - q[m])`` with a
  univariate kernel per coordinate.

Weights are normalised to sum to one. When every raw mass is zero the
weights are all zero and the prediction falls back to ``mean(Y)`` (or to 0
with ``fallback="zero"``, the literal 0/0 = 0 convention), with the query
flagged as having no consensus.

Predictions are used raw; no rescaling happens before kernel evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import NotDifferentiableError
from .kernels import Bandwidth, KernelSpec, dlog_kernel_dh, log_kernel_h
from .learners import predict_all

__all__ = [
    "PredictionMatrix",
    "CobraFull",
    "CobraRelaxed",
    "KernelVector",
    "KernelPerCoord",
    "SCHEME_NAMES",
    "PairStats",
    "log_mass",
    "weight_matrix",
    "weights",
    "combine",
    "AggregatorModel",
    "aggregate_predict",
    "aggregate_predict_batch",
]

SCHEME_NAMES = ("cobra", "cobra-relaxed", "kernel", "kernel-percoord")
FALLBACKS = ("mean", "zero")


@dataclass(frozen=True, eq=False)
class PredictionMatrix:
    """Base-machine predictions on the aggregation sample, with responses."""

    values: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        responses = np.asarray(self.responses, dtype=float).reshape(-1)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"prediction matrix must be (l, M) with l, M >= 1, got {values.shape}")
        if responses.shape[0] != values.shape[0]:
            raise ValueError("responses must align with prediction rows")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(responses))):
            raise ValueError("prediction matrix entries must be finite")
        values.setflags(write=False)
        responses.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "responses", responses)

    @property
    def l(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]

    def subset(self, idx) -> "PredictionMatrix":
        idx = np.asarray(idx, dtype=np.intp)
        return PredictionMatrix(self.values[idx], self.responses[idx])


@dataclass(frozen=True)
class CobraFull:
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")

    def with_h(self, h):
        return replace(self, h=float(h))


@dataclass(frozen=True)
class CobraRelaxed:
    h: float
    alpha: float = 1.0

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    def with_h(self, h):
        return replace(self, h=float(h))

    def required(self, M: int) -> int:
        """Smallest number of agreeing coordinates satisfying ``count >= alpha M``."""
        return max(1, math.ceil(self.alpha * M - 1e-9))


@dataclass(frozen=True)
class KernelVector:
    spec: KernelSpec
    bw: Bandwidth

    @property
    def h(self):
        return self.bw.h

    def with_h(self, h):
        return replace(self, bw=self.bw.with_h(h))


@dataclass(frozen=True)
class KernelPerCoord:
    spec: KernelSpec
    bw: Bandwidth

    @property
    def h(self):
        return self.bw.h

    def with_h(self, h):
        return replace(self, bw=self.bw.with_h(h))


class PairStats:
    """Difference statistics between query predictions and aggregation rows.

    Computed once and reused for every bandwidth, which is what makes grid
    search and gradient descent over ``h`` cheap.
    """

    def __init__(self, rows, queries):
        rows = np.asarray(rows, dtype=float)
        queries = np.asarray(queries, dtype=float)
        if queries.ndim == 1:
            queries = queries[None, :]
        if rows.shape[1] != queries.shape[1]:
            raise ValueError(
                f"query predictions have {queries.shape[1]} machines, expected {rows.shape[1]}"
            )
        self.diff = queries[:, None, :] - rows[None, :, :]

    @cached_property
    def absdiff(self):
        return np.abs(self.diff)

    @cached_property
    def sq(self):
        return np.sum(self.diff * self.diff, axis=-1)

    @cached_property
    def maxabs(self):
        return np.max(self.absdiff, axis=-1)

    @cached_property
    def coord_sq(self):
        return self.diff * self.diff


def _logsumexp_last(a):
    mx = np.max(a, axis=-1, keepdims=True)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.sum(np.exp(a - safe), axis=-1)) + safe[..., 0]


def log_mass(scheme, stats: PairStats) -> np.ndarray:
    """Log of the unnormalised weight of every (query, row) pair; -inf means 0."""
    if isinstance(scheme, CobraFull):
        ok = np.all(stats.absdiff < scheme.h, axis=-1)
        return np.where(ok, 0.0, -np.inf)
    if isinstance(scheme, CobraRelaxed):
        count = np.sum(stats.absdiff < scheme.h, axis=-1)
        return np.where(count >= scheme.required(stats.diff.shape[-1]), 0.0, -np.inf)
    if isinstance(scheme, KernelVector):
        maxabs = stats.maxabs if scheme.spec.kind == "naive" else None
        return log_kernel_h(scheme.spec, scheme.bw, stats.sq, maxabs)
    if isinstance(scheme, KernelPerCoord):
        maxabs = stats.absdiff if scheme.spec.kind == "naive" else None
        per = log_kernel_h(scheme.spec, scheme.bw, stats.coord_sq, maxabs)
        return _logsumexp_last(per)
    raise TypeError(f"unknown weight scheme {scheme!r}")


def dlog_mass_dh(scheme, stats: PairStats) -> np.ndarray:
    """``d log(mass) / dh`` for smooth multiplicative kernel schemes."""
    if isinstance(scheme, KernelVector):
        return dlog_kernel_dh(scheme.spec, scheme.bw, stats.sq)
    if isinstance(scheme, KernelPerCoord):
        slope = dlog_kernel_dh(scheme.spec, scheme.bw, stats.coord_sq)
        per = log_kernel_h(scheme.spec, scheme.bw, stats.coord_sq)
        share = np.exp(per - _logsumexp_last(per)[..., None])
        return np.sum(share * slope, axis=-1)
    raise NotDifferentiableError(f"{type(scheme).__name__} has no analytic h-derivative")


def normalize_log_mass(lm: np.ndarray) -> np.ndarray:
    """Turn log masses (q, l) into weights; rows without mass become all-zero."""
    mx = np.max(lm, axis=-1, keepdims=True)
    has_mass = np.isfinite(mx)
    w = np.exp(lm - np.where(has_mass, mx, 0.0))
    total = np.sum(w, axis=-1, keepdims=True)
    return np.where(has_mass, w / np.where(has_mass, total, 1.0), 0.0)


def weight_matrix(scheme, rows, queries) -> np.ndarray:
    """Normalised weights, one row per query and one column per aggregation row."""
    return normalize_log_mass(log_mass(scheme, PairStats(rows, queries)))


def weights(scheme, pm: PredictionMatrix, query_preds) -> np.ndarray:
    """Weights over the ``l`` rows of ``pm`` for a single query prediction vector."""
    q = np.asarray(query_preds, dtype=float).reshape(-1)
    if q.shape[0] != pm.M:
        raise ValueError(f"query has {q.shape[0]} predictions, expected {pm.M}")
    return weight_matrix(scheme, pm.values, q[None, :])[0]


def _fallback_value(responses, fallback):
    if fallback == "mean":
        return float(np.mean(responses))
    if fallback == "zero":
        return 0.0
    raise ValueError(f"unknown fallback {fallback!r}; expected one of {FALLBACKS}")


def combine_from_weights(W, responses, fallback="mean"):
    """Weighted means of ``responses`` plus a flag for rows with no consensus."""
    no_consensus = ~np.any(W > 0, axis=-1)
    pred = np.sum(W * responses, axis=-1)
    pred = np.where(no_consensus, _fallback_value(responses, fallback), pred)
    return pred, no_consensus


def combine(scheme, pm: PredictionMatrix, query_preds, fallback="mean"):
    """Aggregate predictions for query prediction rows ``(q, M)``.

    Returns ``(predictions, no_consensus)``.
    """
    W = weight_matrix(scheme, pm.values, query_preds)
    return combine_from_weights(W, pm.responses, fallback)


@dataclass(frozen=True, eq=False)
class AggregatorModel:
    """Fitted base machines, their aggregation-sample predictions and a scheme."""

    learners: tuple
    pm: PredictionMatrix
    scheme: object
    fallback: str = "mean"

    def __post_init__(self):
        object.__setattr__(self, "learners", tuple(self.learners))
        if len(self.learners) != self.pm.M:
            raise ValueError(f"{len(self.learners)} learners but {self.pm.M} prediction columns")
        if self.fallback not in FALLBACKS:
            raise ValueError(f"unknown fallback {self.fallback!r}")

    def predict_with_flags(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        return combine(self.scheme, self.pm, predict_all(self.learners, X), self.fallback)

    def predict(self, X) -> np.ndarray:
        return self.predict_with_flags(X)[0]


def aggregate_predict(model: AggregatorModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("aggregate_predict expects one feature vector")
    return float(model.predict(x[None, :])[0])


def aggregate_predict_batch(model: AggregatorModel, points) -> np.ndarray:
    return model.predict(points)
