"""Kernel family used to weight agreement between prediction vectors.

All kernels map a difference vector ``z`` in R^M to [0, 1] and peak at
``K(0) = 1``:

==================  ===============================================
name                K(z)
==================  ===============================================
naive               prod_i 1{|z_i| <= 1}
epanechnikov        (1 - |z|^2) 1{|z| <= 1}
biweight            (1 - |z|^2)^2 1{|z| <= 1}
triweight           (1 - |z|^2)^3 1{|z| <= 1}
compact-gaussian    exp(-|z|^2 / (2 sigma^2)) 1{|z| <= rho1}
gaussian            exp(-|z|^2 / (2 sigma^2))
exp4                exp(-|z|^4 / (2 sigma^4))
==================  ===============================================

A bandwidth ``h`` enters in one of two ways. ``divisive`` evaluates
``K(z / h)`` and works for every kernel. ``multiplicative`` evaluates
``exp(-h |z|^2 / (2 sigma^2))`` (gaussian) or ``exp(-h |z|^4 / (2 sigma^4))``
(exp4); it is the form whose h-derivative drives gradient descent.

The regularity bounds these kernels satisfy (bounded by 1, bounded below on
a ball, integrable radial envelope) hold by construction and are not
checked at runtime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidCombinationError, NotDifferentiableError

__all__ = [
    "KERNEL_NAMES",
    "KernelSpec",
    "Bandwidth",
    "kernel_eval",
    "kernel_eval_h",
    "kernel_grad_h",
    "log_kernel_h",
    "dlog_kernel_dh",
]

KERNEL_NAMES = (
    "naive",
    "epanechnikov",
    "biweight",
    "triweight",
    "compact-gaussian",
    "gaussian",
    "exp4",
)
SMOOTH_KERNELS = frozenset({"gaussian", "exp4"})
PARAMETRIZATIONS = ("divisive", "multiplicative")


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    sigma: float = 1.0
    rho1: float = 3.0

    def __post_init__(self):
        if self.kind not in KERNEL_NAMES:
            raise ValueError(f"unknown kernel {self.kind!r}; expected one of {KERNEL_NAMES}")
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError("sigma must be positive")
        if not (self.rho1 > 0 and np.isfinite(self.rho1)):
            raise ValueError("rho1 must be positive")

    @property
    def smooth(self) -> bool:
        """True for kernels with an analytic multiplicative h-derivative."""
        return self.kind in SMOOTH_KERNELS

    @property
    def compact(self) -> bool:
        return self.kind not in SMOOTH_KERNELS


@dataclass(frozen=True)
class Bandwidth:
    h: float
    parametrization: str = "divisive"

    def __post_init__(self):
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ValueError(f"bandwidth must be positive and finite, got {self.h!r}")
        if self.parametrization not in PARAMETRIZATIONS:
            raise ValueError(f"unknown parametrization {self.parametrization!r}")

    def with_h(self, h: float) -> "Bandwidth":
        return Bandwidth(float(h), self.parametrization)


def _as_diff(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        z = z[None]
    if not np.all(np.isfinite(z)):
        raise ValueError("kernel input must be finite")
    return z


def _stats(z: np.ndarray):
    return np.sum(z * z, axis=-1), np.max(np.abs(z), axis=-1)


def _profile(spec: KernelSpec, sq, maxabs):
    """K evaluated from the squared norm and the max-abs coordinate of z."""
    kind = spec.kind
    if kind == "naive":
        return np.where(maxabs <= 1.0, 1.0, 0.0)
    if kind in ("epanechnikov", "biweight", "triweight"):
        power = {"epanechnikov": 1, "biweight": 2, "triweight": 3}[kind]
        return np.where(sq <= 1.0, np.maximum(1.0 - sq, 0.0) ** power, 0.0)
    if kind == "compact-gaussian":
        inside = sq <= spec.rho1 * spec.rho1
        return np.where(inside, np.exp(-sq / (2.0 * spec.sigma**2)), 0.0)
    if kind == "gaussian":
        return np.exp(-sq / (2.0 * spec.sigma**2))
    return np.exp(-(sq * sq) / (2.0 * spec.sigma**4))


def _check_pair(spec: KernelSpec, bw: Bandwidth):
    if bw.parametrization == "multiplicative" and not spec.smooth:
        raise InvalidCombinationError(
            f"multiplicative bandwidth is only defined for gaussian/exp4, not {spec.kind}"
        )


def kernel_eval(spec: KernelSpec, z) -> np.ndarray | float:
    """Evaluate ``K(z)`` on the last axis of ``z``.

    Returns a float for a single vector and an array otherwise.
    """
    z = _as_diff(z)
    out = _profile(spec, *_stats(z))
    return float(out) if out.ndim == 0 else out


def log_kernel_h(spec: KernelSpec, bw: Bandwidth, sq, maxabs=None) -> np.ndarray:
    """``log K_h`` computed from squared norms (and max-abs for ``naive``).

    Exponential kernels are returned as their exponent so that large ``h``
    never underflows; compact kernels give ``-inf`` outside the support.
    """
    _check_pair(spec, bw)
    sq = np.asarray(sq, dtype=float)
    h = bw.h
    if bw.parametrization == "multiplicative":
        if spec.kind == "gaussian":
            return -h * sq / (2.0 * spec.sigma**2)
        return -h * (sq * sq) / (2.0 * spec.sigma**4)
    sq_s = sq / (h * h)
    if spec.kind == "gaussian":
        return -sq_s / (2.0 * spec.sigma**2)
    if spec.kind == "exp4":
        return -(sq_s * sq_s) / (2.0 * spec.sigma**4)
    if spec.kind == "compact-gaussian":
        return np.where(sq_s <= spec.rho1**2, -sq_s / (2.0 * spec.sigma**2), -np.inf)
    if spec.kind == "naive":
        if maxabs is None:
            raise ValueError("naive kernel needs the max-abs coordinate")
        return np.where(np.asarray(maxabs, dtype=float) / h <= 1.0, 0.0, -np.inf)
    with np.errstate(divide="ignore"):
        return np.log(_profile(spec, sq_s, None))


def kernel_eval_h(spec: KernelSpec, bw: Bandwidth, z) -> np.ndarray | float:
    """Evaluate ``K_h(z)`` under the bandwidth's parametrization."""
    _check_pair(spec, bw)
    z = _as_diff(z)
    sq, maxabs = _stats(z)
    if bw.parametrization == "divisive":
        out = _profile(spec, sq / bw.h**2, maxabs / bw.h)
    else:
        out = np.exp(log_kernel_h(spec, bw, sq))
    return float(out) if out.ndim == 0 else out


def dlog_kernel_dh(spec: KernelSpec, bw: Bandwidth, sq) -> np.ndarray:
    """``d log K_h / dh`` for multiplicative gaussian/exp4 (independent of h)."""
    if not spec.smooth or bw.parametrization != "multiplicative":
        raise NotDifferentiableError(
            f"no analytic h-derivative for {spec.kind} with {bw.parametrization} bandwidth"
        )
    sq = np.asarray(sq, dtype=float)
    if spec.kind == "gaussian":
        return -sq / (2.0 * spec.sigma**2)
    return -(sq * sq) / (2.0 * spec.sigma**4)


def kernel_grad_h(spec: KernelSpec, bw: Bandwidth, z) -> np.ndarray | float:
    """Analytic ``dK_h/dh``; only gaussian/exp4 with multiplicative bandwidth.

    Raises :class:`NotDifferentiableError` otherwise, so callers can fall
    back to a finite-difference gradient.
    """
    z = _as_diff(z)
    sq, _ = _stats(z)
    slope = dlog_kernel_dh(spec, bw, sq)
    out = slope * np.exp(log_kernel_h(spec, bw, sq))
    return float(out) if out.ndim == 0 else out
