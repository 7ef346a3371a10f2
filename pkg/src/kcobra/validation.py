"""Quick self-checks of core invariants, used by ``kcobra validate``.

Each check builds small random instances, compares the library against a
direct re-computation and returns a :class:`CheckResult`. They are meant
as a smoke test of an installation; the test suite covers the same ground
in more depth.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .aggregation import (
    CobraFull,
    CobraRelaxed,
    KernelPerCoord,
    KernelVector,
    PredictionMatrix,
    weight_matrix,
)
from .bandwidth import CvObjective
from .datagen import gen_model
from .kernels import KERNEL_NAMES, Bandwidth, KernelSpec, kernel_eval
from .learners import KNN

__all__ = ["CheckResult", "CHECKS", "run_checks"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.2f}s)"


def check_kernel_peak(rng):
    worst = 0.0
    for kind in KERNEL_NAMES:
        spec = KernelSpec(kind)
        peak = kernel_eval(spec, np.zeros(3))
        vals = [kernel_eval(spec, z) for z in rng.normal(size=(200, 3))]
        worst = max(worst, abs(peak - 1.0), max(vals) - peak, -min(vals))
    return worst == 0.0, f"max violation {worst:.3g}"


def check_weight_normalization(rng, n_queries=10_000):
    P = rng.normal(size=(60, 4))
    Q = rng.normal(scale=1.5, size=(n_queries, 4))
    schemes = [
        CobraFull(0.5),
        CobraRelaxed(0.5, 0.5),
        KernelVector(KernelSpec("gaussian"), Bandwidth(3.0, "multiplicative")),
        KernelVector(KernelSpec("epanechnikov"), Bandwidth(1.0)),
        KernelPerCoord(KernelSpec("biweight"), Bandwidth(0.7)),
    ]
    worst = 0.0
    for s in schemes:
        W = weight_matrix(s, P, Q)
        tot = W.sum(axis=1)
        err = np.where(tot > 0, np.abs(tot - 1.0), 0.0).max()
        worst = max(worst, err, -W.min())
    return worst < 1e-12, f"max |sum - 1| {worst:.3g}"


def check_cobra_equivalence(rng):
    P = rng.normal(size=(40, 3))
    Q = rng.normal(size=(500, 3))
    bad = 0
    for h in (0.1, 0.5, 1.0, 2.0):
        bad += int(np.any(weight_matrix(CobraFull(h), P, Q) != weight_matrix(CobraRelaxed(h, 1.0), P, Q)))
    return bad == 0, f"{bad} bandwidths differ"


def check_cv_oracle(rng):
    worst = 0.0
    for _ in range(20):
        P = rng.normal(size=(12, 3))
        y = rng.normal(size=12)
        folds = rng.permutation(np.arange(12) % 3)
        h = float(rng.uniform(0.1, 5.0))
        scheme = KernelVector(KernelSpec("gaussian"), Bandwidth(h, "multiplicative"))
        obj = CvObjective(PredictionMatrix(P, y), scheme, folds=folds)
        total = 0.0
        for p in range(3):
            tr, va = folds != p, folds == p
            for j in np.flatnonzero(va):
                k = np.exp(-h * ((P[tr] - P[j]) ** 2).sum(axis=1) / 2.0)
                g = (k * y[tr]).sum() / k.sum() if k.sum() > 0 else y[tr].mean()
                total += (g - y[j]) ** 2
        worst = max(worst, abs(obj.value(h) - total / 3))
    return worst <= 1e-12, f"max abs diff {worst:.3g}"


def check_gradient(rng, n=100):
    worst = 0.0
    for _ in range(n):
        l, M = int(rng.integers(10, 51)), int(rng.integers(1, 6))
        pm = PredictionMatrix(rng.normal(size=(l, M)), rng.normal(size=l))
        obj = CvObjective(pm, KernelVector(KernelSpec("gaussian"), Bandwidth(1.0, "multiplicative")),
                          n_folds=5, seed=int(rng.integers(1 << 30)))
        h = float(rng.uniform(0.01, 10.0))
        a, fd = obj.grad(h), obj.numerical_grad(h)
        worst = max(worst, abs(a - fd) / max(abs(fd), 1e-8))
    return worst <= 1e-4, f"max relative error {worst:.3g}"


def check_knn_bruteforce(rng):
    mism = 0
    for _ in range(10):
        n, d = int(rng.integers(20, 201)), int(rng.integers(1, 6))
        X = np.round(rng.normal(size=(n, d)), 1)
        y = rng.normal(size=n)
        Q = np.round(rng.normal(size=(30, d)), 1)
        m = KNN(k=5, standardize=False).fit(X, y)
        for q, got in zip(Q, m.predict(Q)):
            dist = [sum((float(a) - float(b)) ** 2 for a, b in zip(X[i], q)) for i in range(n)]
            order = sorted(range(n), key=lambda i: (dist[i], i))[:5]
            mism += abs(got - float(np.mean(y[order]))) > 1e-12
    return mism == 0, f"{mism} mismatches"


def check_generator_determinism(rng):
    seed = int(rng.integers(1 << 30))
    a, b = gen_model(1, seed=seed, n=100), gen_model(1, seed=seed, n=100)
    same = np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    return same, "identical" if same else "datasets differ"


CHECKS = {
    "kernel-peak": check_kernel_peak,
    "weight-normalization": check_weight_normalization,
    "cobra-equivalence": check_cobra_equivalence,
    "cv-fold-oracle": check_cv_oracle,
    "gradient-vs-finite-difference": check_gradient,
    "knn-bruteforce": check_knn_bruteforce,
    "generator-determinism": check_generator_determinism,
}


def run_checks(seed=0, names=None):
    out = []
    for name in names or CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = CHECKS[name](np.random.default_rng(seed))
        except Exception as exc:  # noqa: BLE001 - report, don't crash the suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return out
