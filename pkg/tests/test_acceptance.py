"""Acceptance criteria, each run at its stated tolerance.

Every test reports a single PASS/FAIL line (shown in the terminal summary)
and then asserts the same condition.
"""

import os
import time

import numpy as np
import pytest

from kcobra.aggregation import CobraFull, CobraRelaxed, KernelPerCoord, KernelVector, PredictionMatrix, weight_matrix
from kcobra.bandwidth import CvObjective
from kcobra.datagen import gen_model
from kcobra.harness import ExperimentConfig, aggregation_size_trend, emit_results, run_experiment, time_optimizers
from kcobra.kernels import Bandwidth, KernelSpec
from kcobra.learners import KNN

MODELS = (1, 3, 5, 8)
LEARNERS = ("ridge", "lasso", "knn", "tree", "rf")


@pytest.fixture(scope="module")
def benchmark_tables():
    tables = {}
    for model in MODELS:
        cfg = ExperimentConfig.from_dict({
            "source": {"type": "synthetic", "model": model, "regime": "uncorrelated"},
            "schemes": [{"name": "cobra-relaxed", "label": "cobra"},
                        {"name": "kernel", "kernel": "gaussian", "label": "gaussian"}],
            "replications": 20,
            "seed": 0,
        })
        tables[model] = run_experiment(cfg, workers=os.cpu_count())
    return tables


def test_criterion_1_aggregation_dominance(benchmark_tables, acceptance):
    parts, ok = [], True
    for model, table in benchmark_tables.items():
        m = table.means()
        best = min(m[n] for n in LEARNERS)
        ratio = m["gaussian"] / best
        ok &= ratio <= 1.05
        parts.append(f"model {model} gaussian/best={ratio:.3f}")
    acceptance("1 aggregation dominance (ratio <= 1.05)", ok, "; ".join(parts))
    assert ok


def test_criterion_2_model1_magnitude(benchmark_tables, acceptance):
    g = benchmark_tables[1].means()["gaussian"]
    ok = 0.010 <= g <= 0.035
    acceptance("2 model 1 gaussian MSE in [0.010, 0.035]", ok, f"mean MSE {g:.4f}")
    assert ok


def test_criterion_3_kernel_beats_cobra(benchmark_tables, acceptance):
    wins, parts = 0, []
    for model, table in benchmark_tables.items():
        m = table.means()
        wins += m["gaussian"] <= m["cobra"]
        parts.append(f"model {model} {m['gaussian']:.4f} vs {m['cobra']:.4f}")
    ok = wins >= 3
    acceptance("3 gaussian <= cobra on >= 3 of 4 models", ok, f"{wins}/4 ({'; '.join(parts)})")
    assert ok


def test_criterion_4_gradient(acceptance):
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(100):
        ell, M = int(rng.integers(2, 51)), int(rng.integers(1, 6))
        pm = PredictionMatrix(rng.normal(size=(ell, M)), rng.normal(size=ell))
        kind = ("gaussian", "exp4")[i % 2]
        scheme = KernelVector(KernelSpec(kind), Bandwidth(1.0, "multiplicative"))
        obj = CvObjective(pm, scheme, n_folds=min(5, ell), seed=i)
        h = float(rng.uniform(0.01, 10.0))
        a, fd = obj.grad(h), obj.numerical_grad(h)
        worst = max(worst, abs(a - fd) / max(abs(fd), 1e-8))
    ok = worst <= 1e-4
    acceptance("4 analytic vs finite-difference gradient", ok, f"max relative error {worst:.2e}")
    assert ok


def test_criterion_5_gd_vs_grid(acceptance):
    cfg = ExperimentConfig.from_dict({"source": {"type": "synthetic", "model": 1}, "seed": 5})
    ok, worst_ratio, slow = True, 0.0, 0
    for rep in range(10):
        r = time_optimizers(cfg, rep)
        ratio = r["gd_cv_error"] / r["grid_cv_error"]
        worst_ratio = max(worst_ratio, ratio)
        slow += r["gd_seconds"] >= r["grid_seconds"]
        ok &= ratio <= 1.05 and r["gd_seconds"] < r["grid_seconds"]
    acceptance("5 GD vs 500-point grid", ok,
               f"worst GD/grid CV ratio {worst_ratio:.4f}; GD slower on {slow}/10")
    assert ok


def test_criterion_6_oracles(acceptance):
    rng = np.random.default_rng(6)
    P = rng.normal(size=(80, 4))
    Q = rng.normal(scale=1.5, size=(10_000, 4))
    norm_err = 0.0
    for s in (CobraFull(0.7), CobraRelaxed(0.7, 0.5),
              KernelVector(KernelSpec("gaussian"), Bandwidth(2.0, "multiplicative")),
              KernelVector(KernelSpec("epanechnikov"), Bandwidth(1.5)),
              KernelPerCoord(KernelSpec("triweight"), Bandwidth(0.8))):
        W = weight_matrix(s, P, Q)
        tot = W.sum(axis=1)
        zero_rows_ok = np.all(W[tot == 0] == 0)
        norm_err = max(norm_err, np.abs(tot[tot > 0] - 1).max(initial=0.0), 0.0 if zero_rows_ok else 1.0)
    norm_ok = norm_err <= 1e-12

    equiv_ok = all(np.array_equal(weight_matrix(CobraFull(h), P, Q[:2000]),
                                  weight_matrix(CobraRelaxed(h, 1.0), P, Q[:2000]))
                   for h in (0.05, 0.3, 1.0, 3.0))

    fold_err = 0.0
    for t in range(20):
        Pm, y = rng.normal(size=(12, 3)), rng.normal(size=12)
        folds = rng.permutation(np.arange(12) % 3)
        h = float(rng.uniform(0.1, 5))
        obj = CvObjective(PredictionMatrix(Pm, y),
                          KernelVector(KernelSpec("gaussian"), Bandwidth(h, "multiplicative")), folds=folds)
        total = 0.0
        for p in range(3):
            tr = np.flatnonzero(folds != p)
            for j in np.flatnonzero(folds == p):
                num = den = 0.0
                for i in tr:
                    w = np.exp(-h * sum((Pm[i, c] - Pm[j, c]) ** 2 for c in range(3)) / 2)
                    num += w * y[i]
                    den += w
                g = num / den if den > 0 else float(np.mean(y[tr]))
                total += (g - y[j]) ** 2
        fold_err = max(fold_err, abs(obj.value(h) - total / 3))
    fold_ok = fold_err <= 1e-12

    knn_bad = 0
    for _ in range(10):
        n, d = int(rng.integers(10, 201)), int(rng.integers(1, 6))
        X, yk = np.round(rng.normal(size=(n, d)), 1), rng.normal(size=n)
        Qk = np.round(rng.normal(size=(25, d)), 1)
        pred = KNN(k=5, standardize=False).fit(X, yk).predict(Qk)
        for q, got in zip(Qk, pred):
            dist = [sum((float(a) - float(b)) ** 2 for a, b in zip(X[i], q)) for i in range(n)]
            nearest = sorted(range(n), key=lambda i: (dist[i], i))[:5]
            knn_bad += abs(got - np.mean(yk[nearest])) > 1e-12
    knn_ok = knn_bad == 0

    ok = norm_ok and equiv_ok and fold_ok and knn_ok
    acceptance("6 oracle suites", ok,
               f"normalization err {norm_err:.1e}; cobra equivalence {equiv_ok}; "
               f"fold oracle err {fold_err:.1e}; knn mismatches {knn_bad}")
    assert ok


def test_criterion_7_size_trend(acceptance):
    out = aggregation_size_trend(model_id=1, ells=(100, 200, 400), replications=10, seed=0)
    med = out["median"]
    ok = bool(np.all(np.diff(med) <= 0))
    acceptance("7 median MSE non-increasing in l", ok,
               "medians " + ", ".join(f"l={e}: {m:.4f}" for e, m in zip(out["ells"], med)))
    assert ok


def test_criterion_8_determinism(acceptance):
    cfg = ExperimentConfig.from_dict({
        "source": {"type": "synthetic", "model": 3, "n": 300},
        "replications": 4,
        "seed": 11,
        "schemes": [{"name": "cobra"}, {"name": "cobra-relaxed"},
                    {"name": "kernel", "kernel": "gaussian"},
                    {"name": "kernel", "kernel": "epanechnikov"},
                    {"name": "kernel-percoord", "kernel": "exp4"}],
    })
    t0 = time.perf_counter()
    outs = [emit_results(run_experiment(cfg, workers=w), "json") for w in (1, 1, 2, 3)]
    ok = all(o.encode() == outs[0].encode() for o in outs)
    acceptance("8 byte-identical JSON across runs and worker counts", ok,
               f"{len(outs)} runs, {len(outs[0])} bytes, {time.perf_counter() - t0:.1f}s")
    assert ok
