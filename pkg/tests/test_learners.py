import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kcobra.data import Dataset
from kcobra.learners import (
    KNN,
    LEARNERS,
    Lasso,
    NotFittedError,
    RandomForest,
    RegressionTree,
    Ridge,
    fit,
    make_learner,
    predict,
    predict_all,
)
from kcobra.learners.base import kfold_ids
from kcobra.learners.linear import _lasso_objective, lasso_cd


def _toy(rng, n=80, d=4):
    X = rng.uniform(-1, 1, size=(n, d))
    y = X[:, 0] ** 2 + np.sin(3 * X[:, 1]) + 0.1 * rng.normal(size=n)
    return X, y


class TestRidge:
    def test_recovers_line(self):
        x = np.linspace(-1, 1, 20)[:, None]
        m = Ridge(lam=0.0).fit(x, 2 * x[:, 0] + 1)
        assert m.coef_[0] == pytest.approx(2.0, abs=1e-8)
        assert m.intercept_ == pytest.approx(1.0, abs=1e-8)

    def test_least_squares_oracle(self, rng):
        X = rng.normal(size=(50, 3))
        y = X @ [1.0, -2.0, 0.5] + 3 + rng.normal(size=50)
        m = Ridge(lam=0.0).fit(X, y)
        A = np.column_stack([X, np.ones(50)])
        sol = np.linalg.lstsq(A, y, rcond=None)[0]
        np.testing.assert_allclose(np.r_[m.coef_, m.intercept_], sol, atol=1e-10)

    def test_huge_penalty_gives_mean(self, rng):
        X = rng.normal(size=(40, 3))
        y = rng.normal(size=40)
        m = Ridge(lam=1e12).fit(X, y)
        np.testing.assert_allclose(m.predict(rng.normal(size=(5, 3))), y.mean(), atol=1e-9)

    def test_penalised_closed_form(self, rng):
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        lam = 0.3
        m = Ridge(lam=lam).fit(X, y)
        Xs = (X - X.mean(0)) / X.std(0)
        beta = np.linalg.solve(Xs.T @ Xs / 30 + lam * np.eye(2), Xs.T @ (y - y.mean()) / 30)
        np.testing.assert_allclose(m.coef_, beta / X.std(0), atol=1e-12)

    def test_cv_picks_from_grid(self, rng):
        X, y = _toy(rng)
        m = Ridge().fit(X, y, seed=1)
        assert m.lam_ in m.lambdas
        assert m.cv_errors_.shape == (50,)
        assert m.lambdas.min() == pytest.approx(1e-4) and m.lambdas.max() == pytest.approx(1e2)

    def test_collinear_columns(self, rng):
        x = rng.normal(size=(30, 1))
        m = Ridge(lam=0.0).fit(np.hstack([x, x]), 3 * x[:, 0])
        np.testing.assert_allclose(m.predict(np.hstack([x, x])), 3 * x[:, 0], atol=1e-8)


class TestLasso:
    def test_large_penalty_zero(self, rng):
        X = rng.normal(size=(40, 5))
        y = rng.normal(size=40)
        Xs = (X - X.mean(0)) / X.std(0)
        lam_max = np.max(np.abs(Xs.T @ (y - y.mean()))) / 40
        m = Lasso(lam=lam_max).fit(X, y)
        assert np.all(m.coef_ == 0.0)
        assert m.intercept_ == pytest.approx(y.mean())

    def test_sparse_recovery(self, rng):
        X = rng.normal(size=(200, 10))
        y = 3 * X[:, 0] - 2 * X[:, 3] + 0.05 * rng.normal(size=200)
        m = Lasso().fit(X, y, seed=0)
        assert abs(m.coef_[0] - 3) < 0.1 and abs(m.coef_[3] + 2) < 0.1
        assert np.max(np.abs(np.delete(m.coef_, [0, 3]))) < 0.05

    def test_objective_monotone_over_sweeps(self, rng):
        for trial in range(20):
            X = np.asfortranarray(rng.normal(size=(60, 8)))
            y = X @ rng.normal(size=8) + rng.normal(size=60)
            y = y - y.mean()
            lam = float(rng.uniform(0.01, 0.5))
            beta = np.zeros(8)
            hist = np.full(200, np.nan)
            sweeps = lasso_cd(X, y, lam, beta, 1e-12, 200, hist)
            h = hist[:sweeps]
            assert np.all(np.diff(h) <= 1e-12 * np.abs(h[:-1]))
            assert h[-1] == pytest.approx(_lasso_objective(X, y, beta, lam))

    def test_kkt_conditions(self, rng):
        X = np.asfortranarray(rng.normal(size=(80, 6)))
        y = rng.normal(size=80)
        y -= y.mean()
        lam = 0.05
        beta = np.zeros(6)
        lasso_cd(X, y, lam, beta, 1e-12, 10_000, np.empty(0))
        grad = X.T @ (y - X @ beta) / 80
        active = beta != 0
        np.testing.assert_allclose(grad[active], lam * np.sign(beta[active]), atol=1e-8)
        assert np.all(np.abs(grad[~active]) <= lam + 1e-8)


class TestKNN:
    def test_k1_returns_own_response(self, rng):
        X, y = _toy(rng)
        m = KNN(k=1).fit(X, y)
        np.testing.assert_array_equal(m.predict(X), y)

    def test_bruteforce_with_ties(self, rng):
        for _ in range(15):
            n, d = int(rng.integers(10, 201)), int(rng.integers(1, 5))
            X = np.round(rng.normal(size=(n, d)), 1)
            y = rng.normal(size=n)
            k = int(rng.integers(1, 8))
            m = KNN(k=k, standardize=False).fit(X, y)
            Q = np.round(rng.normal(size=(25, d)), 1)
            for q, got in zip(Q, m.predict(Q)):
                dist = [sum((float(a) - float(b)) ** 2 for a, b in zip(X[i], q)) for i in range(n)]
                nearest = sorted(range(n), key=lambda i: (dist[i], i))[:k]
                assert got == pytest.approx(np.mean(y[nearest]), abs=1e-12)

    def test_tie_goes_to_lowest_index(self):
        X = np.array([[1.0], [-1.0], [1.0]])
        m = KNN(k=1, standardize=False).fit(X, [10.0, 20.0, 30.0])
        assert m.predict_one([0.0]) == 10.0
        np.testing.assert_array_equal(m.neighbors([[0.0]]), [[0]])

    def test_standardization_uses_train_stats(self, rng):
        X = rng.normal(size=(50, 2)) * [1.0, 1000.0]
        y = rng.normal(size=50)
        a = KNN(k=3).fit(X, y).predict(X[:5])
        b = KNN(k=3, standardize=False).fit(X / X.std(0), y).predict(X[:5] / X.std(0))
        np.testing.assert_allclose(a, b)

    def test_k_clamped(self, rng):
        X, y = _toy(rng, n=4)
        with pytest.warns(UserWarning):
            m = KNN(k=10).fit(X, y)
        assert m.k_ == 4
        np.testing.assert_allclose(m.predict(X[:2]), y.mean())


class TestTree:
    def test_constant_response(self, rng):
        X, _ = _toy(rng)
        m = RegressionTree().fit(X, np.full(len(X), 2.5))
        np.testing.assert_array_equal(m.predict(rng.normal(size=(10, 4))), 2.5)
        assert m.n_leaves == 1

    def test_leaves_respect_min_leaf(self, rng):
        X, y = _toy(rng, n=300)
        for min_leaf in (1, 5, 17):
            m = RegressionTree(min_leaf=min_leaf, min_dev=0.0).fit(X, y)
            assert m.leaf_counts.min() >= min_leaf
            assert m.leaf_counts.sum() == 300

    def test_prediction_is_leaf_mean(self, rng):
        X, y = _toy(rng, n=200)
        m = RegressionTree(max_depth=4).fit(X, y)
        leaves = m.apply(X)
        for leaf in np.unique(leaves):
            assert m.value_[leaf] == pytest.approx(y[leaves == leaf].mean())

    def test_step_function(self):
        x = np.linspace(0, 1, 40)[:, None]
        y = (x[:, 0] > 0.5).astype(float)
        m = RegressionTree(min_leaf=1).fit(x, y)
        np.testing.assert_array_equal(m.predict(x), y)
        assert m.n_leaves == 2

    def test_best_split_is_variance_optimal(self, rng):
        # depth-1 tree against an exhaustive scan of every cut
        X = rng.uniform(size=(60, 3))
        y = rng.normal(size=60)
        m = RegressionTree(min_leaf=3, max_depth=1, min_dev=0.0).fit(X, y)
        best = (np.inf, None)
        for f in range(3):
            xs = np.unique(X[:, f])
            for lo, hi in zip(xs[:-1], xs[1:]):
                left = X[:, f] <= 0.5 * (lo + hi)
                if min(left.sum(), (~left).sum()) < 3:
                    continue
                sse = y[left].var() * left.sum() + y[~left].var() * (~left).sum()
                best = min(best, (sse, f))
        leaves = m.apply(X)
        got = sum(y[leaves == v].var() * (leaves == v).sum() for v in np.unique(leaves))
        assert got == pytest.approx(best[0], rel=1e-10)
        assert m.feature_[0] == best[1]

    def test_depth_limit(self, rng):
        X, y = _toy(rng, n=400)
        m = RegressionTree(max_depth=2, min_leaf=1, min_dev=0.0).fit(X, y)
        assert m.n_leaves <= 4

    def test_min_dev_prunes(self, rng):
        X, y = _toy(rng, n=400)
        full = RegressionTree(min_dev=0.0, max_depth=None).fit(X, y)
        coarse = RegressionTree(min_dev=0.05, max_depth=None).fit(X, y)
        assert coarse.n_leaves < full.n_leaves


class TestForest:
    def test_mean_of_members(self, rng):
        X, y = _toy(rng)
        m = RandomForest(n_trees=7).fit(X, y, seed=3)
        Q = rng.normal(size=(12, 4))
        np.testing.assert_allclose(m.predict(Q), np.mean([t.predict(Q) for t in m.trees_], axis=0), rtol=1e-14)

    def test_seeded(self, rng):
        X, y = _toy(rng)
        a = RandomForest(n_trees=1).fit(X, y, seed=11).predict(X)
        b = RandomForest(n_trees=1).fit(X, y, seed=11).predict(X)
        c = RandomForest(n_trees=1).fit(X, y, seed=12).predict(X)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_default_mtry(self, rng):
        X, y = _toy(rng, d=7)
        m = RandomForest(n_trees=2).fit(X, y, seed=0)
        assert m.trees_[0].mtry == 3


@pytest.mark.parametrize("name", ["tree", "rf"])
def test_tree_predictions_within_response_range(name, rng):
    X, y = _toy(rng)
    m = make_learner(name, **({"n_trees": 10} if name == "rf" else {})).fit(X, y, seed=0)
    p = m.predict(rng.normal(scale=3, size=(100, 4)))
    assert p.min() >= y.min() and p.max() <= y.max()


@pytest.mark.parametrize("name", sorted(LEARNERS))
class TestContract:
    def _make(self, name):
        return make_learner(name, **({"n_trees": 5} if name == "rf" else {}))

    def test_fit_does_not_mutate(self, name, rng):
        X, y = _toy(rng)
        X0, y0 = X.copy(), y.copy()
        self._make(name).fit(X, y, seed=0)
        np.testing.assert_array_equal(X, X0)
        np.testing.assert_array_equal(y, y0)

    def test_deterministic(self, name, rng):
        X, y = _toy(rng)
        a = self._make(name).fit(X, y, seed=4).predict(X)
        b = self._make(name).fit(X, y, seed=4).predict(X)
        np.testing.assert_array_equal(a, b)

    def test_dimension_mismatch(self, name, rng):
        X, y = _toy(rng)
        m = self._make(name).fit(X, y, seed=0)
        with pytest.raises(ValueError):
            m.predict(np.zeros((2, 3)))

    def test_not_fitted(self, name):
        with pytest.raises(NotFittedError):
            self._make(name).predict(np.zeros((1, 2)))

    def test_zero_features(self, name):
        with pytest.raises(ValueError):
            self._make(name).fit(np.zeros((5, 0)), np.zeros(5))

    def test_finite_predictions(self, name, rng):
        X, y = _toy(rng)
        m = self._make(name).fit(X, y, seed=0)
        assert np.all(np.isfinite(m.predict(rng.normal(scale=10, size=(20, 4)))))


def test_make_learner_unknown():
    with pytest.raises(ValueError):
        make_learner("svm")


def test_functional_helpers(rng):
    X, y = _toy(rng)
    m = fit(make_learner("ridge"), Dataset(X, y), seed=0)
    assert predict(m, X[0]) == m.predict(X[:1])[0]


class TestPredictAll:
    def test_singleton(self, rng):
        X, y = _toy(rng)
        m = KNN().fit(X, y)
        P = predict_all([m], X[:1])
        assert P.shape == (1, 1) and P[0, 0] == m.predict_one(X[0])

    def test_shape_and_column_order(self, rng):
        X, y = _toy(rng)
        ms = [make_learner(n, **({"n_trees": 5} if n == "rf" else {})).fit(X, y, seed=0) for n in LEARNERS]
        P = predict_all(ms, X[:10])
        assert P.shape == (10, 5)
        for j, m in enumerate(ms):
            np.testing.assert_array_equal(P[:, j], m.predict(X[:10]))

    def test_empty(self):
        with pytest.raises(ValueError):
            predict_all([], np.zeros((1, 1)))

    @given(st.permutations(list(range(12))))
    def test_row_permutation(self, perm):
        rng = np.random.default_rng(0)
        X, y = _toy(rng)
        ms = [KNN().fit(X, y), Ridge(lam=0.1).fit(X, y)]
        Q = X[:12]
        np.testing.assert_array_equal(predict_all(ms, Q[perm]), predict_all(ms, Q)[perm])


def test_kfold_ids_round_robin(rng):
    ids = kfold_ids(23, 5, rng)
    assert sorted(np.bincount(ids)) == [4, 4, 5, 5, 5]
