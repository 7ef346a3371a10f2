"""Ridge and lasso regression on standardized features.

Both minimise a glmnet-style objective on standardized ``X`` and centered
``y``::

    ridge:  (1/2n) |y - X b|^2 + (lam/2) |b|^2
    lasso:  (1/2n) |y - X b|^2 + lam |b|_1

When ``lam`` is None it is chosen by 5-fold cross-validation over 50
log-spaced values in [1e-4, 1e2]. Coefficients are reported on the original
feature scale.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
from numba import njit

from .base import BaseLearner, Standardizer, kfold_ids

DEFAULT_LAMBDAS = np.logspace(2, -4, 50)


def _resolve_seed(seed):
    return np.random.default_rng(0 if seed is None else seed)


class _LinearModel(BaseLearner):
    def __init__(self, lam=None, n_folds=5, lambdas=None):
        super().__init__()
        if lam is not None and lam < 0:
            raise ValueError("lam must be non-negative")
        self.lam = lam
        self.n_folds = n_folds
        self.lambdas = DEFAULT_LAMBDAS if lambdas is None else np.sort(np.asarray(lambdas, float))[::-1]
        self.lam_ = None
        self.coef_ = None
        self.intercept_ = None
        self.cv_errors_ = None

    def get_params(self):
        return {"lam": self.lam, "n_folds": self.n_folds}

    def _fit(self, X, y, seed):
        if self.lam is None:
            self.lam_, self.cv_errors_ = self._cross_validate(X, y, _resolve_seed(seed))
        else:
            self.lam_ = float(self.lam)
        self.coef_, self.intercept_ = self._fit_scaled(X, y, self.lam_)

    def _cross_validate(self, X, y, rng):
        n = X.shape[0]
        n_folds = min(self.n_folds, n)
        if n_folds < 2:
            return float(self.lambdas[-1]), None
        folds = kfold_ids(n, n_folds, rng)
        errors = np.zeros(len(self.lambdas))
        for p in range(n_folds):
            tr, va = folds != p, folds == p
            preds = self._path_predictions(X[tr], y[tr], X[va])
            errors += ((preds - y[va][None, :]) ** 2).sum(axis=1)
        errors /= n
        # lambdas are descending, so argmin prefers the larger lambda on ties
        return float(self.lambdas[int(np.argmin(errors))]), errors

    def _predict(self, X):
        # column-wise accumulation keeps each row's result independent of the
        # batch it arrives in (a BLAS matvec is not)
        out = np.full(X.shape[0], self.intercept_)
        for j in np.flatnonzero(self.coef_):
            out += X[:, j] * self.coef_[j]
        return out

    def _fit_scaled(self, X, y, lam):
        scaler = Standardizer(X)
        Xs = scaler(X)
        ybar = y.mean()
        beta = self._solve(Xs, y - ybar, lam)
        coef = beta / scaler.scale
        return coef, float(ybar - scaler.mean @ coef)


class Ridge(_LinearModel):
    name = "ridge"

    @staticmethod
    def _solve(Xs, yc, lam):
        n, d = Xs.shape
        A = Xs.T @ Xs / n + lam * np.eye(d)
        b = Xs.T @ yc / n
        try:
            if lam <= 0:
                raise np.linalg.LinAlgError("no ridge penalty")
            c = scipy.linalg.cho_factor(A)
            return scipy.linalg.cho_solve(c, b)
        except np.linalg.LinAlgError:
            # singular or unpenalised system: minimum-norm least squares
            return np.linalg.lstsq(Xs, yc, rcond=None)[0]

    def _path_predictions(self, Xtr, ytr, Xva):
        scaler = Standardizer(Xtr)
        Xs, Xv = scaler(Xtr), scaler(Xva)
        ybar = ytr.mean()
        n = Xs.shape[0]
        U, s, Vt = np.linalg.svd(Xs, full_matrices=False)
        Uty = U.T @ (ytr - ybar)
        XvV = Xv @ Vt.T
        # beta(lam) = V diag(s / (s^2 + n lam)) U^T y
        shrink = s[None, :] / (s[None, :] ** 2 + n * self.lambdas[:, None])
        return (shrink * Uty[None, :]) @ XvV.T + ybar


@njit(cache=True)
def _soft_threshold(rho, lam):
    if rho > lam:
        return rho - lam
    if rho < -lam:
        return rho + lam
    return 0.0


@njit(cache=True)
def _lasso_objective(X, y, beta, lam):
    r = y - X @ beta
    return 0.5 * np.dot(r, r) / X.shape[0] + lam * np.sum(np.abs(beta))


@njit(cache=True)
def lasso_cd(X, y, lam, beta, tol, max_iter, history):
    """Cyclic coordinate descent; updates ``beta`` in place.

    ``X`` should be Fortran-ordered. Stops when the largest scaled
    coefficient change in a sweep drops below ``tol``. When ``history`` is
    non-empty the objective after each sweep is written into it.
    Returns the number of sweeps run.
    """
    n, d = X.shape
    col_sq = np.empty(d)
    for j in range(d):
        col_sq[j] = np.dot(X[:, j], X[:, j]) / n
    r = y - X @ beta
    for it in range(max_iter):
        max_delta = 0.0
        for j in range(d):
            if col_sq[j] == 0.0:
                continue
            bj = beta[j]
            rho = np.dot(X[:, j], r) / n + col_sq[j] * bj
            new = _soft_threshold(rho, lam) / col_sq[j]
            if new != bj:
                delta = new - bj
                r -= delta * X[:, j]
                beta[j] = new
                step = abs(delta) * np.sqrt(col_sq[j])
                if step > max_delta:
                    max_delta = step
        if it < history.shape[0]:
            history[it] = _lasso_objective(X, y, beta, lam)
        if max_delta < tol:
            return it + 1
    return max_iter


_NO_HISTORY = np.empty(0)


class Lasso(_LinearModel):
    name = "lasso"

    def __init__(self, lam=None, tol=1e-7, max_iter=10_000, n_folds=5, lambdas=None):
        super().__init__(lam=lam, n_folds=n_folds, lambdas=lambdas)
        self.tol = tol
        self.max_iter = max_iter

    def get_params(self):
        return {"lam": self.lam, "tol": self.tol, "max_iter": self.max_iter, "n_folds": self.n_folds}

    def _solve(self, Xs, yc, lam):
        Xf = np.asfortranarray(Xs)
        beta = np.zeros(Xs.shape[1])
        # warm start along the grid down to the target penalty
        for path_lam in self.lambdas[self.lambdas > lam]:
            lasso_cd(Xf, yc, float(path_lam), beta, self.tol, self.max_iter, _NO_HISTORY)
        lasso_cd(Xf, yc, float(lam), beta, self.tol, self.max_iter, _NO_HISTORY)
        return beta

    def _path_predictions(self, Xtr, ytr, Xva):
        scaler = Standardizer(Xtr)
        Xf = np.asfortranarray(scaler(Xtr))
        Xv = scaler(Xva)
        ybar = ytr.mean()
        yc = ytr - ybar
        beta = np.zeros(Xf.shape[1])
        out = np.empty((len(self.lambdas), Xv.shape[0]))
        for i, lam in enumerate(self.lambdas):
            lasso_cd(Xf, yc, float(lam), beta, self.tol, self.max_iter, _NO_HISTORY)
            out[i] = Xv @ beta + ybar
        return out
