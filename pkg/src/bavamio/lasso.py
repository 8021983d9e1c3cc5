"""Plain l1 baselines (linear and logistic) on the unhalved loss scale.

Linear objective is ``||y - X b||^2 + lam ||b||_1``, so the coordinate
threshold is ``lam / 2`` and every coefficient is zero once
``lam >= 2 max_j |x_j'y|``.  The logistic version minimizes
``deviance + lam ||b||_1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from bavamio.data import Dataset
from bavamio.glm import LOGISTIC, _irls, _Problem, deviance
from bavamio.linear import SolverConfig, _cd
from bavamio.selection import CVResult, fold_indices, run_folds


@dataclass
class LassoPath:
    lambdas: np.ndarray
    betas: np.ndarray
    cv: CVResult | None = None
    selected: int | None = None

    @property
    def n_selected(self):
        return np.count_nonzero(self.betas, axis=1)


def lambda_max(d: Dataset):
    return 2.0 * float(np.abs(d.xty).max())


def lambda_max_logistic(d: Dataset):
    return 2.0 * float(np.abs(d.x.T @ (d.y - 0.5)).max())


def default_grid(top, G=100, ratio=1e-4):
    if top == 0:
        return np.zeros(1)
    return np.geomspace(top, top * ratio, G)


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("lambda grid must be a non-empty vector")
    if np.any(np.diff(grid) > 0):
        raise ValueError("lambda grid must be descending")
    if np.any(grid < 0):
        raise ValueError("lambda values must be non-negative")
    return grid


def fit_lasso(d: Dataset, lambda_grid, cfg=SolverConfig()):
    grid = _check_grid(lambda_grid)
    beta = np.zeros(d.p)
    resid = d.y.copy()
    out = np.empty((grid.size, d.p))
    for i, lam in enumerate(grid):
        resid, _, _ = _cd(d, 0.0, np.full(d.p, lam / 2.0), beta, cfg, resid)
        out[i] = beta
    return LassoPath(grid, out)


def fit_lasso_logistic(d: Dataset, lambda_grid, cfg=SolverConfig()):
    grid = _check_grid(lambda_grid)
    if not LOGISTIC.support(d.y):
        raise ValueError("logistic response must be 0/1")
    prob = _Problem(d, LOGISTIC, intercept=False)
    beta = np.zeros(d.p)
    out = np.empty((grid.size, d.p))
    for i, lam in enumerate(grid):
        beta, *_ = _irls(prob, 0.0, np.full(d.p, lam / 2.0), beta, cfg)
        out[i] = beta
    return LassoPath(grid, out)


def kkt_residual(d: Dataset, beta, lam):
    """Largest violation of the linear Lasso optimality conditions.

    With g = x_j'(y - X beta): |g_j| <= lam/2 when beta_j = 0, and
    g_j = sign(beta_j) lam/2 otherwise.
    """
    beta = np.asarray(beta, dtype=float)
    g = d.x.T @ (d.y - d.x @ beta)
    half = lam / 2.0
    active = beta != 0
    viol = np.where(active, np.abs(g - np.sign(beta) * half), np.maximum(np.abs(g) - half, 0.0))
    return float(viol.max()) if viol.size else 0.0


def kkt_residual_logistic(d: Dataset, beta, lam):
    """Same check on deviance + lam ||beta||_1 (gradient of deviance is -2 X'(y - nu))."""
    beta = np.asarray(beta, dtype=float)
    nu = LOGISTIC.mean(d.x @ beta)
    g = d.x.T @ (d.y - nu)
    half = lam / 2.0
    active = beta != 0
    viol = np.where(active, np.abs(g - np.sign(beta) * half), np.maximum(np.abs(g) - half, 0.0))
    return float(viol.max()) if viol.size else 0.0


def cv_lasso(d: Dataset, lambda_grid, K=10, seed=0, cfg=SolverConfig(), logistic=False,
             rule="min"):
    """K-fold CV over a fixed grid; fold grids are scaled by n_train / n.

    The baseline takes the error-minimizing lambda by default.
    """
    grid = _check_grid(lambda_grid)
    folds = fold_indices(d.n, K, seed)
    fitter = fit_lasso_logistic if logistic else fit_lasso

    def one(train, test):
        path = fitter(d.subset(train), grid * (len(train) / d.n), cfg)
        eta = path.betas @ d.x[test].T
        if logistic:
            return deviance(d.y[test][None, :], LOGISTIC.mean(eta)).mean(axis=1)
        return ((d.y[test][None, :] - eta) ** 2).mean(axis=1)

    errs = np.array(run_folds(one, folds, d.n))
    cv = CVResult(errs.mean(axis=0), errs.std(axis=0, ddof=1) / math.sqrt(K), errs)
    path = fitter(d, grid, cfg)
    path.cv = cv
    path.selected = cv.select(rule)
    return path
