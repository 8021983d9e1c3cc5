"""Threshold grids, Bayes factors, cross-validation and whole-path fitting."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit, gammaln

from bavamio.data import Dataset, FitState, Hyperparameters
from bavamio.linear import SolverConfig, SolverError, fit_map
from bavamio.penalty import initial_weight


class PathError(SolverError):
    def __init__(self, index, psi, cause):
        super().__init__(f"fit failed at grid point {index} (psi={psi!r}): {cause}")
        self.index = index
        self.psi = psi


def num_threads():
    env = os.environ.get("BAVAMIO_NUM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class TuningGrid:
    psi_values: np.ndarray
    c_star: float

    def __len__(self):
        return len(self.psi_values)


def build_grid(d: Dataset, G=100, lam=1.0):
    """G equally spaced thresholds from C* = max_j |x_j'y| down to the floor.

    The floor is 0 when ``lam > 0``; without a ridge term it is C* * 1e-4 so
    the last point is not an unpenalized saturated fit.
    """
    if G < 2:
        raise ValueError("grid needs at least two points")
    c_star = float(np.abs(d.xty).max()) if d.p else 0.0
    if c_star == 0:
        return TuningGrid(np.zeros(1), 0.0)
    floor = 0.0 if lam > 0 else c_star * 1e-4
    return TuningGrid(np.linspace(c_star, floor, G), c_star)


def psi_threshold(kappa, sigma2, lam, phi0):
    """Soft-threshold level implied by prior inclusion probability ``kappa``."""
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    arg = 2 * math.pi * sigma2 / lam * (1 - kappa) ** 2 / kappa ** 2
    return 0.5 * sigma2 * math.log(arg) * phi0


def kappa_from_threshold(c, sigma2, lam, phi0):
    """Inverse of :func:`psi_threshold`: the kappa whose threshold equals ``c``."""
    cc = 2.0 * c / (sigma2 * phi0) - math.log(2 * math.pi * sigma2 / lam)
    return float(expit(-cc / 2.0))


# The closed form below integrates beta_S ~ N(0, sigma2/lam I) and
# sigma2 ~ InvGamma(tau1, tau2) (rate tau2) against the Gaussian likelihood:
#
#   log f(y | S) = -n/2 log(pi) - 1/2 log|I_S + X_S'X_S/lam|
#                  + tau1 log(2 tau2) - lgamma(tau1) + lgamma(n/2 + tau1)
#                  - (n/2 + tau1) log(y'(I_n + X_S X_S'/lam)^{-1} y + 2 tau2)
#
# The printed closed form carries n + |S| - 1 in place of n in the pi power,
# Gamma argument and exponent. Quadrature of the priors agrees with the
# version above, and the discrepancy is not constant in |S|, so Bayes
# factors would differ too.
def log_marginal_likelihood(d: Dataset, gamma, h: Hyperparameters, method="auto"):
    """log f(y | gamma) with beta_S and sigma2 integrated out.

    ``method`` is ``"woodbury"`` (|S| x |S| solve), ``"direct"`` (n x n
    solve) or ``"auto"`` (Woodbury when |S| < n).
    """
    if h.lam <= 0:
        raise ValueError("marginal likelihood needs lambda > 0")
    idx = np.flatnonzero(np.asarray(gamma))
    n, k, lam = d.n, len(idx), h.lam
    y = d.y
    yty = float(y @ y)
    if k == 0:
        logdet, quad = 0.0, yty
    elif method == "woodbury" or (method == "auto" and k < n):
        xs = d.x[:, idx]
        a = xs.T @ xs
        a[np.diag_indices_from(a)] += lam
        c, low = linalg.cho_factor(a, lower=True)
        b = d.xty[idx]
        sol = linalg.cho_solve((c, low), b)
        logdet = 2.0 * float(np.log(np.diag(c)).sum()) - k * math.log(lam)
        quad = yty - float(b @ sol)
    else:
        xs = d.x[:, idx]
        m = xs @ xs.T / lam
        m[np.diag_indices_from(m)] += 1.0
        c, low = linalg.cho_factor(m, lower=True)
        logdet = 2.0 * float(np.log(np.diag(c)).sum())
        quad = float(y @ linalg.cho_solve((c, low), y))
    a = n / 2.0 + h.tau1
    return (
        -0.5 * n * math.log(math.pi)
        - 0.5 * logdet
        + h.tau1 * math.log(2.0 * h.tau2)
        - gammaln(h.tau1)
        + gammaln(a)
        - a * math.log(quad + 2.0 * h.tau2)
    )


def bayes_factor(d: Dataset, gamma_a, gamma_b, h: Hyperparameters):
    """log Bayes factor of model ``gamma_a`` against ``gamma_b``."""
    return log_marginal_likelihood(d, gamma_a, h) - log_marginal_likelihood(d, gamma_b, h)


def fold_indices(n, K, seed):
    """Seeded permutation cut into K contiguous blocks (sizes differ by <= 1)."""
    if not 2 <= K <= n:
        raise ValueError(f"need 2 <= K <= n, got K={K}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, K)
    if min(len(f) for f in folds) < 2:
        raise ValueError("every fold needs at least two observations")
    return folds


def path_betas(d: Dataset, h: Hyperparameters, psi_values, cfg=SolverConfig()):
    """Warm-started fits along ``psi_values``; returns (betas, fits)."""
    fits = []
    beta = None
    for i, psi in enumerate(psi_values):
        try:
            fit = fit_map(d, h, float(psi), cfg, beta_init=beta)
        except SolverError as exc:
            raise PathError(i, float(psi), exc) from exc
        beta = fit.beta
        fits.append(fit)
    return np.array([f.beta for f in fits]), fits


@dataclass
class CVResult:
    mean: np.ndarray
    se: np.ndarray
    fold_errors: np.ndarray

    def select(self, rule="1se"):
        if rule == "min":
            return int(np.argmin(self.mean))
        return one_se_index(self.mean, self.se)


def one_se_index(mean, se):
    """Sparsest (first, i.e. largest-threshold) point within 1 SE of the best."""
    best = int(np.argmin(mean))
    ok = np.flatnonzero(mean <= mean[best] + se[best])
    return int(ok[0])


def run_folds(fn, folds, n):
    """Evaluate ``fn(train_rows, test_rows)`` for each fold, in fold order."""
    jobs = [(np.setdiff1d(np.arange(n), f), np.sort(f)) for f in folds]
    workers = min(num_threads(), len(jobs))
    if workers <= 1:
        return [fn(tr, te) for tr, te in jobs]
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(lambda job: fn(*job), jobs))


def cross_validate(d: Dataset, h: Hyperparameters, grid: TuningGrid, K=10, seed=0,
                   cfg=SolverConfig(), folds=None):
    """K-fold squared prediction error along the threshold grid.

    Fold fits use thresholds scaled by n_train / n so each grid point asks
    for the same per-observation evidence as on the full data.  ``folds``
    overrides the seeded partition with explicit test-row index arrays.
    """
    if folds is None:
        folds = fold_indices(d.n, K, seed)
    K = len(folds)

    def one(train, test):
        dtr = d.subset(train)
        betas, _ = path_betas(dtr, h, grid.psi_values * (len(train) / d.n), cfg)
        resid = d.y[test][None, :] - betas @ d.x[test].T
        return (resid ** 2).mean(axis=1)

    errs = np.array(run_folds(one, folds, d.n))
    return CVResult(errs.mean(axis=0), errs.std(axis=0, ddof=1) / math.sqrt(K), errs)


@dataclass
class PathResult:
    psi: np.ndarray
    fits: list
    kappa_star: np.ndarray
    log_bf: np.ndarray
    cv: CVResult | None = None
    selected: dict = field(default_factory=dict)

    @property
    def n_selected(self):
        return np.array([f.n_selected for f in self.fits])

    @property
    def sigma2(self):
        return np.array([f.sigma2 for f in self.fits])

    @property
    def betas(self):
        return np.array([f.beta for f in self.fits])

    def best(self, criterion) -> FitState:
        return self.fits[self.selected[criterion]]


def fit_path(d: Dataset, h: Hyperparameters, grid: TuningGrid, criteria=("bf",),
             cfg=SolverConfig(), K=10, seed=0):
    """Whole-path fit from the largest threshold down, with selections."""
    criteria = {c.lower() for c in criteria}
    if len(grid) == 0:
        raise ValueError("empty grid")
    _, fits = path_betas(d, h, grid.psi_values, cfg)
    phi0 = initial_weight(h.tau3)
    if h.lam > 0:
        kappa = np.array([kappa_from_threshold(f.threshold, f.sigma2, h.lam, phi0) for f in fits])
        cache = {}
        null = log_marginal_likelihood(d, np.zeros(d.p), h)
        log_bf = np.empty(len(fits))
        for i, f in enumerate(fits):
            key = f.support.tobytes()
            if key not in cache:
                cache[key] = log_marginal_likelihood(d, f.gamma, h) - null
            log_bf[i] = cache[key]
    else:
        kappa = np.full(len(fits), np.nan)
        log_bf = np.full(len(fits), np.nan)
    res = PathResult(grid.psi_values.copy(), fits, kappa, log_bf)
    if "bf" in criteria:
        if h.lam <= 0:
            raise ValueError("Bayes-factor selection needs lambda > 0")
        res.selected["bf"] = int(np.argmax(log_bf))
    if "cv" in criteria:
        res.cv = cross_validate(d, h, grid, K, seed, cfg)
        res.selected["cv"] = res.cv.select()
    return res
