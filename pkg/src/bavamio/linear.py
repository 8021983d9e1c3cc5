"""MAP estimation for the Gaussian spike-and-slab linear model.

Three nested loops:

* coordinate descent on the weighted-l1 / ridge subproblem (compiled kernel),
* majorization-minimization updates of the log-sum weights,
* an outer loop alternating the noise-variance update with the MM solve.

The threshold ``psi`` is the soft-threshold applied to a coordinate sitting
at zero; the penalty multiplier is recovered as ``rho = 2 psi / phi0``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from bavamio import _kernels
from bavamio.data import Dataset, FitState, Hyperparameters
from bavamio.penalty import initial_weight, logsum, mm_weights, soft_threshold

# absolute slack allowed on the MM objective sequence; a few ulps of the
# objective are added so very large objectives do not trip on roundoff
MM_SLACK = 1e-10
_ULPS = 16 * np.finfo(float).eps


class SolverError(RuntimeError):
    """Numerical failure inside a solver (divergence, singular system)."""


class MonotonicityError(SolverError):
    """The MM objective increased, which majorization rules out."""


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SolverConfig:
    cd_tol: float = 1e-7
    mm_tol: float = 1e-8
    outer_tol: float = 1e-6
    max_cd_sweeps: int = 1000
    max_mm_iters: int = 100
    max_outer_iters: int = 50
    refresh_every: int = 50

    def __post_init__(self):
        if min(self.cd_tol, self.mm_tol, self.outer_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if min(self.max_cd_sweeps, self.max_mm_iters, self.max_outer_iters) < 1:
            raise ValueError("iteration caps must be >= 1")


def objective(beta, d: Dataset, lam, rho, tau3):
    """||y - X beta||^2 + lam ||beta||^2 + rho * logsum(beta)."""
    beta = np.asarray(beta, dtype=float)
    r = d.y - d.x @ beta
    out = float(r @ r) + lam * float(beta @ beta)
    if rho:
        out += rho * logsum(beta, tau3)
    return out


def coordinate_update(j, beta, d: Dataset, lam, rho, phi_j):
    """Exact minimizer over coordinate ``j`` of the weighted-l1 surrogate."""
    if phi_j <= 0:
        raise ValueError("MM weight must be positive")
    denom = d.col_sq[j] + lam
    if denom == 0:
        raise SolverError(f"column {j} is all zero and lambda is 0")
    beta = np.asarray(beta, dtype=float)
    xj = d.x[:, j]
    partial = d.y - d.x @ beta + xj * beta[j]
    return soft_threshold(float(xj @ partial), rho * phi_j / 2.0) / denom


def _denominators(curv, lam):
    denom = curv + lam
    # all-zero columns with no ridge term stay frozen at zero
    return np.where(denom > 0, denom, np.inf)


def _cd(d: Dataset, lam, thresh, beta, cfg: SolverConfig, resid=None):
    """Run the kernel in place; returns ``(resid, sweeps, converged)``."""
    if resid is None:
        resid = d.y - d.x @ beta
    sweeps, ok = _kernels.cd_solve(
        d.x, d.y, None, beta, resid, d.col_sq, _denominators(d.col_sq, lam),
        np.ascontiguousarray(thresh, dtype=float), cfg.cd_tol, cfg.max_cd_sweeps,
        cfg.refresh_every,
    )
    return resid, sweeps, ok


def inner_weighted_lasso(d: Dataset, lam, rho, phi, beta_init, cfg=SolverConfig()):
    """Minimize ||y - X b||^2 + lam ||b||^2 + rho * sum_j phi_j |b_j|."""
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0):
        raise ValueError("MM weights must be positive")
    beta = np.array(beta_init, dtype=float)
    _, _, ok = _cd(d, lam, rho * phi / 2.0, beta, cfg)
    if not ok:
        warnings.warn("coordinate descent hit the sweep cap", ConvergenceWarning, stacklevel=2)
    return beta


@dataclass
class _MMResult:
    beta: np.ndarray
    weights: np.ndarray
    trace: list
    iters: int
    sweeps: int
    converged: bool


def _mm(d, lam, rho, tau3, beta, cfg):
    beta = np.array(beta, dtype=float)
    obj = objective(beta, d, lam, rho, tau3)
    trace = [obj]
    sweeps = 0
    converged = False
    cd_ok = True
    resid = d.y - d.x @ beta
    it = 0
    while it < cfg.max_mm_iters:
        it += 1
        phi = mm_weights(beta, tau3)
        resid, s, ok = _cd(d, lam, rho * phi / 2.0, beta, cfg, resid)
        sweeps += s
        cd_ok &= ok
        new = objective(beta, d, lam, rho, tau3)
        trace.append(new)
        if new > obj + MM_SLACK + _ULPS * abs(obj):
            raise MonotonicityError(
                f"MM objective rose from {obj!r} to {new!r} at iteration {it}"
            )
        if obj - new <= cfg.mm_tol * max(abs(obj), 1e-300):
            converged = True
            break
        obj = new
    return _MMResult(beta, mm_weights(beta, tau3), trace, it, sweeps, converged and cd_ok)


def mm_solve(d: Dataset, lam, rho, tau3, beta_init, cfg=SolverConfig()):
    """Majorization-minimization for ||y-Xb||^2 + lam||b||^2 + rho*logsum(b)."""
    if tau3 <= 0:
        raise ValueError("tau3 must be positive")
    return _mm(d, lam, rho, tau3, beta_init, cfg).beta


def sigma2_update(beta, gamma, d: Dataset, lam, tau1, tau2):
    b = np.asarray(beta, dtype=float) * np.asarray(gamma)
    r = d.y - d.x @ b
    num = float(r @ r) + lam * float(b @ b) + 2.0 * tau2
    return num / (d.n + float(np.sum(gamma)) + 2.0 * tau1 + 2.0)


def rho_from_threshold(psi, tau3):
    return 2.0 * psi / initial_weight(tau3)


def fit_map(d: Dataset, h: Hyperparameters, psi, cfg=SolverConfig(), beta_init=None):
    """Joint MAP fit of (beta, gamma, sigma2) at soft-threshold level ``psi``."""
    if psi < 0:
        raise ValueError("psi must be non-negative")
    rho = rho_from_threshold(psi, h.tau3)
    beta = np.zeros(d.p) if beta_init is None else np.array(beta_init, dtype=float)
    if rho == 0 and h.lam > 0:
        # pure ridge: start CD at the closed-form minimizer, it only has to confirm
        beta = ridge_solve(d, h.lam)
    gamma = (beta != 0).astype(np.int8)
    sigma2 = sigma2_update(beta, gamma, d, h.lam, h.tau1, h.tau2)
    if not beta.any() and psi >= (1.0 - 1e-12) * float(np.abs(d.xty).max(initial=0.0)):
        # nothing can enter from zero; skip the solve so kernel rounding at the
        # boundary cannot leak a tiny coefficient
        obj = objective(beta, d, h.lam, rho, h.tau3)
        return FitState(beta=beta, sigma2=sigma2, mm_weights=mm_weights(beta, h.tau3),
                        threshold=float(psi), rho=rho, objective_trace=[obj])
    limit = 1e12 * max(float(np.var(d.y)), 1e-300)

    trace = []
    mm_iters = sweeps = 0
    converged = False
    m = 0
    res = None
    while m < cfg.max_outer_iters:
        m += 1
        res = _mm(d, h.lam, rho, h.tau3, beta, cfg)
        beta = res.beta
        trace.extend(res.trace)
        mm_iters += res.iters
        sweeps += res.sweeps
        new = sigma2_update(beta, beta != 0, d, h.lam, h.tau1, h.tau2)
        if not np.isfinite(new) or new > limit:
            raise SolverError(f"sigma2 diverged ({new!r}) at psi={psi!r}")
        change = abs(new - sigma2) / sigma2
        sigma2 = new
        if change < cfg.outer_tol:
            converged = True
            break
    return FitState(
        beta=beta,
        sigma2=sigma2,
        mm_weights=res.weights,
        threshold=float(psi),
        rho=rho,
        outer_iters=m,
        mm_iters=mm_iters,
        cd_sweeps=sweeps,
        converged=converged and res.converged,
        objective_trace=trace,
    )


def ridge_solve(d: Dataset, lam):
    """(X'X + lam I)^{-1} X'y by a Cholesky solve (dual form when p > n)."""
    x, y = d.x, d.y
    try:
        if d.p <= d.n or lam == 0:
            a = x.T @ x
            a[np.diag_indices_from(a)] += lam
            return linalg.cho_solve(linalg.cho_factor(a), x.T @ y)
        k = x @ x.T
        k[np.diag_indices_from(k)] += lam
        return x.T @ linalg.cho_solve(linalg.cho_factor(k), y)
    except linalg.LinAlgError as exc:
        raise SolverError(f"ridge system is singular: {exc}") from None
