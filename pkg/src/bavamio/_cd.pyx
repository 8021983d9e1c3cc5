# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled cyclic coordinate descent for weighted soft-thresholding problems.

Minimizes, in place over ``beta``,

    0.5 * sum_i w_i (z_i - x_i beta)^2 + 0.5 * lam * ||beta||^2 + sum_j t_j |beta_j|

(up to a global factor), one coordinate at a time.  The caller supplies
``denom[j] = sum_i w_i x_ij^2 + lam`` and ``curv[j] = sum_i w_i x_ij^2``.
"""

from libc.math cimport fabs


cdef inline double _soft(double a, double b) noexcept nogil:
    if a > b:
        return a - b
    if a < -b:
        return a + b
    return 0.0


cdef void _refresh(const double[::1, :] X, const double[::1] z,
                   const double[::1] beta, double[::1] resid) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i, j
    cdef double b
    for i in range(n):
        resid[i] = z[i]
    for j in range(p):
        b = beta[j]
        if b != 0.0:
            for i in range(n):
                resid[i] -= X[i, j] * b


def cd_solve(const double[::1, :] X, const double[::1] z, w,
             double[::1] beta, double[::1] resid,
             const double[::1] curv, const double[::1] denom,
             const double[::1] thresh, double tol, int max_sweeps,
             int refresh_every):
    """Run sweeps until the largest coefficient change drops below ``tol``.

    ``resid`` must hold ``z - X @ beta`` on entry and is kept in sync.
    ``w`` is ``None`` for unit weights.  Returns ``(sweeps, converged)``.
    """
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i, j
    cdef const double[::1] wv
    cdef bint weighted = w is not None
    if weighted:
        wv = w
    else:
        wv = z  # unused placeholder
    cdef int sweep = 0
    cdef bint converged = False
    cdef double a, old, new, delta, max_delta

    with nogil:
        while sweep < max_sweeps:
            sweep += 1
            max_delta = 0.0
            for j in range(p):
                a = 0.0
                if weighted:
                    for i in range(n):
                        a += wv[i] * X[i, j] * resid[i]
                else:
                    for i in range(n):
                        a += X[i, j] * resid[i]
                old = beta[j]
                a += curv[j] * old
                new = _soft(a, thresh[j]) / denom[j]
                delta = new - old
                if delta != 0.0:
                    beta[j] = new
                    for i in range(n):
                        resid[i] -= X[i, j] * delta
                    if fabs(delta) > max_delta:
                        max_delta = fabs(delta)
            if refresh_every > 0 and sweep % refresh_every == 0:
                _refresh(X, z, beta, resid)
            if max_delta < tol:
                converged = True
                break
    return sweep, converged
