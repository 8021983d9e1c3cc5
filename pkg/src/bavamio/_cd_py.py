"""Pure NumPy coordinate descent, used when the compiled kernel is unavailable.

Same contract as :func:`bavamio._cd.cd_solve`.
"""

import numpy as np


def cd_solve(X, z, w, beta, resid, curv, denom, thresh, tol, max_sweeps,
             refresh_every):
    p = X.shape[1]
    sweep = 0
    converged = False
    while sweep < max_sweeps:
        sweep += 1
        max_delta = 0.0
        for j in range(p):
            xj = X[:, j]
            if w is None:
                a = xj @ resid
            else:
                a = (w * xj) @ resid
            old = beta[j]
            a += curv[j] * old
            t = thresh[j]
            if a > t:
                new = (a - t) / denom[j]
            elif a < -t:
                new = (a + t) / denom[j]
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                beta[j] = new
                resid -= xj * delta
                max_delta = max(max_delta, abs(delta))
        if refresh_every > 0 and sweep % refresh_every == 0:
            resid[:] = z - X @ beta
        if max_delta < tol:
            converged = True
            break
    return sweep, converged
