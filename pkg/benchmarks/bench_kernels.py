"""Compare the compiled and NumPy coordinate-descent kernels.

Usage: python benchmarks/bench_kernels.py [--n 200] [--p 500] [--repeat 3]

Each case runs one weighted-l1 / ridge solve from zero on a seeded Gaussian
design and reports the best wall time per backend, the sweep count and the
largest coefficient difference between backends.
"""

import argparse
import time

import numpy as np

from bavamio._kernels import available_backends


def make_case(n, p, seed, weighted):
    rng = np.random.default_rng(seed)
    x = np.asfortranarray(rng.standard_normal((n, p)))
    beta = np.zeros(p)
    beta[: max(1, p // 50)] = rng.normal(0, 2, max(1, p // 50))
    z = x @ beta + rng.standard_normal(n)
    w = rng.uniform(0.05, 0.25, n) if weighted else None
    ww = np.ones(n) if w is None else w
    curv = np.einsum("ij,ij,i->j", x, x, ww)
    lam = 1.0 / np.sqrt(n)
    thresh = np.full(p, 0.1 * np.abs(x.T @ (ww * z)).max())
    return x, z, w, curv, curv + lam, thresh


def run(kernel, case, tol, max_sweeps):
    x, z, w, curv, denom, thresh = case
    beta = np.zeros(x.shape[1])
    resid = z.copy()
    t = time.perf_counter()
    sweeps, ok = kernel(x, z, w, beta, resid, curv, denom, thresh, tol, max_sweeps, 50)
    return time.perf_counter() - t, sweeps, ok, beta


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--p", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--tol", type=float, default=1e-7)
    args = ap.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'case':<14}{'backend':<10}{'seconds':>10}{'sweeps':>8}{'speedup':>9}{'max|diff|':>12}")
    for weighted in (False, True):
        case = make_case(args.n, args.p, 0, weighted)
        name = "weighted" if weighted else "gaussian"
        results = {}
        for b, kernel in backends.items():
            best = None
            for _ in range(args.repeat):
                res = run(kernel, case, args.tol, 10_000)
                if best is None or res[0] < best[0]:
                    best = res
            results[b] = best
        ref = results["python"]
        for b, (sec, sweeps, ok, beta) in results.items():
            speed = ref[0] / sec if sec > 0 else float("inf")
            diff = float(np.abs(beta - ref[3]).max())
            flag = "" if ok else " (cap)"
            print(f"{name:<14}{b:<10}{sec:>10.4f}{sweeps:>8}{speed:>8.1f}x{diff:>12.2e}{flag}")


if __name__ == "__main__":
    main()
