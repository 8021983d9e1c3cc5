"""Data generators, metrics and the seeded experiment runners.

All randomness comes from ``numpy.random.Generator(PCG64(seed))``; replicate
``r`` of a run with base seed ``s`` uses seed ``s + r``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg, stats

from bavamio.data import Dataset, Hyperparameters
from bavamio.glm import LOGISTIC, glm_cross_validate, glm_path, rho_grid
from bavamio.lasso import cv_lasso, default_grid, fit_lasso, lambda_max, lambda_max_logistic
from bavamio.linear import SolverConfig, SolverError
from bavamio.selection import build_grid, fit_path, path_betas

ESTIMATORS = ("bmio-bf", "bmio-cv", "lasso-cv")
GLM_ESTIMATORS = ("bmio-cv", "lasso-cv")
# sigma_Y^2 values of the first study, SNR = 1, 3.16, 7.07 when E[b'Sb] = 10
STUDY_ONE_SIGMA2 = (10.0, 1.0, 0.2)


def rng_for(seed):
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class CovarianceSpec:
    kind: str = "identity"
    r: float = 0.0

    @classmethod
    def parse(cls, token):
        """``identity``, ``equi:R``, ``toeplitz:R`` or ``wishart``."""
        kind, _, arg = token.partition(":")
        kind = kind.strip().lower()
        if kind in ("identity", "wishart"):
            if arg:
                raise ValueError(f"{kind} takes no parameter")
            return cls(kind)
        if kind in ("equi", "equicorrelated", "toeplitz"):
            try:
                r = float(arg)
            except ValueError:
                raise ValueError(f"bad covariance parameter in {token!r}") from None
            return cls("equicorrelated" if kind.startswith("equi") else "toeplitz", r)
        raise ValueError(f"unknown covariance kind {token!r}")

    def token(self):
        if self.kind in ("identity", "wishart"):
            return self.kind
        return f"{'equi' if self.kind == 'equicorrelated' else 'toeplitz'}:{self.r:g}"


def wishart_bartlett(p, df, rng):
    """Wishart(I_p, df) draw via the Bartlett decomposition."""
    if df < p:
        raise ValueError("degrees of freedom must be >= p")
    a = np.zeros((p, p))
    a[np.diag_indices(p)] = np.sqrt(rng.chisquare(df - np.arange(p)))
    low = np.tril_indices(p, -1)
    a[low] = rng.standard_normal(len(low[0]))
    return a @ a.T


def sample_covariance(spec: CovarianceSpec, p, seed=0):
    if spec.kind == "identity":
        sigma = np.eye(p)
    elif spec.kind == "equicorrelated":
        if not -1.0 / max(p - 1, 1) < spec.r < 1:
            raise ValueError("equicorrelation must lie in (-1/(p-1), 1)")
        sigma = np.full((p, p), spec.r)
        np.fill_diagonal(sigma, 1.0)
    elif spec.kind == "toeplitz":
        if not -1 < spec.r < 1:
            raise ValueError("toeplitz parameter must lie in (-1, 1)")
        sigma = linalg.toeplitz(spec.r ** np.arange(p))
    elif spec.kind == "wishart":
        sigma = wishart_bartlett(p, p, rng_for(seed))
    else:
        raise ValueError(f"unknown covariance kind {spec.kind!r}")
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise ValueError("covariance is not positive definite") from None
    return sigma


def sample_design(sigma, n, seed_or_rng):
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else rng_for(seed_or_rng)
    try:
        low = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise ValueError("covariance is not positive definite") from None
    z = rng.standard_normal((n, sigma.shape[0]))
    return z @ low.T


def snr(beta, sigma, sigma_y2):
    if sigma_y2 <= 0:
        raise ValueError("noise variance must be positive")
    beta = np.asarray(beta, dtype=float)
    return math.sqrt(float(beta @ sigma @ beta) / sigma_y2)


def irr_stat(x, support, signs):
    """1 - ||X_c' X_S (X_S' X_S)^{-1} sign(beta_S)||_inf; negative means violated."""
    return _irr(x, support, signs)[0]


def irr_contributions(x, support, signs):
    """Per-inactive-column magnitudes whose maximum defines the statistic."""
    return _irr(x, support, signs)[1]


def _irr(x, support, signs):
    x = np.asarray(x, dtype=float)
    support = np.asarray(support, dtype=int)
    signs = np.asarray(signs, dtype=float)
    p = x.shape[1]
    if support.size == 0 or support.size >= p:
        raise ValueError("support must be non-empty and proper")
    if support.size != signs.size:
        raise ValueError("need one sign per support index")
    rest = np.setdiff1d(np.arange(p), support)
    xs, xc = x[:, support], x[:, rest]
    gram = xs.T @ xs
    try:
        c = linalg.cho_factor(gram)
    except linalg.LinAlgError:
        raise np.linalg.LinAlgError("active Gram block is singular") from None
    if np.linalg.cond(gram) > 1e12:
        raise np.linalg.LinAlgError("active Gram block is singular")
    contrib = np.abs(xc.T @ (xs @ linalg.cho_solve(c, signs)))
    return 1.0 - float(contrib.max()), dict(zip(rest.tolist(), contrib.tolist()))


@dataclass
class TrueModel:
    beta: np.ndarray
    sigma_y2: float

    @property
    def support(self):
        return np.flatnonzero(self.beta)


@dataclass
class Metrics:
    l2_dis: float
    pmse: float
    s_fpr: float
    n_selected: int


def compute_metrics(beta_hat, truth: TrueModel, x_test):
    beta_hat = np.asarray(beta_hat, dtype=float)
    b = truth.beta
    denom = float(b @ b)
    if denom == 0:
        raise ValueError("true coefficients are all zero")
    l2 = math.sqrt(float((beta_hat - b) @ (beta_hat - b)) / denom)
    diff = x_test @ (beta_hat - b)
    pmse = float(diff @ diff) / x_test.shape[0]
    sel = np.flatnonzero(beta_hat)
    if sel.size == 0:
        fpr = 0.0
    else:
        fpr = float(np.count_nonzero(np.sign(beta_hat[sel]) != np.sign(b[sel]))) / sel.size
    return Metrics(l2, pmse, fpr, int(sel.size))


@dataclass
class SimulationConfig:
    study: str = "one"
    n: int = 100
    p: int = 120
    n_active: int = 10
    n_test_mult: int = 10
    cov: CovarianceSpec = field(default_factory=CovarianceSpec)
    sigma_y2: float | None = 1.0
    target_snr: float | None = None
    replicates: int = 1
    seed: int = 0
    estimators: tuple = ESTIMATORS
    recipe: str = "default"
    grid_size: int = 100
    cv_folds: int = 10
    n_pairs: int = 1
    irr_rows: int = 10_000
    cfg: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if min(self.n, self.p, self.replicates, self.n_pairs) < 1:
            raise ValueError("sizes and counts must be positive")
        if not 0 < self.n_active <= self.p:
            raise ValueError("n_active must lie in [1, p]")
        if self.sigma_y2 is None and self.target_snr is None:
            raise ValueError("give either sigma_y2 or target_snr")
        if self.recipe not in ("default", "snr1"):
            raise ValueError(f"unknown hyperparameter recipe {self.recipe!r}")

    def to_dict(self):
        out = asdict(self)
        out["cov"] = self.cov.token()
        out["estimators"] = list(self.estimators)
        return out

    def noise_variance(self, expected_signal):
        """Fixed sigma_y2 if given, else expected signal / SNR^2."""
        if self.sigma_y2 is not None:
            return float(self.sigma_y2)
        return float(expected_signal) / self.target_snr ** 2


@dataclass
class SimulationReport:
    config: dict
    rows: list
    extra: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    METRIC_COLUMNS = ("l2_dis", "pmse", "s_fpr", "n_selected")

    def aggregate(self):
        """Mean and standard error of each metric per estimator (failures excluded)."""
        out = []
        for est in dict.fromkeys(r["estimator"] for r in self.rows):
            rows = [r for r in self.rows if r["estimator"] == est and not r.get("error")]
            rec = {"estimator": est, "replicates": len(rows)}
            for m in self.METRIC_COLUMNS:
                v = np.array([r[m] for r in rows], dtype=float)
                rec[f"{m}_mean"] = float(v.mean()) if v.size else float("nan")
                rec[f"{m}_se"] = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
            out.append(rec)
        return out


def hyperparameters_for(cfg: SimulationConfig, x, y):
    if cfg.recipe == "snr1":
        return Hyperparameters.from_correlation(x, y, grid_size=cfg.grid_size)
    return Hyperparameters.default(x.shape[0], x.shape[1], grid_size=cfg.grid_size)


def _fit_linear(est, d, h, cfg: SimulationConfig, seed):
    if est == "bmio-bf":
        path = fit_path(d, h, build_grid(d, h.grid_size, h.lam), ("bf",), cfg.cfg)
        return path.best("bf").beta
    if est == "bmio-cv":
        path = fit_path(d, h, build_grid(d, h.grid_size, h.lam), ("cv",), cfg.cfg,
                        K=cfg.cv_folds, seed=seed)
        return path.best("cv").beta
    if est == "lasso-cv":
        lp = cv_lasso(d, default_grid(lambda_max(d), cfg.grid_size), cfg.cv_folds, seed, cfg.cfg)
        return lp.betas[lp.selected]
    raise ValueError(f"unknown estimator {est!r}")


def _fit_logistic(est, d, cfg: SimulationConfig, seed):
    lam = 1.0 / math.sqrt(d.n)
    if est == "bmio-cv":
        rhos = rho_grid(d, LOGISTIC, cfg.grid_size, lam)
        cv = glm_cross_validate(d, LOGISTIC, lam, rhos, cfg.cv_folds, seed, cfg.cfg)
        k = cv.select()
        return glm_path(d, LOGISTIC, lam, rhos[: k + 1], cfg=cfg.cfg)[-1].beta
    if est == "lasso-cv":
        lp = cv_lasso(d, default_grid(lambda_max_logistic(d), cfg.grid_size), cfg.cv_folds,
                      seed, cfg.cfg, logistic=True)
        return lp.betas[lp.selected]
    raise ValueError(f"unknown estimator {est!r}")


def draw_replicate(cfg: SimulationConfig, sigma, rng, logistic=False):
    """Fresh (beta, X, y, X_test) for one replicate."""
    p, k = cfg.p, cfg.n_active
    beta = np.zeros(p)
    beta[:k] = rng.standard_normal(k)
    x = sample_design(sigma, cfg.n, rng)
    x_test = sample_design(sigma, cfg.n * cfg.n_test_mult, rng)
    if logistic:
        prob = 1.0 / (1.0 + np.exp(-(x @ beta)))
        y = (rng.random(cfg.n) < prob).astype(float)
        return TrueModel(beta, 1.0), x, y, x_test
    # expected signal over beta ~ N(0, I_k): trace of the active block
    s2 = cfg.noise_variance(np.trace(sigma[:k, :k]))
    y = x @ beta + rng.normal(0.0, math.sqrt(s2), cfg.n)
    return TrueModel(beta, s2), x, y, x_test


def run_study_one(cfg: SimulationConfig, logistic=False):
    """Per-replicate metrics for each estimator (linear, or logistic when asked)."""
    rows = []
    for r in range(cfg.replicates):
        seed = cfg.seed + r
        rng = rng_for(seed)
        sigma = sample_covariance(cfg.cov, cfg.p, seed)
        truth, x, y, x_test = draw_replicate(cfg, sigma, rng, logistic)
        d = Dataset(x, y)
        h = None if logistic else hyperparameters_for(cfg, x, y)
        for est in cfg.estimators:
            row = {"study": "glm" if logistic else "one", "estimator": est, "replicate": r,
                   "seed": seed, "n": cfg.n, "p": cfg.p, "cov": cfg.cov.token(),
                   "sigma_y2": truth.sigma_y2,
                   "snr": snr(truth.beta, sigma, truth.sigma_y2) if not logistic else float("nan"),
                   "target_snr": (math.sqrt(np.trace(sigma[:cfg.n_active, :cfg.n_active])
                                            / truth.sigma_y2) if not logistic else float("nan")),
                   "error": ""}
            try:
                if logistic:
                    bhat = _fit_logistic(est, d, cfg, seed)
                else:
                    bhat = _fit_linear(est, d, h, cfg, seed)
                row.update(asdict(compute_metrics(bhat, truth, x_test)))
            except (SolverError, np.linalg.LinAlgError, FloatingPointError) as exc:
                row.update({m: float("nan") for m in SimulationReport.METRIC_COLUMNS})
                row["error"] = str(exc)
            rows.append(row)
    return SimulationReport(cfg.to_dict(), rows)


def sign_match_on_path(betas, beta_true):
    """True when some point of the path reproduces sign(beta_true) exactly."""
    target = np.sign(beta_true)
    return bool(np.any(np.all(np.sign(betas) == target, axis=1)))


def bmio_path_betas(d: Dataset, h: Hyperparameters, cfg=SolverConfig()):
    grid = build_grid(d, h.grid_size, h.lam)
    betas, _ = path_betas(d, h, grid.psi_values, cfg)
    return betas


def lasso_path_betas(d: Dataset, G=100, cfg=SolverConfig()):
    return fit_lasso(d, default_grid(lambda_max(d), G), cfg).betas


def selection_probability(sigma, beta, sigma_y2, n, replicates, seed, estimators=("bmio", "lasso"),
                          recipe="default", grid_size=100, cfg=SolverConfig()):
    """Fraction of replicates whose path contains the true sign vector."""
    hits = {e: 0 for e in estimators}
    for r in range(replicates):
        rng = rng_for(seed + r)
        x = sample_design(sigma, n, rng)
        y = x @ beta + rng.normal(0.0, math.sqrt(sigma_y2), n)
        d = Dataset(x, y)
        for e in estimators:
            if e == "bmio":
                if recipe == "snr1":
                    h = Hyperparameters.from_correlation(x, y, grid_size=grid_size)
                else:
                    h = Hyperparameters.default(n, d.p, grid_size=grid_size)
                betas = bmio_path_betas(d, h, cfg)
            elif e == "lasso":
                betas = lasso_path_betas(d, grid_size, cfg)
            else:
                raise ValueError(f"unknown estimator {e!r}")
            hits[e] += sign_match_on_path(betas, beta)
    return {e: hits[e] / replicates for e in estimators}


def run_study_two(cfg: SimulationConfig):
    """Irrepresentable statistic and path-match probability per (Sigma, beta) pair."""
    k = cfg.n_active
    est = [e for e in ("bmio", "lasso") if any(s.startswith(e) for s in cfg.estimators)]
    pairs = []
    for i in range(cfg.n_pairs):
        pseed = cfg.seed + 100_000 * (i + 1)
        rng = rng_for(pseed)
        sigma = sample_covariance(cfg.cov, cfg.p, pseed)
        beta = np.zeros(cfg.p)
        beta[:k] = rng.standard_normal(k)
        xbig = sample_design(sigma, cfg.irr_rows, rng)
        stat = irr_stat(xbig, np.arange(k), np.sign(beta[:k]))
        s2 = cfg.noise_variance(np.trace(sigma[:k, :k]))
        probs = selection_probability(sigma, beta, s2, cfg.n, cfg.replicates, pseed + 1,
                                      est, cfg.recipe, cfg.grid_size, cfg.cfg)
        row = {"pair": i, "seed": pseed, "irr_stat": stat, "sigma_y2": s2,
               "snr": snr(beta, sigma, s2), "grid_size": cfg.grid_size,
               "replicates": cfg.replicates}
        row.update({f"prob_{e}": probs[e] for e in est})
        pairs.append(row)
    summary = {
        f"kendall_r2_{e}": kendall_r2([r[f"prob_{e}"] for r in pairs], [r["irr_stat"] for r in pairs])
        for e in est
    } if len(pairs) > 1 else {}
    return SimulationReport(cfg.to_dict(), [], pairs, summary)


def kendall_r2(probs, stats_):
    """Squared Kendall tau between selection probabilities and the statistic."""
    tau = stats.kendalltau(probs, stats_).statistic
    return float(tau ** 2) if np.isfinite(tau) else 0.0


def rows_to_csv(rows, columns=None):
    if not rows:
        return ""
    columns = columns or list(rows[0].keys())
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({c: _fmt(r.get(c, "")) for c in columns})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v
