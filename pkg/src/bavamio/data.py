"""Datasets, hyperparameters, fit state and standardization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


@dataclass(frozen=True)
class StandardizeRecord:
    means: np.ndarray
    scales: np.ndarray
    y_center: float
    # columns frozen at zero in skip-constant mode
    constant: np.ndarray

    def __post_init__(self):
        if np.any(self.scales <= 0):
            raise DataError("standardization scales must be positive")

    def coef_to_original(self, beta):
        """Map coefficients fitted on standardized data back to the raw scale.

        Returns ``(intercept, beta_raw)`` such that
        ``intercept + X_raw @ beta_raw`` reproduces the standardized-scale
        predictions shifted by the response center.
        """
        beta = np.asarray(beta, dtype=float)
        raw = np.where(self.constant, 0.0, beta / self.scales)
        intercept = self.y_center - float(self.means @ raw)
        return intercept, raw


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix ``x`` (n x p, column-major) and response ``y``."""

    x: np.ndarray
    y: np.ndarray
    column_names: tuple | None = None
    record: StandardizeRecord | None = None

    def __post_init__(self):
        x = np.asfortranarray(np.asarray(self.x, dtype=float))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float).ravel())
        if x.ndim != 2:
            raise DataError("x must be two-dimensional")
        if x.shape[0] != y.shape[0]:
            raise DataError(f"x has {x.shape[0]} rows but y has length {y.shape[0]}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("x and y must be finite")
        if self.column_names is not None and len(self.column_names) != x.shape[1]:
            raise DataError("column_names length does not match number of columns")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def standardized(self) -> bool:
        return self.record is not None

    @cached_property
    def col_sq(self) -> np.ndarray:
        """Column sums of squares."""
        return np.einsum("ij,ij->j", self.x, self.x)

    @cached_property
    def xty(self) -> np.ndarray:
        return self.x.T @ self.y

    def names(self):
        if self.column_names is not None:
            return list(self.column_names)
        return [f"x{j + 1}" for j in range(self.p)]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.x[rows], self.y[rows], self.column_names, self.record)


@dataclass(frozen=True)
class Hyperparameters:
    lam: float
    tau1: float
    tau2: float
    tau3: float = 1e-6
    grid_size: int = 100

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise ValueError("tau1 and tau2 must be positive")
        if not 0 < self.tau3 < 1:
            raise ValueError("tau3 must lie in (0, 1)")
        if self.grid_size < 2:
            raise ValueError("grid_size must be at least 2")

    @classmethod
    def default(cls, n, p, scale=1.0, **kw):
        """lambda = 1/sqrt(n), tau2 = scale * p log p / sqrt(n), tau1 = tau2 + 1."""
        t2 = scale * p * math.log(p) / math.sqrt(n)
        return cls(lam=1.0 / math.sqrt(n), tau1=t2 + 1.0, tau2=t2, **kw)

    @classmethod
    def from_correlation(cls, x, y, **kw):
        """Low-SNR recipe driven by the mean of the top 10% |corr(y, x_j)|."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        n, p = x.shape
        c = top_correlation(x, y)
        c = min(max(c, 1e-6), 1 - 1e-6)
        a = p * math.log(p) / math.sqrt(n)
        lam = ((1 - c) / c) ** 2 * math.sqrt(p / n) * math.log(p)
        tau1 = (c / (1 - c)) * a ** (c / math.log(n)) + 1.0
        tau2 = a ** (1 + c / math.log(n)) / math.sqrt(n)
        return cls(lam=lam, tau1=tau1, tau2=tau2, **kw)


def top_correlation(x, y, frac=0.1):
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    denom = np.sqrt((xc ** 2).sum(axis=0) * (yc ** 2).sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.abs(xc.T @ yc) / denom
    corr = np.nan_to_num(corr)
    k = max(1, int(math.ceil(frac * x.shape[1])))
    return float(np.sort(corr)[::-1][:k].mean())


@dataclass
class FitState:
    beta: np.ndarray
    sigma2: float
    mm_weights: np.ndarray
    threshold: float
    rho: float = 0.0
    outer_iters: int = 0
    mm_iters: int = 0
    cd_sweeps: int = 0
    converged: bool = True
    intercept: float = 0.0
    objective_trace: list = field(default_factory=list)

    @property
    def gamma(self) -> np.ndarray:
        return (self.beta != 0).astype(np.int8)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta)

    @property
    def n_selected(self) -> int:
        return int(np.count_nonzero(self.beta))


def sign(x) -> int:
    if x > 0:
        return 1
    if x < 0:
        return -1
    return 0


def read_table(path):
    """Parse a comma-separated numeric file with a header row.

    Returns ``(header, values)``; errors name the offending line and column.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"line {i}: expected {len(header)} fields, found {len(row)}")
        for j, cell in enumerate(row):
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"line {i}, column {j + 1} ({header[j]!r}): non-numeric value {cell!r}"
                ) from None
    if not np.all(np.isfinite(values)):
        i, j = np.argwhere(~np.isfinite(values))[0]
        raise DataError(f"line {i + 2}, column {j + 1}: non-finite value")
    return header, values


def load_dataset(path, response_column) -> Dataset:
    """Read a comma-separated file with a header row.

    ``response_column`` is a header name or a zero-based column index.
    """
    header, values = read_table(path)
    if isinstance(response_column, int) or str(response_column).isdigit():
        k = int(response_column)
        if not 0 <= k < len(header):
            raise DataError(f"response column index {k} out of range")
    else:
        if response_column not in header:
            raise DataError(f"response column {response_column!r} not in header")
        k = header.index(response_column)
    keep = [j for j in range(len(header)) if j != k]
    return Dataset(values[:, keep], values[:, k], tuple(header[j] for j in keep))


def standardize(d: Dataset, center_response=True, skip_constant=False):
    """Center each column and scale it to unit sample variance (ddof=1)."""
    if d.n < 2:
        raise DataError("need at least two rows to standardize")
    means = d.x.mean(axis=0)
    scales = d.x.std(axis=0, ddof=1)
    constant = scales == 0
    if np.any(constant):
        if not skip_constant:
            bad = [d.names()[j] for j in np.flatnonzero(constant)]
            raise DataError(f"constant columns: {', '.join(bad)}")
        scales = np.where(constant, 1.0, scales)
    x = (d.x - means) / scales
    x[:, constant] = 0.0
    y_center = float(d.y.mean()) if center_response else 0.0
    rec = StandardizeRecord(means, scales, y_center, constant)
    return Dataset(x, d.y - y_center, d.column_names, rec), rec


def unstandardize(d: Dataset, rec: StandardizeRecord) -> Dataset:
    x = d.x * rec.scales + rec.means
    x[:, rec.constant] = rec.means[rec.constant]
    return Dataset(x, d.y + rec.y_center, d.column_names)
