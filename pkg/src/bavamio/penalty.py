"""Norms, the log-sum surrogate of the l0 norm, and its majorizer."""

import math

import numpy as np


def norm(v, kind="l2"):
    v = np.asarray(v, dtype=float)
    if kind == "l0":
        return float(np.count_nonzero(v))
    if kind == "l1":
        return float(np.abs(v).sum())
    if kind == "l2":
        return float(np.sqrt(v @ v))
    if kind == "linf":
        return float(np.abs(v).max()) if v.size else 0.0
    raise ValueError(f"unknown norm {kind!r}")


def rho_tau(tau3):
    """1 / log(1 + 1/tau3), the normalizer of the log-sum penalty."""
    if tau3 <= 0:
        raise ValueError("tau3 must be positive")
    return 1.0 / math.log1p(1.0 / tau3)


def logsum_terms(v, tau3):
    return np.log1p(np.abs(np.asarray(v, dtype=float)) / tau3) * rho_tau(tau3)


def logsum(v, tau3):
    """sum_j log(1 + |v_j|/tau3) / log(1 + 1/tau3).

    Tends to the l0 norm as tau3 -> 0 and to the l1 norm as tau3 -> inf.
    """
    return float(logsum_terms(v, tau3).sum())


def mm_weights(beta, tau3):
    """Slopes of the log-sum penalty at ``beta``; these reweight the l1 step."""
    return rho_tau(tau3) / (np.abs(np.asarray(beta, dtype=float)) + tau3)


def initial_weight(tau3):
    """The MM weight at beta_j = 0."""
    return rho_tau(tau3) / tau3


def majorizer(beta, anchor, tau3):
    beta = np.abs(np.asarray(beta, dtype=float))
    anchor = np.abs(np.asarray(anchor, dtype=float))
    if beta.shape != anchor.shape:
        raise ValueError("beta and anchor must have the same shape")
    terms = np.log1p(anchor / tau3) + (beta + tau3) / (anchor + tau3) - 1.0
    return float(rho_tau(tau3) * terms.sum())


def soft_threshold(a, b):
    if b < 0:
        raise ValueError("threshold must be non-negative")
    if a > b:
        return a - b
    if a < -b:
        return a + b
    return 0.0


def soft_threshold_array(a, b):
    a = np.asarray(a, dtype=float)
    return np.sign(a) * np.maximum(np.abs(a) - b, 0.0)
