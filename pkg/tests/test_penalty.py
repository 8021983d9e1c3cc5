import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bavamio.penalty import (
    initial_weight,
    logsum,
    logsum_terms,
    majorizer,
    mm_weights,
    norm,
    rho_tau,
    soft_threshold,
    soft_threshold_array,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_norms():
    assert norm([3, -4], "l2") == 5.0
    assert norm([0, 0, 7], "l0") == 1.0
    assert norm([1, -2, 3], "linf") == 3.0
    assert norm([1, -2, 3], "l1") == 6.0
    with pytest.raises(ValueError):
        norm([1], "l3")


def test_logsum_simple_values():
    assert logsum([0, 0], 1e-3) == 0.0
    for t in (1e-6, 0.3, 5.0):
        assert logsum([1.0], t) == pytest.approx(1.0, abs=1e-15)


def test_logsum_extended_precision():
    mpmath.mp.dps = 50
    ref = mpmath.log(1 + mpmath.mpf("0.5") / mpmath.mpf("1e-6")) / mpmath.log(1 + 1 / mpmath.mpf("1e-6"))
    v = logsum([0.5], 1e-6)
    assert 0 < v < 1
    assert v == pytest.approx(float(ref), abs=1e-15)


def test_mm_weights():
    t = 1e-6
    assert mm_weights([0.0], t)[0] == pytest.approx(1.0 / (t * math.log(1 + 1 / t)), rel=1e-14)
    assert initial_weight(t) == mm_weights([0.0], t)[0]
    assert mm_weights([1e6], t)[0] < 1e-7
    w = mm_weights([1.0, 0.0], 1e-2)
    c = 1.0 / math.log(1.0 + 100.0)
    assert w[0] == pytest.approx(c / 1.01, rel=1e-14)
    assert w[1] == pytest.approx(c / 0.01, rel=1e-14)


def test_mm_weights_are_the_slope():
    b = np.array([0.3, -1.7, 4.0])
    t, h = 1e-2, 1e-6
    fd = (logsum_terms(np.abs(b) + h, t) - logsum_terms(np.abs(b) - h, t)) / (2 * h)
    np.testing.assert_allclose(mm_weights(b, t), fd, rtol=1e-7)


def test_majorizer_values():
    b, a, t = np.array([0.3, -0.7]), np.array([0.1, 0.1]), 1e-3
    c = 1.0 / math.log(1 + 1 / t)
    direct = sum(c * (math.log(1 + 0.1 / t) + (abs(bj) + t) / (0.1 + t) - 1) for bj in b)
    assert majorizer(b, a, t) == pytest.approx(direct, rel=1e-12)
    assert majorizer(b, b, t) == pytest.approx(logsum(b, t), rel=1e-12)
    with pytest.raises(ValueError):
        majorizer([1.0], [1.0, 2.0], t)


def test_majorization_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p = rng.integers(1, 6)
        t = 10.0 ** rng.uniform(-8, 0)
        b = rng.normal(0, 2, p) * (rng.random(p) < 0.7)
        a = rng.normal(0, 2, p) * (rng.random(p) < 0.7)
        assert majorizer(b, a, t) >= logsum(b, t) - 1e-12 * max(1.0, logsum(b, t))
        assert abs(majorizer(a, a, t) - logsum(a, t)) <= 1e-12 * max(1.0, logsum(a, t))


def test_soft_threshold():
    assert soft_threshold(5, 2) == 3
    assert soft_threshold(-5, 2) == -3
    assert soft_threshold(1, 2) == 0
    assert soft_threshold(2, 2) == 0  # boundary tie goes to zero
    with pytest.raises(ValueError):
        soft_threshold(1, -1)
    np.testing.assert_array_equal(soft_threshold_array([5, -5, 1], 2), [3, -3, 0])


@given(finite, finite, st.floats(0, 100))
def test_soft_threshold_non_expansive(a, b, t):
    assert abs(soft_threshold(a, t) - soft_threshold(b, t)) <= abs(a - b) + 1e-12


@given(finite, st.floats(0, 100))
def test_soft_threshold_is_prox(a, t):
    # ST(a, t) minimizes (z - a)^2 / 2 + t |z|
    z = soft_threshold(a, t)
    f = lambda v: 0.5 * (v - a) ** 2 + t * abs(v)
    for dz in (-1e-3, 1e-3):
        assert f(z) <= f(z + dz) + 1e-9


@settings(max_examples=200)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8), st.floats(1e-8, 0.9))
def test_logsum_bounds(v, t):
    v = np.array(v)
    terms = logsum_terms(v, t)
    assert np.all(terms >= 0)
    assert np.all(terms[v == 0] == 0)
    # below 1 inside the unit ball, above outside
    inside = (np.abs(v) < 1) & (v != 0)
    assert np.all(terms[inside] <= 1 + 1e-12)
    assert np.all(terms[np.abs(v) > 1] >= 1 - 1e-12)


def test_rho_tau_validation():
    with pytest.raises(ValueError):
        rho_tau(0.0)
    assert rho_tau(1.0) == pytest.approx(1 / math.log(2))


def test_logsum_limits():
    b = np.array([0.1, 0.5, 2.0, 10.0])
    # towards the l0 indicator as tau3 falls, approach is monotone
    prev = None
    for t in (1e-2, 1e-4, 1e-6, 1e-8, 1e-10):
        gap = np.abs(logsum_terms(b, t) - 1.0)
        if prev is not None:
            assert np.all(gap <= prev + 1e-15)
        prev = gap
    # towards |beta| as tau3 grows
    np.testing.assert_allclose(logsum_terms(b, 1e6), np.abs(b), rtol=1e-4)
