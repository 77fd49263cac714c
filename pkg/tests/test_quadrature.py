import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotflow.quadrature import QuadratureError, adaptive_quadrature


def test_polynomial_exact():
    assert adaptive_quadrature(lambda x: x ** 7, 0.0, 1.0) == pytest.approx(0.125, abs=1e-14)


def test_exponential():
    val = adaptive_quadrature(lambda x: np.exp(x), 0.0, 1.0, tol=1e-12)
    assert val == pytest.approx(np.e - 1.0, abs=1e-12)


def test_oscillatory_cancellation():
    val = adaptive_quadrature(np.sin, 0.0, 2.0 * np.pi, tol=1e-12)
    assert abs(val) < 1e-11


def test_reversed_limits_flip_sign():
    fwd = adaptive_quadrature(lambda x: x * x, 0.0, 2.0)
    rev = adaptive_quadrature(lambda x: x * x, 2.0, 0.0)
    assert rev == pytest.approx(-fwd, abs=1e-13)


def test_empty_interval():
    assert adaptive_quadrature(np.cos, 1.0, 1.0) == 0.0


def test_array_valued_matches_componentwise():
    f = lambda x: np.array([[np.sin(x), x], [np.exp(-x), 1.0]])
    val = adaptive_quadrature(f, 0.0, 1.5, tol=1e-12)
    for i in range(2):
        for j in range(2):
            comp = adaptive_quadrature(lambda x: f(x)[i, j], 0.0, 1.5, tol=1e-12)
            assert val[i, j] == pytest.approx(comp, abs=1e-11)


def test_depth_exhaustion_raises():
    with pytest.raises(QuadratureError):
        adaptive_quadrature(lambda x: np.sin(500.0 * x), 0.0, 3.0,
                            tol=1e-14, max_depth=2)


def test_bad_tolerance_rejected():
    with pytest.raises(ValueError):
        adaptive_quadrature(np.sin, 0.0, 1.0, tol=0.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4),
       st.floats(-2, 2), st.floats(0.1, 3))
def test_cubic_polynomials_exact(coeffs, a, width):
    b = a + width
    poly = np.polynomial.Polynomial(coeffs)
    exact = poly.integ()(b) - poly.integ()(a)
    val = adaptive_quadrature(poly, a, b, tol=1e-12)
    assert val == pytest.approx(exact, abs=1e-9 * (1 + abs(exact)))
