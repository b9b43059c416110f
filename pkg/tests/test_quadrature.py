import math

import numpy as np
import pytest
from scipy import integrate as sci

from refeq.quadrature import composite_gauss, gauss_kronrod, integrate


@pytest.mark.parametrize("fn,a,b,bp", [
    (np.exp, 0.0, 1.0, None),
    (np.sqrt, 0.0, 2.0, None),
    (lambda x: np.where(x < 0.3, 1.0, -2.0), 0.0, 1.0, [0.3]),
    (lambda x: np.abs(np.sin(5 * x)), -1.0, 2.0, None),
])
def test_against_scipy_quad(fn, a, b, bp):
    ref, _ = sci.quad(lambda t: float(fn(np.array(t))), a, b, points=bp, limit=500,
                      epsabs=1e-13, epsrel=1e-13)
    res = gauss_kronrod(fn, a, b, bp, abs_tol=1e-11)
    assert res.converged
    assert abs(res.value - ref) < 1e-9


def test_pieces_sum_to_value():
    res = gauss_kronrod(np.cos, 0.0, 3.0)
    assert math.isclose(float(np.sum(res.pieces)), res.value, rel_tol=1e-14)
    assert res.edges[0] == 0.0 and res.edges[-1] == 3.0


def test_polynomial_exact_on_composite_gauss():
    edges = np.linspace(-1, 2, 4)
    # degree 15 is integrated exactly by 8-point Gauss-Legendre
    assert math.isclose(composite_gauss(lambda x: x ** 15, edges), (2 ** 16 - 1) / 16, rel_tol=1e-13)


def test_integrate_empty_interval():
    assert integrate(np.exp, 1.0, 1.0) == 0.0
