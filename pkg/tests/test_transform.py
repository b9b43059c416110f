import math

import numpy as np
import pytest

from refeq.functions import Func, integral_of
from refeq.problem import REAL_LINE, Interval, Problem, make_problem
from refeq.solver import residual_refinement
from refeq.transform import (SupportWindow, TransformError, builtin_diffeo, check_interior_invariance,
                             check_support, conjugate_problem, identity_diffeo,
                             inverse_transport_solution, transport_solution)

UNIT = Interval(0.0, 1.0)
SIG = builtin_diffeo("logistic", REAL_LINE, UNIT)


def sigma(x):
    return 1.0 / (1.0 + np.exp(-x))


def test_logistic_closed_form():
    assert SIG(0.0) == 0.5
    assert math.isclose(SIG.inverse(0.25), math.log(1 / 3), rel_tol=1e-15)
    assert SIG.derivative(0.0) == 0.25
    assert SIG.check() == []
    x = np.linspace(-20, 20, 81)
    # exp(-|x|) / (1 + exp(-|x|))^2 avoids the cancellation in 1 - sigma
    e = np.exp(-np.abs(x))
    np.testing.assert_allclose(SIG.derivative(x), e / (1 + e) ** 2, rtol=1e-12)


def test_general_logistic_and_affine():
    d = builtin_diffeo("logistic", REAL_LINE, Interval(2.0, 5.0))
    assert d(0.0) == 3.5 and d.check() == []
    a = builtin_diffeo("affine", UNIT, Interval(2.0, 5.0))
    assert a(0.5) == 3.5 and a.inverse(5.0) == 1.0 and a.derivative(0.3) == 3.0
    h = builtin_diffeo("affine", Interval(0.0, math.inf), Interval(-math.inf, 1.0))
    assert h(0.0) == 1.0 and h(3.0) == -2.0 and h.check() == []


def test_tan_half():
    d = builtin_diffeo("tan_half", UNIT, REAL_LINE)
    assert abs(d(0.5)) < 1e-15
    assert math.isclose(d(0.75), 1.0, rel_tol=1e-14)
    assert math.isclose(d.derivative(0.5), math.pi, rel_tol=1e-14)
    assert d.check() == []


def test_bad_requests():
    with pytest.raises(TransformError):
        builtin_diffeo("logistic", UNIT, REAL_LINE)
    with pytest.raises(TransformError):
        builtin_diffeo("cubic", UNIT, REAL_LINE)
    with pytest.raises(TransformError):
        builtin_diffeo("affine", UNIT, REAL_LINE)
    with pytest.raises(TransformError):
        SIG.compose(SIG)


def test_inverted_derivative():
    inv = SIG.inverted()
    y = np.array([0.1, 0.5, 0.9])
    np.testing.assert_allclose(inv.derivative(y), 1 / (y * (1 - y)), rtol=1e-12)


def test_conjugate_square_map():
    p = make_problem([(1.0, "x^2")], interval=UNIT)
    c = conjugate_problem(p, SIG)
    assert c.interval == REAL_LINE
    assert math.isclose(c.atoms[0](0.0), math.log(1 / 3), rel_tol=1e-14)
    x = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(c.atoms[0](x), np.log(sigma(x) ** 2 / (1 - sigma(x) ** 2)),
                               rtol=1e-12, atol=1e-13)


def test_conjugate_by_identity(dyadic):
    c = conjugate_problem(dyadic, identity_diffeo(REAL_LINE))
    x = np.linspace(-3, 3, 13)
    for a, b in zip(c.atoms, dyadic.atoms):
        np.testing.assert_array_equal(a(x), b(x))


def test_conjugation_cancels_round_trips():
    # affine maps on the unit interval stay exactly affine after a logistic pullback and back
    p = make_problem([(0.5, "x/2"), (0.5, "x/2 + 1/2")], interval=UNIT)
    back = conjugate_problem(conjugate_problem(p, SIG), SIG.inverted())
    assert [a.map.source for a in back.atoms] == ["(x / 2.0)", "((x / 2.0) + (1.0 / 2.0))"]
    y = np.linspace(0.01, 0.99, 99)
    for a, b in zip(back.atoms, p.atoms):
        np.testing.assert_array_equal(a(y), b(y))


def test_functoriality():
    target = Interval(2.0, 5.0)
    p = make_problem([(0.4, "2 + (x - 2)^2/3"), (0.6, "(x + 5)/2")], interval=target)
    d1 = builtin_diffeo("affine", UNIT, target)
    both = d1.compose(SIG)
    one = conjugate_problem(p, both)
    two = conjugate_problem(conjugate_problem(p, d1), SIG)
    x = np.linspace(-4, 4, 17)
    for a, b in zip(one.atoms, two.atoms):
        np.testing.assert_allclose(a(x), b(x), rtol=1e-12, atol=1e-12)


def test_transport_of_uniform():
    f = Func(lambda y: np.ones(np.shape(y)), support=(0, 1))
    ft = transport_solution(f, SIG)
    assert ft(0.0) == 0.25
    x = np.linspace(-10, 10, 41)
    e = np.exp(-np.abs(x))
    np.testing.assert_allclose(ft(x), e / (1 + e) ** 2, rtol=1e-12)
    # mass is preserved
    assert math.isclose(integral_of(ft, -40, 40), 1.0, abs_tol=1e-12)


def test_transport_round_trip():
    f = Func(lambda y: 6 * y * (1 - y), support=(0, 1))
    back = inverse_transport_solution(transport_solution(f, SIG), SIG)
    y = np.linspace(0.001, 0.999, 99)
    np.testing.assert_allclose(back(y), f(y), rtol=1e-10)
    assert back(1.5) == 0.0 and back.flagged == 0


def test_residual_invariant_under_conjugation():
    p = make_problem([(0.5, "x/2"), (0.5, "x/2 + 1/2")], interval=UNIT)
    f = Func(lambda y: 6 * y * (1 - y), support=(0, 1))
    g = Func(lambda y: 0.5 * np.ones(np.shape(y)), support=(0, 1))
    r = residual_refinement(f, p, g, window=(0, 1))
    q = conjugate_problem(Problem(p.interval, p.atoms, g), SIG)
    rt = residual_refinement(transport_solution(f, SIG), q, q.g, window=(-40, 40))
    assert math.isclose(r, rt, rel_tol=1e-6)


def test_support_gate():
    w = SupportWindow(0.0, 1.0)
    check_support(Func(lambda y: np.ones(np.shape(y)), support=(0.2, 0.8)), w)
    with pytest.raises(TransformError, match="outside"):
        check_support(Func(lambda y: np.ones(np.shape(y)), support=(0.5, 1.5)), w)
    with pytest.raises(TransformError):
        SupportWindow(1.0, 1.0)


def test_interior_invariance_gate():
    w = SupportWindow(0.0, 1.0)
    check_interior_invariance(make_problem([(0.5, "x^2"), (0.5, "sqrt(x)")], interval=UNIT), w)
    with pytest.raises(TransformError):
        check_interior_invariance(make_problem([(1.0, "x + 0.5")], interval=UNIT), w)
    with pytest.raises(TransformError, match="limit"):
        check_interior_invariance(make_problem([(1.0, "x/2 + 1/4")], interval=UNIT), w)


def test_window_maps_conjugate_back_to_dyadic(dyadic):
    logit = SIG.inverted()
    window_problem = conjugate_problem(dyadic, logit)
    assert window_problem.interval == UNIT
    line = conjugate_problem(window_problem, SIG)
    x = np.linspace(-30, 30, 121)
    for a, b in zip(line.atoms, dyadic.atoms):
        np.testing.assert_allclose(a(x), b(x), rtol=0, atol=1e-9)
