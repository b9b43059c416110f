import math

import numpy as np
import pytest

from refeq.checks import AntiderivativeG, build_G
from refeq.functions import Func, indicator, l1_distance
from refeq.problem import Interval, SolverParams, make_problem
from refeq.solver import (CdfSolution, ManufactureError, PreconditionError, cascade_iterate,
                          derive_density, make_grid, manufacture_g, pointwise_residual,
                          residual_cdf_equation, residual_refinement, solve_F_reflected,
                          solve_F_series, transfer)

FAST = SolverParams(grid_points=2048, mc_samples=20000)


def oracle_g(t):
    # f - Tf for f = 1[0,1] under the dyadic pair
    t = np.asarray(t, dtype=float)
    return (((t >= 0) & (t <= 1)) - 0.25 * ((t >= 0) & (t <= 2))
            - 0.25 * ((t >= -1) & (t <= 1))).astype(float)


G_ORACLE = Func(oracle_g, support=(-1, 2), breakpoints=(-1, 0, 1, 2))


@pytest.fixture(scope="module")
def manufactured():
    p = make_problem([(0.5, "x/2"), (0.5, "x/2 + 1/2")])
    pair = manufacture_g(p, indicator(0, 1))
    q = pair.problem_with_g()
    return pair, q, build_G(q)


def test_transfer_of_indicator(dyadic):
    x = np.array([-0.5, 0.5, 1.5, 2.5])
    np.testing.assert_array_equal(transfer(dyadic, indicator(0, 1), x), [0.25, 0.5, 0.25, 0.0])


def test_manufacture_matches_closed_form(manufactured):
    pair, _, _ = manufactured
    assert abs(pair.mass) < 1e-12
    x = np.linspace(-1.5, 2.5, 4001)
    x = x[np.min(np.abs(x[:, None] - np.array([-1, 0, 1, 2])), axis=1) > 1e-9]
    np.testing.assert_allclose(pair.g_out(x), oracle_g(x), atol=1e-12)


def test_manufacture_rejects_non_onto_family():
    p = make_problem([(1.0, "x/4")], interval=Interval(0.0, 1.0))
    with pytest.raises(ManufactureError, match="integral"):
        manufacture_g(p, indicator(0, 1))


def test_manufacture_smooth_is_accurate():
    p = make_problem([(0.5, "x/2"), (0.5, "x/2 + 1/2")])
    f = Func(lambda x: 6 * x * (1 - x), support=(0, 1), breakpoints=(0, 1))
    pair = manufacture_g(p, f)
    x = np.linspace(-1, 2, 777)
    np.testing.assert_allclose(pair.g_out(x), f(x) - transfer(p, f, x), atol=1e-8)


def test_zero_g_gives_zero(dyadic):
    G = build_G(dyadic)
    F = solve_F_series(dyadic, G, FAST, window=(-1.0, 2.0))
    assert F.converged and F.terms_used == 1 and np.all(F.values == 0)
    f = cascade_iterate(dyadic, params=FAST, window=(-1.0, 2.0))
    assert f.status == "ok" and np.all(f.values == 0) and f.residual_l1 == 0.0


def test_mixed_sign_zero_case(mixed):
    F = solve_F_reflected(mixed, build_G(mixed), 0.0, FAST, window=(-1.0, 2.0))
    assert F.converged and np.all(F.values == 0)


def test_series_refuses_decreasing_maps(dyadic_decreasing):
    with pytest.raises(PreconditionError, match="increasing"):
        solve_F_series(dyadic_decreasing, build_G(dyadic_decreasing), FAST)


def test_expansive_refused():
    p = make_problem([(1.0, "2*x")], g=indicator(0, 1))
    with pytest.raises(PreconditionError, match="contraction"):
        solve_F_series(p, build_G(p), FAST, window=(0.0, 1.0))
    with pytest.raises(PreconditionError):
        cascade_iterate(p, params=FAST, window=(0.0, 1.0))
    with pytest.raises(PreconditionError):
        solve_F_reflected(p, build_G(p), 0.0, FAST, window=(0.0, 1.0))


def _cdf(grid, values):
    return CdfSolution(grid, values, None, 1, 0.0, (grid[0], grid[-1]), "converged", "series")


def test_derive_density_of_clamped_line():
    x = np.linspace(-0.5, 1.5, 2001)
    d = derive_density(_cdf(x, np.clip(x, 0, 1)))
    assert d.status == "ok"
    inside = (x > 0.01) & (x < 0.99)
    np.testing.assert_allclose(d.values[inside], 1.0, atol=1e-9)
    assert math.isclose(d.l1_norm, 1.0, abs_tol=2e-3)


def test_derive_density_of_constant_is_zero():
    x = np.linspace(0, 1, 11)
    d = derive_density(_cdf(x, np.full(11, 0.3)))
    assert np.all(d.values == 0) and d.status == "ok"


def test_derive_density_flags_staircase():
    x = np.linspace(0, 1, 4001)
    d = derive_density(_cdf(x, np.floor(4 * x) / 4))
    assert d.status == "derivative unreliable"


def test_residual_examples(dyadic):
    z = Func(lambda x: np.zeros(np.shape(x)), support=(0, 1))
    assert math.isclose(residual_refinement(z, dyadic, indicator(0, 1), window=(0, 1)), 1.0,
                        rel_tol=1e-12)
    r = residual_refinement(indicator(0, 1), dyadic, G_ORACLE, window=(-1.0, 2.0))
    assert r < 1e-12
    x = np.array([-0.5, 0.5, 1.5])
    np.testing.assert_array_equal(pointwise_residual(indicator(0, 1), dyadic, G_ORACLE, x), 0.0)


def test_series_recovers_indicator(manufactured):
    _, q, G = manufactured
    F = solve_F_series(q, G, FAST)
    assert F.converged and abs(F.drift) < 1e-6
    h = (F.window[1] - F.window[0]) / (FAST.grid_points - 1)
    d = derive_density(F)
    assert d.status == "ok"
    assert l1_distance(d, indicator(0, 1), *F.window, breakpoints=[0, 1]) < 4 * h
    assert residual_cdf_equation(F, q, G) < 1e-6
    np.testing.assert_allclose(F([-2.0, 0.5, 3.0]), [0.0, 0.5, 1.0], atol=4 * h)


def test_cascade_agrees_with_series(manufactured):
    _, q, G = manufactured
    F = solve_F_series(q, G, FAST)
    c = cascade_iterate(q, params=FAST, G=G, window=F.window)
    h = (F.window[1] - F.window[0]) / (FAST.grid_points - 1)
    assert c.status == "ok"
    assert l1_distance(c, indicator(0, 1), *F.window, breakpoints=[0, 1]) < 4 * h
    assert l1_distance(c, derive_density(F), *F.window) < 4 * h
    assert c.residual_l1 < 4 * h


def test_reflected_matches_series_for_increasing_maps(manufactured):
    _, q, G = manufactured
    F = solve_F_series(q, G, FAST)
    # no pinning here, so the O(1e-8) per-step drift of the discretised G bounds the stop tolerance
    R = solve_F_reflected(q, G, 0.0, FAST.replace(tolerance=1e-7), window=F.window)
    assert R.converged
    np.testing.assert_allclose(R.values - R.values[0], F.values, atol=1e-6)


def test_series_shift_invariance(manufactured):
    # a constant added to G only changes the reported drift
    _, q, G = manufactured
    G2 = AntiderivativeG(G.grid, G.values + 0.125, G.total_mass, G.abs_mass, G.nodes,
                         G.node_abs_g)
    a = solve_F_series(q, G, FAST, window=(-1.06, 2.06))
    b = solve_F_series(q, G2, FAST, window=(-1.06, 2.06))
    assert b.converged
    np.testing.assert_allclose(a.values, b.values, atol=1e-9)
    assert math.isclose(b.drift - a.drift, 0.125, abs_tol=1e-9)


def test_make_grid_snaps_breakpoints():
    x = make_grid((0.0, 1.0), 11, [0.31, 0.5, 2.0])
    assert 0.31 in x and 0.5 in x and x.size == 11 and np.all(np.diff(x) > 0)
