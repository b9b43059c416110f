import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from refeq.functions import Tabulated
from refeq.problem import (REAL_LINE, DerivativeSignError, Interval, ProblemError, SolverParams,
                           central_difference, classify_atoms, effective_support,
                           extend_to_closure, invert_map, load_config, make_atom, make_problem,
                           problem_to_document, validate_map_family)

DYADIC_DOC = {
    "label": "dyadic",
    "interval": {"lo": "-inf", "hi": "+inf"},
    "atoms": [{"weight": 0.5, "map": "x/2"}, {"weight": 0.5, "map": "x/2 + 1/2"}],
    "g": "0",
}


def test_interval_basics(unit):
    assert REAL_LINE.is_real_line and not REAL_LINE.bounded
    assert unit.bounded and unit.contains(0.5) and not unit.contains(0.0)
    assert unit.closure_contains(0.0)
    assert Interval(0, math.inf).finite_endpoints() == [("lo", 0.0)]
    with pytest.raises(ProblemError):
        Interval(1, 1)


def test_probe_grids_stay_inside():
    for iv in (REAL_LINE, Interval(0, 1), Interval(2, math.inf), Interval(-math.inf, -1)):
        p = iv.probe_grid(64)
        assert p.size == 64 and np.all(iv.contains(p)) and np.all(np.diff(p) > 0)


def test_load_dyadic_config():
    cfg = load_config(DYADIC_DOC)
    assert len(cfg.problem.atoms) == 2
    assert cfg.params == SolverParams()
    assert cfg.problem.atoms[1](0.0) == 0.5


def test_weight_sum_violation():
    doc = dict(DYADIC_DOC, atoms=[{"weight": 0.5, "map": "x/2"}, {"weight": 0.6, "map": "x"}])
    with pytest.raises(ProblemError, match="sum"):
        load_config(doc)


def test_non_integrable_g():
    with pytest.raises(ProblemError, match="integrable"):
        load_config(dict(DYADIC_DOC, g="1"))


def test_schema_violation_and_missing_file(tmp_path):
    with pytest.raises(ProblemError, match="schema"):
        load_config({"atoms": []})
    with pytest.raises(ProblemError):
        load_config(tmp_path / "missing.json")
    p = tmp_path / "bad.json"
    p.write_text("{", encoding="utf-8")
    with pytest.raises(ProblemError):
        load_config(p)


def test_document_round_trip(dyadic):
    doc = problem_to_document(dyadic, SolverParams(grid_points=64), alpha_mass=1.0)
    again = load_config(json.loads(json.dumps(doc)))
    assert again.alpha_mass == 1.0 and again.params.grid_points == 64
    assert [a.map for a in again.problem.atoms] == [a.map for a in dyadic.atoms]


def test_tabulated_g_in_config():
    cfg = load_config(dict(DYADIC_DOC, g={"table": [[0, 1], [1, 1]]}))
    assert isinstance(cfg.problem.g, Tabulated)


def test_validation_examples(unit):
    ok = validate_map_family(make_problem([(1.0, "x/2")]))
    assert ok.passed and ok.atoms[0].orientation == "increasing"
    assert ok.atoms[0].onto == "heuristic pass"
    bad = validate_map_family(make_problem([(1.0, "x^2")]))
    assert not bad.passed
    sq = validate_map_family(make_problem([(1.0, "x^2")], interval=unit))
    assert sq.passed and sq.atoms[0].onto == "heuristic pass"
    dec = validate_map_family(make_problem([(1.0, "1 - x")], interval=unit))
    assert dec.passed and dec.atoms[0].orientation == "decreasing"


def test_derivative_expression_checked():
    good = make_problem([make_atom(1.0, "x/2", "0.5")])
    assert validate_map_family(good).atoms[0].derivative_matches
    wrong = make_problem([make_atom(1.0, "x/2", "0.7")])
    assert validate_map_family(wrong).atoms[0].derivative_matches is False


def test_explicit_derivatives_match_central_differences():
    a = make_atom(1.0, "x + 0.1*sin(x)", "1 + 0.1*cos(x)")
    xs = REAL_LINE.probe_grid(64)
    d = a.deriv(xs)
    assert np.all(np.abs(d - central_difference(a.map, xs)) <= 1e-6 * np.maximum(1, np.abs(d)))


def test_classify_examples(mixed, dyadic):
    s = classify_atoms(mixed, REAL_LINE.probe_grid(32))
    assert s.plus_atoms == (0,) and s.minus_atoms == (1,) and s.p_plus == 0.3
    assert classify_atoms(dyadic, [0.0]).p_plus == 1.0


def test_classify_locates_derivative_zero():
    p = make_problem([(1.0, "x^3 - x")])
    with pytest.raises(DerivativeSignError) as info:
        classify_atoms(p, REAL_LINE.probe_grid(32))
    assert abs(abs(info.value.location) - 1 / math.sqrt(3)) < 1e-6


@settings(max_examples=30, deadline=None)
@given(st.permutations(list(np.linspace(-5, 5, 9))))
def test_classify_permutation_invariant(pts):
    p = make_problem([(0.3, "0.9*x"), (0.7, "-0.2*x + 1")])
    assert classify_atoms(p, pts) == classify_atoms(p, sorted(pts))


def test_closure_extension():
    half = Interval(0, math.inf)
    ext = extend_to_closure(make_problem([(1.0, "x/2")], interval=half))
    assert ext.boundary_values[0] == {"lo": 0.0}
    assert ext.apply(0, 0.0) == 0.0
    line = extend_to_closure(make_problem([(1.0, "x/2")]))
    assert line.boundary_values == ({},)
    assert extend_to_closure(line.base) == line
    with pytest.raises(ProblemError, match="not finite"):
        extend_to_closure(make_problem([(1.0, "1/x")], interval=half))


def test_closure_extension_with_undefined_endpoint(unit):
    p = make_problem([(1.0, "1/(1+exp(-(log(x/(1-x))/2)))")], interval=unit)
    ext = extend_to_closure(p)
    assert ext.boundary_values[0] == {"lo": 0.0, "hi": 1.0} or (
        abs(ext.boundary_values[0]["hi"] - 1.0) < 1e-6 and abs(ext.boundary_values[0]["lo"]) < 1e-6)


def test_invert_map(unit):
    a = make_atom(1.0, "x^2")
    np.testing.assert_allclose(invert_map(a, np.array([0.25, 0.81]), unit), [0.5, 0.9], atol=1e-12)
    b = make_atom(1.0, "x/2 + 1/2")
    np.testing.assert_allclose(invert_map(b, np.array([0.0, 3.0]), REAL_LINE), [-1.0, 5.0], atol=1e-9)
    assert math.isnan(float(invert_map(a, np.array([2.0]), unit)[0]))


def test_effective_support():
    assert effective_support(Tabulated([0, 1], [1, 1]), REAL_LINE) == (0.0, 1.0)
    lo, hi = effective_support(lambda t: np.exp(-np.abs(t)), REAL_LINE)
    assert lo < -20 and hi > 20
