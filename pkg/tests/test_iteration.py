import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from refeq.iteration import (AtomicDistribution, EmpiricalCDF, SupportBudgetError, apply_word,
                             cdf_rows, dkw_bound, empirical_cdf, estimate_limit_cdf,
                             exact_distribution, ks_distance, merge_atoms, sample_trajectory,
                             simulate, uniform_cdf, write_cdf_csv)
from refeq.problem import Interval, extend_to_closure, make_problem


def test_apply_word_examples(dyadic):
    # atom indices are 0-based: 0 is x/2, 1 is x/2 + 1/2
    assert apply_word(dyadic, 0.0, [1, 1]) == 0.75
    assert apply_word(dyadic, 0.0, [0, 1]) == 0.5
    assert apply_word(dyadic, 3.7, []) == 3.7


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 1), max_size=20), st.lists(st.integers(0, 1), max_size=20),
       st.floats(-100, 100))
def test_apply_word_associative(w1, w2, x):
    p = make_problem([(0.5, "x/2"), (0.5, "x/2 + 1/2")])
    assert apply_word(p, x, w1 + w2) == apply_word(p, apply_word(p, x, w1), w2)


def test_trajectory_deterministic_and_contracting(dyadic):
    a = sample_trajectory(dyadic, 7.0, 50, 123)
    assert a == sample_trajectory(dyadic, 7.0, 50, 123)
    assert len(a) == 50
    assert -2.0 ** -49 * 7 <= a[-1] <= 1.0


def test_single_atom_chain():
    p = make_problem([(1.0, "x/2")])
    assert sample_trajectory(p, 1.0, 3, 0) == [0.5, 0.25, 0.125]


def test_exact_distribution_small_depths(dyadic):
    d2 = exact_distribution(dyadic, 0.0, 2)
    assert d2.as_dict() == {0.0: 0.25, 0.25: 0.25, 0.5: 0.25, 0.75: 0.25}
    assert exact_distribution(dyadic, 0.0, 1).as_dict() == {0.0: 0.5, 0.5: 0.5}


def test_exact_distribution_depth_12_is_uniform_lattice(dyadic):
    d = exact_distribution(dyadic, 0.0, 12)
    np.testing.assert_array_equal(d.locations, np.arange(4096) / 4096)
    assert np.all(d.masses == 2.0 ** -12)


def test_exact_distribution_budget(dyadic):
    with pytest.raises(SupportBudgetError, match="Monte Carlo"):
        exact_distribution(dyadic, 0.0, 40, max_support=10 ** 6)


def test_masses_sum_to_one_after_merging(mixed):
    d = exact_distribution(mixed, 0.3, 10)
    assert abs(math.fsum(d.masses) - 1.0) <= 1e-12
    assert np.all(np.diff(d.locations) > 0)


def test_merge_atoms():
    loc, m = merge_atoms(np.array([0.5, 0.0, 0.5 + 1e-14]), np.array([0.25, 0.5, 0.25]))
    np.testing.assert_array_equal(loc, [0.0, 0.5])
    np.testing.assert_array_equal(m, [0.5, 0.5])


def test_empirical_cdf_steps():
    e = EmpiricalCDF.from_samples([0.5, 0.0])
    assert e(-0.1) == 0.0 and e(0.0) == 0.5 and e(0.4) == 0.5 and e(0.5) == 1.0


def test_empirical_cdf_determinism(dyadic):
    a = empirical_cdf(dyadic, 0.0, 20, 1000, 5)
    b = empirical_cdf(dyadic, 0.0, 20, 1000, 5)
    np.testing.assert_array_equal(a.values, b.values)


def test_ks_examples():
    e = EmpiricalCDF.from_samples([0.0, 0.5])
    assert ks_distance(e, e) == 0.0
    assert ks_distance(e, uniform_cdf()) == 0.5
    assert ks_distance(uniform_cdf(), e) == 0.5
    assert ks_distance(EmpiricalCDF.from_samples([0.0]), EmpiricalCDF.from_samples([1.0])) == 1.0


def test_ks_against_brute_force():
    rng = np.random.default_rng(1)
    a = EmpiricalCDF.from_samples(rng.random(50))
    b = EmpiricalCDF.from_samples(rng.random(70))
    t = np.sort(np.concatenate([a.values, b.values]))
    # sup over all jumps, both right values and left limits
    brute = max(np.max(np.abs(a(t) - b(t))), np.max(np.abs(a(t - 1e-12) - b(t - 1e-12))))
    assert math.isclose(ks_distance(a, b), brute, abs_tol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30), st.randoms())
def test_ks_permutation_invariant(vals, r):
    shuffled = list(vals)
    r.shuffle(shuffled)
    u = uniform_cdf(-10, 10)
    assert ks_distance(EmpiricalCDF.from_samples(vals), u) == ks_distance(
        EmpiricalCDF.from_samples(shuffled), u)


def test_limit_dyadic_uniform(dyadic):
    lim = estimate_limit_cdf(dyadic, [0.0, 10.0], [20, 40], 20000, 0)
    assert lim.converged
    assert ks_distance(lim, uniform_cdf()) < 0.02
    assert max(lim.ks_starts) < 0.02


def test_limit_point_mass():
    p = make_problem([(1.0, "x/2")])
    lim = estimate_limit_cdf(p, [-5.0, 7.0], [20, 40], 2000, 0)
    assert lim.converged and max(lim.ks_starts) < 0.01
    assert abs(lim.quantile(0.5)) < 1e-10


def test_limit_expansive_flagged():
    p = make_problem([(1.0, "2*x")])
    lim = estimate_limit_cdf(p, [1.0, 3.0], [10, 20], 1000, 0)
    assert not lim.converged and lim.flags


def test_iterates_stay_in_closure():
    iv = Interval(0.0, 1.0)
    p = extend_to_closure(make_problem([(0.5, "x^2"), (0.5, "sqrt(x)")], interval=iv))
    out = simulate(p, 0.0, [5, 10], 500, 3)
    assert np.all(out[10] == 0.0)  # boundary maps to boundary
    out = simulate(p, 0.3, [10], 500, 3)
    assert np.all((out[10] >= 0) & (out[10] <= 1))


def test_dkw_bound_value():
    assert math.isclose(dkw_bound(10 ** 4), math.sqrt(math.log(2000) / 2e4))


def test_cdf_csv(tmp_path):
    e = EmpiricalCDF.from_samples([0.1, 0.1, 0.3])
    path = tmp_path / "d.csv"
    write_cdf_csv(e, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,cdf"
    assert lines[1] == "0.10000000000000001,0.66666666666666663"
    t, c = cdf_rows(AtomicDistribution(np.array([0.0, 1.0]), np.array([0.5, 0.5])))
    np.testing.assert_array_equal(c, [0.5, 1.0])
