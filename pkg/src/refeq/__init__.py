"""Numerical toolkit for inhomogeneous refinement-type equations driven by random maps.

The equation is ``f(x) = sum_i p_i |phi_i'(x)| f(phi_i(x)) + g(x)`` on an
open interval, with a finite family of monotone maps ``phi_i`` chosen with
probabilities ``p_i``.
"""

__version__ = "0.1.0"

from .checks import (AntiderivativeG, ConditionDReport, ContractionReport, antiderivative,
                     build_G, check_displacement_integrability, estimate_contraction_factor,
                     estimate_G_lipschitz, evaluate_condition_D)
from .expr import Expression, ExprError, parse_expression, to_source
from .functions import Func, GridFunction, Tabulated, indicator, l1_distance
from .iteration import (AtomicDistribution, EmpiricalCDF, LimitCDF, apply_word, dkw_bound,
                        empirical_cdf, estimate_limit_cdf, exact_distribution, ks_distance,
                        sample_trajectory, simulate, uniform_cdf)
from .problem import (REAL_LINE, ClosureExtendedProblem, Interval, MapAtom, Problem,
                      ProblemError, SolverParams, classify_atoms, extend_to_closure, load_config,
                      load_problem, make_atom, make_problem, validate_map_family)
from .solver import (CdfSolution, DensityEstimate, ManufacturedPair, cascade_iterate,
                     derive_density, manufacture_g, residual_cdf_equation, residual_refinement,
                     solve_F_reflected, solve_F_series)
from .transform import (Diffeo, SupportWindow, builtin_diffeo, compact_support_solve,
                        conjugate_problem, inverse_transport_solution, transport_solution)

__all__ = [
    '__version__',
    'AntiderivativeG',
    'ConditionDReport',
    'ContractionReport',
    'antiderivative',
    'build_G',
    'check_displacement_integrability',
    'estimate_contraction_factor',
    'estimate_G_lipschitz',
    'evaluate_condition_D',
    'Expression',
    'ExprError',
    'parse_expression',
    'to_source',
    'Func',
    'GridFunction',
    'Tabulated',
    'indicator',
    'l1_distance',
    'AtomicDistribution',
    'EmpiricalCDF',
    'LimitCDF',
    'apply_word',
    'dkw_bound',
    'empirical_cdf',
    'estimate_limit_cdf',
    'exact_distribution',
    'ks_distance',
    'sample_trajectory',
    'simulate',
    'uniform_cdf',
    'REAL_LINE',
    'ClosureExtendedProblem',
    'Interval',
    'MapAtom',
    'Problem',
    'ProblemError',
    'SolverParams',
    'classify_atoms',
    'extend_to_closure',
    'load_config',
    'load_problem',
    'make_atom',
    'make_problem',
    'validate_map_family',
    'CdfSolution',
    'DensityEstimate',
    'ManufacturedPair',
    'cascade_iterate',
    'derive_density',
    'manufacture_g',
    'residual_cdf_equation',
    'residual_refinement',
    'solve_F_reflected',
    'solve_F_series',
    'Diffeo',
    'SupportWindow',
    'builtin_diffeo',
    'compact_support_solve',
    'conjugate_problem',
    'inverse_transport_solution',
    'transport_solution',
]
