"""Numerical checks of the existence hypotheses.

* contraction in mean: ``sum_i p_i |phi_i(x) - phi_i(y)| <= l |x - y|`` with l < 1
* finite mean displacement ``sum_i p_i |phi_i(x) - x|``
* the antiderivative G of g and a Lipschitz bound for it
* the orthogonality condition ``int g (1 - D) = 0`` against the limit law D
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import rng
from .expr import affine_coefficients
from .functions import Tabulated, breakpoints_of
from .problem import Interval, Problem, REAL_LINE, effective_support, ProblemError
from .quadrature import gauss_kronrod


def check_record(name: str, value, threshold, passed: bool, details: dict | None = None) -> dict:
    """A check result in the JSON report format."""
    return {"check": name, "value": value, "threshold": threshold, "pass": bool(passed),
            "details": details or {}}


def _base(problem) -> Problem:
    return getattr(problem, "base", problem)


# --- contraction ---------------------------------------------------------------

@dataclass
class ContractionReport:
    analytic_l: float | None
    sampled_l: float
    pairs_used: int
    worst_pair: tuple

    @property
    def passed(self) -> bool:
        ok = self.sampled_l < 1.0
        if self.analytic_l is not None:
            ok = ok and self.analytic_l < 1.0
        return ok

    def to_record(self) -> dict:
        return check_record("contraction", self.sampled_l, 1.0, self.passed,
                            {"analytic_l": self.analytic_l, "pairs_used": self.pairs_used,
                             "worst_pair": list(self.worst_pair),
                             "note": "probe-based; not a certificate on unbounded intervals"})


def affine_slopes(problem) -> list | None:
    out = []
    for a in _base(problem).atoms:
        c = affine_coefficients(a.map.node)
        if c is None:
            return None
        out.append(c[0])
    return out


def _cover(interval: Interval, u: np.ndarray, scale: float = 10.0) -> np.ndarray:
    """Map uniforms in (0, 1) onto the interval (tanh compression when unbounded)."""
    v = 2.0 * u - 1.0
    if interval.bounded:
        return interval.lo + (interval.hi - interval.lo) * u
    if interval.is_real_line:
        return scale * np.arctanh(v)
    r = (1.0 + v) / (1.0 - v)
    if math.isfinite(interval.lo):
        return interval.lo + scale * r
    return interval.hi - scale * r


def estimate_contraction_factor(problem, probe_pairs: int = 1000, rng_seed: int = 0,
                                scale: float = 10.0) -> ContractionReport:
    """Mean-contraction factor: exact for affine families, sampled over probe pairs otherwise."""
    if probe_pairs < 100:
        raise ValueError("need at least 100 probe pairs")
    p = _base(problem)
    slopes = affine_slopes(p)
    analytic = None
    if slopes is not None:
        analytic = math.fsum(a.weight * abs(s) for a, s in zip(p.atoms, slopes))
    seeds = rng.split_seed(rng_seed, np.arange(probe_pairs, dtype=np.uint64))
    # keep away from u = 0 and u = 1
    u1 = 1e-6 + (1 - 2e-6) * rng.uniforms(seeds, 0)
    u2 = 1e-6 + (1 - 2e-6) * rng.uniforms(seeds, 1)
    x = _cover(p.interval, u1, scale)
    y = _cover(p.interval, u2, scale)
    w = p.weights
    with np.errstate(all="ignore"):
        num = sum(w[i] * np.abs(a(x) - a(y)) for i, a in enumerate(p.atoms))
        ratio = num / np.abs(x - y)
    usable = np.isfinite(ratio) & (np.abs(x - y) > 1e-6 * np.maximum(1.0, np.maximum(np.abs(x), np.abs(y))))
    if not usable.any():
        return ContractionReport(analytic, math.inf, 0, (math.nan, math.nan))
    r = np.where(usable, ratio, -np.inf)
    j = int(np.argmax(r))
    return ContractionReport(analytic, float(r[j]), int(usable.sum()), (float(x[j]), float(y[j])))


# --- displacement ----------------------------------------------------------------

@dataclass
class DisplacementReport:
    points: list
    values: list
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_record(self) -> dict:
        finite = [v for v in self.values if math.isfinite(v)]
        return check_record("displacement", max(finite) if finite else None, "finite", self.passed,
                            {"points": self.points, "values": self.values,
                             "failures": self.failures})


def check_displacement_integrability(problem, probe_points) -> DisplacementReport:
    """Mean displacement ``sum_i p_i |phi_i(x) - x|`` at every probe; fails on NaN or overflow."""
    p = _base(problem)
    xs = np.atleast_1d(np.asarray(probe_points, dtype=float))
    with np.errstate(all="ignore"):
        vals = sum(a.weight * np.abs(a(xs) - xs) for a in p.atoms)
    vals = np.atleast_1d(vals)
    failures = [float(x) for x, v in zip(xs, vals) if not math.isfinite(v)]
    return DisplacementReport([float(x) for x in xs], [float(v) for v in vals], failures)


# --- antiderivative of g ---------------------------------------------------------------

@dataclass
class AntiderivativeG:
    """G(x) = integral of g from the lower end of the interval up to x."""

    grid: np.ndarray
    values: np.ndarray
    total_mass: float
    abs_mass: float
    nodes: np.ndarray  # abscissae where g was evaluated
    node_abs_g: np.ndarray

    def __post_init__(self):
        if self.grid.size >= 2:
            self._interp = PchipInterpolator(self.grid, self.values, extrapolate=False)
        else:
            self._interp = None

    def __call__(self, x):
        xa = np.asarray(x, dtype=float)
        if self._interp is None:
            out = np.zeros(xa.shape)
        else:
            out = self._interp(np.clip(xa, self.grid[0], self.grid[-1]))
            out = np.where(xa <= self.grid[0], self.values[0], out)
            out = np.where(xa >= self.grid[-1], self.values[-1], out)
        return float(out) if np.ndim(x) == 0 else out

    @property
    def support(self) -> tuple:
        return float(self.grid[0]), float(self.grid[-1])

    @property
    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def antiderivative(g, interval: Interval = REAL_LINE, grid_points: int = 64,
                   abs_tol: float = 1e-10) -> AntiderivativeG:
    if grid_points < 64:
        raise ValueError("grid_points must be at least 64")
    try:
        a, b = effective_support(g, interval)
    except ProblemError as exc:
        raise ProblemError("g not integrable at stated tolerance") from exc
    if not b > a:
        z = np.array([a, a + 1.0])
        return AntiderivativeG(z, np.zeros(2), 0.0, 0.0, z, np.zeros(2))
    uniform = np.linspace(a, b, grid_points)
    if isinstance(g, Tabulated):
        grid = np.unique(np.concatenate([uniform, g.t]))
        vals = g.cumulative(grid)
        nodes = g.t
        node_abs = np.abs(g.values)
        return AntiderivativeG(grid, vals, g.integral(), g.abs_integral(), nodes, node_abs)
    bp = np.concatenate([uniform, breakpoints_of(g)])
    res = gauss_kronrod(g, a, b, bp, abs_tol)
    if not (res.converged and math.isfinite(res.value)):
        raise ProblemError("g not integrable at stated tolerance")
    grid = res.edges
    vals = np.concatenate([[0.0], np.cumsum(res.pieces)])
    nodes = np.concatenate([res.nodes, grid])
    node_abs = np.abs(np.asarray(g(nodes), dtype=float))
    absm = gauss_kronrod(lambda t: np.abs(g(t)), a, b, bp, abs_tol).value
    keep = np.concatenate([[True], np.diff(grid) > 0])
    return AntiderivativeG(grid[keep], vals[keep], float(vals[-1]), absm, nodes, node_abs)


def build_G(problem, grid_points: int = 2048) -> AntiderivativeG:
    p = _base(problem)
    return antiderivative(p.g, p.interval, grid_points)


def estimate_G_lipschitz(G: AntiderivativeG, problem=None) -> tuple[float, float]:
    """Surrogate for the Lipschitz constant of G: ``(L, node where it is attained)``.

    Takes the larger of max |g| over quadrature nodes and the steepest
    secant of G between grid nodes.
    """
    if G.nodes.size == 0:
        return 0.0, math.nan
    j = int(np.argmax(G.node_abs_g))
    L, at = float(G.node_abs_g[j]), float(G.nodes[j])
    dx = np.diff(G.grid)
    ok = dx > 0
    if ok.any():
        secant = np.abs(np.diff(G.values))[ok] / dx[ok]
        k = int(np.argmax(secant))
        if secant[k] > L:
            L, at = float(secant[k]), float(G.grid[:-1][ok][k])
    return L, at


# --- orthogonality condition -------------------------------------------------------------

@dataclass
class ConditionDReport:
    value: float
    scale: float
    tol: float
    method: str
    standard_error: float | None = None  # Monte Carlo error when D is empirical

    @property
    def passed(self) -> bool:
        return abs(self.value) <= self.tol * self.scale

    def to_record(self) -> dict:
        return check_record("condition_D", self.value, self.tol * self.scale, self.passed,
                            {"scale": self.scale, "relative_tol": self.tol, "method": self.method,
                             "standard_error": self.standard_error})


def _has_jumps(D) -> bool:
    j = getattr(D, "jumps", None)
    return j is not None and j() is not None


def evaluate_condition_D(g, D, tol: float | None = None, interval: Interval = REAL_LINE,
                         G: AntiderivativeG | None = None) -> ConditionDReport:
    """Integral of g(t) (1 - D(t)) over the interval, relative to the integral of |g|.

    For a step distribution with atoms x_k and masses m_k the integral
    equals ``sum_k m_k G(x_k)`` exactly, which is how it is computed.
    """
    step = _has_jumps(D)
    if tol is None:
        tol = 1e-3 if step else 1e-8
    if G is None:
        G = antiderivative(g, interval, 256)
    scale = G.abs_mass
    if scale == 0.0:
        return ConditionDReport(0.0, 0.0, tol, "zero inhomogeneity")
    if step:
        cdf = getattr(D, "cdf", D)
        se = None
        if hasattr(cdf, "values") and not hasattr(cdf, "masses"):
            gv = G(cdf.values)
            value = float(np.mean(gv))
            se = float(np.std(gv) / math.sqrt(gv.size))
        else:
            value = float(np.dot(G(cdf.locations), cdf.masses))
        return ConditionDReport(value, scale, tol, "expectation of G under D", se)
    a, b = G.support
    bp = np.concatenate([breakpoints_of(g), list(getattr(D, "support", ()))])
    value = gauss_kronrod(lambda t: g(t) * (1.0 - D(t)), a, b, bp, 1e-13).value
    return ConditionDReport(float(value), scale, tol, "quadrature")
