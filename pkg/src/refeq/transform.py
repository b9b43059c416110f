"""Change of variables for refinement problems and their solutions.

A diffeomorphism ``alpha: J -> I`` turns a problem on I into one on J with
maps ``alpha^{-1} o phi o alpha`` and inhomogeneity ``|alpha'| g o alpha``;
solutions transport the same way.  The compact-support pipeline uses this
to solve a problem living on the interior of a window by moving it to the
whole line and pulling the answer back, extended by zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .checks import antiderivative, estimate_contraction_factor
from .expr import BinOp, Call, Expression, Num, cancel, rename, substitute
from .functions import Func, breakpoints_of, support_of
from .problem import (REAL_LINE, Interval, MapAtom, Problem, ProblemError, SolverParams,
                      _approach_sequence, _limit_along, classify_atoms, effective_support)
from .solver import (DensityEstimate, SolverError, derive_density, residual_refinement,
                     solve_F_reflected, solve_F_series)

log = logging.getLogger(__name__)


class TransformError(ProblemError):
    pass


@dataclass(frozen=True)
class Diffeo:
    """``alpha: source -> target`` with closed-form inverse and derivative in the variable x."""

    forward: Expression
    inverse: Expression
    derivative: Expression
    source: Interval
    target: Interval

    def __call__(self, x):
        return self.forward(x)

    def inverted(self) -> "Diffeo":
        # (alpha^{-1})'(y) = 1 / alpha'(alpha^{-1}(y))
        d = BinOp("/", Num(1.0), substitute(self.derivative.node, "x", self.inverse.node))
        return Diffeo(self.inverse, self.forward, Expression(d, "x"), self.target, self.source)

    def compose(self, inner: "Diffeo") -> "Diffeo":
        """``self o inner``: inner.source -> self.target."""
        if inner.target != self.source:
            raise TransformError("cannot compose: intervals do not match")
        fwd = substitute(self.forward.node, "x", inner.forward.node)
        inv = substitute(inner.inverse.node, "x", self.inverse.node)
        der = BinOp("*", substitute(self.derivative.node, "x", inner.forward.node),
                    inner.derivative.node)
        return Diffeo(Expression(fwd, "x"), Expression(inv, "x"), Expression(der, "x"),
                      inner.source, self.target)

    def check(self, probes: int = 64, tol: float = 1e-9, scale: float = 1.0) -> list[str]:
        """Problems found on probe grids (empty when the invariants hold).

        Unbounded probe grids use a moderate ``scale``: far out, saturating
        maps such as the logistic cannot be inverted in binary64.
        """
        issues = []
        y = self.target.probe_grid(probes, scale)
        with np.errstate(all="ignore"):
            back = self.forward(self.inverse(y))
        err = np.abs(back - y) / np.maximum(1.0, np.abs(y))
        if not np.all(err <= tol):
            issues.append(f"forward(inverse(y)) misses y by {float(np.nanmax(err)):.3e}")
        x = self.source.probe_grid(probes, scale)
        with np.errstate(all="ignore"):
            d = np.asarray(self.derivative(x), dtype=float)
        finite = d[np.isfinite(d)]
        if np.any(finite == 0) or not (np.all(finite > 0) or np.all(finite < 0)):
            issues.append("derivative vanishes or changes sign on probes")
        return issues


def _fmt(v: float) -> str:
    return repr(float(v))


def _from_sources(fwd: str, inv: str, der: str, source: Interval, target: Interval) -> Diffeo:
    return Diffeo(Expression.parse(fwd, "x"), Expression.parse(inv, "x"),
                  Expression.parse(der, "x"), source, target)


def builtin_diffeo(kind: str, source: Interval, target: Interval) -> Diffeo:
    """Standard diffeomorphisms: ``logistic`` (line to bounded), ``affine``, ``tan_half`` (bounded to line)."""
    if kind == "logistic":
        if not (source.is_real_line and target.bounded):
            raise TransformError("logistic maps the real line onto a bounded interval")
        a, b = target.lo, target.hi
        if (a, b) == (0.0, 1.0):
            return _from_sources("1/(1+exp(-x))", "log(x/(1-x))",
                                 "1/((1+exp(-x))*(1+exp(x)))", source, target)
        w = b - a
        return _from_sources(f"{_fmt(a)} + {_fmt(w)}/(1+exp(-x))",
                             f"log((x - {_fmt(a)})/({_fmt(b)} - x))",
                             f"{_fmt(w)}/((1+exp(-x))*(1+exp(x)))", source, target)
    if kind == "tan_half":
        if not (source.bounded and target.is_real_line):
            raise TransformError("tan_half maps a bounded interval onto the real line")
        a, b = source.lo, source.hi
        w = b - a
        arg = f"({_fmt(math.pi)}*((x - {_fmt(a)})/{_fmt(w)} - 0.5))"
        return _from_sources(f"sin{arg}/cos{arg}",
                             f"{_fmt(a)} + {_fmt(w)}*(atan(x)/{_fmt(math.pi)} + 0.5)",
                             f"{_fmt(math.pi / w)}/(cos{arg}*cos{arg})", source, target)
    if kind == "affine":
        return _affine(source, target)
    raise TransformError(f"unknown diffeomorphism kind {kind!r}")


def _affine(source: Interval, target: Interval) -> Diffeo:
    s_fin = (math.isfinite(source.lo), math.isfinite(source.hi))
    t_fin = (math.isfinite(target.lo), math.isfinite(target.hi))
    if source.bounded and target.bounded:
        k = (target.hi - target.lo) / (source.hi - source.lo)
        c = target.lo - k * source.lo
        return _from_sources(f"{_fmt(k)}*x + {_fmt(c)}", f"(x - {_fmt(c)})/{_fmt(k)}", _fmt(k),
                             source, target)
    if source.is_real_line and target.is_real_line:
        return _from_sources("x", "x", "1", source, target)
    if s_fin == t_fin and not source.bounded and not source.is_real_line:
        # half-lines with the same orientation: translation
        c = (target.lo - source.lo) if s_fin[0] else (target.hi - source.hi)
        return _from_sources(f"x + {_fmt(c)}", f"x - {_fmt(c)}", "1", source, target)
    if s_fin == t_fin[::-1] and not source.bounded and not source.is_real_line:
        # opposite half-lines: reflection
        c = (source.lo + target.hi) if s_fin[0] else (source.hi + target.lo)
        return _from_sources(f"{_fmt(c)} - x", f"{_fmt(c)} - x", "-1", source, target)
    raise TransformError(f"no affine map from {source} onto {target}")


def identity_diffeo(interval: Interval) -> Diffeo:
    return _from_sources("x", "x", "1", interval, interval)


# --- problems --------------------------------------------------------------------------

def _compose_atom(atom: MapAtom, d: Diffeo) -> MapAtom:
    a_fwd, a_inv, a_der = d.forward.node, d.inverse.node, d.derivative.node
    pairs = (substitute(a_inv, "x", a_fwd), substitute(a_fwd, "x", a_inv))

    def compose(outer, inner):
        node = substitute(outer, "x", inner)
        for t in pairs:
            node = cancel(node, t, "x")
        return node

    new_map = compose(a_inv, compose(atom.map.node, a_fwd))
    new_der = None
    if atom.derivative is not None:
        num = BinOp("*", compose(atom.derivative.node, a_fwd), a_der)
        new_der = Expression(BinOp("/", num, compose(a_der, new_map)), "x")
    new_inv = None
    if atom.inverse is not None:
        new_inv = Expression(compose(a_inv, compose(atom.inverse.node, a_fwd)), "x")
    return MapAtom(atom.weight, Expression(new_map, "x"), new_der, new_inv)


def _pull_back_points(pts, d: Diffeo) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if pts.size == 0:
        return pts
    with np.errstate(all="ignore"):
        out = np.asarray(d.inverse(pts), dtype=float)
    return np.unique(out[np.isfinite(out)])


def _pull_back_support(sup, d: Diffeo):
    if sup is None:
        return None
    a, b = d.target.clip(np.array(sup, dtype=float))
    with np.errstate(all="ignore"):
        ends = np.asarray(d.inverse(np.array([a, b])), dtype=float)
    ends = np.where(np.isnan(ends), np.array([d.source.lo, d.source.hi]), ends)
    lo, hi = float(np.min(ends)), float(np.max(ends))
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return None
    return lo, hi


def _weighted_pullback(fn, d: Diffeo, label: str) -> Func:
    """``|alpha'(x)| fn(alpha(x))`` on the source interval, zero elsewhere."""
    src = d.source

    def pulled(x):
        x = np.asarray(x, dtype=float)
        inside = src.contains(x)
        with np.errstate(all="ignore"):
            y = np.asarray(d.forward(x), dtype=float)
            y = np.where(inside & np.isfinite(y), y, d.target.clip(np.zeros(x.shape)))
            v = np.abs(np.asarray(d.derivative(x), dtype=float)) * np.asarray(fn(y), dtype=float)
        return np.where(inside & np.isfinite(v), v, 0.0)

    return Func(pulled, _pull_back_support(support_of(fn), d),
                _pull_back_points(breakpoints_of(fn), d), label)


def conjugate_problem(problem: Problem, d: Diffeo) -> Problem:
    """The equivalent problem on ``d.source``."""
    problem = getattr(problem, "base", problem)
    if d.target != problem.interval:
        raise TransformError(f"diffeomorphism targets {d.target}, problem lives on {problem.interval}")
    if d.inverse is None:
        raise TransformError("diffeomorphism has no inverse")
    atoms = tuple(_compose_atom(a, d) for a in problem.atoms)
    g = problem.g
    if isinstance(g, Expression):
        fwd = rename(d.forward.node, "x", g.variable)
        der = rename(d.derivative.node, "x", g.variable)
        node = BinOp("*", Call("abs", (der,)), substitute(g.node, g.variable, fwd))
        new_g = Expression(node, g.variable)
    else:
        new_g = _weighted_pullback(g, d, "conjugated g")
    return Problem(d.source, atoms, new_g, problem.label)


def transport_solution(f, d: Diffeo) -> Func:
    """``|alpha'| f o alpha``: a solution on the target becomes one on the source."""
    return _weighted_pullback(f, d, "transported density")


class PushedDensity:
    """``f(y) = ft(alpha^{-1}(y)) / |alpha'(alpha^{-1}(y))|`` on the target, zero elsewhere.

    Where alpha' underflows the value is capped at 0; ``flagged`` counts
    such evaluations.
    """

    def __init__(self, ft, d: Diffeo):
        self.ft = ft
        self.d = d
        self.flagged = 0
        sup = support_of(ft)
        with np.errstate(all="ignore"):
            if sup is not None:
                ends = np.asarray(d.forward(np.array(sup, dtype=float)), dtype=float)
                sup = (float(np.min(ends)), float(np.max(ends)))
            bp = np.asarray(d.forward(breakpoints_of(ft)), dtype=float)
        self.support = sup
        self.breakpoints = bp[np.isfinite(bp)]

    def __call__(self, y):
        d = self.d
        ya = np.asarray(y, dtype=float)
        inside = d.target.contains(ya)
        with np.errstate(all="ignore"):
            x = np.asarray(d.inverse(ya), dtype=float)
            x = np.where(inside & np.isfinite(x), x, 0.0)
            der = np.abs(np.asarray(d.derivative(x), dtype=float))
            bad = inside & ~(der > 1e-300)
            v = np.asarray(self.ft(x), dtype=float) / np.where(bad, 1.0, der)
        self.flagged += int(np.count_nonzero(bad))
        out = np.where(inside & ~bad & np.isfinite(v), v, 0.0)
        return float(out) if np.ndim(y) == 0 else out


def inverse_transport_solution(ft, d: Diffeo) -> PushedDensity:
    """A solution on the source becomes one on the target."""
    return PushedDensity(ft, d)


# --- compact support pipeline ----------------------------------------------------------------

@dataclass(frozen=True)
class SupportWindow:
    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if not self.lo < self.hi:
            raise TransformError("window must satisfy lo < hi")

    @property
    def interior(self) -> Interval:
        return Interval(self.lo, self.hi)


def check_support(g, window: SupportWindow, probes: int = 512) -> None:
    """Raise unless g vanishes off the window (probe grid plus effective support)."""
    lo, hi = window.lo, window.hi
    w = hi - lo
    outside = np.concatenate([np.linspace(lo - w - 1.0, lo, probes, endpoint=False),
                              np.linspace(hi, hi + w + 1.0, probes + 1)[1:]])
    vals = np.asarray(g(outside), dtype=float)
    if np.any(vals != 0):
        j = int(np.argmax(np.abs(vals)))
        raise TransformError(f"g is nonzero at {outside[j]:.6g}, outside the window [{lo}, {hi}]")
    a, b = effective_support(g, REAL_LINE)
    tol = 1e-9 * max(1.0, w)
    if a < lo - tol or b > hi + tol:
        raise TransformError(f"support of g ({a:.6g}, {b:.6g}) is not inside [{lo}, {hi}]")


def check_interior_invariance(problem: Problem, window: SupportWindow, probes: int = 256) -> None:
    """Every map must send the open window into itself with endpoint limits at the window ends."""
    iv = window.interior
    x = iv.probe_grid(probes)
    ends = (window.lo, window.hi)
    for i, atom in enumerate(problem.atoms):
        with np.errstate(all="ignore"):
            y = np.asarray(atom(x), dtype=float)
        if not np.all(iv.contains(y)):
            k = int(np.argmax(~iv.contains(y)))
            raise TransformError(f"atom {i} sends {x[k]:.6g} to {y[k]:.6g}, outside the open window")
        for side in ("lo", "hi"):
            lim = _limit_along(atom.map, _approach_sequence(iv, side))
            if not any(abs(lim - e) <= 1e-6 * max(1.0, abs(e)) for e in ends):
                raise TransformError(
                    f"atom {i}: limit {lim:.6g} at the {side} end is not a window endpoint")


class CompactDensity(DensityEstimate):
    """Density on the line, exactly zero outside the open window."""

    def __init__(self, fn, window: SupportWindow, grid, status: str, inner: DensityEstimate,
                 residual_l1: float, flagged: int):
        self.fn = fn
        self.window = window
        self.inner = inner
        self.flagged = flagged
        values = self(grid)
        inside = (grid > window.lo) & (grid < window.hi)
        l1 = float(np.trapezoid(np.abs(values[inside]), grid[inside])) if inside.sum() > 1 else 0.0
        super().__init__(grid, values, l1, inner.tag, status, residual_l1)

    def __call__(self, x):
        xa = np.asarray(x, dtype=float)
        inside = (xa > self.window.lo) & (xa < self.window.hi)
        v = np.where(inside, np.asarray(self.fn(np.where(inside, xa, 0.5 * (self.window.lo + self.window.hi))), dtype=float), 0.0)
        return float(v) if np.ndim(x) == 0 else v

    @property
    def support(self) -> tuple:
        return self.window.lo, self.window.hi

    @property
    def breakpoints(self) -> np.ndarray:
        return breakpoints_of(self.fn)


def compact_support_solve(problem: Problem, window: SupportWindow, d: Diffeo, g=None,
                          params: SolverParams = SolverParams(), alpha_mass: float | None = None,
                          output_points: int = 4097) -> CompactDensity:
    """Solve on the open window by moving the problem to the line with ``d: int F -> R``."""
    problem = getattr(problem, "base", problem)
    if g is None:
        g = problem.g
    iv = window.interior
    if d.source != iv or not d.target.is_real_line:
        raise TransformError("the diffeomorphism must map the open window onto the real line")
    check_support(g, window)
    check_interior_invariance(problem, window)
    inner_problem = Problem(iv, problem.atoms, g, problem.label)
    line = conjugate_problem(inner_problem, d.inverted())
    contraction = estimate_contraction_factor(line, 1000, params.seed)
    G = antiderivative(line.g, REAL_LINE, max(64, params.grid_points))
    split = classify_atoms(line, REAL_LINE.probe_grid(32))
    if not split.minus_atoms:
        F = solve_F_series(line, G, params, contraction=contraction)
    else:
        if alpha_mass is None:
            log.warning("alpha_mass not given; using 0")
            alpha_mass = 0.0
        F = solve_F_reflected(line, G, alpha_mass, params, contraction=contraction)
    if not F.converged:
        raise SolverError(f"inner solve on the line did not converge ({F.status})")
    ft = derive_density(F)
    ft.residual_l1 = residual_refinement(ft, line, line.g, 4 * params.grid_points, window=F.window)
    pushed = inverse_transport_solution(ft, d.inverted())
    lo, hi = window.lo, window.hi
    grid = np.unique(np.concatenate([np.linspace(lo - 1.0, hi + 1.0, output_points), [lo, hi]]))
    eps = 1e-12 * max(1.0, hi - lo)
    res = residual_refinement(pushed, inner_problem, g, 4 * params.grid_points,
                              window=(lo + eps, hi - eps))
    return CompactDensity(pushed, window, grid, ft.status, ft, res, pushed.flagged)
