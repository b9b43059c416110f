"""Evaluable real functions: tabulated, wrapped callables, grid densities."""

from __future__ import annotations

import numpy as np

from .expr import Expression
from .quadrature import composite_gauss, gauss_kronrod


class Func:
    """A vectorised callable with optional support and breakpoint hints.

    ``support`` is a closed interval outside which the function vanishes;
    ``breakpoints`` lists points where it may be discontinuous or kinked.
    """

    def __init__(self, fn, support=None, breakpoints=(), label: str = ""):
        self.fn = fn
        self.support = None if support is None else (float(support[0]), float(support[1]))
        self.breakpoints = np.unique(np.asarray(breakpoints, dtype=float))
        self.label = label

    def __call__(self, x):
        out = np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)
        if self.support is not None:
            xa = np.asarray(x, dtype=float)
            out = np.where((xa >= self.support[0]) & (xa <= self.support[1]), out, 0.0)
        if np.ndim(x) == 0:
            return float(out)
        return out

    def __repr__(self) -> str:
        return f"Func({self.label or self.fn!r}, support={self.support})"


def indicator(a: float, b: float, height: float = 1.0) -> Func:
    """``height`` on [a, b], zero elsewhere."""
    return Func(lambda x: np.full(np.shape(x), float(height)), support=(a, b),
                breakpoints=(a, b), label=f"{height}*1[{a},{b}]")


def zero_function() -> Func:
    return Func(lambda x: np.zeros(np.shape(x)), support=(0.0, 0.0), label="0")


class Tabulated:
    """Piecewise-linear interpolation of ``(t, value)`` rows, zero outside the rows.

    Rows are sorted by ``t``; repeated ``t`` values encode a jump, with the
    last repeated row giving the (right-continuous) value at that point.
    """

    def __init__(self, t, values):
        t = np.asarray(t, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("table needs at least two rows of (t, value)")
        if np.any(np.diff(t) < 0):
            raise ValueError("table rows must be sorted by t")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("table entries must be finite")
        self.t = t
        self.values = v
        self.support = (float(t[0]), float(t[-1]))
        self.breakpoints = np.unique(t)

    def __call__(self, x):
        xa = np.asarray(x, dtype=float)
        t, v = self.t, self.values
        i = np.searchsorted(t, xa, side="right")
        i1 = np.clip(i, 1, t.size - 1)
        t0, t1 = t[i1 - 1], t[i1]
        v0, v1 = v[i1 - 1], v[i1]
        dt = t1 - t0
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(dt > 0, (xa - t0) / np.where(dt > 0, dt, 1.0), 0.0)
        out = v0 + w * (v1 - v0)
        # exactly on the last row
        out = np.where(xa == t[-1], v[-1], out)
        out = np.where((xa < t[0]) | (xa > t[-1]), 0.0, out)
        if np.ndim(x) == 0:
            return float(out)
        return out

    def integral(self) -> float:
        return float(np.sum(0.5 * np.diff(self.t) * (self.values[1:] + self.values[:-1])))

    def abs_integral(self) -> float:
        return _abs_trapezoid(self.t, self.values)

    def cumulative(self, x):
        """Exact integral from the first row to ``x`` (piecewise quadratic)."""
        xa = np.asarray(x, dtype=float)
        t, v = self.t, self.values
        seg = 0.5 * np.diff(t) * (v[1:] + v[:-1])
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        i = np.clip(np.searchsorted(t, xa, side="right"), 1, t.size - 1)
        xc = np.clip(xa, t[0], t[-1])
        t0, t1 = t[i - 1], t[i]
        v0, v1 = v[i - 1], v[i]
        dt = t1 - t0
        with np.errstate(invalid="ignore", divide="ignore"):
            slope = np.where(dt > 0, (v1 - v0) / np.where(dt > 0, dt, 1.0), 0.0)
        d = xc - t0
        out = cum[i - 1] + v0 * d + 0.5 * slope * d * d
        out = np.where(xa >= t[-1], cum[-1], out)
        out = np.where(xa <= t[0], 0.0, out)
        if np.ndim(x) == 0:
            return float(out)
        return out

    def rows(self) -> list:
        return [[float(a), float(b)] for a, b in zip(self.t, self.values)]

    def __repr__(self) -> str:
        return f"Tabulated({self.t.size} rows on [{self.t[0]}, {self.t[-1]}])"


def _abs_trapezoid(t: np.ndarray, v: np.ndarray) -> float:
    # exact integral of |piecewise linear|, splitting segments at sign changes
    t0, t1, v0, v1 = t[:-1], t[1:], v[:-1], v[1:]
    dt = t1 - t0
    same = v0 * v1 >= 0
    plain = 0.5 * dt * (np.abs(v0) + np.abs(v1))
    with np.errstate(invalid="ignore", divide="ignore"):
        crossing = 0.5 * dt * (v0 * v0 + v1 * v1) / (np.abs(v0) + np.abs(v1))
    return float(np.sum(np.where(same, plain, crossing)))


class GridFunction:
    """Piecewise-linear function through ``(nodes, values)``, zero outside the nodes."""

    def __init__(self, nodes, values):
        self.nodes = np.asarray(nodes, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.support = (float(self.nodes[0]), float(self.nodes[-1]))
        self.breakpoints = self.nodes

    def __call__(self, x):
        xa = np.asarray(x, dtype=float)
        out = np.interp(xa, self.nodes, self.values, left=0.0, right=0.0)
        if np.ndim(x) == 0:
            return float(out)
        return out

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.nodes))


def as_function(g, variable: str = "t"):
    """Coerce strings, expressions, tables and callables to an evaluable function."""
    if isinstance(g, (Func, Tabulated, GridFunction, Expression)):
        return g
    if isinstance(g, str):
        return Expression.parse(g, variable)
    if callable(g):
        return Func(g)
    raise TypeError(f"cannot interpret {g!r} as a function")


def support_of(fn):
    return getattr(fn, "support", None)


def breakpoints_of(fn) -> np.ndarray:
    bp = getattr(fn, "breakpoints", None)
    if bp is None:
        return np.zeros(0)
    return np.asarray(bp, dtype=float)


def l1_distance(f1, f2, a: float, b: float, breakpoints=None, abs_tol: float = 1e-9) -> float:
    """L1 distance of two functions over [a, b] by adaptive quadrature."""
    bp = [breakpoints_of(f1), breakpoints_of(f2)]
    if breakpoints is not None:
        bp.append(np.asarray(breakpoints, dtype=float))
    bp = np.concatenate(bp)
    if bp.size > 5000:
        edges = np.unique(np.concatenate([[a, b], bp[(bp > a) & (bp < b)]]))
        return composite_gauss(lambda x: np.abs(f1(x) - f2(x)), edges)
    return gauss_kronrod(lambda x: np.abs(f1(x) - f2(x)), a, b, bp, abs_tol).value


def integral_of(fn, a: float, b: float, breakpoints=None, abs_tol: float = 1e-12) -> float:
    bp = breakpoints_of(fn)
    if breakpoints is not None:
        bp = np.concatenate([bp, np.asarray(breakpoints, dtype=float)])
    if bp.size > 5000:
        edges = np.unique(np.concatenate([[a, b], bp[(bp > a) & (bp < b)]]))
        return composite_gauss(fn, edges)
    return gauss_kronrod(fn, a, b, bp, abs_tol).value
