"""Problem data: interval, weighted map family, inhomogeneity, and their validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from .expr import Expression, affine_coefficients
from .functions import Tabulated, as_function, breakpoints_of, support_of
from .quadrature import gauss_kronrod

WEIGHT_TOL = 1e-12
FD_REL_STEP = 1e-6


class ProblemError(ValueError):
    """Invalid problem data (schema, weights, integrability, map family)."""


class DerivativeSignError(ProblemError):
    """A map derivative vanishes or changes sign across probe points."""

    def __init__(self, message: str, atom: int, location: float):
        super().__init__(message)
        self.atom = atom
        self.location = location


# --- interval ----------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    """Open interval (lo, hi); either end may be infinite."""

    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if not self.lo < self.hi:
            raise ProblemError(f"empty interval ({self.lo}, {self.hi})")

    @property
    def is_real_line(self) -> bool:
        return math.isinf(self.lo) and math.isinf(self.hi)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x > self.lo) & (x < self.hi)

    def closure_contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.lo) & (x <= self.hi) & np.isfinite(x)

    def clip(self, x):
        """Clamp into the closure (finite endpoints only)."""
        return np.clip(x, self.lo, self.hi)

    def finite_endpoints(self) -> list[tuple[str, float]]:
        out = []
        if math.isfinite(self.lo):
            out.append(("lo", self.lo))
        if math.isfinite(self.hi):
            out.append(("hi", self.hi))
        return out

    def probe_grid(self, n: int, scale: float = 10.0) -> np.ndarray:
        """Interior probe points: Chebyshev spacing if bounded, tanh-compressed otherwise."""
        k = np.arange(n)
        u = -np.cos(np.pi * (k + 0.5) / n)  # Chebyshev nodes in (-1, 1), increasing
        if self.bounded:
            return self.lo + (self.hi - self.lo) * 0.5 * (1.0 + u)
        if self.is_real_line:
            return scale * np.arctanh(u)
        r = (1.0 + u) / (1.0 - u)  # exp(2 atanh u), in (0, inf)
        if math.isfinite(self.lo):
            return self.lo + scale * r
        return (self.hi - scale * r)[::-1]

    def to_json(self) -> dict:
        return {"lo": _fmt_end(self.lo), "hi": _fmt_end(self.hi)}

    def __str__(self) -> str:
        return f"({self.lo}, {self.hi})"


def _fmt_end(v: float):
    if math.isinf(v):
        return "-inf" if v < 0 else "+inf"
    return v


def _parse_end(v) -> float:
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("-inf", "-infinity"):
            return -math.inf
        if s in ("+inf", "inf", "+infinity", "infinity"):
            return math.inf
        raise ProblemError(f"bad interval endpoint {v!r}")
    return float(v)


REAL_LINE = Interval(-math.inf, math.inf)


# --- atoms -------------------------------------------------------------------

def central_difference(fn, x):
    """Central difference with step 1e-6 * max(1, |x|)."""
    x = np.asarray(x, dtype=float)
    h = FD_REL_STEP * np.maximum(1.0, np.abs(x))
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


@dataclass(frozen=True)
class MapAtom:
    """One outcome of the random map: x -> map(x) with probability ``weight``."""

    weight: float
    map: Expression
    derivative: Expression | None = None
    inverse: Expression | None = None

    def __post_init__(self):
        if not (0.0 < self.weight <= 1.0):
            raise ProblemError(f"atom weight {self.weight} not in (0, 1]")

    def __call__(self, x):
        return self.map(x)

    @cached_property
    def _slope(self) -> float | None:
        c = affine_coefficients(self.map.node)
        return None if c is None else c[0]

    def deriv(self, x):
        if self.derivative is not None:
            return self.derivative(x)
        if self._slope is not None:
            # affine: the slope is exact, no need to difference
            return np.full(np.shape(x), self._slope) if np.ndim(x) else self._slope
        return central_difference(self.map, x)

    @property
    def has_derivative(self) -> bool:
        return self.derivative is not None


def make_atom(weight: float, map_src, derivative=None, inverse=None) -> MapAtom:
    def ex(s):
        if s is None or isinstance(s, Expression):
            return s
        return Expression.parse(s, "x")
    return MapAtom(float(weight), ex(map_src), ex(derivative), ex(inverse))


# --- problem -----------------------------------------------------------------

@dataclass(frozen=True)
class Problem:
    interval: Interval
    atoms: tuple
    g: Any
    label: str = ""

    def __post_init__(self):
        if len(self.atoms) == 0:
            raise ProblemError("problem needs at least one atom")
        object.__setattr__(self, "atoms", tuple(self.atoms))

    @property
    def weights(self) -> np.ndarray:
        return np.array([a.weight for a in self.atoms])

    @property
    def cumulative_weights(self) -> np.ndarray:
        return np.cumsum(self.weights)

    def __len__(self) -> int:
        return len(self.atoms)


def make_problem(atoms: Sequence, g="0", interval: Interval = REAL_LINE, label: str = "",
                 check_weights: bool = True) -> Problem:
    """Build a problem from ``(weight, map[, derivative[, inverse]])`` tuples or atoms."""
    built = []
    for a in atoms:
        built.append(a if isinstance(a, MapAtom) else make_atom(*a))
    if check_weights:
        check_weight_sum([a.weight for a in built])
    return Problem(interval, tuple(built), as_function(g, "t"), label)


def check_weight_sum(weights) -> None:
    s = math.fsum(weights)
    if abs(s - 1.0) > WEIGHT_TOL:
        raise ProblemError(f"atom weights sum to {s!r}, not 1 (tolerance {WEIGHT_TOL})")


# --- inverse maps --------------------------------------------------------------

def invert_map(atom: MapAtom, y, interval: Interval, iterations: int = 200):
    """Solve ``atom(x) = y`` for x in the interval; uses the inverse expression if given.

    Points without a preimage come back as NaN.
    """
    if atom.inverse is not None:
        return atom.inverse(y)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lo = np.full(y.shape, _finite_or(interval.lo, -1.0))
    hi = np.full(y.shape, _finite_or(interval.hi, 1.0))
    increasing = float(np.median(np.sign(atom.deriv(interval.probe_grid(16))))) > 0
    sgn = 1.0 if increasing else -1.0
    # grow the bracket on infinite sides
    for _ in range(1100):
        f_lo = sgn * (atom(lo) - y)
        f_hi = sgn * (atom(hi) - y)
        need_lo = (f_lo > 0) & np.isinf(interval.lo)
        need_hi = (f_hi < 0) & np.isinf(interval.hi)
        if not (need_lo.any() or need_hi.any()):
            break
        lo = np.where(need_lo, lo - 2.0 * np.maximum(1.0, np.abs(lo)), lo)
        hi = np.where(need_hi, hi + 2.0 * np.maximum(1.0, np.abs(hi)), hi)
    with np.errstate(all="ignore"):
        m_lo = np.asarray(atom(lo), dtype=float)
        m_hi = np.asarray(atom(hi), dtype=float)
    # a map may be undefined exactly at a finite endpoint; use its limit there
    if math.isfinite(interval.lo) and not np.all(np.isfinite(m_lo)):
        lim = _limit_along(atom.map, _approach_sequence(interval, "lo"))
        m_lo = np.where(np.isfinite(m_lo), m_lo, lim)
    if math.isfinite(interval.hi) and not np.all(np.isfinite(m_hi)):
        lim = _limit_along(atom.map, _approach_sequence(interval, "hi"))
        m_hi = np.where(np.isfinite(m_hi), m_hi, lim)
    f_lo = sgn * (m_lo - y)
    f_hi = sgn * (m_hi - y)
    ok = (f_lo <= 0) & (f_hi >= 0)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        with np.errstate(all="ignore"):
            f_mid = sgn * (atom(mid) - y)
        left = f_mid >= 0
        hi = np.where(left, mid, hi)
        lo = np.where(left, lo, mid)
    out = np.where(ok, 0.5 * (lo + hi), np.nan)
    return out


def _finite_or(v: float, default: float) -> float:
    return v if math.isfinite(v) else default


# --- integrability of g --------------------------------------------------------

def effective_support(g, interval: Interval, tail_tol: float = 1e-12,
                      max_extent: float = 1e15) -> tuple[float, float]:
    """Interval outside which the |g|-mass is below ``tail_tol`` (relative).

    Raises ProblemError when the tails do not decay before ``max_extent``.
    """
    sup = support_of(g)
    if sup is not None:
        lo, hi = max(sup[0], interval.lo), min(sup[1], interval.hi)
        return (lo, hi) if lo <= hi else (interval.lo if math.isfinite(interval.lo) else 0.0,) * 2
    absg = lambda t: np.abs(g(t))
    bp = breakpoints_of(g)
    # core: the finite part of the interval or [-1, 1] around the finite end
    a = interval.lo if math.isfinite(interval.lo) else (min(-1.0, interval.hi - 2.0) if math.isfinite(interval.hi) else -1.0)
    b = interval.hi if math.isfinite(interval.hi) else (max(1.0, interval.lo + 2.0) if math.isfinite(interval.lo) else 1.0)
    core = gauss_kronrod(absg, a, b, bp, 1e-13).value
    lo, hi = a, b
    empty = (interval.lo if math.isfinite(interval.lo) else 0.0,) * 2
    for side in ("lo", "hi"):
        if math.isfinite(getattr(interval, side)):
            continue
        edge = lo if side == "lo" else hi
        width = max(1.0, abs(edge))
        total = core
        while True:
            nxt = edge - width if side == "lo" else edge + width
            # the tail test only needs accuracy relative to the running total
            tol = max(1e-15, 0.1 * tail_tol * total)
            seg = gauss_kronrod(absg, min(edge, nxt), max(edge, nxt), bp, tol).value
            if not math.isfinite(seg):
                raise ProblemError("g not integrable at stated tolerance (non-finite tail)")
            total += seg
            if seg <= tail_tol * max(total, 1e-300) or (total == 0 and abs(nxt) > 1e3):
                break
            edge = nxt
            width *= 2.0
            if abs(edge) > max_extent:
                raise ProblemError("g not integrable at stated tolerance")
        if side == "lo":
            lo = edge
        else:
            hi = edge
    if core == 0.0 and lo == a and hi == b and not np.any(np.asarray(g(np.linspace(a, b, 257))) != 0):
        return empty  # g vanishes: no support at all
    return lo, hi


# --- configuration ---------------------------------------------------------------

_END = {"oneOf": [{"type": "number"}, {"type": "string", "enum": ["-inf", "+inf", "inf"]}]}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["atoms", "g"],
    "properties": {
        "label": {"type": "string"},
        "interval": {
            "type": "object",
            "required": ["lo", "hi"],
            "properties": {"lo": _END, "hi": _END},
            "additionalProperties": False,
        },
        "atoms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["weight", "map"],
                "properties": {
                    "weight": {"type": "number"},
                    "map": {"type": "string"},
                    "derivative": {"type": "string"},
                    "inverse": {"type": "string"},
                },
                "additionalProperties": False,
            },
        },
        "g": {
            "oneOf": [
                {"type": "string"},
                {
                    "type": "object",
                    "required": ["table"],
                    "properties": {
                        "table": {
                            "type": "array",
                            "minItems": 2,
                            "items": {"type": "array", "items": {"type": "number"},
                                      "minItems": 2, "maxItems": 2},
                        }
                    },
                    "additionalProperties": False,
                },
            ]
        },
        "alpha_mass": {"type": "number"},
        "solver": {
            "type": "object",
            "properties": {
                "grid_points": {"type": "integer", "minimum": 16},
                "max_terms": {"type": "integer", "minimum": 1},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "mc_samples": {"type": "integer", "minimum": 1},
                "mc_depth": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class SolverParams:
    grid_points: int = 2048
    max_terms: int = 500
    tolerance: float = 1e-8
    mc_samples: int = 100_000
    mc_depth: int = 40
    seed: int = 0

    def replace(self, **changes) -> "SolverParams":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update({k: v for k, v in changes.items() if v is not None})
        return SolverParams(**d)


@dataclass(frozen=True)
class RunConfig:
    problem: Problem
    params: SolverParams = field(default_factory=SolverParams)
    alpha_mass: float | None = None
    document: dict = field(default_factory=dict)


def _read_document(config) -> dict:
    if isinstance(config, dict):
        return config
    path = Path(config)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemError(f"cannot read config {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"config {path} is not valid JSON: {exc}") from exc


def load_config(config) -> RunConfig:
    """Parse and validate a configuration document (dict or path to JSON)."""
    doc = _read_document(config)
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ProblemError(f"schema violation at {where}: {exc.message}") from exc

    iv = doc.get("interval", {"lo": "-inf", "hi": "+inf"})
    interval = Interval(_parse_end(iv["lo"]), _parse_end(iv["hi"]))
    atoms = [make_atom(a["weight"], a["map"], a.get("derivative"), a.get("inverse"))
             for a in doc["atoms"]]
    check_weight_sum([a.weight for a in atoms])
    g_doc = doc["g"]
    if isinstance(g_doc, str):
        g = Expression.parse(g_doc, "t")
    else:
        rows = np.asarray(g_doc["table"], dtype=float)
        g = Tabulated(rows[:, 0], rows[:, 1])
    effective_support(g, interval)  # raises if not integrable
    problem = Problem(interval, tuple(atoms), g, doc.get("label", ""))
    params = SolverParams(**doc.get("solver", {}))
    return RunConfig(problem, params, doc.get("alpha_mass"), doc)


def load_problem(config) -> Problem:
    return load_config(config).problem


def problem_to_document(problem: Problem, params: SolverParams | None = None,
                        alpha_mass: float | None = None, table_points: int = 4097) -> dict:
    """Serialise a problem back to the configuration schema."""
    atoms = []
    for a in problem.atoms:
        d = {"weight": a.weight, "map": a.map.source}
        if a.derivative is not None:
            d["derivative"] = a.derivative.source
        if a.inverse is not None:
            d["inverse"] = a.inverse.source
        atoms.append(d)
    g = problem.g
    if isinstance(g, Expression):
        g_doc = g.source
    elif isinstance(g, Tabulated):
        g_doc = {"table": g.rows()}
    else:
        lo, hi = effective_support(g, problem.interval)
        t = np.unique(np.concatenate([np.linspace(lo, hi, table_points), breakpoints_of(g)]))
        t = t[(t >= lo) & (t <= hi)]
        g_doc = {"table": [[float(a), float(b)] for a, b in zip(t, g(t))]}
    doc = {"label": problem.label, "interval": problem.interval.to_json(), "atoms": atoms, "g": g_doc}
    if alpha_mass is not None:
        doc["alpha_mass"] = alpha_mass
    if params is not None:
        doc["solver"] = {k: getattr(params, k) for k in params.__dataclass_fields__}
    return doc


# --- map family validation ---------------------------------------------------------

@dataclass
class AtomValidation:
    index: int
    monotone: bool
    orientation: str  # "increasing" | "decreasing" | "none"
    derivative_ok: bool
    derivative_matches: bool | None
    onto: str  # "heuristic pass" | "fail"
    messages: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (self.monotone and self.derivative_ok and self.derivative_matches is not False
                and self.onto == "heuristic pass")


@dataclass
class ValidationReport:
    atoms: list

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.atoms)

    def to_json(self) -> dict:
        return {
            "pass": self.passed,
            "atoms": [
                {"index": a.index, "pass": a.passed, "monotone": a.monotone,
                 "orientation": a.orientation, "derivative_ok": a.derivative_ok,
                 "derivative_matches": a.derivative_matches, "onto": a.onto,
                 "messages": a.messages}
                for a in self.atoms
            ],
        }


def _approach_sequence(interval: Interval, side: str) -> np.ndarray:
    end = getattr(interval, side)
    if math.isinf(end):
        k = np.arange(1, 1000)
        return np.sign(end) * 2.0 ** k
    width = min(1.0, interval.hi - interval.lo) if interval.bounded else 1.0
    inward = 1.0 if side == "lo" else -1.0
    xs = []
    for k in range(1, 400):
        x = end + inward * width * 2.0 ** -k
        if x == end:
            break
        xs.append(x)
    return np.array(xs)


def _limit_along(fn, xs: np.ndarray) -> float:
    """Estimate lim fn(x_k); returns +-inf for divergence and NaN if undecided."""
    with np.errstate(all="ignore"):
        v = np.asarray(fn(xs), dtype=float)
    finite = np.isfinite(v)
    if not finite.all():
        last_bad = v[~finite][-1]
        if np.isinf(last_bad) and (~finite)[-1]:
            return float(last_bad)
        if not finite[-3:].all():
            return math.nan
    v = v[finite]
    if v.size < 3:
        return math.nan
    scale = max(1.0, abs(v[-1]))
    if abs(v[-1] - v[-2]) <= 1e-9 * scale:
        return float(v[-1])
    tail = v[-8:]
    steps = np.abs(np.diff(tail))
    # geometrically shrinking steps cut short by binary64: Aitken extrapolation
    d1, d2 = v[-1] - v[-2], v[-2] - v[-3]
    if np.all(np.diff(steps) < 0) and d1 * d2 > 0 and d1 != d2:
        r = d1 / d2
        if r < 0.99 and abs(d1) * r / (1.0 - r) <= 1e-6 * scale:
            return float(v[-1] - d1 * d1 / (d1 - d2))
    # steadily growing in magnitude with non-shrinking steps: divergent
    if np.all(np.diff(np.abs(tail)) > 0) and (
            abs(tail[-1]) > 1e9 * max(1.0, abs(v[0])) or steps[-1] >= 0.99 * steps[-2]):
        return math.copysign(math.inf, tail[-1])
    return math.nan


def validate_map_family(problem: Problem, probes: int = 64, scale: float = 10.0) -> ValidationReport:
    """Check each atom is (heuristically) an increasing or decreasing bijection of the interval."""
    if probes < 16:
        raise ValueError("validate_map_family needs at least 16 probes")
    iv = problem.interval
    xs = iv.probe_grid(probes, scale)
    results = []
    for i, atom in enumerate(problem.atoms):
        msgs = []
        with np.errstate(all="ignore"):
            y = np.asarray(atom(xs), dtype=float)
            d = np.asarray(atom.deriv(xs), dtype=float)
        dy = np.diff(y)
        if not np.all(np.isfinite(y)):
            msgs.append("non-finite map values on probe grid")
        if np.all(dy > 0):
            orient, mono = "increasing", True
        elif np.all(dy < 0):
            orient, mono = "decreasing", True
        else:
            orient, mono = "none", False
            msgs.append("map is not strictly monotone on the probe grid")
        d_ok = bool(np.all(np.isfinite(d)) and (np.all(d > 0) or np.all(d < 0)))
        if not d_ok:
            msgs.append("derivative vanishes or changes sign on the probe grid")
        matches = None
        if atom.has_derivative:
            cd = central_difference(atom.map, xs)
            err = np.abs(d - cd)
            ok = err <= 1e-6 * np.maximum(1.0, np.abs(d))
            ok |= ~np.isfinite(cd)
            matches = bool(np.all(ok))
            if not matches:
                j = int(np.argmax(np.where(ok, 0.0, err)))
                msgs.append(f"derivative expression disagrees with central differences at x={float(xs[j])!r}")
        onto = "fail"
        if mono:
            targets = {"lo": iv.lo, "hi": iv.hi}
            if orient == "decreasing":
                targets = {"lo": iv.hi, "hi": iv.lo}
            good = True
            for side in ("lo", "hi"):
                lim = _limit_along(atom.map, _approach_sequence(iv, side))
                want = targets[side]
                if math.isinf(want):
                    hit = math.isinf(lim) and math.copysign(1, lim) == math.copysign(1, want)
                else:
                    hit = math.isfinite(lim) and abs(lim - want) <= 1e-6 * max(1.0, abs(want))
                if not hit:
                    good = False
                    msgs.append(f"map does not approach {want} at the {side} end (limit estimate {lim})")
            onto = "heuristic pass" if good else "fail"
        results.append(AtomValidation(i, mono, orient, d_ok, matches, onto, msgs))
    return ValidationReport(results)


# --- sign split ------------------------------------------------------------------

@dataclass(frozen=True)
class SignSplit:
    plus_atoms: tuple
    minus_atoms: tuple
    p_plus: float

    @property
    def p_minus(self) -> float:
        return 1.0 - self.p_plus


def classify_atoms(problem: Problem, probe_points) -> SignSplit:
    """Partition atoms by the sign of their derivative, which must not vary across probes."""
    pts = np.sort(np.asarray(probe_points, dtype=float).ravel())
    if pts.size == 0:
        raise ValueError("classify_atoms needs at least one probe point")
    if not np.all(problem.interval.contains(pts)):
        raise ValueError("probe points must lie inside the interval")
    plus, minus = [], []
    for i, atom in enumerate(problem.atoms):
        d = np.atleast_1d(np.asarray(atom.deriv(pts), dtype=float))
        zero = ~(np.abs(d) > 0)
        if zero.any():
            loc = float(pts[np.argmax(zero)])
            raise DerivativeSignError(f"atom {i}: derivative is zero at probe {loc!r}", i, loc)
        s = np.sign(d)
        change = np.nonzero(s[1:] != s[:-1])[0]
        if change.size:
            j = int(change[0])
            loc = _bisect_zero(atom.deriv, float(pts[j]), float(pts[j + 1]))
            raise DerivativeSignError(
                f"atom {i}: derivative changes sign between probes {pts[j]!r} and {pts[j + 1]!r}; "
                f"zero near {loc!r}", i, loc)
        (plus if s[0] > 0 else minus).append(i)
    p_plus = math.fsum(problem.atoms[i].weight for i in plus)
    return SignSplit(tuple(plus), tuple(minus), p_plus)


def _bisect_zero(fn, a: float, b: float, iterations: int = 200) -> float:
    fa = float(fn(a))
    for _ in range(iterations):
        m = 0.5 * (a + b)
        if m in (a, b):
            break
        fm = float(fn(m))
        if fm == 0:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def default_probes(problem: Problem, n: int = 64) -> np.ndarray:
    return problem.interval.probe_grid(n)


# --- closure extension ------------------------------------------------------------

@dataclass(frozen=True)
class ClosureExtendedProblem:
    """Maps extended by continuity to the finite endpoints of the interval."""

    base: Problem
    boundary_values: tuple  # per atom: dict side -> value at that endpoint

    @property
    def interval(self) -> Interval:
        return self.base.interval

    @property
    def atoms(self) -> tuple:
        return self.base.atoms

    @property
    def weights(self) -> np.ndarray:
        return self.base.weights

    @property
    def cumulative_weights(self) -> np.ndarray:
        return self.base.cumulative_weights

    @property
    def g(self):
        return self.base.g

    def __len__(self) -> int:
        return len(self.base.atoms)

    def apply(self, index: int, x):
        """The extended map of atom ``index`` on the closure of the interval."""
        atom = self.base.atoms[index]
        xa = np.asarray(x, dtype=float)
        iv = self.base.interval
        with np.errstate(all="ignore"):
            y = np.asarray(atom(xa), dtype=float)
        bv = self.boundary_values[index]
        if "lo" in bv:
            y = np.where(xa <= iv.lo, bv["lo"], y)
        if "hi" in bv:
            y = np.where(xa >= iv.hi, bv["hi"], y)
        if not iv.is_real_line:
            y = iv.clip(y)
        if np.ndim(x) == 0:
            return float(y)
        return y


def extend_to_closure(problem) -> ClosureExtendedProblem:
    """Record the endpoint limits of every map at the finite endpoints."""
    if isinstance(problem, ClosureExtendedProblem):
        return ClosureExtendedProblem(problem.base, problem.boundary_values)
    iv = problem.interval
    values = []
    for i, atom in enumerate(problem.atoms):
        bv = {}
        for side, end in iv.finite_endpoints():
            lim = _limit_along(atom.map, _approach_sequence(iv, side))
            if not math.isfinite(lim):
                raise ProblemError(
                    f"atom {i}: limit of the map at the endpoint {end} is not finite ({lim}); "
                    "contraction in mean forces such atoms to carry zero probability, "
                    "so they must be removed from the family")
            ends = [e for _, e in iv.finite_endpoints()]
            nearest = min(ends, key=lambda e: abs(e - lim))
            if abs(nearest - lim) > 1e-6 * max(1.0, abs(nearest)):
                raise ProblemError(
                    f"atom {i}: endpoint {end} maps to {lim!r}, which is not an endpoint")
            bv[side] = nearest
        values.append(bv)
    return ClosureExtendedProblem(problem, tuple(values))
