"""Iterates of the random map, their laws, and limit-distribution estimates.

All randomness comes from :mod:`refeq.rng` (SplitMix64).  Sample ``i`` of a
batch seeded with ``seed`` follows the stream ``split_seed(seed, i)``, and
at step ``k`` it picks the atom ``searchsorted(cumulative_weights, u_k)``
with ``u_k`` the k-th uniform of that stream.  ``sample_trajectory`` with
seed ``split_seed(seed, i)`` therefore reproduces sample ``i`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng
from .problem import ClosureExtendedProblem, extend_to_closure

MERGE_TOL = 1e-12
DEFAULT_MAX_SUPPORT = 1 << 21


class SupportBudgetError(RuntimeError):
    """Exact tree expansion would exceed the support budget."""


def _ext(problem) -> ClosureExtendedProblem:
    if isinstance(problem, ClosureExtendedProblem):
        return problem
    return extend_to_closure(problem)


def step_all(problem: ClosureExtendedProblem, x: np.ndarray, choice: np.ndarray) -> np.ndarray:
    """Apply atom ``choice[j]`` to ``x[j]`` for every j."""
    out = np.empty_like(x)
    for i in range(len(problem)):
        sel = choice == i
        if sel.any():
            out[sel] = problem.apply(i, x[sel])
    return out


# --- words and trajectories --------------------------------------------------------

def apply_word(problem, x: float, word: Sequence[int]) -> float:
    """Compose the atoms of ``word`` left to right starting from ``x``."""
    p = _ext(problem)
    n = len(p)
    y = float(x)
    for w in word:
        if not 0 <= w < n:
            raise IndexError(f"atom index {w} out of range for {n} atoms")
        y = p.apply(int(w), y)
    return y


def sample_word(problem, depth: int, rng_seed: int) -> list[int]:
    cw = _ext(problem).cumulative_weights
    seeds = np.array([int(rng_seed) & rng.MASK64], dtype=np.uint64)
    return [int(rng.choose(seeds, k, cw)[0]) for k in range(depth)]


def sample_trajectory(problem, x: float, depth: int, rng_seed: int) -> list[float]:
    """The path psi^1(x), ..., psi^depth(x) along one SplitMix64 stream."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    p = _ext(problem)
    path = []
    y = float(x)
    for w in sample_word(p, depth, rng_seed):
        y = p.apply(w, y)
        path.append(y)
    return path


def simulate(problem, starts, depths: Sequence[int], samples: int, rng_seed: int,
             seeds: np.ndarray | None = None) -> dict:
    """Endpoints of ``samples`` trajectories from each start, recorded at ``depths``.

    ``starts`` may be a scalar or an array broadcastable to ``(samples,)``;
    the same words are used for every start passed in one call.
    Returns ``{depth: array}``.
    """
    p = _ext(problem)
    if seeds is None:
        seeds = rng.split_seed(rng_seed, np.arange(samples, dtype=np.uint64))
    x = np.broadcast_to(np.asarray(starts, dtype=float), (samples,)).copy()
    want = sorted(set(int(d) for d in depths))
    out = {}
    if 0 in want:
        out[0] = x.copy()
    cw = p.cumulative_weights
    for k in range(max(want) if want else 0):
        x = step_all(p, x, rng.choose(seeds, k, cw))
        if k + 1 in want:
            out[k + 1] = x.copy()
    return out


# --- distributions -------------------------------------------------------------------

@dataclass(frozen=True)
class AtomicDistribution:
    """Finitely supported law: strictly increasing locations with masses."""

    locations: np.ndarray
    masses: np.ndarray

    def __call__(self, t):
        cum = np.cumsum(self.masses)
        i = np.searchsorted(self.locations, np.asarray(t, dtype=float), side="right")
        out = np.where(i > 0, cum[np.maximum(i - 1, 0)], 0.0)
        return float(out) if np.ndim(t) == 0 else out

    def jumps(self) -> np.ndarray:
        return self.locations

    def mean(self) -> float:
        return float(np.dot(self.locations, self.masses))

    def expect(self, fn) -> float:
        return float(np.dot(np.asarray(fn(self.locations), dtype=float), self.masses))

    def as_dict(self) -> dict:
        return {float(a): float(b) for a, b in zip(self.locations, self.masses)}

    def __len__(self) -> int:
        return self.locations.size


def merge_atoms(locations: np.ndarray, masses: np.ndarray, tol: float = MERGE_TOL):
    order = np.argsort(locations, kind="stable")
    loc = locations[order]
    m = masses[order]
    if loc.size == 0:
        return loc, m
    new_group = np.concatenate([[True], np.diff(loc) > tol])
    starts = np.nonzero(new_group)[0]
    return loc[starts], np.add.reduceat(m, starts)


def exact_distribution(problem, x: float, depth: int,
                       max_support: int = DEFAULT_MAX_SUPPORT) -> AtomicDistribution:
    """Law of psi^depth(x) by expanding every word, merging equal locations."""
    p = _ext(problem)
    w = p.weights
    loc = np.array([float(x)])
    mass = np.array([1.0])
    for level in range(depth):
        loc = np.concatenate([p.apply(i, loc) for i in range(len(p))])
        mass = np.concatenate([mass * w[i] for i in range(len(p))])
        loc, mass = merge_atoms(loc, mass)
        if loc.size > max_support:
            raise SupportBudgetError(
                f"exact law at depth {level + 1} already has {loc.size} atoms "
                f"(budget {max_support}); use empirical_cdf (Monte Carlo) instead")
    return AtomicDistribution(loc, mass)


@dataclass(frozen=True)
class EmpiricalCDF:
    """Right-continuous ECDF of a sample."""

    values: np.ndarray  # sorted

    @classmethod
    def from_samples(cls, samples) -> "EmpiricalCDF":
        v = np.sort(np.asarray(samples, dtype=float).ravel())
        return cls(v)

    @property
    def size(self) -> int:
        return self.values.size

    def __call__(self, t):
        i = np.searchsorted(self.values, np.asarray(t, dtype=float), side="right")
        out = i / self.values.size
        return float(out) if np.ndim(t) == 0 else out

    def jumps(self) -> np.ndarray:
        return np.unique(self.values)

    def quantile(self, q: float) -> float:
        k = min(self.values.size - 1, max(0, int(math.ceil(q * self.values.size)) - 1))
        return float(self.values[k])

    def expect(self, fn) -> float:
        return float(np.mean(np.asarray(fn(self.values), dtype=float)))

    def to_atomic(self) -> AtomicDistribution:
        loc, counts = np.unique(self.values, return_counts=True)
        return AtomicDistribution(loc, counts / self.values.size)


class ContinuousCDF:
    """A continuous distribution function given in closed form."""

    def __init__(self, fn, support: tuple, label: str = ""):
        self.fn = fn
        self.support = (float(support[0]), float(support[1]))
        self.label = label

    def __call__(self, t):
        out = np.clip(np.asarray(self.fn(np.asarray(t, dtype=float)), dtype=float), 0.0, 1.0)
        ta = np.asarray(t, dtype=float)
        out = np.where(ta < self.support[0], 0.0, np.where(ta >= self.support[1], 1.0, out))
        return float(out) if np.ndim(t) == 0 else out

    def jumps(self):
        return None

    def __repr__(self) -> str:
        return f"ContinuousCDF({self.label or self.fn!r} on {self.support})"


def uniform_cdf(a: float = 0.0, b: float = 1.0) -> ContinuousCDF:
    return ContinuousCDF(lambda t: (t - a) / (b - a), (a, b), f"uniform[{a},{b}]")


def _jumps(c):
    j = getattr(c, "jumps", None)
    return None if j is None else j()


def _left_value(c, t: np.ndarray) -> np.ndarray:
    if isinstance(c, EmpiricalCDF):
        return np.searchsorted(c.values, t, side="left") / c.values.size
    if isinstance(c, AtomicDistribution):
        cum = np.concatenate([[0.0], np.cumsum(c.masses)])
        return cum[np.searchsorted(c.locations, t, side="left")]
    return c(np.nextafter(t, -np.inf))


def _one_sided(a, b, slack: float) -> float:
    """sup_t [a(t) - b(t + slack)] for right-continuous distribution functions."""
    ja, jb = _jumps(a), _jumps(b)
    if ja is not None and jb is not None:
        t = np.concatenate([ja, jb - slack])
        return float(np.max(a(t) - b(t + slack)))
    if ja is not None:  # a steps, b continuous
        return float(np.max(a(ja) - b(ja + slack)))
    if jb is not None:  # a continuous, b steps: approach each jump of b from the left
        t = jb - slack
        return float(np.max(a(t) - _left_value(b, jb)))
    lo = min(a.support[0], b.support[0]) - slack
    hi = max(a.support[1], b.support[1]) + slack
    t = np.linspace(lo, hi, 20001)
    return float(np.max(a(t) - b(t + slack)))


def ks_distance(a, b, slack: float = 0.0) -> float:
    """Sup-norm distance between two distribution functions, exact at every jump.

    With ``slack > 0`` the comparison tolerates horizontal shifts up to
    ``slack`` (a Levy-type relaxation), so point masses a rounding error
    apart compare as equal.
    """
    return max(0.0, _one_sided(a, b, slack), _one_sided(b, a, slack))


# --- sampled laws --------------------------------------------------------------------

def empirical_cdf(problem, x: float, depth: int, samples: int, rng_seed: int) -> EmpiricalCDF:
    """ECDF of psi^depth(x) from ``samples`` independent trajectories."""
    if samples < 1:
        raise ValueError("samples must be positive")
    ends = simulate(problem, x, [depth], samples, rng_seed)[depth]
    return EmpiricalCDF.from_samples(ends)


def start_seed(seed: int, start_index: int) -> int:
    """Seed used for the ``start_index``-th start point; start 0 uses ``seed`` itself."""
    if start_index == 0:
        return int(seed) & rng.MASK64
    return rng.mix64((int(seed) + start_index * rng.GAMMA) & rng.MASK64)


def dkw_bound(samples: int, confidence: float = 0.001) -> float:
    return math.sqrt(math.log(2.0 / confidence) / (2.0 * samples))


@dataclass
class LimitCDF:
    cdf: EmpiricalCDF
    depth: int
    samples: int
    seed: int
    starts: tuple
    depth_schedule: tuple
    ks_depths: list  # KS between consecutive depths, first start
    ks_starts: list  # KS between first start and each other start, deepest depth
    flags: list = field(default_factory=list)
    boundary_mass: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return not self.flags

    def __call__(self, t):
        return self.cdf(t)

    def jumps(self):
        return self.cdf.jumps()

    def quantile(self, q: float) -> float:
        return self.cdf.quantile(q)

    def diagnostics(self) -> dict:
        return {
            "depth": self.depth, "samples": self.samples, "seed": self.seed,
            "starts": list(self.starts), "depth_schedule": list(self.depth_schedule),
            "ks_depths": self.ks_depths, "ks_starts": self.ks_starts,
            "converged": self.converged, "flags": list(self.flags),
            "boundary_mass": self.boundary_mass,
            "rate_note": "depth schedule is heuristic; weak convergence has no guaranteed rate",
        }


def estimate_limit_cdf(problem, starts: Sequence[float], depth_schedule: Sequence[int],
                       samples: int, rng_seed: int, ks_tol: float = 0.02,
                       slack: float | None = None) -> LimitCDF:
    """Estimate the limit law of the iterates and diagnose convergence.

    The returned ECDF is taken at the deepest depth from the first start.
    Non-convergence is reported through ``flags``, never raised.  The KS
    diagnostics ignore horizontal shifts below ``slack``, which defaults to
    ``1e-6 * (1 + spread of the start points)``; without it a point-mass
    limit approached from different sides never compares equal.
    """
    if len(starts) < 2 or len(depth_schedule) < 2:
        raise ValueError("need at least two start points and two depths")
    if slack is None:
        slack = 1e-6 * (1.0 + float(np.ptp(np.asarray(starts, dtype=float))))
    p = _ext(problem)
    depths = sorted(set(int(d) for d in depth_schedule))
    deepest = depths[-1]
    first = simulate(p, starts[0], depths, samples, start_seed(rng_seed, 0))
    ecdfs = [EmpiricalCDF.from_samples(first[d]) for d in depths]
    ks_depths = [ks_distance(ecdfs[k], ecdfs[k + 1], slack) for k in range(len(depths) - 1)]
    ks_starts = []
    flags = []
    all_finite = bool(np.all(np.isfinite(first[deepest])))
    for j, s in enumerate(starts[1:], start=1):
        other = simulate(p, s, [deepest], samples, start_seed(rng_seed, j))[deepest]
        all_finite &= bool(np.all(np.isfinite(other)))
        ks_starts.append(ks_distance(ecdfs[-1], EmpiricalCDF.from_samples(other), slack))
    noise = 2.0 * dkw_bound(samples)
    if not all_finite:
        flags.append("non-finite iterate values")
    if ks_depths[-1] > ks_tol:
        flags.append("KS between the two deepest depths exceeds tolerance")
    if ks_depths[-1] > ks_depths[0] + noise and ks_depths[-1] > noise:
        flags.append("KS across depths is not decreasing")
    if max(ks_starts) > ks_tol:
        flags.append("KS across start points exceeds tolerance")
    boundary = {}
    iv = p.interval
    ends = first[deepest]
    for side, end in iv.finite_endpoints():
        frac = float(np.mean(ends == end))
        if frac > 1e-6:
            boundary[side] = frac
    return LimitCDF(ecdfs[-1], deepest, samples, int(rng_seed), tuple(float(s) for s in starts),
                    tuple(depths), ks_depths, ks_starts, flags, boundary)


# --- output ------------------------------------------------------------------------------

def cdf_rows(cdf) -> tuple[np.ndarray, np.ndarray]:
    """Jump locations and right-continuous CDF values, sorted by location."""
    if isinstance(cdf, LimitCDF):
        cdf = cdf.cdf
    if isinstance(cdf, EmpiricalCDF):
        loc, counts = np.unique(cdf.values, return_counts=True)
        return loc, np.cumsum(counts) / cdf.values.size
    if isinstance(cdf, AtomicDistribution):
        return cdf.locations, np.cumsum(cdf.masses)
    raise TypeError("only step distribution functions can be tabulated exactly")


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def write_cdf_csv(cdf, path) -> None:
    t, c = cdf_rows(cdf)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,cdf\n")
        for a, b in zip(t, c):
            fh.write(f"{format_float(a)},{format_float(b)}\n")
