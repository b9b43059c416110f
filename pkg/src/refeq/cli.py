"""Command-line interface: ``refeq <subcommand> --config problem.json ...``.

Exit codes: 0 success, 1 hypothesis failure (with --strict, or a refused
solve), 2 convergence failure, 3 configuration or parse error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import (build_G, check_displacement_integrability, check_record,
                     estimate_contraction_factor, estimate_G_lipschitz, evaluate_condition_D)
from .expr import ExprError, Expression
from .functions import GridFunction
from .iteration import cdf_rows, estimate_limit_cdf, format_float
from .problem import (DerivativeSignError, Interval, Problem, ProblemError, REAL_LINE,
                      classify_atoms, default_probes, extend_to_closure, load_config,
                      problem_to_document, validate_map_family)
from .solver import (PreconditionError, SolverError, derive_density, manufacture_g,
                     pointwise_residual, residual_refinement, solve_F_reflected, solve_F_series)
from .transform import (SupportWindow, builtin_diffeo, check_interior_invariance,
                        check_support, conjugate_problem)

log = logging.getLogger("refeq")

EXIT_OK, EXIT_HYPOTHESIS, EXIT_CONVERGENCE, EXIT_CONFIG = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# --- helpers -----------------------------------------------------------------------------

def _num(v):
    """JSON-safe number: non-finite values become strings."""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, dict):
        return {k: _num(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_num(x) for x in v]
    return v


def _dump(obj) -> str:
    return json.dumps(_num(obj), indent=2, sort_keys=True) + "\n"


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(s) for s in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected lo,hi but got {text!r}") from exc
    return a, b


def default_starts(interval: Interval) -> list[float]:
    if interval.is_real_line:
        return [0.0, 10.0]
    if interval.bounded:
        w = interval.hi - interval.lo
        return [interval.lo + 0.25 * w, interval.lo + 0.75 * w]
    if math.isfinite(interval.lo):
        return [interval.lo + 1.0, interval.lo + 10.0]
    return [interval.hi - 1.0, interval.hi - 10.0]


def depth_schedule(depth: int) -> list[int]:
    return sorted({max(1, depth // 4), max(1, depth // 2), depth})


class Run:
    """Shared state for one invocation: config, parameters, outputs and the manifest."""

    def __init__(self, args):
        self.args = args
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        try:
            self.config = load_config(args.config)
        except (ProblemError, ExprError, ValueError) as exc:
            raise CliError(str(exc), EXIT_CONFIG) from exc
        self.problem: Problem = self.config.problem
        self.params = self.config.params.replace(
            seed=args.seed, grid_points=args.grid, mc_depth=args.depth, mc_samples=args.samples,
            tolerance=args.tolerance)
        self.alpha = args.alpha if args.alpha is not None else self.config.alpha_mass
        self.outputs: list[str] = []
        self.stages: dict = {}

    def write(self, path: Path, text: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        self.outputs.append(str(path))

    def emit(self, text: str, suffix: str) -> Path | None:
        """Write to --out if given, else to stdout."""
        if self.args.out is None:
            sys.stdout.write(text)
            return None
        path = Path(self.args.out)
        self.write(path, text)
        return path

    def manifest(self, command: str) -> None:
        if self.args.out is None:
            return
        out = Path(self.args.out)
        doc = {
            "command": command,
            "config": self.config.document,
            "resolved_params": {k: getattr(self.params, k) for k in self.params.__dataclass_fields__},
            "alpha_mass": self.alpha,
            "seed": self.params.seed,
            "version": __version__,
            "timestamps": {"start": self.started,
                           "end": _dt.datetime.now(_dt.timezone.utc).isoformat()},
            "outputs": list(self.outputs),
            "stages": self.stages,
        }
        path = out.with_name(out.name + ".manifest.json")
        path.write_text(_dump(doc), encoding="utf-8")


def _fmt_rows(header: list[str], columns: list) -> str:
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(format_float(v) for v in row))
    return "\n".join(lines) + "\n"


# --- hypothesis suite ---------------------------------------------------------------------

def hypothesis_suite(problem: Problem, params, limit=None) -> tuple[list, dict]:
    """Run every check; returns (records, summary).  Raises DerivativeSignError on sign trouble."""
    records = []
    validation = validate_map_family(problem)
    records.append(check_record("map_family", validation.passed, True, validation.passed,
                                validation.to_json()))
    contraction = estimate_contraction_factor(problem, 1000, params.seed)
    records.append(contraction.to_record())
    disp = check_displacement_integrability(problem, default_probes(problem))
    records.append(disp.to_record())
    split = classify_atoms(problem, default_probes(problem))
    records.append(check_record("sign_split", split.p_plus, None, True,
                                {"plus_atoms": list(split.plus_atoms),
                                 "minus_atoms": list(split.minus_atoms)}))
    G = build_G(problem, params.grid_points)
    L, at = estimate_G_lipschitz(G, problem)
    records.append(check_record("G_lipschitz", L, "finite", math.isfinite(L),
                                {"attained_near": at, "total_mass": G.total_mass,
                                 "abs_mass": G.abs_mass}))
    cond = None
    if limit is not None:
        cond = evaluate_condition_D(problem.g, limit, interval=problem.interval, G=G)
        records.append(cond.to_record())
    summary = {"analytic_l": contraction.analytic_l, "sampled_l": contraction.sampled_l,
               "p_plus": split.p_plus, "validation": validation, "contraction": contraction,
               "displacement": disp, "split": split, "G": G, "condition_D": cond}
    return records, summary


def _limit(run: Run, problem: Problem):
    p = run.params
    return estimate_limit_cdf(extend_to_closure(problem), default_starts(problem.interval),
                              depth_schedule(p.mc_depth), p.mc_samples, p.seed)


def _strict_gate(run: Run, records: list) -> None:
    failed = [r["check"] for r in records if not r["pass"]]
    if failed and run.args.strict:
        raise CliError("hypothesis checks failed: " + ", ".join(failed), EXIT_HYPOTHESIS)
    for name in failed:
        log.warning("check %s failed (continuing; use --strict to stop)", name)


# --- subcommands ------------------------------------------------------------------------

def cmd_check(run: Run) -> int:
    limit = _limit(run, run.problem)
    records, summary = hypothesis_suite(run.problem, run.params, limit)
    records.append(check_record("limit_law", limit.converged, True, limit.converged,
                                limit.diagnostics()))
    report = {"analytic_l": summary["analytic_l"], "sampled_l": summary["sampled_l"],
              "p_plus": summary["p_plus"], "checks": records}
    run.emit(_dump(report), ".json")
    run.stages["check"] = EXIT_OK
    failed = [r["check"] for r in records if not r["pass"]]
    print(f"check: {len(records) - len(failed)}/{len(records)} passed", file=sys.stderr)
    if failed and run.args.strict:
        run.stages["check"] = EXIT_HYPOTHESIS
        return EXIT_HYPOTHESIS
    return EXIT_OK


def cmd_limit_dist(run: Run) -> int:
    limit = _limit(run, run.problem)
    t, c = cdf_rows(limit)
    if run.args.format == "json":
        text = _dump({"t": t.tolist(), "cdf": c.tolist(), "diagnostics": limit.diagnostics()})
    else:
        text = _fmt_rows(["t", "cdf"], [t, c])
    path = run.emit(text, ".csv")
    if path is not None:
        run.write(path.with_name(path.name + ".diagnostics.json"), _dump(limit.diagnostics()))
    code = EXIT_OK if limit.converged else EXIT_CONVERGENCE
    run.stages["limit_dist"] = code
    print(f"limit-dist: {t.size} atoms, converged={limit.converged}", file=sys.stderr)
    return code


def cmd_solve(run: Run) -> int:
    problem, params = run.problem, run.params
    limit = _limit(run, problem)
    records, summary = hypothesis_suite(problem, params, limit)
    run.stages["checks"] = EXIT_OK
    _strict_gate(run, records)
    contraction, split, G = summary["contraction"], summary["split"], summary["G"]
    if not contraction.passed:
        raise CliError(f"contraction in mean fails (l = {contraction.sampled_l:.6g})", EXIT_HYPOTHESIS)
    try:
        if not split.minus_atoms:
            F = solve_F_series(problem, G, params, contraction=contraction,
                               condition_d=summary["condition_D"], limit=limit)
            alpha = run.alpha
        else:
            alpha = run.alpha
            if alpha is None:
                log.warning("alpha_mass not given; using 0")
                alpha = 0.0
            F = solve_F_reflected(problem, G, alpha, params, contraction=contraction, limit=limit)
    except PreconditionError as exc:
        raise CliError(str(exc), EXIT_HYPOTHESIS) from exc
    run.stages["F"] = EXIT_OK if F.converged else EXIT_CONVERGENCE
    f = derive_density(F)
    f.residual_l1 = residual_refinement(f, problem, problem.g, 4 * params.grid_points,
                                        window=F.window)
    res = pointwise_residual(f, problem, problem.g, F.grid)
    run.stages["f"] = EXIT_OK if f.status == "ok" else EXIT_CONVERGENCE
    if run.args.format == "json":
        text = _dump({"x": F.grid.tolist(), "F": F.values.tolist(), "f": f.values.tolist(),
                      "residual_pointwise": res.tolist()})
    else:
        text = _fmt_rows(["x", "F", "f", "residual_pointwise"], [F.grid, F.values, f.values, res])
    meta = {"status": F.status, "density_status": f.status, "terms_used": F.terms_used,
            "tail_estimate": F.tail_estimate, "residual_l1": f.residual_l1,
            "alpha_mass": alpha, "window": list(F.window), "seed": params.seed,
            "method": F.method, "drift_per_term": F.drift, "l1_norm": f.l1_norm,
            "reintegration_error": f.reintegration_error,
            "condition_D": records[-1] if summary["condition_D"] is not None else None}
    path = run.emit(text, ".csv")
    if path is not None:
        run.write(path.with_name(path.name + ".meta.json"), _dump(meta))
    else:
        sys.stderr.write(_dump(meta))
    print(f"solve: {F.status} after {F.terms_used} terms, residual_l1={f.residual_l1:.3e}",
          file=sys.stderr)
    return EXIT_OK if F.converged else EXIT_CONVERGENCE


def _read_table(path: str) -> GridFunction:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        x = np.array([float(r["x"]) for r in rows])
        f = np.array([float(r["f"]) for r in rows])
    except (OSError, KeyError, ValueError) as exc:
        raise CliError(f"cannot read density table {path}: {exc}", EXIT_CONFIG) from exc
    if x.size < 2 or np.any(np.diff(x) <= 0):
        raise CliError("density table needs at least two rows with increasing x", EXIT_CONFIG)
    return GridFunction(x, f)


def cmd_verify(run: Run) -> int:
    if run.args.f_table is None:
        raise CliError("verify needs --f-table PATH (CSV with columns x and f)", EXIT_CONFIG)
    f = _read_table(run.args.f_table)
    problem = run.problem
    window = (float(f.nodes[0]), float(f.nodes[-1]))
    r = residual_refinement(f, problem, problem.g, 4 * run.params.grid_points, window=window)
    report = {"residual_l1": r, "window": list(window), "l1_norm": float(np.trapezoid(np.abs(f.values), f.nodes)),
              "integral": f.integral()}
    run.emit(_dump(report), ".json")
    run.stages["verify"] = EXIT_OK
    print(f"verify: residual_l1={r:.3e}", file=sys.stderr)
    return EXIT_OK


def cmd_transform(run: Run) -> int:
    args, problem = run.args, run.problem
    kind = args.diffeo
    if kind is None:
        raise CliError("transform needs --diffeo logistic|tan_half|affine", EXIT_CONFIG)
    try:
        if args.window is not None:
            window = SupportWindow(*args.window)
            iv = window.interior
            if problem.interval != iv:
                raise CliError(f"problem interval {problem.interval} is not the open window {iv}",
                               EXIT_CONFIG)
            check_support(problem.g, window)
            check_interior_invariance(problem, window)
            if kind == "logistic":
                alpha = builtin_diffeo("logistic", REAL_LINE, iv)
            elif kind == "tan_half":
                alpha = builtin_diffeo("tan_half", iv, REAL_LINE).inverted()
            else:
                raise CliError("a window must be mapped onto the line (logistic or tan_half)",
                               EXIT_CONFIG)
        else:
            iv = problem.interval
            if kind == "logistic":
                alpha = builtin_diffeo("logistic", REAL_LINE, iv)
            elif kind == "tan_half":
                alpha = builtin_diffeo("tan_half", Interval(0.0, 1.0), iv)
            else:
                if args.to is None:
                    raise CliError("affine transform needs --to lo,hi", EXIT_CONFIG)
                alpha = builtin_diffeo("affine", Interval(*args.to), iv)
        conj = conjugate_problem(problem, alpha)
    except CliError:
        raise
    except (ProblemError, ExprError) as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    doc = problem_to_document(conj, run.config.params if "solver" in run.config.document else None,
                              run.config.alpha_mass)
    doc["label"] = (problem.label + " " if problem.label else "") + f"conjugated ({kind})"
    run.emit(_dump(doc), ".json")
    run.stages["transform"] = EXIT_OK
    print(f"transform: problem moved to {conj.interval}", file=sys.stderr)
    return EXIT_OK


def cmd_manufacture(run: Run) -> int:
    if run.args.f_true is None:
        raise CliError("manufacture needs --f-true EXPR (in x)", EXIT_CONFIG)
    try:
        f_true = Expression.parse(run.args.f_true, "x")
    except ExprError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    pair = manufacture_g(run.problem, f_true, run.params.grid_points, support=run.args.support)
    g = pair.g_out
    if run.args.format == "csv":
        text = _fmt_rows(["t", "g"], [g.t, g.values])
    else:
        doc = problem_to_document(pair.problem_with_g(),
                                  run.config.params if "solver" in run.config.document else None,
                                  run.config.alpha_mass)
        text = _dump(doc)
    run.emit(text, ".json")
    run.stages["manufacture"] = EXIT_OK
    print(f"manufacture: {g.t.size} rows, integral {pair.mass:.3e}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"check": cmd_check, "limit-dist": cmd_limit_dist, "solve": cmd_solve,
            "verify": cmd_verify, "transform": cmd_transform, "manufacture": cmd_manufacture}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refeq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="problem configuration (JSON)")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--seed", type=int, help="64-bit seed")
        p.add_argument("--format", choices=("csv", "json"),
                       default="json" if name in ("check", "verify", "transform", "manufacture") else "csv")
        p.add_argument("--strict", action="store_true", help="fail on any hypothesis check")
        p.add_argument("--grid", type=int, help="grid points")
        p.add_argument("--depth", type=int, help="iteration depth for the limit law")
        p.add_argument("--samples", type=int, help="Monte Carlo samples")
        p.add_argument("--alpha", type=float, help="total mass of the solution")
        p.add_argument("--tolerance", type=float, help="solver tolerance")
        if name == "transform":
            p.add_argument("--window", type=_pair, help="lo,hi of the support window")
            p.add_argument("--diffeo", choices=("logistic", "tan_half", "affine"))
            p.add_argument("--to", type=_pair, help="lo,hi target interval for affine")
        if name == "manufacture":
            p.add_argument("--f-true", dest="f_true", help="solution expression in x")
            p.add_argument("--support", type=_pair, help="lo,hi support of the solution")
        if name == "verify":
            p.add_argument("--f-table", dest="f_table", help="CSV with columns x,f")
    return parser


def run(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.seed is not None and not (0 <= args.seed < 2 ** 64):
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    state = None
    try:
        state = Run(args)
        code = COMMANDS[args.command](state)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = exc.code
    except DerivativeSignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_HYPOTHESIS
    except (ProblemError, ExprError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_CONVERGENCE
    if state is not None:
        state.stages.setdefault("exit", code)
        state.stages["exit"] = code
        state.manifest(args.command)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
