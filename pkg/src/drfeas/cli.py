"""Command line front end: ``drfeas <command> [scenario] [options]``.

Exit codes: 0 success, 1 spiral claims failed, 2 parse error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis as an
from . import spiral as sp
from .engine import Trajectory, dr_run, map_run
from .lift import LiftedProblem, LiftTooLargeError, solve_lifted
from .scenarios import SPIRAL_METHODS, Scenario, ScenarioError, builtin_scenario, parse_scenario, validate_scenario
from .sets import DimensionError, InvalidPieceError

EXIT_OK, EXIT_CLAIMS, EXIT_PARSE, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (sp.BracketError, sp.CrossCheckError, an.NotStrongFixedError, LiftTooLargeError,
                  DimensionError, InvalidPieceError, FloatingPointError, ArithmeticError, RuntimeError)


class ParseError(Exception):
    pass


# ---------------------------------------------------------------------------
# output


def trace_header(d: int) -> list[str]:
    coords = lambda p: [f"{p}{k}" for k in range(d)]
    return ["n", *coords("x"), *coords("a"), *coords("b"), "step_norm", "active_i", "active_j",
            "dist_A", "dist_B", "feasibility_gap"]


def _num(v) -> str:
    return "%.17g" % v


def write_trace(traj: Trajectory, fh) -> None:
    """CSV trace, one row per step, floats with 17 significant digits."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(trace_header(traj.dim))
    gap = np.linalg.norm(traj.a - traj.b, axis=1)
    nan = np.full(len(traj), math.nan)
    dA = traj.dist_A if traj.dist_A is not None else nan
    dB = traj.dist_B if traj.dist_B is not None else nan
    for n in range(len(traj)):
        w.writerow([n, *map(_num, traj.x[n]), *map(_num, traj.a[n]), *map(_num, traj.b[n]),
                    _num(traj.step_norm[n]), int(traj.pairs[n, 0]), int(traj.pairs[n, 1]),
                    _num(dA[n]), _num(dB[n]), _num(gap[n])])


def jsonable(v):
    """Plain JSON types; non-finite floats become the strings 'inf', '-inf', 'nan'."""
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    if hasattr(v, "value") and isinstance(v.value, str):
        return v.value
    return v


def trajectory_summary(traj: Trajectory) -> dict:
    out = {
        "method": traj.method,
        "steps": len(traj),
        "stop_reason": traj.stop_reason.value,
        "cycle_period": traj.cycle_period,
        "final_x": traj.x_next[-1],
        "diagnostics": traj.diagnostics.to_dict() if traj.diagnostics else None,
    }
    if "t_values" in traj.extras:
        ts = traj.extras["t_values"]
        out["t_first"], out["t_last"] = float(ts[0]), float(ts[-1])
    if "cross_check_error" in traj.extras:
        out["cross_check_error"] = traj.extras["cross_check_error"]
    return out


# ---------------------------------------------------------------------------
# commands


def _point(args, sc: Scenario) -> np.ndarray:
    if args.point is not None:
        return np.array(args.point, dtype=float)
    if sc.analysis_params.point is not None:
        return np.array(sc.analysis_params.point)
    return sc.start_point()


def _sets(sc: Scenario):
    if sc.method in SPIRAL_METHODS:
        scene = sp.SpiralScene()
        return scene.A, scene.B
    if sc.lift is not None:
        p = LiftedProblem.from_sets(sc.lift_sets())
        return p.A_diag, p.B_prod
    return sc.A, sc.B


def classify_summary(sc: Scenario, x) -> dict:
    A, B = _sets(sc)
    return an.classify_fixed_point(A, B, x, tau_act=sc.stopping.tau_act).to_dict() | {"point": x}


def radius_summary(sc: Scenario, x) -> dict:
    A, B = _sets(sc)
    p = sc.analysis_params
    est = an.radius_sampled(A, B, x, p.eps_hi, p.samples, p.bisection_steps, p.seed, tau_act=sc.stopping.tau_act)
    return {"point": x, "certified": est.certified_lower, "sampled": est.sampled,
            "samples_per_level": est.samples_per_level, "resolution": est.resolution}


def spiral_parameters(traj: Trajectory) -> np.ndarray:
    """Curve parameter of every iterate of a spiral trajectory."""
    ts = traj.extras["t_values"]
    n = np.arange(len(traj) + 1)
    return ts[n // 2] if traj.method == "dr" else ts[n]


def accumulation_summary(traj: Trajectory, bins: int, t_floor: float = 6.0) -> dict:
    t = spiral_parameters(traj)
    mask = an.final_full_turn(t) & (t >= t_floor)
    if not mask.any():
        return {"tail_points": 0, "max_min_distance": None, "coverage_gap": None, "t_last": float(t[-1])}
    res = an.accumulation_analysis(traj.iterates()[mask], sp.SpiralScene().F, bins)
    return {"tail_points": int(mask.sum()), **res._asdict(), "t_last": float(t[-1])}


def verify_summary(sc: Scenario) -> tuple[dict, bool]:
    rep = sp.verify_claims(sc.analysis_params.t_grid)
    return rep.to_dict(), rep.passed


def execute(sc: Scenario) -> Trajectory:
    cfg, pol = sc.stopping.build(), sc.policy.build()
    s = sc.spiral
    if sc.method == "spiral-dr":
        return sp.dr_spiral_run(s.t1, s.steps, s.stop_t)
    if sc.method == "spiral-map-inner":
        return sp.map_spiral_run(s.t1, s.steps, sp.MapVariant.INNER_VS_MANTLE, s.stop_t)
    if sc.method == "spiral-map-outer":
        return sp.map_spiral_run(s.t1, s.steps, sp.MapVariant.OUTER_VS_SOLID_CYLINDER, s.stop_t)
    if sc.lift is not None:
        return solve_lifted(LiftedProblem.from_sets(sc.lift_sets()), sc.start_point(), cfg, pol).trajectory
    run = map_run if sc.method == "map" else dr_run
    return run(sc.A, sc.B, sc.start_point(), cfg, pol)


def cmd_run(args, sc: Scenario):
    traj = execute(sc)
    summary = {"scenario": sc.name, **trajectory_summary(traj)}
    ok = True
    for req in sc.analysis:
        if req == "classify" and sc.method not in SPIRAL_METHODS:
            summary["classification"] = classify_summary(sc, traj.x_next[-1])
        elif req == "radius" and sc.method not in SPIRAL_METHODS:
            summary["radius"] = radius_summary(sc, _point(args, sc))
        elif req == "accumulation" and sc.method in SPIRAL_METHODS:
            summary["accumulation"] = accumulation_summary(traj, sc.analysis_params.angle_bins)
        elif req == "verify-spiral":
            summary["verify_spiral"], ok = verify_summary(sc)
    return summary, traj, (EXIT_OK if ok else EXIT_CLAIMS)


def cmd_classify(args, sc):
    return {"scenario": sc.name, "classification": classify_summary(sc, _point(args, sc))}, None, EXIT_OK


def cmd_radius(args, sc):
    return {"scenario": sc.name, "radius": radius_summary(sc, _point(args, sc))}, None, EXIT_OK


def cmd_verify(args, sc):
    rep, ok = verify_summary(sc)
    return {"scenario": sc.name, "verify_spiral": rep}, None, (EXIT_OK if ok else EXIT_CLAIMS)


def cmd_lift(args, sc):
    if sc.lift is None:
        raise ParseError("scenario has no 'lift' field")
    problem = LiftedProblem.from_sets(sc.lift_sets())
    res = solve_lifted(problem, sc.start_point(), sc.stopping.build(), sc.policy.build())
    summary = {"scenario": sc.name, "m": problem.m, "lifted_dimension": problem.lifted_dimension,
               **trajectory_summary(res.trajectory), "candidate": res.candidate,
               "residuals": res.residuals, "feasible_point": res.feasible_point}
    return summary, res.trajectory, EXIT_OK


def format_report(summary: dict, indent: int = 0) -> str:
    lines = []
    for k, v in summary.items():
        if isinstance(v, dict):
            lines.append(" " * indent + f"{k}:")
            lines.append(format_report(v, indent + 2))
        else:
            lines.append(" " * indent + f"{k}: {v}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# argument handling


def _param(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k, json.loads(v)
    except json.JSONDecodeError:
        return k, v


def _globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="seed for random starts, policies and sampling")
    p.add_argument("--max-iter", type=int, default=d, help="iteration cap (spiral: step count)")
    p.add_argument("--tol", type=float, default=d, help="step tolerance tol_step")
    p.add_argument("--policy", choices=["lowest-index", "nearest-then-lowest-index", "seeded-random"], default=d)
    p.add_argument("--out", type=Path, default=d, help="directory for trace.csv and summary.json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drfeas", description="Douglas-Rachford feasibility experiments.")
    _globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "run the scenario's method and requested analyses",
        "classify": "classify a point as not fixed, fixed or strong fixed",
        "radius": "certified and sampled radius of attraction",
        "verify-spiral": "check the spiral identities on a parameter grid",
        "lift": "solve an m-set problem in the product space",
    }
    for name, h in helps.items():
        c = sub.add_parser(name, help=h)
        c.add_argument("scenario", nargs="?", help="scenario JSON file, or '-' for stdin")
        c.add_argument("--builtin", help="name of a built-in scenario")
        c.add_argument("--param", action="append", type=_param, default=[], metavar="KEY=VALUE",
                       help="built-in parameter override (repeatable)")
        c.add_argument("--point", type=float, nargs="+", help="point for classify/radius")
        _globals(c, suppress=True)
    r = sub.add_parser("report", help="print a summary.json (file or output directory) as text")
    r.add_argument("path", type=Path)
    return parser


def load_scenario(args) -> Scenario:
    if args.command == "verify-spiral" and not args.scenario and not args.builtin:
        args.builtin = "spiral"
    if bool(args.scenario) == bool(args.builtin):
        raise ParseError("give exactly one of a scenario file or --builtin")
    if args.builtin:
        sc = builtin_scenario(args.builtin, **dict(args.param))
    else:
        if args.param:
            raise ParseError("--param applies to built-in scenarios only")
        text = sys.stdin.read() if args.scenario == "-" else Path(args.scenario).read_text()
        sc = parse_scenario(text)
    return apply_overrides(sc, args)


def apply_overrides(sc: Scenario, args) -> Scenario:
    data = sc.model_dump(mode="json")
    if args.seed is not None:
        if isinstance(data["start"], dict):
            data["start"]["uniform_ball"]["seed"] = args.seed
        data["analysis_params"]["seed"] = args.seed
        if data["policy"]["kind"] == "seeded-random":
            data["policy"]["seed"] = args.seed
    if args.policy is not None:
        data["policy"]["kind"] = args.policy
        if args.policy == "seeded-random" and data["policy"]["seed"] is None:
            data["policy"]["seed"] = 0 if args.seed is None else args.seed
    if args.max_iter is not None:
        data["stopping"]["max_iter"] = args.max_iter
        data["spiral"]["steps"] = args.max_iter
    if args.tol is not None:
        data["stopping"]["tol_step"] = args.tol
    return validate_scenario(data)


COMMANDS = {"run": cmd_run, "classify": cmd_classify, "radius": cmd_radius,
            "verify-spiral": cmd_verify, "lift": cmd_lift}


def emit(summary: dict, traj: Trajectory | None, out: Path | None, stdout) -> None:
    text = json.dumps(jsonable(summary), indent=2) + "\n"
    if out is None:
        stdout.write(text)
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(text)
    if traj is not None:
        with open(out / "trace.csv", "w", newline="") as fh:
            write_trace(traj, fh)


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout, stderr = stdout or sys.stdout, stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    if args.command == "report":
        path = args.path / "summary.json" if args.path.is_dir() else args.path
        try:
            stdout.write(format_report(json.loads(path.read_text())) + "\n")
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=stderr)
            return EXIT_PARSE
        return EXIT_OK
    try:
        sc = load_scenario(args)
    except (ScenarioError, ParseError, OSError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_PARSE
    try:
        with np.errstate(invalid="raise", divide="raise", over="raise"):
            summary, traj, code = COMMANDS[args.command](args, sc)
    except ParseError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_PARSE
    except NUMERIC_ERRORS as exc:
        print(f"numerical error in {args.command} ({sc.name}): {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_NUMERIC
    emit(summary, traj, args.out, stdout)
    return code


def trace_text(traj: Trajectory) -> str:
    buf = io.StringIO()
    write_trace(traj, buf)
    return buf.getvalue()


if __name__ == "__main__":
    sys.exit(main())
