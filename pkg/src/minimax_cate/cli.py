"""Command-line front end.

    minimax-cate solve problem.json -o solution.json
    minimax-cate design-rct strata.json --B 1 -o problem.json
    minimax-cate simulate-rct strata.json --B 1 --tau adversarial --reps 100000 -o report.json

Exit status: 0 on success, 1 on a domain error (reported as JSON on stderr
with a module-qualified code), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Sequence

import numpy as np

from . import schemas
from .closed_form import solve_minimax
from .core import Problem, worst_case_mse
from .designs import (
    DidDesign,
    RctDesign,
    did_design_from_panel,
    did_to_problem,
    fe_weights,
    psm_weights,
    rct_to_problem,
)
from .errors import MinimaxError, ParseError
from .oracle import GridSpec, grid_search
from .qp import QpSettings, solve_qp
from .simulate import McConfig, simulate_did, simulate_rct


def _parse_B(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid B: {text!r}") from None


def _load_problem(path: str) -> Problem:
    return Problem.from_dict(schemas.load_json(path, schemas.PROBLEM_SCHEMA))


def _write(args, payload: str) -> None:
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _summary(args, line: str) -> None:
    # stdout carries the document itself when no output file is given
    if args.output:
        print(line)


def _solution_summary(sol) -> str:
    h = f"h*={sol.h_star}" if sol.h_star is not None else f"active={sol.active_set}"
    return f"{h} sum(w)={float(np.sum(sol.w)):.6g} worst-case MSE={sol.mse.total:.6g} ({sol.mse.scale})"


def cmd_solve(args) -> None:
    problem = _load_problem(args.problem)
    if args.force_qp or args.command == "solve-qp" or problem.has_covariances:
        sol = solve_qp(problem, QpSettings(max_sweeps=args.max_sweeps, tol_kkt=args.tol_kkt))
    else:
        sol = solve_minimax(problem)
    _write(args, schemas.dumps(sol.to_dict()))
    _summary(args, _solution_summary(sol))


def cmd_oracle(args) -> None:
    problem = _load_problem(args.problem)
    w, obj = grid_search(problem, GridSpec(resolution=args.resolution, refine=args.refine))
    mse = worst_case_mse(problem, w)
    _write(args, schemas.dumps({"w": w, "mse": mse.to_dict()}))
    _summary(args, f"grid optimum sum(w)={w.sum():.6g} worst-case MSE={obj:.6g}")


def cmd_design_rct(args) -> None:
    design = RctDesign.from_dict(schemas.load_json(args.design, schemas.RCT_SCHEMA))
    problem = rct_to_problem(design, args.B, sigma=args.sigma)
    _write(args, schemas.dumps(problem.to_dict()))
    _summary(args, f"G={problem.G} strata, B={args.B}")


def _load_did(args) -> DidDesign:
    if args.panel:
        return did_design_from_panel(args.design, args.control_rule or "notyet", args.covariance_mode or "linear")
    d = schemas.load_json(args.design, schemas.DID_SCHEMA)
    if args.control_rule:
        d["control_rule"] = args.control_rule
    if args.covariance_mode:
        d["covariance_mode"] = args.covariance_mode
    return DidDesign.from_dict(d)


def _load_weights(path: str | None):
    if path is None:
        return None
    data = schemas.load_json(path)
    w = data.get("w") if isinstance(data, dict) else data
    if not isinstance(w, list):
        raise ParseError(f"{path}: expected a list of weights or an object with key 'w'")
    return np.asarray(w, dtype=np.float64)


def cmd_design_did(args) -> None:
    design = _load_did(args)
    problem = did_to_problem(design, args.B, p_override=_load_weights(args.p), sigma=args.sigma)
    _write(args, schemas.dumps(problem.to_dict()))
    _summary(args, f"G={problem.G} treated cells, T={design.T}, controls={design.control_rule}")


def _named_estimators(specs: Sequence[str]) -> dict[str, np.ndarray]:
    out = {}
    for spec in specs or ():
        name, sep, path = spec.partition("=")
        if not sep or not name:
            raise ParseError(f"--estimator expects NAME=PATH, got {spec!r}")
        if name in out:
            raise ParseError(f"duplicate estimator name {name!r}")
        out[name] = _load_weights(path)
    return out


def _mc_config(args, estimators, default_ref: str) -> McConfig:
    tau = None
    if args.tau == "explicit":
        if not args.tau_values:
            raise ParseError("--tau explicit needs --tau-values")
        tau = [float(x) for x in args.tau_values.split(",")]
    ref = args.w_ref or default_ref
    if args.tau == "adversarial" and ref not in estimators:
        raise ParseError(f"--w-ref {ref!r} is not a named estimator")
    return McConfig(
        reps=args.reps,
        seed=args.seed,
        estimators=estimators,
        sigma=args.sigma,
        tau_rule=args.tau,
        tau=tau,
        w_ref=estimators.get(ref),
        B=args.B,
    )


def _emit_report(args, report) -> None:
    if args.format == "csv":
        _write(args, report.to_csv())
    else:
        _write(args, schemas.dumps(report.to_dict()))
    best = min(report.estimators.items(), key=lambda kv: kv[1].mse)
    _summary(args, f"{report.reps} reps, seed {report.seed}; lowest empirical MSE: {best[0]}={best[1].mse:.6g}")


def cmd_simulate_rct(args) -> None:
    design = RctDesign.from_dict(schemas.load_json(args.design, schemas.RCT_SCHEMA))
    estimators = {"psm": psm_weights(design), "fe": fe_weights(design)}
    if math.isfinite(args.B):
        estimators["minimax"] = solve_minimax(rct_to_problem(design, args.B)).w
    estimators.update(_named_estimators(args.estimator))
    report = simulate_rct(design, _mc_config(args, estimators, "minimax"))
    _emit_report(args, report)


def cmd_simulate_did(args) -> None:
    design = _load_did(args)
    p = _load_weights(args.p)
    problem = did_to_problem(design, args.B, p_override=p)
    estimators = {"p": problem.p.copy()}
    if math.isfinite(args.B) and not np.any(problem.cov_matrix < 0):
        estimators["minimax"] = solve_qp(problem).w
    estimators.update(_named_estimators(args.estimator))
    report = simulate_did(design, _mc_config(args, estimators, "minimax"), p=p)
    _emit_report(args, report)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="minimax-cate", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def out(p):
        p.add_argument("-o", "--output", help="output file (default: stdout)")

    for name in ("solve", "solve-qp"):
        p = sub.add_parser(name, help="minimax weights for a problem JSON")
        p.add_argument("problem")
        out(p)
        p.add_argument("--force-qp", action="store_true", help="use the QP solver even without covariances")
        p.add_argument("--max-sweeps", type=int, default=QpSettings.max_sweeps)
        p.add_argument("--tol-kkt", type=float, default=QpSettings.tol_kkt)
        p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", help="brute-force grid minimum (G <= 5)")
    p.add_argument("problem")
    out(p)
    p.add_argument("--resolution", type=float, default=GridSpec.resolution)
    p.add_argument("--refine", action="store_true")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("design-rct", help="problem JSON from stratum counts")
    p.add_argument("design")
    out(p)
    p.add_argument("--B", type=_parse_B, required=True)
    p.add_argument("--sigma", type=float)
    p.set_defaults(func=cmd_design_rct)

    def did_args(p):
        p.add_argument("design", help="DID design JSON, or a unit,period,treated CSV with --panel")
        p.add_argument("--panel", action="store_true", help="read the design from a panel CSV")
        p.add_argument("--control-rule", choices=["never", "notyet"])
        p.add_argument("--covariance-mode", choices=["linear", "paper"])
        p.add_argument("--p", help="estimand weights over treated cells (JSON list or {'w': [...]})")

    p = sub.add_parser("design-did", help="problem JSON from a staggered-adoption design")
    did_args(p)
    out(p)
    p.add_argument("--B", type=_parse_B, required=True)
    p.add_argument("--sigma", type=float)
    p.set_defaults(func=cmd_design_did)

    def sim_args(p):
        out(p)
        p.add_argument("--B", type=_parse_B, required=True)
        p.add_argument("--reps", type=int, default=100_000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--sigma", type=float, default=1.0)
        p.add_argument("--tau", choices=["zero", "adversarial", "explicit"], default="zero")
        p.add_argument("--tau-values", help="comma-separated effects for --tau explicit")
        p.add_argument("--w-ref", help="estimator whose worst case --tau adversarial targets (default: minimax)")
        p.add_argument("--estimator", action="append", metavar="NAME=PATH", help="extra weights (solution JSON)")
        p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("simulate-rct", help="Monte-Carlo check on a stratified experiment")
    p.add_argument("design")
    sim_args(p)
    p.set_defaults(func=cmd_simulate_rct)

    p = sub.add_parser("simulate-did", help="Monte-Carlo check on a staggered-adoption design")
    did_args(p)
    sim_args(p)
    p.set_defaults(func=cmd_simulate_did)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except MinimaxError as exc:
        sys.stderr.write(json.dumps({"error": {"code": exc.code, "message": str(exc)}}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
