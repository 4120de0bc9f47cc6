"""Command-line driver.

Exit codes
----------
0  success
1  malformed input, missing file or configuration schema violation
2  infeasible marginals (masses differ)
3  a solver did not converge
4  a verification threshold was exceeded

Vectors are single-column CSV files, matrices dense CSV. Matrices are written
with 17 significant digits and report values with the shortest exact repr,
so round trips are lossless. ``OTBL_LOG``
(``error``, ``info`` or ``debug``) sets the log level.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys

import numpy as np

from . import checks, lp_oracle
from .bilevel import (
    ContinuationSchedule,
    band_mask,
    build_recovery_sequence,
    continuation_solve,
    generate_random_instance,
    identification_problem,
    verify_recovery,
)
from .core import ProblemData, RegParams
from .dualeps import solve_dual_eps
from .errors import ConvergenceError, DomainError, InfeasibleError, OTBLError
from .qreg import dual_objective_qreg, duality_gap_qreg, primal_objective_qreg, solve_qreg
from .trsolver import TRConfig

log = logging.getLogger("otbl")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NONCONVERGED, EXIT_THRESHOLD = 0, 1, 2, 3, 4
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
CONFIG_SCHEMA = 1
METRIC_COLUMNS = ["level", "gamma", "epsilon", "J", "max_err_mu1", "max_err_pi", "iters", "converged"]
TRACE_COLUMNS = ["level", "iter", "f", "theta", "psi", "delta", "rho", "accepted"]
TR_KEYS = {"R", "delta_min", "eta1", "eta2", "beta1", "beta2", "nu", "delta0", "tol", "max_iter",
           "ball_samples"}
MASK_KEYS = {"type", "bandwidth", "marginal_lo", "marginal_hi"}
TOP_KEYS = {"schema", "n1", "n2", "seed", "density", "cost_exponent", "lambda", "schedule", "tr", "mask"}


class InputError(Exception):
    """Unreadable file or invalid configuration (exit code 1)."""


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    # shortest repr that round-trips exactly
    return repr(float(x))


def read_vector(path):
    try:
        v = np.loadtxt(path, delimiter=",", ndmin=1, dtype=float)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read vector from {path}: {exc}") from exc
    return v.ravel()


def read_matrix(path):
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read matrix from {path}: {exc}") from exc


def write_matrix(path, M):
    np.savetxt(path, np.atleast_2d(M), delimiter=",", fmt="%.17g")


def _load_problem(args):
    mu1, mu2, cost = read_vector(args.mu1), read_vector(args.mu2), read_matrix(args.cost)
    try:
        return ProblemData(mu1, mu2, cost)
    except (DomainError, ValueError) as exc:
        raise InputError(f"inconsistent problem data: {exc}") from exc


def _emit_summary(args, summary):
    text = json.dumps(summary, indent=2, sort_keys=True)
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _residuals(plan, data):
    return (float(np.abs(plan.sum(axis=1) - data.mu1).max()),
            float(np.abs(plan.sum(axis=0) - data.mu2).max()))


def cmd_solve_lp(args):
    data = _load_problem(args)
    sol = lp_oracle.solve_hitchcock(data)
    r1, r2 = _residuals(sol.plan, data)
    dual_value = float(sol.duals.alpha1 @ data.mu1 + sol.duals.alpha2 @ data.mu2)
    write_matrix(args.out, sol.plan)
    _emit_summary(args, {"problem": "lp", "value": sol.value, "dual_value": dual_value,
                         "duality_gap": sol.value - dual_value, "residual_mu1": r1, "residual_mu2": r2,
                         "iterations": sol.iterations,
                         "optimal": lp_oracle.check_optimality(sol, data)})
    return EXIT_OK


def cmd_solve_qreg(args):
    data = _load_problem(args)
    info = {}
    plan, duals = solve_qreg(data, args.gamma, tol=args.tol, max_iter=args.max_iter, info=info)
    r1, r2 = _residuals(plan, data)
    write_matrix(args.out, plan)
    _emit_summary(args, {"problem": "qreg", "gamma": args.gamma,
                         "value": primal_objective_qreg(plan, data, args.gamma),
                         "dual_value": dual_objective_qreg(duals, data, args.gamma),
                         "duality_gap": duality_gap_qreg(plan, duals, data, args.gamma),
                         "residual_mu1": r1, "residual_mu2": r2, "iterations": info["iterations"]})
    return EXIT_OK


def cmd_solve_eps(args):
    data = _load_problem(args)
    params = RegParams(args.gamma, args.epsilon)
    res = solve_dual_eps(data, params, tol=args.tol, max_iter=args.max_iter)
    plan = res.plan
    feas1 = float(np.abs(plan.sum(axis=1) - data.mu1 + args.epsilon * res.duals.alpha1).max())
    feas2 = float(np.abs(plan.sum(axis=0) - data.mu2 + args.epsilon * res.duals.alpha2).max())
    write_matrix(args.out, plan)
    _emit_summary(args, {"problem": "eps", "gamma": args.gamma, "epsilon": args.epsilon,
                         "value": float(np.vdot(data.cost, plan)), "residual": res.residual,
                         "eps_residual_mu1": feas1, "eps_residual_mu2": feas2,
                         "iterations": res.newton_iters, "active": len(res.partition.plus),
                         "zero_slack": len(res.partition.zero)})
    return EXIT_OK


def _check_number(cfg, key, errors, kind=float, positive=False, default=None):
    if key not in cfg:
        if default is None:
            errors.append(f"{key}: missing")
        return default
    value = cfg[key]
    ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is int:
        ok = ok and float(value).is_integer()
    if ok and positive and not value > 0:
        ok = False
    if not ok:
        errors.append(f"{key}: expected {'positive ' if positive else ''}{kind.__name__}, got {value!r}")
        return default
    return kind(value)


def parse_identify_config(cfg):
    """Validate an ``identify`` configuration; raises :class:`InputError` listing bad keys."""
    if not isinstance(cfg, dict):
        raise InputError("configuration must be a JSON object")
    errors = [f"{k}: unknown key" for k in sorted(set(cfg) - TOP_KEYS)]
    if cfg.get("schema") != CONFIG_SCHEMA:
        errors.append(f"schema: expected {CONFIG_SCHEMA}, got {cfg.get('schema')!r}")
    out = {
        "n1": _check_number(cfg, "n1", errors, int, positive=True),
        "n2": _check_number(cfg, "n2", errors, int, positive=True),
        "seed": _check_number(cfg, "seed", errors, int, default=0),
        "density": _check_number(cfg, "density", errors, float, positive=True, default=0.5),
        "cost_exponent": _check_number(cfg, "cost_exponent", errors, float, default=2.0),
        "lambda": _check_number(cfg, "lambda", errors, float, default=1.0),
    }
    schedule = cfg.get("schedule")
    levels = []
    if not isinstance(schedule, list) or not schedule:
        errors.append("schedule: expected a nonempty list of {gamma, epsilon}")
    else:
        for k, item in enumerate(schedule):
            if not isinstance(item, dict) or set(item) != {"gamma", "epsilon"}:
                errors.append(f"schedule[{k}]: expected keys gamma and epsilon")
                continue
            sub = []
            g = _check_number(item, "gamma", sub, float, positive=True)
            e = _check_number(item, "epsilon", sub, float, positive=True)
            errors.extend(f"schedule[{k}].{m}" for m in sub)
            levels.append((g, e))
    tr = cfg.get("tr", {})
    tr_kwargs = {}
    if not isinstance(tr, dict):
        errors.append("tr: expected an object")
    else:
        errors.extend(f"tr.{k}: unknown key" for k in sorted(set(tr) - TR_KEYS))
        for key in sorted(set(tr) & TR_KEYS):
            sub = []
            kind = int if key in ("max_iter", "ball_samples") else float
            value = _check_number(tr, key, sub, kind)
            errors.extend(f"tr.{m}" for m in sub)
            tr_kwargs[key] = value
    mask = cfg.get("mask", {"type": "full"})
    mask_spec = {"type": "full"}
    if not isinstance(mask, dict):
        errors.append("mask: expected an object")
    else:
        errors.extend(f"mask.{k}: unknown key" for k in sorted(set(mask) - MASK_KEYS))
        kind = mask.get("type", "full")
        if kind not in ("full", "band"):
            errors.append(f"mask.type: expected 'full' or 'band', got {kind!r}")
        elif kind == "band":
            sub = []
            mask_spec = {"type": "band",
                         "bandwidth": _check_number(mask, "bandwidth", sub, int),
                         "marginal_lo": _check_number(mask, "marginal_lo", sub, int, default=1),
                         "marginal_hi": _check_number(mask, "marginal_hi", sub, int,
                                                      default=out["n1"] or 1)}
            errors.extend(f"mask.{m}" for m in sub)
    if errors:
        raise InputError("invalid configuration:\n  " + "\n  ".join(errors))
    try:
        out["schedule"] = ContinuationSchedule(tuple(levels))
        out["tr"] = TRConfig(seed=out["seed"], **tr_kwargs)
    except (DomainError, TypeError, ValueError) as exc:
        raise InputError(f"invalid configuration: {exc}") from exc
    out["mask"] = mask_spec
    return out


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read configuration {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"configuration {path} is not valid JSON: {exc}") from exc


def metrics_csv(levels):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for r in levels:
        m = r.metrics
        writer.writerow([r.level, _fmt(r.gamma), _fmt(r.epsilon), _fmt(m["J"]), _fmt(m["max_err_mu1"]),
                         _fmt(m["max_err_pi"]), m["iters"], _fmt(m["converged"])])
    return buf.getvalue()


def trace_csv(levels):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for r in levels:
        if r.state is None:
            continue
        for h in r.state.history:
            psi = "" if math.isnan(h.psi) else _fmt(h.psi)
            writer.writerow([r.level, h.iteration, _fmt(h.f), _fmt(h.theta), psi, _fmt(h.radius),
                             _fmt(h.rho), _fmt(h.accepted)])
    return buf.getvalue()


def run_identify(cfg):
    inst = generate_random_instance(cfg["n1"], cfg["n2"], cfg["density"], cfg["cost_exponent"], cfg["seed"])
    mask = None
    if cfg["mask"]["type"] == "band":
        m = cfg["mask"]
        mask = band_mask(cfg["n1"], cfg["n2"], m["bandwidth"], (m["marginal_lo"], m["marginal_hi"]))
    prob = identification_problem(inst, mask, cfg["lambda"])
    return continuation_solve(prob, cfg["schedule"], cfg["tr"], ground_truth=(inst.mu1_star, inst.pi_star))


def cmd_identify(args):
    cfg = parse_identify_config(_load_json(args.config))
    try:
        levels = run_identify(cfg)
    except DomainError as exc:
        raise InputError(str(exc)) from exc
    text = metrics_csv(levels)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(trace_csv(levels))
    for r in levels:
        if not r.metrics["converged"] and r.metrics["error"] is None:
            log.info("level %d stopped at the iteration limit without reaching the tolerance", r.level)
    return EXIT_NONCONVERGED if any(r.metrics["error"] for r in levels) else EXIT_OK


def _parse_gammas(text):
    try:
        gammas = [float(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise InputError(f"cannot parse gamma list {text!r}") from exc
    if not gammas or any(not g > 0 for g in gammas):
        raise InputError("gamma list must be nonempty and positive")
    return gammas


def cmd_verify_recovery(args):
    gammas = _parse_gammas(args.gammas)
    if args.random is not None:
        inst = generate_random_instance(args.random, args.random, seed=args.seed)
        data = ProblemData(inst.mu1_star, inst.mu2_d, inst.cost)
    else:
        if not (args.mu1 and args.mu2 and args.cost):
            raise InputError("give --mu1, --mu2 and --cost, or --random N")
        data = _load_problem(args)
    sol = lp_oracle.solve_hitchcock(data)
    tampered = read_matrix(args.ck) if args.ck else None
    if tampered is not None and tampered.shape != data.cost.shape:
        raise InputError(f"{args.ck}: expected a {data.n1}x{data.n2} matrix")
    all_ok = True
    for g in gammas:
        c_k = build_recovery_sequence(sol.plan, data.cost, g) if tampered is None else tampered
        ok = verify_recovery(sol.plan, sol.duals, c_k, g, tol=args.tol)
        all_ok &= ok
        print(f"gamma={_fmt(g)} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if all_ok else EXIT_THRESHOLD


def cmd_check_derivatives(args):
    params = RegParams(args.gamma, args.epsilon)
    report = checks.run_derivative_checks(seed=args.seed, num_points=args.points, n1=args.n, n2=args.n,
                                          params=params, kink=args.kink, allow_kinks=args.allow_kinks)
    print(f"points={report.points} kinks={report.kinks}")
    for key in sorted(report.errors):
        value = report.errors[key]
        status = "ok" if value <= checks.THRESHOLDS[key] else "EXCEEDED"
        print(f"{key} max_rel_err={value:.3e} threshold={checks.THRESHOLDS[key]:.0e} {status}")
    if report.notes:
        more = f" (and {len(report.notes) - 1} more points)" if len(report.notes) > 1 else ""
        print(report.notes[0] + more)
    return EXIT_OK if report.passed() else EXIT_THRESHOLD


def _add_problem_files(p, required=True):
    p.add_argument("--mu1", required=required, help="source marginal, single-column CSV")
    p.add_argument("--mu2", required=required, help="target marginal, single-column CSV")
    p.add_argument("--cost", required=required, help="cost matrix, dense CSV")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would collide with "infeasible"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="otbl", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-lp", help="exact transportation LP")
    _add_problem_files(p)
    p.add_argument("--out", required=True, help="plan CSV")
    p.add_argument("--summary", help="JSON summary path (default: stdout)")
    p.set_defaults(func=cmd_solve_lp)

    p = sub.add_parser("solve-qreg", help="quadratically regularized transport")
    _add_problem_files(p)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--out", required=True)
    p.add_argument("--summary")
    p.set_defaults(func=cmd_solve_qreg)

    p = sub.add_parser("solve-eps", help="doubly regularized dual system")
    _add_problem_files(p)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--summary")
    p.set_defaults(func=cmd_solve_eps)

    p = sub.add_parser("identify", help="transportation identification with continuation")
    p.add_argument("--config", required=True, help="JSON configuration (schema 1)")
    p.add_argument("--out", help="metrics CSV path (default: stdout)")
    p.add_argument("--trace", help="per-iteration log CSV path")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("verify-recovery", help="check the recovery-sequence identity")
    _add_problem_files(p, required=False)
    p.add_argument("--gammas", required=True, help="comma or space separated list")
    p.add_argument("--ck", help="use this cost matrix instead of the constructed one")
    p.add_argument("--random", type=int, metavar="N", help="use a seeded random N x N instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(func=cmd_verify_recovery)

    p = sub.add_parser("check-derivatives", help="finite-difference and adjoint checks of the plan map")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--n", type=int, default=5, help="grid size n x n")
    p.add_argument("--gamma", type=float, default=1e-2)
    p.add_argument("--epsilon", type=float, default=1e-2)
    p.add_argument("--kink", action="store_true", help="place a zero-slack cell at every point")
    p.add_argument("--allow-kinks", action="store_true",
                   help="check directional derivatives and Bouligand elements at kinks")
    p.set_defaults(func=cmd_check_derivatives)
    return parser


def _configure_logging():
    name = os.environ.get("OTBL_LOG", "error").lower()
    if name not in LOG_LEVELS:
        raise InputError(f"OTBL_LOG must be one of {sorted(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _configure_logging()
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except OTBLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
