"""Command-line interface: classify, transform, solve, certify.

Output is deterministic — no timestamps, no environment echoes — so runs
on the same input bytes produce the same report bytes.  Exit codes:

* 0 — the command ran; solver statuses like ``infeasible`` are data
* 2 — the input file does not parse
* 3 — the input parses but fails validation
* 4 — the requested rule or method does not apply to this problem
* 5 — a numerical failure inside a method
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys

import numpy as np

from . import __version__
from . import certify as cert
from . import transforms as tr
from .classify import classify, render_chain, render_chain_inline
from .errors import (EvalDomainError, InvalidProblem, NoInterior, NotGP,
                     NotReducible, NumericalError, ProblemFormatError,
                     ShapeMismatch, SolverError, TransformError)
from .kernels import BACKEND
from .problem import parse_problem, serialize_problem, validate
from .solvers import SOLVERS, solve_grid_oracle

__all__ = ["main"]


# ---------------------------------------------------------------------------
# plumbing

def _read_input(path: str) -> tuple[str, str]:
    """Returns (text, sha256-digest-of-bytes)."""
    if path == "-":
        data = sys.stdin.buffer.read()
    else:
        with open(path, "rb") as fh:
            data = fh.read()
    return data.decode("utf-8"), "sha256:" + hashlib.sha256(data).hexdigest()


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    return obj


def _emit(report: dict, as_json: bool, human_lines: list[str]) -> None:
    if as_json:
        sys.stdout.write(json.dumps(_json_safe(report), indent=2,
                                    ensure_ascii=False, allow_nan=False) + "\n")
    else:
        for line in human_lines:
            sys.stdout.write(line + "\n")


def _report_head(digest: str, command: str) -> dict:
    return {"digest": digest, "command": command}


def _finish_report(report: dict) -> dict:
    report["version"] = __version__
    return report


# ---------------------------------------------------------------------------
# classify

def _cmd_classify(args) -> int:
    text, digest = _read_input(args.file)
    p = parse_problem(text)
    violations = validate(p)
    if violations:
        raise InvalidProblem(violations)
    c = classify(p)
    report = _report_head(digest, "classify")
    report["classification"] = {
        "class": c.problem_class,
        "convexity": c.convexity,
        "flags": sorted(c.degenerate_flags),
        "chain": [{"node": n, "justification": j or None} for n, j in c.chain],
        "chain_inline": render_chain_inline(c.chain),
    }
    human = [
        f"class: {c.problem_class} ({c.convexity})",
    ]
    if c.degenerate_flags:
        human.append("flags: " + ", ".join(sorted(c.degenerate_flags)))
    human.append("chain:")
    human.extend("  " + ln for ln in render_chain(c.chain).splitlines())
    _emit(_finish_report(report), args.json, human)
    return 0


# ---------------------------------------------------------------------------
# transform

def _steps_block(steps) -> list[dict]:
    out = []
    for s in steps:
        out.append({
            "rule": s.rule,
            "value_map": s.value_map.describe() if s.value_map is not None else None,
            "certificate": _json_safe(s.certificate),
            "notes": list(s.notes),
        })
    return out


def _cmd_transform(args) -> int:
    text, digest = _read_input(args.file)
    p = parse_problem(text)
    violations = validate(p)
    if violations:
        raise InvalidProblem(violations)

    if args.rule == "to-convex-min":
        pipe = tr.to_convex_min(p)
        steps = pipe.steps
        result = pipe.transformed
    elif args.rule in tr.RULES:
        step = tr.RULES[args.rule](p)
        steps = (step,)
        result = step.transformed
    else:  # argparse choices prevent this
        raise TransformError(f"unknown rule '{args.rule}'")

    out_text = serialize_problem(result)
    chain = {"rule": args.rule, "steps": _steps_block(steps)}
    report = _report_head(digest, "transform")
    report["transform"] = dict(chain)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out_text)
        with open(args.out + ".chain.json", "w", encoding="utf-8") as fh:
            fh.write(json.dumps(_json_safe(chain), indent=2,
                                ensure_ascii=False, allow_nan=False) + "\n")
        report["transform"]["output"] = args.out
        human = [f"rule: {args.rule}",
                 f"steps: {', '.join(s.rule for s in steps) or '(none applied)'}",
                 f"wrote: {args.out}",
                 f"wrote: {args.out}.chain.json"]
        _emit(_finish_report(report), args.json, human)
    else:
        report["transform"]["problem"] = out_text
        if args.json:
            _emit(_finish_report(report), True, [])
        else:
            # pipe-friendly: the problem itself on stdout, summary on stderr
            sys.stdout.write(out_text)
            sys.stderr.write(
                f"rule: {args.rule}; steps: "
                f"{', '.join(s.rule for s in steps) or '(none applied)'}\n")
    return 0


# ---------------------------------------------------------------------------
# solve

def _parse_grid_box(pairs) -> dict:
    box = {}
    for spec in pairs or []:
        try:
            name, rng = spec.split("=", 1)
            lo, hi = rng.split(":", 1)
            box[name] = (float(lo), float(hi))
        except ValueError:
            raise SolverError(
                f"--grid-box expects var=lo:hi, got '{spec}'") from None
    return box


def _auto_method(p) -> str:
    c = classify(p)
    if c.problem_class == "LP":
        return "simplex"
    if not p.constraints and all(v.domain != "nonnegative" for v in p.variables):
        return "newton"
    from .problem import layout_of
    if layout_of(p).total <= 3:
        return "grid"
    hints = {
        "SOCP": "the socp-to-lp rule may reduce it for the simplex",
        "GP": "the gp-log rule yields a smooth convex form",
    }
    hint = hints.get(c.problem_class,
                     "the grid oracle covers up to 3 flat dimensions")
    raise SolverError(
        f"no bundled method covers a {c.problem_class} of this size; {hint}")


def _solution_block(sol) -> dict:
    return {
        "status": sol.status,
        "method": sol.method,
        "value": _json_safe(sol.value),
        "point": _json_safe(sol.point),
        "multipliers": _json_safe(sol.multipliers),
        "iterations": sol.iterations,
        "meta": _json_safe(sol.meta),
    }


def _fmt_point(point) -> str:
    parts = []
    for name, vals in point.items():
        flat = np.asarray(vals).ravel()
        if flat.size == 1:
            parts.append(f"{name}={flat[0]:.10g}")
        else:
            parts.append(f"{name}=[" + ", ".join(f"{v:.10g}" for v in flat) + "]")
    return " ".join(parts)


def _cmd_solve(args) -> int:
    text, digest = _read_input(args.file)
    p = parse_problem(text)
    violations = validate(p)
    if violations:
        raise InvalidProblem(violations)

    method = args.method
    if method == "auto":
        method = _auto_method(p)
    if method not in SOLVERS:
        raise SolverError(f"unknown method '{method}'")

    if method == "grid":
        sol = solve_grid_oracle(p, box=_parse_grid_box(args.grid_box),
                                resolution=args.grid_res)
    else:
        sol = SOLVERS[method](p)

    report = _report_head(digest, "solve")
    report["solution"] = _solution_block(sol)
    human = [f"status: {sol.status} (method: {sol.method})"]
    if sol.point is not None:
        human.append("point: " + _fmt_point(sol.point))
    if isinstance(sol.value, float) and math.isfinite(sol.value):
        human.append(f"value: {sol.value:.10g}")
    elif isinstance(sol.value, float) and math.isinf(sol.value):
        human.append(f"value: {'inf' if sol.value > 0 else '-inf'}")
    if sol.multipliers is not None and np.asarray(sol.multipliers).size:
        human.append("multipliers: ["
                     + ", ".join(f"{v:.6g}" for v in np.asarray(sol.multipliers))
                     + "]")
    _emit(_finish_report(report), args.json, human)
    return 0


# ---------------------------------------------------------------------------
# certify

def _parse_point(spec: str):
    try:
        val = json.loads(spec)
    except json.JSONDecodeError as err:
        raise SolverError(f"--point is not valid JSON: {err}") from None
    if isinstance(val, dict):
        return {k: np.asarray(v, dtype=float) for k, v in val.items()}
    return np.asarray(val, dtype=float)


def _cmd_certify(args) -> int:
    text, digest = _read_input(args.file)
    p = parse_problem(text)
    violations = validate(p)
    if violations:
        raise InvalidProblem(violations)

    check = args.check
    if check == "auto":
        if args.param:
            check = "envelope"
        elif args.multipliers:
            check = "kkt"
        else:
            check = "local-optimum"

    report = _report_head(digest, "certify")
    human: list[str] = []

    if check == "envelope":
        if not args.param:
            raise SolverError("the envelope check needs --param NAME")
        rep = cert.envelope_sensitivity(
            p, args.param, h=args.h,
            method=args.method if args.method != "auto" else "auto",
            tol=args.tol if args.tol is not None else 1e-4)
        report["envelope"] = {
            "parameter": rep.parameter,
            "optimal_value_derivative": _json_safe(rep.optimal_value_derivative),
            "lagrangian_derivative": _json_safe(rep.lagrangian_derivative),
            "difference": _json_safe(rep.difference),
            "ok": rep.ok,
            "values": _json_safe(list(rep.values)),
        }
        human = [
            f"envelope check on '{rep.parameter}': "
            f"{'agrees' if rep.ok else 'DISAGREES'}",
            f"  d(optimal value)/d({rep.parameter}) = "
            f"{rep.optimal_value_derivative:.10g}",
            f"  dL/d({rep.parameter}) at frozen solution = "
            f"{rep.lagrangian_derivative:.10g}",
            f"  difference = {rep.difference:.3e}",
        ]
    elif check == "kkt":
        if not args.point or not args.multipliers:
            raise SolverError("the kkt check needs --point and --multipliers")
        rep = cert.check_kkt(p, _parse_point(args.point),
                             _parse_point(args.multipliers),
                             lambda0=args.lambda0)
        report["kkt"] = {
            "verdict": rep.verdict,
            "first_failed_clause": rep.first_failed_clause,
            "feasibility_violation": _json_safe(rep.feasibility_violation),
            "stationarity_residual": _json_safe(rep.stationarity_residual),
            "min_multiplier": _json_safe(rep.min_multiplier),
            "slackness_max": _json_safe(rep.slackness_max),
            "lambda0": rep.lambda0,
        }
        human = [f"kkt: {rep.verdict}"
                 + (f" (first failed clause: {rep.first_failed_clause})"
                    if rep.first_failed_clause else ""),
                 f"  stationarity residual = {rep.stationarity_residual:.3e}",
                 f"  feasibility violation = {rep.feasibility_violation:.3e}",
                 f"  complementary slackness max = {rep.slackness_max:.3e}"]
    elif check == "stationarity":
        if not args.point:
            raise SolverError("the stationarity check needs --point")
        rep = cert.check_stationarity(p, _parse_point(args.point))
        report["stationarity"] = {
            "residual": _json_safe(rep.residual),
            "ok": rep.ok,
        }
        human = [f"stationarity: {'ok' if rep.ok else 'FAILS'} "
                 f"(residual {rep.residual:.3e})"]
    elif check == "local-optimum":
        if not args.point:
            raise SolverError("the local-optimum check needs --point")
        rep = cert.check_local_optimum(
            p, _parse_point(args.point), delta=args.delta,
            samples=args.samples, seed=args.seed)
        block = {
            "verdict": rep.verdict,
            "candidate_value": _json_safe(rep.candidate_value),
            "n_feasible_samples": rep.n_feasible_samples,
            "best_sampled_value": _json_safe(rep.best_sampled_value),
        }
        if rep.witness is not None:
            block["witness"] = _json_safe(rep.witness)
        report["local_optimum"] = block
        human = [f"local optimum: {rep.verdict} "
                 f"({rep.n_feasible_samples} feasible samples in the ball)"]
        if rep.witness is not None:
            human.append(
                f"  improvement found: {rep.witness['improvement']:.3e}")
    elif check == "second-order":
        if not args.point:
            raise SolverError("the second-order check needs --point")
        rep = cert.check_second_order(p, _parse_point(args.point))
        report["second_order"] = {
            "psd": rep.psd,
            "min_eigenvalue": _json_safe(rep.min_eigenvalue),
            "ok": rep.ok,
        }
        human = [f"second order: {'psd' if rep.psd else 'NOT psd'} "
                 f"(min eigenvalue {rep.min_eigenvalue:.6g})"]
    else:  # argparse choices prevent this
        raise SolverError(f"unknown check '{check}'")

    _emit(_finish_report(report), args.json, human)
    return 0


# ---------------------------------------------------------------------------
# parser and entry point

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="optontology",
        description="classify, transform, solve, and certify optimization "
                    "problems stored as .optproblem.json files")
    ap.add_argument("--version", action="version",
                    version=f"optontology {__version__} ({BACKEND} kernels)")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("file", help="input .optproblem.json path, or - for stdin")
        sp.add_argument("--json", action="store_true",
                        help="emit a JSON report instead of plain text")

    sp = sub.add_parser("classify", help="name the problem's ontology class")
    common(sp)
    sp.set_defaults(func=_cmd_classify)

    sp = sub.add_parser("transform", help="apply a rewriting rule")
    common(sp)
    sp.add_argument("--rule", required=True,
                    choices=sorted(tr.RULES) + ["to-convex-min"])
    sp.add_argument("-o", "--out", default=None,
                    help="write the transformed problem here (plus a "
                         "<out>.chain.json sidecar)")
    sp.set_defaults(func=_cmd_transform)

    sp = sub.add_parser("solve", help="run a numerical method")
    common(sp)
    sp.add_argument("--method", default="auto",
                    choices=["auto"] + sorted(SOLVERS))
    sp.add_argument("--grid-box", action="append", metavar="VAR=LO:HI",
                    help="per-variable box for the grid method (repeatable)")
    sp.add_argument("--grid-res", type=int, default=101,
                    help="grid nodes per axis (default 101)")
    sp.set_defaults(func=_cmd_solve)

    sp = sub.add_parser("certify", help="check evidence for a candidate")
    common(sp)
    sp.add_argument("--check", default="auto",
                    choices=["auto", "kkt", "stationarity", "local-optimum",
                             "envelope", "second-order"])
    sp.add_argument("--point", help="candidate point as JSON "
                                    "(object of per-variable arrays, or flat array)")
    sp.add_argument("--multipliers", help="multiplier vector as a JSON array")
    sp.add_argument("--lambda0", type=float, default=1.0,
                    help="objective weight in the stationarity clause")
    sp.add_argument("--delta", type=float, default=1e-3,
                    help="radius of the local-optimality ball")
    sp.add_argument("--samples", type=int, default=256,
                    help="sample count for the local-optimality probe")
    sp.add_argument("--seed", type=int, default=None,
                    help="override the sampling seed")
    sp.add_argument("--param", help="parameter name for the envelope check")
    sp.add_argument("--h", type=float, default=None,
                    help="finite-difference step for the envelope check")
    sp.add_argument("--tol", type=float, default=None,
                    help="agreement tolerance for the envelope check")
    sp.add_argument("--method", default="auto",
                    choices=["auto", "simplex", "newton"],
                    help="solver used inside the envelope check")
    sp.set_defaults(func=_cmd_certify)
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProblemFormatError as err:
        sys.stderr.write(f"parse error: {err}\n")
        return 2
    except InvalidProblem as err:
        sys.stderr.write("validation failed:\n")
        for v in err.violations:
            sys.stderr.write(f"  [{v.code}] {v.message} (at {v.where})\n")
        return 3
    except (NotReducible, NotGP, ShapeMismatch, NoInterior, TransformError,
            SolverError) as err:
        sys.stderr.write(f"inapplicable: {err}\n")
        return 4
    except (NumericalError, EvalDomainError) as err:
        sys.stderr.write(f"numerical failure: {err}\n")
        return 5


if __name__ == "__main__":
    sys.exit(main())
