"""Command-line interface: ``ratdesign solve|bound|linearize|oracle|verify|list``.

Exit codes: 0 success (verified optimal design), 1 failure (solver, checks,
bad input or usage), 2 support polynomial degenerate even after rescaling.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .assembler import AssemblyError, multiplier, pi_degree, support_bound
from .modelfile import (
    ModelFileError,
    ModelSpec,
    gradient_texts,
    linearized_document,
    load_model,
    load_result,
    pi_from_dict,
    pi_to_dict,
    shipped_models,
)
from .pipeline import EXIT_FAILURE, EXIT_OK, PipelineSettings, run
from .recovery import Design, RecoveryError, clusters, grid_oracle, verify_design


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _settings(spec: ModelSpec, args) -> PipelineSettings:
    merged = dict(spec.settings)
    for key in ("tol", "max_iters", "root_tol", "rescale_lambda"):
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    if "max_iters" in merged:
        merged["max_iters"] = int(merged["max_iters"])
    return PipelineSettings(**merged)


def _emit(doc: dict, path) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _say(args, *lines) -> None:
    if not getattr(args, "quiet", False):
        for line in lines:
            print(line)


def _fmt_design(design: Design) -> list:
    out = ["  point            weight"]
    out += [f"  {t: .10f}  {w:.10f}" for t, w in zip(design.points, design.weights)]
    return out


# --------------------------------------------------------------------------
# commands


def cmd_solve(args) -> int:
    spec = load_model(args.model)
    settings = _settings(spec, args)
    res = run(spec.model, spec.criterion, spec.K, settings)
    doc = {
        "tool": "ratdesign",
        "version": __version__,
        "model": str(args.model),
        "criterion": spec.criterion_name,
        "m": spec.model.m,
        "exit_code": res.exit_code,
        "message": res.message,
        "support": list(res.design.points) if res.design else [],
        "weights": list(res.design.weights) if res.design else [],
        "phi_value": res.design.phi_value if res.design else None,
        "dual_y": res.y,
        "pi": pi_to_dict(res.pi) if res.pi is not None else None,
        "degree": res.d,
        "support_bound": res.support_bound,
        "candidates": list(res.candidates),
        "solver": res.solver,
        "rescaled": res.rescaled,
        "rescale_lambda": res.rescale_lambda,
        "verification": res.report.to_dict() if res.report else None,
        "notes": res.notes,
        "timing": res.timings,
    }
    lines = [f"{spec.name or args.model}: {res.message}"]
    if res.y is not None:
        lines.append(f"  optimal value y = {res.y:.10g}   deg pi = {res.d}   support bound = {res.support_bound}")
    if res.design is not None:
        lines += _fmt_design(res.design)
        lines.append(f"  phi = {res.design.phi_value:.10g}")
    if res.report is not None:
        lines += ["  " + s for s in res.report.lines()]
    lines += [f"  note: {n}" for n in res.notes]
    lines.append(f"  time {res.timings.get('total', 0.0):.2f} s")
    _say(args, *lines)
    if args.emit:
        _emit(doc, args.emit)
    return res.exit_code


def cmd_bound(args) -> int:
    spec = load_model(args.model)
    model = spec.model
    d = pi_degree(model)
    b = support_bound(model)
    k1, k2 = model.space.k1, model.space.k2
    print(f"k1 = {k1}  k2 = {k2}  d_den = {multiplier(model).degree}  d = {d}  bound = {b}")
    print(f"  bound = min(floor((k1 + 2 k2 + d) / 2), d) = min({(k1 + 2 * k2 + d) // 2}, {d})")
    return EXIT_OK


def cmd_linearize(args) -> int:
    spec = load_model(args.model)
    if spec.nonlinear is None:
        raise UsageError("model file has no nonlinear block")
    doc = linearized_document(spec)
    if not args.quiet:
        print(f"gradient at theta* = {list(spec.theta_star)}:", file=sys.stderr if args.emit in (None, "-") else sys.stdout)
        for g, b in zip(gradient_texts(spec), doc["basis"]):
            print(f"  {g}  ->  {b}", file=sys.stderr if args.emit in (None, "-") else sys.stdout)
    _emit(doc, args.emit)
    return EXIT_OK


def _compare(design: Design, against: dict, h: float) -> dict:
    pts = np.asarray(against["support"], dtype=float)
    phi_p = against.get("phi_value")
    cl = clusters(design, 1.5 * h)
    dist = [float(np.min(np.abs(pts - loc))) / h if pts.size else np.inf for loc, _ in cl]
    rel = abs(design.phi_value - phi_p) / max(abs(phi_p), 1e-300) if phi_p is not None else np.inf
    return {
        "pipeline_phi": phi_p,
        "relative_phi_difference": rel,
        "clusters": [[loc, mass] for loc, mass in cl],
        "max_cluster_distance_cells": max(dist) if dist else 0.0,
        "agrees": bool(rel <= 2e-3 and (max(dist) if dist else 0.0) <= 2.0),
    }


def cmd_oracle(args) -> int:
    if args.grid < 2:
        raise UsageError("--grid needs at least 2 points per interval")
    spec = load_model(args.model)
    design = grid_oracle(spec.model, spec.criterion, args.grid, K=spec.K)
    widths = [b - a for a, b in spec.model.space.proper]
    h = max(widths) / (args.grid - 1) if widths else 1.0
    doc = {
        "tool": "ratdesign",
        "version": __version__,
        "model": str(args.model),
        "criterion": spec.criterion_name,
        "m": spec.model.m,
        "grid": args.grid,
        "support": list(design.points),
        "weights": list(design.weights),
        "phi_value": design.phi_value,
    }
    lines = [f"grid oracle, {args.grid} points per interval (spacing {h:.3g})"]
    lines += [f"  cluster at {loc: .6f}  mass {mass:.6f}" for loc, mass in clusters(design, 1.5 * h)]
    lines.append(f"  phi = {design.phi_value:.10g}")
    code = EXIT_OK
    if args.against:
        cmp = _compare(design, load_result(args.against), h)
        doc["comparison"] = cmp
        lines.append(
            f"  against {args.against}: relative phi difference {cmp['relative_phi_difference']:.2e}, "
            f"farthest cluster {cmp['max_cluster_distance_cells']:.2f} grid cells -> {'agree' if cmp['agrees'] else 'DISAGREE'}"
        )
        code = EXIT_OK if cmp["agrees"] else EXIT_FAILURE
    _say(args, *lines)
    if args.emit:
        _emit(doc, args.emit)
    return code


def cmd_verify(args) -> int:
    spec = load_model(args.model)
    res = load_result(args.result)
    if res.get("m", spec.model.m) != spec.model.m:
        raise UsageError(f"result is for a model with {res['m']} parameters, model file has {spec.model.m}")
    if res.get("criterion", spec.criterion_name) != spec.criterion_name:
        raise UsageError(f"result is for criterion {res['criterion']}, model file says {spec.criterion_name}")
    if res["pi"] is None or res["dual_y"] is None or not res["support"]:
        print("result carries no design to verify")
        return EXIT_FAILURE
    pts = np.asarray(res["support"], dtype=float)
    w = np.asarray(res["weights"], dtype=float)
    if pts.size != w.size:
        raise UsageError("support and weights differ in length")
    notes = []
    if np.any(w < 0):
        print("weights must be nonnegative")
        return EXIT_FAILURE
    if abs(w.sum() - 1.0) > 1e-10:
        notes.append(f"weights summed to {w.sum():.12g}; renormalised")
        w = w / w.sum()
    outside = [t for t in pts if not spec.model.space.contains(t, 1e-9)]
    if outside:
        print(f"support points outside the design space: {outside}")
        return EXIT_FAILURE
    design = Design(tuple(pts), tuple(w), float(res.get("phi_value") or 0.0))
    report = verify_design(spec.model, design, spec.criterion, pi_from_dict(res["pi"]), res["dual_y"], K=spec.K)
    report.notes = notes + report.notes
    _say(args, f"{args.result} against {args.model}: {'PASS' if report.passed else 'FAIL'}", *["  " + s for s in report.lines()])
    _say(args, *[f"  note: {n}" for n in report.notes])
    return EXIT_OK if report.passed else EXIT_FAILURE


def cmd_list(args) -> int:
    for name in shipped_models():
        print(name)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ratdesign", description="Optimal approximate designs for rational regression models.")
    p.add_argument("--version", action="version", version=f"ratdesign {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_arg(sp):
        sp.add_argument("model", help="model file, or the name of a shipped model (see 'list')")

    s = sub.add_parser("solve", help="compute, verify and report an optimal design")
    model_arg(s)
    s.add_argument("--tol", type=float, help="SDP solver tolerance (default 1e-8)")
    s.add_argument("--max-iters", dest="max_iters", type=int, help="SDP iteration limit (default 100)")
    s.add_argument("--root-tol", dest="root_tol", type=float, help="relative |pi| for a root candidate (default 1e-4)")
    s.add_argument("--rescale-lambda", dest="rescale_lambda", type=float, help="basis scale for the degenerate-pi retry")
    s.add_argument("--emit", help="write the result file here ('-' for stdout)")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("bound", help="print the degree of pi and the support-size bound")
    model_arg(s)
    s.set_defaults(func=cmd_bound)

    s = sub.add_parser("linearize", help="emit the locally linearised model of a nonlinear model file")
    model_arg(s)
    s.add_argument("--emit", help="write the model file here (default stdout)")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_linearize)

    s = sub.add_parser("oracle", help="optimal design on an equispaced grid")
    model_arg(s)
    s.add_argument("--grid", type=int, default=401, help="grid points per interval (default 401)")
    s.add_argument("--against", help="result file from 'solve' to compare with")
    s.add_argument("--emit", help="write the oracle result here ('-' for stdout)")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("verify", help="re-check a result file against its model")
    model_arg(s)
    s.add_argument("result")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("list", help="list the shipped model files")
    s.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except ModelFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (AssemblyError, RecoveryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
