"""Command-line entry point: ``knappmodes validate|sweep|fit|report``.

Exit codes: 0 when every requested certificate (and fit target) passes,
1 when some certificate or target fails, 2 on bad input or I/O errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from ..errors import KnappError
from ..geometry import (
    FlatQuotient,
    align_lattice,
    choose_axis_line,
    circle_separation,
    equator_stabilizer,
    geodesic_period,
)
from .config import Target, build_quotient, load_config
from .report import certificate_status, emit_report, fit_target, read_csv
from .sweep import run_sweep


def _validate(cfg, out):
    Q = build_quotient(cfg.manifold)
    info = {"name": Q.name, "n": Q.n}
    if isinstance(Q, FlatQuotient):
        rot, Fa = align_lattice(Q)
        axis = choose_axis_line(Fa, c0=float(cfg.manifold.get("c0", "0.05")))
        info.update(index=Q.index, det=Q.det, aligned=bool(Q.is_aligned), axis_length=Fa.axis_length,
                    base_point=axis.base_point.tolist(), clearance=axis.clearance, c1=axis.c1,
                    cases=list(axis.cases), period=geodesic_period(Fa, axis))
    else:
        E = equator_stabilizer(Q)
        info.update(order=Q.order, stabilizer_order=E.order, circle_separation=circle_separation(Q, E))
    print(json.dumps(info, indent=2, default=float), file=out)
    return 0


def _print_summary(summary, out):
    for f in summary["fits"]:
        if "error" in f:
            print(f"FAIL fit {f['name']}: {f['error']}", file=out)
            continue
        mark = "PASS" if f["pass"] else "FAIL"
        print(f"{mark} fit {f['name']}: slope of {f['y']} vs {f['x']} = {f['exponent']:.4f} "
              f"(target {f['target']:g} +/- {f['tol']:g}, n={f['count']}, "
              f"max residual {f['max_residual']:.3g})", file=out)
    for c, ok in summary["certificates"].items():
        print(f"{'PASS' if ok else 'FAIL'} certificate {c}", file=out)


def _sweep(cfg, args, out):
    res = run_sweep(cfg, use_cache=not args.no_cache, workers=args.workers)
    out_dir = args.out or cfg.out_dir
    paths, summary = emit_report(res.rows, list(cfg.targets), out_dir, cfg.name, cfg.certificates)
    print(f"{len(res.rows)} rows ({res.computed} computed, {res.cached} cached) -> {paths['csv']}", file=out)
    if summary is None:
        certs = certificate_status(res.rows, cfg.certificates)
        summary = {"fits": [], "certificates": certs, "pass": all(certs.values())}
    _print_summary(summary, out)
    return 0 if summary["pass"] else 1


def default_axes(rows):
    """Abscissa and target for the ratio law: ``lambda`` for sphere rows, ``lambda_delta`` for flat rows."""
    n = rows[0]["n"]
    flat = any(r["delta"] > 0 for r in rows if r["status"] == "ok")
    return ("lambda_delta" if flat else "lambda"), (n - 1) / 4


def _fit(args, out):
    rows = read_csv(args.csv)
    x, _ = default_axes(rows)
    t = Target("cli", args.x or x, args.y, args.target, args.tol)
    f = fit_target(rows, t)
    _print_summary({"fits": [f], "certificates": {}}, out)
    return 0 if f["pass"] else 1


def _report(args, out):
    rows = read_csv(args.csv)
    if args.config:
        cfg = load_config(args.config)
        targets, certs = list(cfg.targets), cfg.certificates
    else:
        x, value = default_axes(rows)
        targets, certs = [Target("ratio", x, "norm_p2 / norm_p1", value, 0.05)], ("window", "defect")
    out_dir = os.path.dirname(os.path.abspath(args.csv))
    name = os.path.splitext(os.path.basename(args.csv))[0] + ".report"
    paths, summary = emit_report(rows, targets, out_dir, name, certs)
    _print_summary(summary, out)
    print(f"summary -> {paths['summary']}", file=out)
    return 0 if summary["pass"] else 1


def parser():
    ap = argparse.ArgumentParser(prog="knappmodes", description="Quasimode constructions and scaling sweeps.")
    sub = ap.add_subparsers(dest="verb", required=True)
    v = sub.add_parser("validate", help="check the geometry and group of a config")
    v.add_argument("config")
    s = sub.add_parser("sweep", help="run a sweep and write CSV plus summary")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (overrides [output] dir)")
    s.add_argument("--no-cache", action="store_true")
    s.add_argument("--workers", type=int, default=None)
    f = sub.add_parser("fit", help="fit a log-log exponent from a sweep CSV")
    f.add_argument("csv")
    f.add_argument("--target", type=float, required=True)
    f.add_argument("--x", default=None, help="abscissa column (default lambda or lambda_delta)")
    f.add_argument("--y", default="norm_p2 / norm_p1")
    f.add_argument("--tol", type=float, default=0.05)
    r = sub.add_parser("report", help="summarize a sweep CSV against targets")
    r.add_argument("csv")
    r.add_argument("--config", default=None, help="take targets and certificates from this config")
    return ap


def main(argv=None, out=None):
    out = out or sys.stdout
    args = parser().parse_args(argv)
    try:
        if args.verb == "validate":
            return _validate(load_config(args.config), out)
        if args.verb == "sweep":
            return _sweep(load_config(args.config), args, out)
        if args.verb == "fit":
            return _fit(args, out)
        return _report(args, out)
    except KnappError as exc:
        print(f"error [{exc.tag}]: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
