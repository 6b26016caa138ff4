"""CSV output, exponent summaries and plot-ready columns."""
from __future__ import annotations

import csv
import json
import math
import os

from ..errors import IoFailure, KnappError
from .fitting import evaluate_column, fit_exponent, leave_one_out_spread
from .sweep import COLUMNS

NUMERIC = {"n", "k"}


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows, path):
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for r in rows:
                w.writerow([_fmt(r.get(c, "")) for c in COLUMNS])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    out = []
    for r in rows:
        row = {}
        for k, v in r.items():
            if k in ("manifold", "status", "tube_R"):
                row[k] = v
            elif k in NUMERIC:
                row[k] = int(v)
            else:
                row[k] = float(v) if v != "" else math.nan
        out.append(row)
    return out


def certificate_status(rows, certificates=("window", "defect")):
    """Per-certificate pass flags over all rows with status ``ok``."""
    ok = [r for r in rows if r["status"] == "ok"]
    flat = [r for r in ok if r["delta"] > 0]
    res = {"status": len(ok) == len(rows)}
    if "window" in certificates:
        res["window"] = all(r["window_margin"] > 0 for r in ok)
    if "defect" in certificates:
        res["defect"] = all(r["defect"] <= r["defect_bound"] for r in flat)
    if "separation" in certificates:
        res["separation"] = all(r["separation_margin"] >= 0 for r in ok)
    if "offdiag" in certificates:
        res["offdiag"] = all(r["offdiag"] < 1e-6 for r in ok)
    return res


def fit_target(rows, target):
    ok = [r for r in rows if r["status"] == "ok"]
    if target_uses_tube(target):
        ok = [r for r in ok if r["tube_R"] != ""]
    xs = evaluate_column(ok, target.x)
    ys = evaluate_column(ok, target.y)
    pairs = list(zip(xs, ys))
    fit = fit_exponent(pairs)
    return {
        "name": target.name,
        "x": target.x,
        "y": target.y,
        "exponent": fit.exponent,
        "intercept": fit.intercept,
        "max_residual": fit.max_residual,
        "count": fit.count,
        "reportable": fit.reportable,
        "leave_one_out": leave_one_out_spread(pairs) if len(pairs) > 5 else None,
        "target": target.value,
        "tol": target.tol,
        "pass": bool(fit.reportable and abs(fit.exponent - target.value) <= target.tol),
    }


def target_uses_tube(target):
    return "tube" in target.x or "tube" in target.y


def emit_report(rows, targets, out_dir, name="sweep", certificates=("window", "defect")):
    """Write ``<name>.csv`` and, when ``targets`` is nonempty, ``<name>.summary.json`` and ``<name>.dat``.

    Returns the dict of written paths and the summary (``None`` without targets).
    """
    if not rows:
        raise ValueError("empty result table")
    paths = {"csv": write_csv(rows, os.path.join(out_dir, f"{name}.csv"))}
    if not targets:
        return paths, None
    fits = []
    for t in targets:
        try:
            fits.append(fit_target(rows, t))
        except KnappError as exc:
            fits.append({"name": t.name, "x": t.x, "y": t.y, "target": t.value, "tol": t.tol, "pass": False,
                         "error": exc.tag})
    summary = {"fits": fits, "certificates": certificate_status(rows, certificates)}
    summary["pass"] = all(f["pass"] for f in fits) and all(summary["certificates"].values())
    paths["summary"] = os.path.join(out_dir, f"{name}.summary.json")
    paths["plot"] = os.path.join(out_dir, f"{name}.dat")
    try:
        with open(paths["summary"], "w") as fh:
            json.dump(summary, fh, indent=2)
        with open(paths["plot"], "w") as fh:
            for t in targets:
                ok = [r for r in rows if r["status"] == "ok"]
                fh.write(f"# {t.name}: log10({t.x})  log10({t.y})\n")
                for x, y in zip(evaluate_column(ok, t.x), evaluate_column(ok, t.y)):
                    if x > 0 and y > 0:
                        fh.write(f"{math.log10(x):.12g} {math.log10(y):.12g}\n")
                fh.write("\n\n")
    except OSError as exc:
        raise IoFailure(f"cannot write report files in {out_dir}: {exc}") from exc
    return paths, summary
