"""Sweep runner: one row per (k, tube multiplier), with a content-addressed cache."""
from __future__ import annotations

import json
import math
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from ..errors import IoFailure, KnappError
from ..flat import knapp_tube, quasimode_defect, select_frequency, spaceform_mode
from ..geometry import FlatQuotient, align_lattice, circle_separation, equator_stabilizer
from ..norms import (
    flat_domain,
    flat_tube_domain,
    l2_exact_parseval,
    lp_norms,
    sphere_domain,
    sphere_tube_domain,
    tube_min_abs,
    worker_count,
)
from ..sphere import deck_sum_mode_k, sphere_eigenvalue
from .config import build_quotient

SCHEMA = ["manifold", "n", "k", "lambda", "delta", "norm_p1", "norm_p2", "norm_p4", "tube_R", "tube_l2",
          "tube_min_abs", "defect", "window_margin", "separation_margin", "err_estimate", "wall_ms"]
EXTRA = ["status", "defect_bound", "offdiag", "l2_exact"]
COLUMNS = SCHEMA + EXTRA
NAN = float("nan")


@dataclass
class SweepResult:
    rows: list
    computed: int
    cached: int


def delta_for(rule, lam):
    """Window width for ``lam`` under a rule string; returns ``(delta, power_eps)``."""
    if rule == "log":
        return 1.0 / math.log(lam), None
    m = re.fullmatch(r"(constant|power)\(([^)]*)\)", rule)
    kind, val = m.group(1), float(m.group(2))
    if kind == "constant":
        return val, None
    return lam ** (-1.0 + val), val


def _blank(cfg, n, k):
    row = {c: NAN for c in COLUMNS}
    row.update(manifold=cfg.manifold["preset"], n=n, k=k, status="ok", tube_R="")
    return row


def _sphere_rows(cfg, S, index):
    E = equator_stabilizer(S)
    k = index * E.order if cfg.ells else index
    t0 = time.perf_counter()
    base = _blank(cfg, S.n, k)
    mode = deck_sum_mode_k(S, E, k)
    lam = sphere_eigenvalue(S.n, k)
    reps = lp_norms(mode, sphere_domain(S), cfg.ps, tol=cfg.tol)
    base.update({"lambda": lam, "delta": 0.0, "defect": 0.0, "defect_bound": 0.0, "window_margin": math.inf,
                 "offdiag": 0.0})
    for p, r in reps.items():
        base[f"norm_p{p:g}"] = r.value
    err = max(r.err_estimate for r in reps.values())
    sep = circle_separation(S, E) / 2
    rows = []
    for R in cfg.radii or [None]:
        row = dict(base)
        row["err_estimate"] = err
        row["separation_margin"] = sep
        if R is not None:
            radius = float(R) * lam ** -0.5
            row["tube_R"] = R
            row["separation_margin"] = sep - radius
            tube = sphere_tube_domain(S, E, radius)
            tr = lp_norms(mode, tube, [2], tol=cfg.tol)[2.0]
            row["tube_l2"] = tr.value
            row["tube_min_abs"] = tube_min_abs(mode, tube)
            row["err_estimate"] = max(err, tr.err_estimate)
        row["wall_ms"] = (time.perf_counter() - t0) * 1e3
        rows.append(row)
    return rows


def _flat_rows(cfg, F, k):
    t0 = time.perf_counter()
    base = _blank(cfg, F.n, k)
    lam, _ = select_frequency(align_lattice(F)[1], k)
    delta, eps = delta_for(cfg.delta, lam)
    c0 = float(cfg.manifold.get("c0", "0.05"))
    mode = spaceform_mode(F, k, delta, rho=cfg.rho, c0=c0, allow_power_rule=eps is not None, eps=eps)
    reps = lp_norms(mode, flat_domain(F), cfg.ps, tol=cfg.tol)
    d = quasimode_defect(mode)
    kt = knapp_tube(mode, enforce=False)
    base.update({"lambda": mode.lam, "delta": mode.delta, "defect": d.physical, "defect_bound": d.bound_physical,
                 "window_margin": mode.window.margin, "separation_margin": kt.separation_margin,
                 "offdiag": kt.offdiag, "tube_min_abs": tube_min_abs(mode, kt),
                 "l2_exact": math.sqrt(l2_exact_parseval(mode))})
    for p, r in reps.items():
        base[f"norm_p{p:g}"] = r.value
    err = max(r.err_estimate for r in reps.values())
    rows = []
    for R in cfg.radii or [None]:
        row = dict(base)
        row["err_estimate"] = err
        if R is not None:
            mult = mode.axis.c1 if R == "c1" else float(R)
            tube = flat_tube_domain(mode, mult / math.sqrt(mode.lam_delta))
            tr = lp_norms(mode, tube, [2], tol=cfg.tol)[2.0]
            row["tube_R"] = R
            row["tube_l2"] = tr.value
            row["err_estimate"] = max(err, tr.err_estimate)
        row["wall_ms"] = (time.perf_counter() - t0) * 1e3
        rows.append(row)
    return rows


def compute_rows(cfg, quotient, index):
    """All rows for one sweep index; construction errors become tagged rows."""
    n = quotient.n
    try:
        if isinstance(quotient, FlatQuotient):
            return _flat_rows(cfg, quotient, index)
        return _sphere_rows(cfg, quotient, index)
    except KnappError as exc:
        rows = []
        for R in cfg.radii or [None]:
            row = _blank(cfg, n, index)
            row["status"] = exc.tag
            row["tube_R"] = "" if R is None else R
            rows.append(row)
        return rows


def _cache_path(cfg, key):
    return os.path.join(cfg.out_dir, "cache", f"{key}.json")


def _load_cached(cfg, index):
    rows = []
    for R in cfg.radii or [None]:
        path = _cache_path(cfg, cfg.row_key(index, R))
        if not os.path.exists(path):
            return None
        try:
            with open(path) as fh:
                rows.append(json.load(fh))
        except (OSError, ValueError):
            return None
    return rows


def _store(cfg, index, rows):
    os.makedirs(os.path.join(cfg.out_dir, "cache"), exist_ok=True)
    for R, row in zip(cfg.radii or [None], rows):
        path = _cache_path(cfg, cfg.row_key(index, R))
        tmp = path + ".tmp"
        try:
            with open(tmp, "w") as fh:
                json.dump(row, fh)
            os.replace(tmp, path)
        except OSError as exc:
            raise IoFailure(f"cannot write cache file {path}: {exc}") from exc


def run_sweep(cfg, use_cache=True, workers=None):
    """Compute (or fetch from cache) every row of the sweep, in sweep order."""
    quotient = build_quotient(cfg.manifold)
    indices = cfg.ells or cfg.ks
    cached = {}
    if use_cache:
        for i in indices:
            hit = _load_cached(cfg, i)
            if hit is not None:
                cached[i] = hit
    todo = [i for i in indices if i not in cached]
    workers = workers or min(worker_count(), max(1, len(todo)))
    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            fresh = dict(zip(todo, ex.map(lambda i: compute_rows(cfg, quotient, i), todo)))
    else:
        fresh = {i: compute_rows(cfg, quotient, i) for i in todo}
    if use_cache:
        for i, rows in fresh.items():
            _store(cfg, i, rows)
    rows = []
    for i in indices:
        rows.extend(cached.get(i) or fresh[i])
    return SweepResult(rows=rows, computed=len(todo), cached=len(cached))
