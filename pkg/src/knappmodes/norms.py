"""Quadrature of ``L^p`` norms over fundamental domains and geodesic tubes.

Every domain is a product chart with midpoint nodes.  Sums run over fixed
row tiles, each reduced with numpy's pairwise summation, and the tile
partials are combined with :func:`math.fsum` in tile order, so the result
does not depend on how many worker threads ran the tiles.
"""
from __future__ import annotations

import itertools
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NotConverged, ResolutionTooCoarse, TubeNotEmbedded
from .geometry import circle_separation, geodesic_period

NODES_PER_WAVELENGTH = 10
MIN_NODES = 16
NONPERIODIC_MIN_NODES = 512  # midpoint is only second order on non-periodic axes
SPHERE_ETA_MIN_NODES = 4096
TILE_ELEMENTS = 1 << 19
DEFAULT_TOL = 1e-6
WORKERS_ENV = "KNAPP_WORKERS"


def worker_count():
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class IntegrationDomain:
    """A product chart ``extents[0] x extents[1] x ...`` with a measure and a point map.

    ``affine`` is ``(origin, frame)`` when the map is ``x = origin + frame @ a``;
    ``sphere_n`` is set for charts in ``(eta, theta[, phi])``.
    """

    kind: str
    extents: tuple
    lengths: tuple
    factor: float
    periodic: tuple
    affine: tuple | None = None
    sphere_n: int | None = None
    min_nodes: int = NONPERIODIC_MIN_NODES
    info: dict = field(default_factory=dict, compare=False)

    @property
    def ndim(self):
        return len(self.extents)

    def counts(self, h):
        return tuple(max(MIN_NODES if per else self.min_nodes, math.ceil(L / h))
                     for L, per in zip(self.lengths, self.periodic))

    def axes(self, counts):
        out, wts = [], []
        for (lo, hi), m in zip(self.extents, counts):
            step = (hi - lo) / m
            out.append(lo + (np.arange(m) + 0.5) * step)
            wts.append(np.full(m, step))
        if self.sphere_n is not None:
            eta = out[0]
            if self.sphere_n == 2:
                wts[0] = wts[0] * np.cos(eta)
            else:
                wts[0] = wts[0] * np.cos(eta) * np.sin(eta)
        return out, wts

    def closed_axes(self, h):
        out = []
        for (lo, hi), L in zip(self.extents, self.lengths):
            m = max(MIN_NODES, math.ceil(L / h))
            out.append(np.linspace(lo, hi, m + 1))
        return out

    def points(self, axes):
        grids = np.meshgrid(*axes, indexing="ij")
        if self.affine is not None:
            origin, frame = self.affine
            a = np.stack(grids, axis=-1)
            return origin + a @ frame.T
        eta, theta = grids[0], grids[1]
        c = np.cos(eta)
        if self.sphere_n == 2:
            return np.stack([c * np.cos(theta), c * np.sin(theta), np.sin(eta)], axis=-1)
        phi = grids[2]
        s = np.sin(eta)
        return np.stack([c * np.cos(theta), c * np.sin(theta), s * np.cos(phi), s * np.sin(phi)], axis=-1)


def _sphere_extents(n, eta_max):
    if n == 2:
        return ((-eta_max, eta_max), (0.0, 2 * math.pi)), (2 * eta_max, 2 * math.pi)
    if n == 3:
        return ((0.0, eta_max), (0.0, 2 * math.pi), (0.0, 2 * math.pi)), (eta_max, 2 * math.pi, 2 * math.pi)
    raise ValueError("sphere quadrature is implemented for n = 2 and n = 3")


def sphere_domain(S):
    """All of ``S^n / Gamma``, integrated over the cover and divided by ``|Gamma|``."""
    ext, lengths = _sphere_extents(S.n, math.pi / 2)
    return IntegrationDomain("sphere", ext, lengths, 1.0 / S.order, (False,) + (True,) * (S.n - 1),
                             sphere_n=S.n, min_nodes=SPHERE_ETA_MIN_NODES, info={"quotient": S.name})


def sphere_tube_domain(S, E, radius):
    """Tube of geodesic radius ``radius`` around the image of the equator.

    The cover tube ``{eta <= radius}`` is invariant under the stabilizer and
    covers its image ``m`` times.

    Raises
    ------
    TubeNotEmbedded
        ``radius`` is not below half the separation of the lifted circles.
    """
    limit = circle_separation(S, E) / 2
    if not 0 < radius < limit:
        raise TubeNotEmbedded(f"tube radius {radius:.4g} must lie in (0, {limit:.4g})")
    ext, lengths = _sphere_extents(S.n, radius)
    return IntegrationDomain("sphere-tube", ext, lengths, 1.0 / E.order, (False,) + (True,) * (S.n - 1),
                             sphere_n=S.n, info={"radius": radius})


def flat_domain(F):
    """``B [0, 1)^n`` with the weight ``1/N``."""
    n = F.n
    lengths = tuple(float(np.linalg.norm(F.basis[:, j])) for j in range(n))
    return IntegrationDomain("flat-fundamental", ((0.0, 1.0),) * n, lengths, F.det / F.index, (True,) * n,
                             affine=(np.zeros(n), np.array(F.basis)), info={"index": F.index})


def _transverse_gap(Fb):
    # shortest nonzero transverse lattice vector A^{-1} eta
    Ainv = np.linalg.inv(Fb.transverse_block)
    d = Fb.n - 1
    best = math.inf
    rng = range(-3, 4)
    for eta in itertools.product(rng, repeat=d):
        if any(eta):
            best = min(best, float(np.linalg.norm(Ainv @ np.array(eta, dtype=float))))
    return best


def flat_tube_domain(mode, radius, length=None, start=0.0):
    """Straight tube of radius ``radius`` around the axis line of ``mode``.

    ``length`` defaults to one period of the closed geodesic, so the tube is
    a full geodesic tube in the quotient.  Only ``n = 2`` is supported.

    Raises
    ------
    TubeNotEmbedded
        ``radius`` is not below half the clearance of the axis line.
    """
    Fb = mode.aligned
    if Fb.n != 2:
        raise ValueError("flat tube quadrature is implemented for n = 2")
    A = mode.axis
    limit = min(A.clearance, _transverse_gap(Fb)) / 2
    if not 0 < radius < limit:
        raise TubeNotEmbedded(f"tube radius {radius:.4g} must lie in (0, {limit:.4g})")
    if length is None:
        length = geodesic_period(Fb, A)
    Q = np.asarray(mode.rotation)
    origin_bar = np.array([A.x0_prime[0], start])
    origin = Q.T @ origin_bar
    frame = Q.T.copy()
    return IntegrationDomain("flat-tube", ((-radius, radius), (0.0, length)), (2 * radius, length), 1.0,
                             (False, True), affine=(origin, frame),
                             info={"radius": radius, "length": length})


@dataclass(frozen=True)
class NormReport:
    p: float
    value: float
    err_estimate: float
    nodes: int
    wall_ms: float
    h: float

    @property
    def converged(self):
        return self.err_estimate <= DEFAULT_TOL * max(self.value, 1e-300)


def _tile_values(evaluator, domain, axes, rows):
    tile = [axes[0][rows]] + list(axes[1:])
    if domain.sphere_n is not None:
        fast = getattr(evaluator, "eta_theta_values", None)
        if fast is not None:
            vals = fast(tile[0], tile[1])
            if vals is not None:
                return vals, True
    if domain.affine is not None and hasattr(evaluator, "tensor_values"):
        origin, frame = domain.affine
        return evaluator.tensor_values(origin, frame, tile), False
    pts = domain.points(tile)
    return np.asarray(evaluator(pts.reshape(-1, pts.shape[-1]))).reshape(pts.shape[:-1]), False


def _weight_tensor(wts, reduced, sphere_n):
    if reduced and sphere_n == 3:
        wts = wts[:2]
        extra = 2 * math.pi
    else:
        extra = 1.0
    w = wts[0]
    for v in wts[1:]:
        w = np.multiply.outer(w, v)
    return w * extra


def _integrate(evaluator, domain, counts, ps):
    axes, wts = domain.axes(counts)
    rows_per_tile = max(1, TILE_ELEMENTS // max(1, int(np.prod([len(a) for a in axes[1:]]))))
    tiles = [slice(s, min(s + rows_per_tile, len(axes[0]))) for s in range(0, len(axes[0]), rows_per_tile)]

    def work(rows):
        vals, reduced = _tile_values(evaluator, domain, axes, rows)
        w = _weight_tensor([wts[0][rows]] + list(wts[1:]), reduced, domain.sphere_n)
        a = np.abs(vals)
        out = []
        for p in ps:
            ap = a * a if p == 2 else (a if p == 1 else a ** p)
            out.append(float(np.sum(w * ap)))
        return out

    workers = min(worker_count(), len(tiles))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(work, tiles))
    else:
        parts = [work(t) for t in tiles]
    nodes = int(np.prod([len(a) for a in axes]))
    return [domain.factor * math.fsum(col) for col in zip(*parts)], nodes


def _resolve_h(evaluator, h):
    wl = getattr(evaluator, "wavelength", None)
    limit = None if wl is None else wl / NODES_PER_WAVELENGTH
    if h is None:
        if limit is None:
            raise ValueError("pass h explicitly for evaluators without a wavelength")
        return limit
    if limit is not None and h > limit * (1 + 1e-12):
        raise ResolutionTooCoarse(f"h = {h:.4g} exceeds wavelength/{NODES_PER_WAVELENGTH} = {limit:.4g}")
    return h


def _reports(ps, fine, coarse, nodes, h, t0):
    out = {}
    wall = (time.perf_counter() - t0) * 1e3
    for p, If, Ic in zip(ps, fine, coarse):
        value = If ** (1.0 / p)
        errI = abs(If - Ic) / 3.0
        err = errI / (p * If ** (1.0 - 1.0 / p)) if If > 0 else errI ** (1.0 / p)
        out[p] = NormReport(p=p, value=value, err_estimate=err, nodes=nodes, wall_ms=wall, h=h)
    return out


def lp_norms(evaluator, domain, ps, tol=DEFAULT_TOL, h=None, refine=True):
    """``L^p`` norms for every ``p`` in ``ps`` from one evaluation per grid.

    The estimate compares spacings ``h`` and ``2h`` (divided by 3, the
    midpoint-rule Richardson factor).  If a relative estimate exceeds ``tol``
    the grid is refined once to ``h/2``.

    Raises
    ------
    ResolutionTooCoarse
        ``h`` gives fewer than 10 nodes per wavelength.
    NotConverged
        The estimate is still above ``tol`` after refinement; the reports are
        attached as ``exc.reports``.
    """
    t0 = time.perf_counter()
    ps = [float(p) for p in ps]
    if any(p < 1 for p in ps):
        raise ValueError("p must be at least 1")
    h = _resolve_h(evaluator, h)
    counts = domain.counts(h)
    fine, nodes = _integrate(evaluator, domain, counts, ps)
    coarse, _ = _integrate(evaluator, domain, tuple(math.ceil(m / 2) for m in counts), ps)
    reps = _reports(ps, fine, coarse, nodes, h, t0)
    if all(r.err_estimate <= tol * max(r.value, 1e-300) for r in reps.values()):
        return reps
    if refine:
        finer, nodes2 = _integrate(evaluator, domain, tuple(2 * m for m in counts), ps)
        reps = _reports(ps, finer, fine, nodes2, h / 2, t0)
        if all(r.err_estimate <= tol * max(r.value, 1e-300) for r in reps.values()):
            return reps
    bad = [p for p, r in reps.items() if r.err_estimate > tol * max(r.value, 1e-300)]
    exc = NotConverged(f"quadrature estimate above tolerance {tol:g} for p in {bad}")
    exc.reports = reps
    raise exc


def lp_norm(evaluator, domain, p, tol=DEFAULT_TOL, h=None, refine=True):
    return lp_norms(evaluator, domain, [p], tol=tol, h=h, refine=refine)[float(p)]


def tube_lp_norm(evaluator, tube_domain, p, tol=DEFAULT_TOL, h=None, refine=True):
    if not tube_domain.kind.endswith("tube"):
        raise ValueError("expected a tube domain")
    return lp_norm(evaluator, tube_domain, p, tol=tol, h=h, refine=refine)


def tube_min_abs(evaluator, tube, h=None):
    """Minimum of ``|f|`` over a closed grid of the tube (boundary nodes included).

    ``tube`` is either a tube :class:`IntegrationDomain` or an object with a
    ``sample()`` method returning points.
    """
    if hasattr(tube, "sample"):
        return float(np.min(np.abs(evaluator(tube.sample()))))
    h = _resolve_h(evaluator, h)
    axes = tube.closed_axes(h)
    vals, _ = _tile_values(evaluator, tube, axes, slice(None))
    return float(np.min(np.abs(vals)))


def l2_exact_parseval(mode, quotient=None):
    """Exact ``||psi||^2`` over a fundamental domain from the combined coefficients."""
    F = mode.quotient if quotient is None else quotient
    return mode.trig.l2_squared(F.det, F.index)

