"""Covering data for compact space forms and the group searches built on it.

Two kinds of quotient are supported:

* sphere quotients ``S^n / Gamma`` with ``Gamma`` a finite subgroup of
  ``O(n+1)`` acting freely;
* flat quotients ``R^n / Gamma`` with ``Gamma`` a Bieberbach group, given by
  a lattice basis ``B`` (columns) and a list of rigid-motion generators.

Objects are validated once at construction and are immutable afterwards.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc
from sympy import Matrix
from sympy.matrices.normalforms import hermite_normal_form

from .errors import (
    ClosureNotReached,
    LatticeNotPreserved,
    NoBasePoint,
    NoPeriodFound,
    NotAligned,
    NotFreeAction,
    NotOrthogonal,
    SearchExhausted,
    SingularBasis,
    StabilizerNotCyclicRotations,
    TranslationLatticeMismatch,
)

DEFAULT_TOL = 1e-10
MAX_ORDER = 10_000
MAX_TRIALS = 100_000
LATTICE_RESIDUAL = 1e-8
DEFAULT_C0 = 0.05
CONSTANT_CAP = 0.05


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_orthogonal(m, tol):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotOrthogonal(f"expected a square matrix, got shape {m.shape}")
    err = np.max(np.abs(m.T @ m - np.eye(m.shape[0])))
    if err > tol:
        raise NotOrthogonal(f"matrix is not orthogonal (|m^T m - I|_max = {err:.3e})")
    return m


def halton(dim, count):
    """Deterministic (unscrambled) Halton points in ``[0, 1)^dim``."""
    return qmc.Halton(d=dim, scramble=False).random(count)


# ---------------------------------------------------------------------------
# sphere quotients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SphereQuotient:
    n: int
    deck_group: tuple
    tol: float = DEFAULT_TOL
    name: str = ""

    @property
    def order(self):
        return len(self.deck_group)

    @property
    def ambient_dim(self):
        return self.n + 1


def _find(stack, g, tol):
    if not stack:
        return -1
    d = np.max(np.abs(np.asarray(stack) - g), axis=(1, 2))
    i = int(np.argmin(d))
    return i if d[i] < 10 * tol else -1


def make_sphere_quotient(n, generators, tol=DEFAULT_TOL, max_order=MAX_ORDER, name=""):
    """Close ``generators`` into a finite subgroup of ``O(n+1)`` and validate it.

    Raises
    ------
    NotOrthogonal
        A generator is not orthogonal within ``tol``.
    ClosureNotReached
        The generated group exceeds ``max_order`` elements.
    NotFreeAction
        Some non-identity element has eigenvalue 1, i.e. fixes a point of ``S^n``.
    """
    if n < 2:
        raise ValueError("sphere quotients need n >= 2")
    gens = [_check_orthogonal(g, tol) for g in generators]
    for g in gens:
        if g.shape != (n + 1, n + 1):
            raise NotOrthogonal(f"generator has shape {g.shape}, expected {(n + 1, n + 1)}")
    identity = np.eye(n + 1)
    elements = [identity]
    frontier = [identity]
    while frontier:
        nxt = []
        for e in frontier:
            for g in gens:
                h = g @ e
                if _find(elements, h, tol) < 0:
                    elements.append(h)
                    nxt.append(h)
                    if len(elements) > max_order:
                        raise ClosureNotReached(f"group exceeds {max_order} elements")
        frontier = nxt
    for g in elements[1:]:
        smin = np.linalg.svd(g - identity, compute_uv=False)[-1]
        if smin <= 10 * tol:
            raise NotFreeAction("a non-identity deck transformation has eigenvalue 1")
    return SphereQuotient(n=n, deck_group=tuple(_frozen(g) for g in elements), tol=tol, name=name)


@dataclass(frozen=True)
class EquatorStabilizer:
    """Elements of the deck group mapping the great circle ``x' = 0`` to itself.

    ``elements[j]`` rotates the ``(x1, x2)``-plane by ``2 pi j / m`` and acts on
    the complementary coordinates by ``blocks[j]``.
    """

    order: int
    elements: tuple
    rotation_index: tuple
    blocks: tuple
    others: tuple

    @property
    def angles(self):
        return tuple(2 * math.pi * j / self.order for j in self.rotation_index)


def equator_stabilizer(S):
    tol = S.tol
    stab, others = [], []
    for g in S.deck_group:
        if np.max(np.abs(g[2:, :2])) < 1e3 * tol and np.max(np.abs(g[:2, 2:])) < 1e3 * tol:
            stab.append(g)
        else:
            others.append(g)
    m = len(stab)
    indexed = []
    for g in stab:
        r = g[:2, :2]
        if np.linalg.det(r) < 0:
            raise StabilizerNotCyclicRotations("a stabilizer element reflects the invariant circle")
        angle = math.atan2(r[1, 0], r[0, 0]) % (2 * math.pi)
        jf = angle * m / (2 * math.pi)
        j = int(round(jf)) % m
        if abs(jf - round(jf)) > 1e-8:
            raise StabilizerNotCyclicRotations(f"rotation angle {angle:.6g} is not a multiple of 2pi/{m}")
        indexed.append((j, g))
    indexed.sort(key=lambda t: t[0])
    js = [j for j, _ in indexed]
    if js != list(range(m)):
        raise StabilizerNotCyclicRotations("stabilizer rotations are not the distinct multiples of 2pi/m")
    return EquatorStabilizer(
        order=m,
        elements=tuple(g for _, g in indexed),
        rotation_index=tuple(js),
        blocks=tuple(_frozen(g[2:, 2:]) for _, g in indexed),
        others=tuple(others),
    )


def _circle_planes(E):
    # orthonormal bases (columns) of the planes of the circles alpha^{-1}(gamma_0)
    return [np.stack([g.T[:, 0], g.T[:, 1]], axis=1) for g in E.others]


def circle_separation(S, E):
    """Smallest geodesic distance between the equator and the other lifted circles.

    Returns ``pi / 2`` when every deck transformation stabilizes the equator.
    """
    planes = _circle_planes(E)
    if not planes:
        return math.pi / 2
    dists = []
    for P in planes:
        smax = np.linalg.svd(P[:2, :], compute_uv=False)[0]
        dists.append(math.acos(min(1.0, smax)))
    return min(dists)


@dataclass(frozen=True)
class SphereBasePoint:
    point: np.ndarray
    theta: float
    radius: float
    min_distance: float


def choose_base_point_sphere(S, E, max_trials=MAX_TRIALS):
    """Pick a point on the equator away from every non-stabilized lifted circle.

    Candidates are ``theta = 0`` followed by a Halton sequence of angles; the
    minimum distance to the excluded circles is capped at ``pi/2`` and the
    first maximizer wins.  The neighbourhood radius is half that distance.
    """
    planes = _circle_planes(E)
    dim = S.n + 1
    if not planes:
        p = np.zeros(dim)
        p[0] = 1.0
        return SphereBasePoint(point=_frozen(p), theta=0.0, radius=math.pi / 4, min_distance=math.pi / 2)
    thetas = np.concatenate([[0.0], 2 * math.pi * halton(1, max_trials - 1)[:, 0]])
    c, s = np.cos(thetas), np.sin(thetas)
    best = np.full(thetas.shape, np.inf)
    for P in planes:
        proj = np.hypot(c * P[0, 0] + s * P[1, 0], c * P[0, 1] + s * P[1, 1])
        best = np.minimum(best, np.arccos(np.clip(proj, 0.0, 1.0)))
    score = np.minimum(best, math.pi / 2)
    i = int(np.argmax(score))
    if score[i] <= 10 * S.tol:
        raise NoBasePoint("every candidate lies on an excluded circle")
    p = np.zeros(dim)
    p[0], p[1] = c[i], s[i]
    return SphereBasePoint(point=_frozen(p), theta=float(thetas[i]), radius=float(score[i] / 2),
                           min_distance=float(best[i]))


# ---------------------------------------------------------------------------
# flat quotients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RigidMotion:
    """``x -> linear @ x + shift``; acts on arrays of points along the last axis."""

    linear: np.ndarray
    shift: np.ndarray

    def __call__(self, x):
        return np.asarray(x) @ self.linear.T + self.shift

    def compose(self, other):
        """``self o other``."""
        return RigidMotion(_frozen(self.linear @ other.linear), _frozen(self.linear @ other.shift + self.shift))

    def inverse(self):
        mt = self.linear.T
        return RigidMotion(_frozen(mt), _frozen(-mt @ self.shift))

    def conjugate(self, Q):
        """``Q o self o Q^T`` for orthogonal ``Q``."""
        return RigidMotion(_frozen(Q @ self.linear @ Q.T), _frozen(Q @ self.shift))

    @property
    def is_translation(self):
        return bool(np.max(np.abs(self.linear - np.eye(len(self.shift)))) < 1e-9)


def rigid_motion(linear, shift):
    return RigidMotion(_frozen(linear), _frozen(shift))


def translation(v):
    v = np.asarray(v, dtype=float)
    return rigid_motion(np.eye(len(v)), v)


@dataclass(frozen=True)
class FlatQuotient:
    n: int
    basis: np.ndarray
    generators: tuple
    coset_reps: tuple
    tol: float = DEFAULT_TOL
    name: str = ""
    condition_number: float = field(default=1.0)

    @property
    def index(self):
        return len(self.coset_reps)

    @property
    def basis_inv(self):
        return np.linalg.inv(self.basis)

    @property
    def det(self):
        return abs(float(np.linalg.det(self.basis)))

    @property
    def point_group(self):
        return tuple(a.linear for a in self.coset_reps)

    @property
    def is_aligned(self):
        last = self.basis[:, -1]
        return bool(np.max(np.abs(last[:-1])) <= 1e-12 * max(1.0, abs(last[-1])) and last[-1] > 0)

    @property
    def axis_length(self):
        """``s`` with last basis column ``(0, ..., 0, s)`` (aligned quotients only)."""
        return float(self.basis[-1, -1])

    @property
    def transverse_block(self):
        """The ``(n-1) x (n-1)`` block ``A`` of ``B^{-1}`` acting on ``x'``."""
        return self.basis_inv[:-1, :-1]

    def lattice_coords(self, x):
        return np.asarray(x) @ self.basis_inv.T

    def coset_index(self, alpha):
        """Index ``i`` with ``alpha`` in ``Lambda alpha_i``."""
        u = self.basis_inv @ alpha.shift
        for i, rep in enumerate(self.coset_reps):
            if np.max(np.abs(rep.linear - alpha.linear)) < 1e-8:
                d = u - self.basis_inv @ rep.shift
                if np.max(np.abs(d - np.round(d))) < LATTICE_RESIDUAL:
                    return i
        raise LatticeNotPreserved("element does not belong to any coset of the translation lattice")


def _integer_matrix(B, m):
    U = np.linalg.solve(B, m @ B)
    Ur = np.round(U)
    if np.max(np.abs(U - Ur)) > LATTICE_RESIDUAL or abs(abs(np.linalg.det(Ur)) - 1) > 1e-9:
        raise LatticeNotPreserved("a linear part does not map the lattice onto itself")
    return Ur.astype(np.int64)


def _frac(u):
    f = u - np.floor(u)
    f[f > 1 - LATTICE_RESIDUAL] = 0.0
    f[np.abs(f) < LATTICE_RESIDUAL] = 0.0
    return f


def _hnf_columns(vectors, n):
    if not vectors:
        return np.zeros((n, 0), dtype=np.int64)
    M = Matrix(np.array(vectors, dtype=np.int64).T.tolist())
    if all(v == 0 for v in M):
        return np.zeros((n, 0), dtype=np.int64)
    return np.array(hermite_normal_form(M).tolist(), dtype=np.int64)


def _in_integer_span(S, c):
    """Is ``c`` (real vector) in the integer column span of the integer matrix ``S``?"""
    H = _hnf_columns([row for row in S.T], S.shape[0])
    if H.shape[1] == 0:
        return bool(np.max(np.abs(c)) < LATTICE_RESIDUAL)
    x, *_ = np.linalg.lstsq(H.astype(float), c, rcond=None)
    resid = np.max(np.abs(H @ x - c))
    return bool(resid < LATTICE_RESIDUAL and np.max(np.abs(x - np.round(x))) < LATTICE_RESIDUAL)


def _has_fixed_point(U, u):
    # alpha^r is the translation by S (u + z), S = sum_i U^i; alpha has a fixed
    # point for some lattice shift z iff S z = -S u has an integer solution.
    n = U.shape[0]
    P = np.eye(n, dtype=np.int64)
    S = np.zeros((n, n), dtype=np.int64)
    for _ in range(MAX_ORDER):
        S += P
        P = U @ P
        if np.array_equal(P, np.eye(n, dtype=np.int64)):
            break
    else:
        raise ClosureNotReached("linear part has no finite order")
    return _in_integer_span(S, -(S @ u))


def make_flat_quotient(B, affine_gens, tol=DEFAULT_TOL, max_order=MAX_ORDER, name=""):
    """Validate Bieberbach covering data and enumerate coset representatives.

    ``affine_gens`` is a list of :class:`RigidMotion` (or ``(m, j)`` pairs).
    The lattice spanned by the columns of ``B`` must be exactly the
    translation subgroup of the generated group.
    """
    B = np.array(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise SingularBasis(f"basis must be square, got shape {B.shape}")
    n = B.shape[0]
    cond = float(np.linalg.cond(B))
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularBasis(f"basis is singular (condition number {cond:.3e})")
    Binv = np.linalg.inv(B)
    gens = []
    for g in affine_gens:
        if not isinstance(g, RigidMotion):
            g = rigid_motion(*g)
        _check_orthogonal(g.linear, tol)
        if g.linear.shape != (n, n) or g.shift.shape != (n,):
            raise ValueError("generator dimensions do not match the basis")
        gens.append(g)
    for g in gens:
        _integer_matrix(B, g.linear)

    identity = rigid_motion(np.eye(n), np.zeros(n))
    reps = [identity]
    lin = [np.eye(n)]
    fracs = [np.zeros(n)]
    schreier = []
    frontier = [0]
    while frontier:
        nxt = []
        for ci in frontier:
            for g in gens:
                h = g.compose(reps[ci])
                u = Binv @ h.shift
                f = _frac(u)
                found = -1
                for k, (mk, fk) in enumerate(zip(lin, fracs)):
                    if np.max(np.abs(mk - h.linear)) < 10 * tol:
                        d = f - fk
                        if np.max(np.abs(d - np.round(d))) < LATTICE_RESIDUAL:
                            found = k
                            break
                if found >= 0:
                    z = u - Binv @ reps[found].shift
                    schreier.append(np.round(z).astype(np.int64))
                    continue
                if np.max(np.abs(h.linear - np.eye(n))) < 10 * tol:
                    raise TranslationLatticeMismatch("the group contains translations outside the basis lattice")
                reps.append(rigid_motion(h.linear, B @ f))
                lin.append(h.linear)
                fracs.append(f)
                nxt.append(len(reps) - 1)
                if len(reps) > max_order:
                    raise ClosureNotReached(f"point group exceeds {max_order} elements")
        frontier = nxt
    for rep in reps[1:]:
        U = _integer_matrix(B, rep.linear)
        if _has_fixed_point(U, Binv @ rep.shift):
            raise NotFreeAction("a non-translation element has a fixed point")
    H = _hnf_columns(schreier, n)
    if H.shape[1] != n or abs(round(abs(np.linalg.det(H.astype(float))))) != 1:
        raise TranslationLatticeMismatch("the generators do not produce every translation of the basis lattice")
    return FlatQuotient(n=n, basis=_frozen(B), generators=tuple(gens), coset_reps=tuple(reps),
                        tol=tol, name=name, condition_number=cond)


def _rotation_to_last_axis(b):
    n = len(b)
    s = float(np.linalg.norm(b))
    e = np.zeros(n)
    e[-1] = 1.0
    v = b / s - e
    if np.linalg.norm(v) < 1e-14:
        return np.eye(n), s
    H = np.eye(n) - 2 * np.outer(v, v) / (v @ v)
    # a Householder reflection has det -1; flipping the first row keeps H b = s e_n
    H[0] *= -1
    return H, s


def align_lattice(F):
    """Rotate so that the last lattice vector points along ``+e_n``.

    Returns ``(Q, F_bar)`` with ``F_bar.basis = Q B`` and generators
    ``Q alpha Q^T``.
    """
    Q, _ = _rotation_to_last_axis(F.basis[:, -1])
    if np.array_equal(Q, np.eye(F.n)):
        return Q, F
    gens = [g.conjugate(Q) for g in F.generators]
    Bb = Q @ F.basis
    Bb[:-1, -1] = 0.0
    Fb = make_flat_quotient(Bb, gens, tol=F.tol, name=F.name)
    return _frozen(Q), Fb


@dataclass(frozen=True)
class AxisChoice:
    """Axis line ``{(x0', t)}`` and base point ``x0`` for the flat construction."""

    x0_prime: np.ndarray
    base_point: np.ndarray
    clearance: float
    c0: float
    c1: float
    c2: float
    cases: tuple = ()

    @property
    def direction(self):
        d = np.zeros(len(self.base_point))
        d[-1] = 1.0
        return d


def axis_case(alpha, tol=1e-9):
    """How a coset representative can move the axis line.

    'i': the shift has a transverse part; 'ii': the linear part tilts ``e_n``;
    'iii': neither, so only the choice of ``x0'`` separates the lines.
    """
    n = len(alpha.shift)
    if np.max(np.abs(alpha.shift[:-1])) > tol:
        return "i"
    col = alpha.linear[:, -1]
    if np.max(np.abs(col[:-1])) > tol:
        return "ii"
    return "iii"


def _excluded_lines(F, eta_radius):
    # lines alpha^{-1}(l_0) = {m^T((x0', 0) - c) + t m^T e_n}, c = j + B(eta, 0)
    out = []
    n = F.n
    rng = range(-eta_radius, eta_radius + 1)
    for rep in F.coset_reps[1:]:
        mt = rep.linear.T
        for eta in itertools.product(rng, repeat=n - 1):
            c = rep.shift + F.basis @ np.array(list(eta) + [0.0])
            out.append((mt, c))
    return out


def _clearance(points, lines):
    best = np.full(points.shape[0], np.inf)
    base = points.copy()
    base[:, -1] = 0.0
    for mt, c in lines:
        p = (base - c) @ mt.T
        d = mt[:, -1]
        diff = points - p
        perp = diff - np.outer(diff @ d, d)
        best = np.minimum(best, np.linalg.norm(perp, axis=1))
    return best


def choose_axis_line(F, c0=DEFAULT_C0, x0_prime=None, max_trials=MAX_TRIALS, eta_radius=2):
    """Choose ``x0'`` so that no coset line ``l_alpha`` coincides with ``l_0``.

    The clearance is the smallest distance from the base point to any line
    ``(tau alpha_i)^{-1}(l_0)``, ``i >= 2``, over lattice translations ``tau``
    with transverse part in ``[-eta_radius, eta_radius]^{n-1}``.
    """
    if not F.is_aligned:
        raise NotAligned("align the lattice first (last basis column must be (0, ..., 0, s))")
    n = F.n
    lines = _excluded_lines(F, eta_radius)
    cases = tuple(axis_case(r) for r in F.coset_reps[1:])
    fixed = None if x0_prime is None else np.atleast_1d(np.asarray(x0_prime, dtype=float))
    if not lines:
        xp = np.zeros(n - 1) if fixed is None else fixed
        x0 = np.concatenate([xp, [0.0]])
        return AxisChoice(_frozen(xp), _frozen(x0), math.inf, c0, CONSTANT_CAP, CONSTANT_CAP, cases)
    if fixed is not None:
        h = halton(1, max_trials)[:, 0]
        pts = np.zeros((max_trials, n))
        pts[:, :-1] = fixed
        pts[:, -1] = c0 * h
    else:
        h = halton(n, max_trials)
        pts = np.empty_like(h)
        pts[:, :-1] = c0 * (2 * h[:, :-1] - 1)
        pts[:, -1] = c0 * h[:, -1]
        pts = pts[np.linalg.norm(pts[:, :-1], axis=1) <= c0]
    score = _clearance(pts, lines)
    i = int(np.argmax(score))
    if not score[i] > 10 * F.tol:
        raise SearchExhausted("no admissible axis line found")
    x0 = pts[i]
    delta1 = float(score[i])
    c = min(delta1 / 4, CONSTANT_CAP)
    return AxisChoice(_frozen(x0[:-1]), _frozen(x0), delta1, c0, c, c, cases)


def geodesic_period(F, A):
    """Smallest ``t > 0`` with some group element mapping ``(x0', 0)`` to ``(x0', t)``
    and preserving the ``+e_n`` direction."""
    if not F.is_aligned:
        raise NotAligned("align the lattice first")
    s = F.axis_length
    Ablk = F.transverse_block
    start = np.concatenate([A.x0_prime, [0.0]])
    best = math.inf
    for rep in F.coset_reps:
        col = rep.linear[:, -1]
        if np.max(np.abs(col[:-1])) > 1e-9 or col[-1] < 0:
            continue
        w = rep(start)
        zp = Ablk @ (A.x0_prime - w[:-1])
        if np.max(np.abs(zp - np.round(zp))) > LATTICE_RESIDUAL:
            continue
        zp = np.round(zp)
        # B (z', z_n) has transverse part A^{-1} z'; its last coordinate is B[-1, :-1] z' mod s
        t = (w[-1] + F.basis[-1, :-1] @ zp) % s
        if t < 1e-9 * s or s - t < 1e-9 * s:
            t = s
        best = min(best, t)
    if not np.isfinite(best):
        raise NoPeriodFound("no group element closes the axis line")
    return float(best)
