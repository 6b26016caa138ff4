"""Knapp-type modes on flat space forms.

A mode lives on the torus ``R^n / Z^n`` in lattice coordinates ``y = B^{-1} x``:

    phi_lam(y) = (lam delta)^{-d/4} e^{2 pi i k y_n}
                 sum_{xi'} phi((xi' - lam xi0') / sqrt(lam delta)) e^{2 pi i xi' . (y' - y0')}

with ``d = n - 1``.  Averaging over coset representatives of the translation
lattice gives a function on the space form, stored as a trigonometric
polynomial with integer frequencies in ``y``.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import gammaln, jv

from .errors import (
    CertificationFailed,
    DegenerateLattice,
    DeltaOutOfRange,
    FrequencyCollisionUnresolved,
    NotCertified,
    SeparationNotReached,
    WindowViolated,
)
from .geometry import DEFAULT_C0, AxisChoice, FlatQuotient, align_lattice, choose_axis_line

GL_NODES = 1024
GL_NODES_FINE = 2048
CERT_POINTS = 1001
ENVELOPE_POWER = 8
ENVELOPE_VMAX = 60.0  # beyond this the transform sits at the float64 noise floor
TABLE_DENSE_VMAX = 60.0
TABLE_VMAX = 600.0
TAIL_BUDGET = 1e-10
TAIL_SAFETY = 100.0
OFFDIAG_TARGET = 1e-6
DEFAULT_RHO = 0.5
MAX_HALVINGS = 5


# ---------------------------------------------------------------------------
# bump profile
# ---------------------------------------------------------------------------


def bump_chi(u):
    """``exp(-1 / (1 - |u|^2))`` inside the unit ball, zero outside.  ``u`` has shape (..., d)."""
    u = np.asarray(u, dtype=float)
    r2 = np.einsum("...i,...i->...", u, u)
    out = np.zeros(r2.shape)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


@functools.lru_cache(maxsize=None)
def _gl01(nodes):
    x, w = np.polynomial.legendre.leggauss(nodes)
    r = 0.5 * (x + 1.0)
    w = 0.5 * w
    chi = np.zeros_like(r)
    inside = r < 1.0
    chi[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return r, w, chi


def _sphere_area(d):
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def chi_hat(v, d, nodes=GL_NODES, chunk=2048):
    """Fourier transform of the radial bump ``chi`` on ``R^d`` at radius ``v``.

    Uses ``int chi(u) e^{-2 pi i u.x} du`` written radially:
    ``2 int_0^1 chi cos(2 pi v r) dr`` for ``d = 1`` and
    ``2 pi v^{1-d/2} int_0^1 chi(r) J_{d/2-1}(2 pi v r) r^{d/2} dr`` otherwise.
    """
    v = np.abs(np.asarray(v, dtype=float))
    r, w, chi = _gl01(nodes)
    flat = v.ravel()
    out = np.empty_like(flat)
    for s in range(0, flat.size, chunk):
        vv = flat[s:s + chunk]
        arg = 2 * math.pi * np.outer(vv, r)
        if d == 1:
            out[s:s + chunk] = 2.0 * (np.cos(arg) @ (w * chi))
        else:
            nu = d / 2 - 1
            small = vv < 1e-12
            vals = np.empty_like(vv)
            safe = np.where(small, 1.0, vv)
            kern = jv(nu, 2 * math.pi * np.outer(safe, r)) * r ** (d / 2)
            vals[:] = 2 * math.pi * safe ** (1 - d / 2) * (kern @ (w * chi))
            vals[small] = _sphere_area(d) * np.sum(w * chi * r ** (d - 1))
            out[s:s + chunk] = vals
    return out.reshape(v.shape)


def _chi_moment(d, power):
    r, w, chi = _gl01(GL_NODES)
    if d == 1:
        return 2 * float(np.sum(w * chi * r ** power))
    return _sphere_area(d) * float(np.sum(w * chi * r ** (d - 1 + power)))


@functools.lru_cache(maxsize=None)
def _chi_hat_table(d):
    v = np.concatenate([
        np.arange(0.0, TABLE_DENSE_VMAX, 0.002),
        np.arange(TABLE_DENSE_VMAX, TABLE_VMAX + 0.02, 0.02),
    ])
    vals = np.empty_like(v)
    lo = v < 200.0
    vals[lo] = chi_hat(v[lo], d, nodes=GL_NODES)
    vals[~lo] = chi_hat(v[~lo], d, nodes=GL_NODES_FINE)
    return CubicSpline(v, vals, extrapolate=False)


@dataclass(frozen=True)
class BumpProfile:
    """``phi(xi) = A chi(xi / rho)`` on ``R^d`` with transform bounded below on the unit ball.

    ``lower_bound`` is a certified lower bound of ``phi_hat`` on ``|x| <= 1``:
    grid minimum minus a Lipschitz allowance between grid points minus the
    quadrature error estimate.
    """

    dim: int
    rho: float
    amplitude: float
    lower_bound: float
    quad_error: float
    envelope_c8: float
    chi_integral: float

    def phi(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self.amplitude * bump_chi(xi / self.rho)

    def transform_radial(self, r, exact=False):
        """``phi_hat`` at radius ``r``.  The default path interpolates a dense table."""
        r = np.abs(np.asarray(r, dtype=float))
        scale = self.amplitude * self.rho ** self.dim
        v = self.rho * r
        if exact:
            return scale * chi_hat(v, self.dim)
        if np.any(v > TABLE_VMAX):
            raise ValueError(f"transform requested beyond the tabulated range (|x| > {TABLE_VMAX / self.rho:g})")
        return scale * _chi_hat_table(self.dim)(v)

    def transform(self, x, exact=False):
        """``phi_hat(x)`` for ``x`` of shape (..., d)."""
        x = np.asarray(x, dtype=float)
        return self.transform_radial(np.sqrt(np.einsum("...i,...i->...", x, x)), exact=exact)

    def tail_bound(self, r):
        """Envelope ``C8 (1 + r)^{-8}`` for ``|phi_hat|`` at radius ``r``."""
        return self.envelope_c8 * (1.0 + np.asarray(r, dtype=float)) ** (-ENVELOPE_POWER)

    def dropped_mass(self, H, spacing):
        """Bound on ``sum |phi_hat(x_eta)|`` over lattice points ``x_eta`` (spacing ``spacing``) with ``|x| > H``."""
        d = self.dim
        total = 0.0
        for j in range(200000):
            r = H + j * spacing
            inner = 2 * (r / spacing)
            count = (inner + 4) ** d - inner ** d
            term = count * self.envelope_c8 * (1.0 + r) ** (-ENVELOPE_POWER)
            total += term
            if j > 10 and term < 1e-6 * total:
                break
        return total

    def truncation_radius(self, lam_delta, budget=TAIL_BUDGET, safety=TAIL_SAFETY):
        """Smallest radius ``H`` whose dropped Poisson mass is below ``budget / safety``."""
        s = math.sqrt(lam_delta)
        pref = lam_delta ** (self.dim / 4)
        H = 1.0
        while pref * self.dropped_mass(H, s) * safety > budget:
            H *= 1.05
            if H * self.rho > TABLE_VMAX:
                raise CertificationFailed("tail budget cannot be met within the tabulated transform range")
        return H


def make_bump(n_minus_1, rho=DEFAULT_RHO):
    """Build and certify the bump profile on ``R^{n-1}``.

    Raises
    ------
    CertificationFailed
        The transform of ``chi`` is not positive on ``|v| <= rho`` or the
        quadrature error estimate eats the certification margin.
    """
    d = int(n_minus_1)
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    v = np.linspace(0.0, rho, CERT_POINTS)
    coarse = chi_hat(v, d, nodes=GL_NODES // 2)
    fine = chi_hat(v, d, nodes=GL_NODES)
    err = float(np.max(np.abs(fine - coarse)))
    lipschitz = 2 * math.pi * _chi_moment(d, 1)
    slack = lipschitz * (v[1] - v[0]) / 2
    certified_min = float(np.min(fine)) - slack - err
    if certified_min <= 0:
        raise CertificationFailed(
            f"transform of the bump is not certified positive on |v| <= {rho:g} "
            f"(grid minimum {np.min(fine):.4g})")
    A = 1.01 / (rho ** d * certified_min)
    lower = A * rho ** d * certified_min
    if A * rho ** d * err >= lower - 1.0:
        raise CertificationFailed("quadrature error exceeds the certification margin")
    # empirical polynomial envelope, taken where the transform is above the noise floor
    vv = np.linspace(0.0, ENVELOPE_VMAX, 6001)
    vals = A * rho ** d * np.abs(chi_hat(vv, d))
    c8 = float(np.max(vals * (1.0 + vv / rho) ** ENVELOPE_POWER))
    return BumpProfile(dim=d, rho=float(rho), amplitude=float(A), lower_bound=float(lower),
                       quad_error=float(A * rho ** d * err), envelope_c8=c8,
                       chi_integral=_chi_moment(d, 0))


# ---------------------------------------------------------------------------
# frequency selection and the window certificate
# ---------------------------------------------------------------------------


def quadratic_form(F):
    """Gram matrix ``G`` with ``|grad e^{2 pi i xi . B^{-1} x}|^2 = 4 pi^2 xi^T G xi``."""
    Binv = np.linalg.inv(F.basis if isinstance(F, FlatQuotient) else np.asarray(F, dtype=float))
    return Binv @ Binv.T


def select_frequency(F, k, tol=1e-12):
    """Return ``(lam_k, xi0)`` with ``Q(xi0) = 1``, ``grad Q(xi0)`` along ``e_n`` and ``lam_k (xi0)_n = k``."""
    if k < 1:
        raise ValueError("k must be positive")
    B = F.basis if isinstance(F, FlatQuotient) else np.asarray(F, dtype=float)
    col = B[:, -1]
    xi0 = B.T @ col / np.linalg.norm(col)
    if xi0[-1] <= tol:
        raise DegenerateLattice("the ellipse point has vanishing last coordinate")
    return k / xi0[-1], xi0


def active_frequencies(lam, xi0, rho, lam_delta):
    """Integer ``xi'`` strictly inside the ball ``|xi' - lam xi0'| < rho sqrt(lam delta)``, sorted."""
    c = lam * np.asarray(xi0[:-1], dtype=float)
    R = rho * math.sqrt(lam_delta)
    ranges = [range(math.ceil(ci - R), math.floor(ci + R) + 1) for ci in c]
    pts = np.array(list(itertools.product(*ranges)), dtype=np.int64).reshape(-1, len(c))
    keep = np.linalg.norm(pts - c, axis=1) < R
    return pts[keep]


@dataclass(frozen=True)
class WindowCertificate:
    passed: bool
    margin: float
    offending: tuple
    count: int


def window_certificate(G, lam, delta, k, active):
    """Check ``lam - delta/2 <= sqrt(Q(xi')) <= lam + delta/2`` for ``xi = (xi', k)``."""
    active = np.asarray(active)
    xi = np.concatenate([active.astype(float), np.full((len(active), 1), float(k))], axis=1)
    sq = np.sqrt(np.einsum("ti,ij,tj->t", xi, G, xi))
    margins = np.minimum(sq - (lam - delta / 2), (lam + delta / 2) - sq)
    bad = tuple(tuple(int(a) for a in row) for row in active[margins < 0])
    margin = float(np.min(margins)) if len(margins) else math.inf
    return WindowCertificate(passed=not bad and len(active) > 0, margin=margin, offending=bad, count=len(active))


# ---------------------------------------------------------------------------
# the torus mode
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlatMode:
    """The windowed mode on ``R^n / Z^n`` (lattice coordinates) before deck averaging."""

    quotient: FlatQuotient
    bump: BumpProfile
    k: int
    lam: float
    delta: float
    xi0: np.ndarray
    y0: np.ndarray
    active: np.ndarray
    coeffs: np.ndarray
    window: WindowCertificate

    @property
    def lam_delta(self):
        return self.lam * self.delta

    @property
    def normalization(self):
        return self.lam_delta ** (-(self.quotient.n - 1) / 4)

    @property
    def frequencies(self):
        return np.concatenate([self.active, np.full((len(self.active), 1), self.k, dtype=np.int64)], axis=1)

    def frequency_side(self, y, chunk=4096):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        z = y[:, :-1] - self.y0[:-1]
        out = np.empty(len(y), dtype=complex)
        for s in range(0, len(y), chunk):
            ph = np.exp(2j * math.pi * (z[s:s + chunk] @ self.active.T.astype(float)))
            out[s:s + chunk] = ph @ self.coeffs
        return self.normalization * np.exp(2j * math.pi * self.k * y[:, -1]) * out

    def poisson_side(self, y, chunk=512):
        """Space-side form of the same function, truncated at the certified tail radius."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        d = self.quotient.n - 1
        s = math.sqrt(self.lam_delta)
        H = self.bump.truncation_radius(self.lam_delta)
        z = y[:, :-1] - self.y0[:-1]
        z = z - np.round(z)
        reach = math.ceil(H / s) + 1
        etas = np.array(list(itertools.product(range(-reach, reach + 1), repeat=d)), dtype=float)
        c = self.lam * self.xi0[:-1]
        out = np.empty(len(y), dtype=complex)
        for st in range(0, len(y), chunk):
            diff = z[st:st + chunk, None, :] - etas[None, :, :]
            r = s * np.sqrt(np.sum(diff * diff, axis=-1))
            keep = r <= H
            vals = np.zeros(r.shape)
            vals[keep] = self.bump.transform_radial(r[keep])
            ph = np.exp(2j * math.pi * (diff @ c))
            out[st:st + chunk] = np.sum(vals * ph, axis=1)
        return self.lam_delta ** (d / 4) * np.exp(2j * math.pi * self.k * y[:, -1]) * out


def evaluate_torus_mode(mode, y, method="frequency"):
    if not mode.window.passed:
        raise NotCertified("mode failed its spectral window check")
    if method == "frequency":
        return mode.frequency_side(y)
    if method == "poisson":
        return mode.poisson_side(y)
    raise ValueError(f"unknown method {method!r}")


def spectral_window_check(mode):
    """Return the window certificate; raise :class:`WindowViolated` on failure."""
    cert = mode.window
    if not cert.passed:
        raise WindowViolated(f"{len(cert.offending)} active frequencies leave the window "
                             f"(worst margin {cert.margin:.3e})", offending=cert.offending)
    return cert


def torus_mode(F, bump, k, delta, y0=None):
    """Assemble the lattice-coordinate mode for an aligned quotient."""
    lam, xi0 = select_frequency(F, k)
    n = F.n
    y0 = np.zeros(n) if y0 is None else np.asarray(y0, dtype=float)
    lam_delta = lam * delta
    active = active_frequencies(lam, xi0, bump.rho, lam_delta)
    coeffs = bump.phi((active - lam * xi0[:-1]) / math.sqrt(lam_delta))
    keep = coeffs > 0
    active, coeffs = active[keep], coeffs[keep]
    cert = window_certificate(quadratic_form(F), lam, delta, k, active)
    return FlatMode(quotient=F, bump=bump, k=int(k), lam=float(lam), delta=float(delta), xi0=xi0,
                    y0=y0, active=active, coeffs=coeffs, window=cert)


# ---------------------------------------------------------------------------
# trigonometric polynomials in lattice coordinates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrigPolynomial:
    """``x -> sum_t c_t exp(2 pi i w_t . B^{-1} x)`` with integer frequencies ``w_t``."""

    basis_inv: np.ndarray
    freqs: np.ndarray
    coeffs: np.ndarray

    def __call__(self, x, chunk=4096):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        y = x.reshape(-1, x.shape[-1]) @ self.basis_inv.T
        out = np.empty(len(y), dtype=complex)
        w = self.freqs.T.astype(float)
        for s in range(0, len(y), chunk):
            out[s:s + chunk] = np.exp(2j * math.pi * (y[s:s + chunk] @ w)) @ self.coeffs
        return out.reshape(shape)

    def tensor_values(self, origin, frame, axes):
        """Values on the grid ``x = origin + sum_j axes[j][i_j] frame[:, j]``.

        Terms are grouped by their frequency along the last axis so the work
        is one small matrix product per group plus an outer product.
        """
        n = len(axes)
        T = self.basis_inv
        kappa = [self.freqs @ (T @ frame[:, j]) for j in range(n)]
        c = self.coeffs * np.exp(2j * math.pi * (self.freqs @ (T @ origin)))
        out = np.zeros(tuple(len(a) for a in axes), dtype=complex)
        last = kappa[-1]
        for g in np.unique(last):
            idx = np.nonzero(last == g)[0]
            acc = c[idx]
            mats = [np.exp(2j * math.pi * np.outer(axes[j], kappa[j][idx])) for j in range(n - 1)]
            if n == 1:
                G = np.sum(acc)
            elif n == 2:
                G = mats[0] @ acc
            else:
                letters = "abcdefgh"[: n - 1]
                spec = ",".join(f"{l}t" for l in letters) + ",t->" + letters
                G = np.einsum(spec, *mats, acc, optimize=True)
            out += G[..., None] * np.exp(2j * math.pi * g * axes[-1])
        return out

    def l2_squared(self, det, index):
        """``(1/N) |det B| sum |c|^2``: the exact squared norm over a fundamental domain."""
        return det / index * math.fsum(np.abs(self.coeffs) ** 2)


# ---------------------------------------------------------------------------
# space-form modes
# ---------------------------------------------------------------------------


def _delta_range(lam, allow_power_rule=False, eps=None):
    if lam <= math.e:
        raise DeltaOutOfRange(f"lambda = {lam:.4g} is too small for the window rule")
    lo = 1.0 / math.log(lam)
    if allow_power_rule:
        if eps is None or not 0 < eps < 1:
            raise DeltaOutOfRange("the power rule needs 0 < eps < 1")
        lo = lam ** (-1.0 + eps)
    return lo, 1.0


@dataclass(frozen=True)
class SpaceFormMode:
    """``psi(x) = sum_i phi_lam(B^{-1} alpha_i x)`` on a flat space form.

    ``quotient`` is the quotient as given; ``aligned`` is its rotated copy
    (``x_bar = rotation @ x``) on which the axis line and torus mode live.
    """

    quotient: FlatQuotient
    aligned: FlatQuotient
    rotation: np.ndarray
    torus: FlatMode
    axis: AxisChoice
    trig: TrigPolynomial

    kind = "flat"

    @property
    def k(self):
        return self.torus.k

    @property
    def lam(self):
        return self.torus.lam

    eigenvalue = lam

    @property
    def delta(self):
        return self.torus.delta

    @property
    def lam_delta(self):
        return self.torus.lam_delta

    @property
    def n(self):
        return self.quotient.n

    @property
    def dim(self):
        return self.quotient.n

    @property
    def wavelength(self):
        return 1.0 / self.lam

    @property
    def window(self):
        return self.torus.window

    def __call__(self, x):
        return self.trig(x)

    def tensor_values(self, origin, frame, axes):
        return self.trig.tensor_values(origin, frame, axes)

    def evaluate(self, x, method="frequency"):
        if not self.window.passed:
            raise NotCertified("mode failed its spectral window check")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if method == "frequency":
            return self.trig(x)
        if method != "poisson":
            raise ValueError(f"unknown method {method!r}")
        xb = x @ self.rotation.T
        Binv = self.aligned.basis_inv
        total = np.zeros(len(x), dtype=complex)
        for rep in self.aligned.coset_reps:
            total += self.torus.poisson_side(rep(xb) @ Binv.T)
        return total

    def l2_exact(self):
        return math.sqrt(self.trig.l2_squared(self.quotient.det, self.quotient.index))


def combine_deck_sum(F_aligned, torus):
    """Expand ``sum_i phi_lam(B^{-1} alpha_i x)`` as one trigonometric polynomial.

    With ``B^{-1} alpha_i (B y) = U_i y + u_i`` (``U_i`` integer) each term
    ``e^{2 pi i xi . (w - y0)}`` becomes ``e^{2 pi i xi.(u_i - y0)} e^{2 pi i (U_i^T xi) . y}``.
    """
    B = F_aligned.basis
    Binv = F_aligned.basis_inv
    xis = torus.frequencies
    base = torus.normalization * torus.coeffs
    acc = {}
    for rep in F_aligned.coset_reps:
        U = Binv @ rep.linear @ B
        Ur = np.round(U)
        if np.max(np.abs(U - Ur)) > 1e-9:
            raise FrequencyCollisionUnresolved("deck summand does not act integrally on frequencies")
        u = Binv @ rep.shift
        omegas = xis @ Ur.astype(np.int64)
        phase = np.exp(2j * math.pi * (xis @ (u - torus.y0)))
        for om, c in zip(map(tuple, omegas), base * phase):
            acc[om] = acc.get(om, 0.0) + c
    keys = sorted(acc)
    freqs = np.array(keys, dtype=np.int64).reshape(-1, F_aligned.n)
    coeffs = np.array([acc[k] for k in keys], dtype=complex)
    return freqs, coeffs


def spaceform_mode(F, k, delta=None, axis=None, *, rho=DEFAULT_RHO, bump=None, c0=DEFAULT_C0,
                   allow_power_rule=False, eps=None, max_halvings=MAX_HALVINGS):
    """Construct the deck-averaged Knapp mode on a flat space form.

    ``delta`` defaults to ``1 / log lam``; ``axis`` (in aligned coordinates)
    defaults to :func:`choose_axis_line` with ``c0``.  If the window check
    fails, ``rho`` is halved up to ``max_halvings`` times.

    Raises
    ------
    DeltaOutOfRange
        ``delta`` outside ``[1/log lam, 1]`` (or ``[lam^{-1+eps}, 1]`` with the power rule).
    WindowViolated
        The window still fails after all halvings.
    """
    Q, Fb = align_lattice(F)
    lam, _ = select_frequency(Fb, k)
    lo, hi = _delta_range(lam, allow_power_rule, eps)
    if delta is None:
        delta = 1.0 / math.log(lam)
    if not lo * (1 - 1e-12) <= delta <= hi:
        raise DeltaOutOfRange(f"delta = {delta:.4g} outside [{lo:.4g}, {hi:.4g}] at lambda = {lam:.4g}")
    if axis is None:
        axis = choose_axis_line(Fb, c0=c0)
    y0 = np.concatenate([Fb.transverse_block @ axis.x0_prime, [0.0]])
    b = bump if bump is not None else make_bump(F.n - 1, rho)
    for attempt in range(max_halvings + 1):
        mode = torus_mode(Fb, b, k, delta, y0)
        if mode.window.passed:
            break
        if attempt == max_halvings or bump is not None:
            spectral_window_check(mode)
        b = make_bump(F.n - 1, b.rho / 2)
    freqs, coeffs = combine_deck_sum(Fb, mode)
    trig = TrigPolynomial(basis_inv=F.basis_inv, freqs=freqs, coeffs=coeffs)
    return SpaceFormMode(quotient=F, aligned=Fb, rotation=np.asarray(Q), torus=mode, axis=axis, trig=trig)


# ---------------------------------------------------------------------------
# tube and defect
# ---------------------------------------------------------------------------


def _ball_volume(d):
    return math.pi ** (d / 2) / math.exp(gammaln(d / 2 + 1))


@dataclass(frozen=True)
class KnappTube:
    """``{|x' - x0'| <= radius, |x_n - (x0)_n| <= half_length}`` in aligned coordinates."""

    center: np.ndarray
    radius: float
    half_length: float
    rotation: np.ndarray
    separation_margin: float
    offdiag: float

    @property
    def offdiag_ok(self):
        return self.offdiag < OFFDIAG_TARGET

    @property
    def volume(self):
        d = len(self.center) - 1
        return 2 * self.half_length * _ball_volume(d) * self.radius ** d

    def contains(self, x):
        xb = np.asarray(x, dtype=float) @ self.rotation.T
        rad = np.linalg.norm(xb[..., :-1] - self.center[:-1], axis=-1)
        return (rad <= self.radius) & (np.abs(xb[..., -1] - self.center[-1]) <= self.half_length)

    def sample(self, radial=9, axial=41):
        """Grid of points in the tube, boundary included (original coordinates)."""
        d = len(self.center) - 1
        if d == 1:
            trans = np.linspace(-1.0, 1.0, 2 * radial - 1)[:, None]
        else:
            g = np.linspace(-1.0, 1.0, 2 * radial - 1)
            trans = np.array(list(itertools.product(g, repeat=d)))
            trans = trans[np.linalg.norm(trans, axis=1) <= 1.0]
        t = np.linspace(-1.0, 1.0, axial)
        pts = np.empty((len(trans) * len(t), d + 1))
        pts[:, :-1] = np.repeat(self.center[:-1] + self.radius * trans, len(t), axis=0)
        pts[:, -1] = np.tile(self.center[-1] + self.half_length * t, len(trans))
        return pts @ self.rotation


def separation_threshold(axis):
    return (4.0 / axis.clearance) ** 2 if np.isfinite(axis.clearance) else 0.0


def offdiag_sum(mode, points_bar):
    """``max_x sum_{i>=2} sum_eta |phi_hat(sqrt(lam delta)(y_i' - y0' - eta))|`` over ``points_bar``."""
    Fb = mode.aligned
    if Fb.index == 1:
        return 0.0
    t = mode.torus
    s = math.sqrt(t.lam_delta)
    H = t.bump.truncation_radius(t.lam_delta)
    d = Fb.n - 1
    reach = math.ceil(H / s) + 1
    etas = np.array(list(itertools.product(range(-reach, reach + 1), repeat=d)), dtype=float)
    total = np.zeros(len(points_bar))
    for rep in Fb.coset_reps[1:]:
        y = rep(points_bar) @ Fb.basis_inv.T
        z = y[:, :-1] - t.y0[:-1]
        z = z - np.round(z)
        r = s * np.linalg.norm(z[:, None, :] - etas[None], axis=-1)
        vals = np.zeros(r.shape)
        keep = r <= H
        vals[keep] = np.abs(t.bump.transform_radial(r[keep]))
        total += vals.sum(axis=1)
    return float(np.max(total))


def knapp_tube(mode: SpaceFormMode, radial=9, axial=41, enforce=True):
    """Tube of radius ``c1 (lam delta)^{-1/2}`` and half-length ``c2`` around the base point.

    With ``enforce=False`` the tube is returned even below the separation
    threshold, with a negative ``separation_margin``.

    Raises
    ------
    SeparationNotReached
        ``lam delta < (4 / delta1)^2``; the tube may then meet other sheets.
    """
    A = mode.axis
    thr = separation_threshold(A)
    margin = mode.lam_delta - thr
    if margin < 0 and enforce:
        raise SeparationNotReached(f"lambda delta = {mode.lam_delta:.4g} below (4/delta1)^2 = {thr:.4g}")
    tube = KnappTube(center=np.asarray(A.base_point, dtype=float), radius=A.c1 / math.sqrt(mode.lam_delta),
                     half_length=A.c2, rotation=mode.rotation, separation_margin=float(margin), offdiag=0.0)
    pts_bar = tube.sample(radial, axial) @ mode.rotation.T
    return KnappTube(center=tube.center, radius=tube.radius, half_length=tube.half_length,
                     rotation=tube.rotation, separation_margin=tube.separation_margin,
                     offdiag=offdiag_sum(mode, pts_bar))


@dataclass(frozen=True)
class DefectReport:
    physical: float
    spectral: float
    bound_physical: float
    bound_spectral: float

    @property
    def passed(self):
        return self.physical <= self.bound_physical


def quasimode_defect(mode, lam=None):
    """``||(Delta + lam^2) psi|| / ||psi||`` by Parseval.

    The physical operator has eigenvalue ``4 pi^2 Q(w)`` on ``e^{2 pi i w . B^{-1} x}``
    and the matching centre is ``2 pi lam``.  The spectral-coordinate value
    uses ``Q(w)`` and ``lam`` directly.
    """
    if getattr(mode, "kind", None) == "sphere":
        return DefectReport(0.0, 0.0, 0.0, 0.0)
    lam = mode.lam if lam is None else float(lam)
    delta = mode.delta
    G = quadratic_form(mode.quotient)
    w = mode.trig.freqs.astype(float)
    q = np.einsum("ti,ij,tj->t", w, G, w)
    c2 = np.abs(mode.trig.coeffs) ** 2
    norm2 = math.fsum(c2)
    spectral = math.sqrt(math.fsum(c2 * (lam ** 2 - q) ** 2) / norm2)
    lp, dp = 2 * math.pi * lam, 2 * math.pi * delta
    physical = math.sqrt(math.fsum(c2 * (lp ** 2 - 4 * math.pi ** 2 * q) ** 2) / norm2)
    return DefectReport(physical=physical, spectral=spectral,
                        bound_physical=lp * dp * (1 + dp / (2 * lp)),
                        bound_spectral=lam * delta * (1 + delta / (2 * lam)))


def knapp_tube_base(mode):
    """Base point ``x0`` of the tube in the original coordinates."""
    return np.asarray(mode.axis.base_point) @ mode.rotation
