"""Highest-weight spherical harmonics and their deck-group averages."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import KNotMultipleOfM, NotOnSphere
from .geometry import EquatorStabilizer, SphereQuotient

ON_SPHERE_TOL = 1e-12


def sphere_eigenvalue(n, k):
    """``sqrt(k (k + n - 1))``, the frequency of a degree-``k`` spherical harmonic on ``S^n``."""
    return math.sqrt(k * (k + n - 1))


def sphere_area(d):
    """Surface measure of the unit sphere ``S^d`` (``|S^0| = 2``)."""
    return 2 * math.pi ** ((d + 1) / 2) / math.gamma((d + 1) / 2)


def highest_weight(n, k, x, check=True):
    """Evaluate ``Q_k(x) = k^{(n-1)/4} (x1 + i x2)^k`` at points ``x`` of ``S^n``.

    The magnitude is formed in log space, so large ``k`` underflows cleanly
    to zero instead of producing ``inf * 0``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n + 1:
        raise NotOnSphere(f"points must have {n + 1} coordinates")
    if check and np.any(np.abs(np.einsum("...i,...i->...", x, x) - 1.0) > ON_SPHERE_TOL * 4):
        raise NotOnSphere("point is not on the unit sphere")
    r = np.hypot(x[..., 0], x[..., 1])
    theta = np.arctan2(x[..., 1], x[..., 0])
    with np.errstate(divide="ignore"):
        logmag = 0.25 * (n - 1) * math.log(k) + k * np.log(r)
    return np.exp(logmag) * np.exp(1j * np.remainder(k * theta, 2 * math.pi))


def highest_weight_lp_closed_form(n, k, p):
    """``||Q_k||_{L^p(S^n)}^p`` from the Beta integral.

    In coordinates ``x = (cos e cos t, cos e sin t, sin e w)``, ``w`` in ``S^{n-2}``,
    ``|Q_k|^p = k^{p(n-1)/4} cos^{pk} e`` and the measure is
    ``cos e sin^{n-2} e de dt dw``.
    """
    a = (p * k + 2) / 2
    b = (n - 1) / 2
    log_beta = gammaln(a) + gammaln(b) - gammaln(a + b)
    return math.exp(p * (n - 1) / 4 * math.log(k) + math.log(math.pi * sphere_area(n - 2)) + log_beta)


def highest_weight_l2_sq_s2(k):
    """``2 pi^{3/2} sqrt(k) Gamma(k+1) / Gamma(k+3/2)``: ``||Q_k||^2`` on ``S^2``."""
    return 2 * math.pi ** 1.5 * math.sqrt(k) * math.exp(gammaln(k + 1) - gammaln(k + 1.5))


@dataclass(frozen=True)
class SphereMode:
    """Deck-group sum of ``Q_k`` on a sphere quotient.

    ``multiplicity`` is the factor ``m`` in front of ``Q_k`` near the base
    point (the order of the equator stabilizer, which divides ``k``).
    """

    n: int
    k: int
    quotient: SphereQuotient
    multiplicity: int
    collapse: float | None = None

    kind = "sphere"

    @property
    def eigenvalue(self):
        return sphere_eigenvalue(self.n, self.k)

    lam = eigenvalue

    @property
    def wavelength(self):
        return 2 * math.pi / self.eigenvalue

    @property
    def dim(self):
        return self.n + 1

    def __call__(self, x):
        return deck_sum_values(self.quotient, self.k, x)

    def eta_theta_values(self, eta, theta):
        """Values on the grid ``(eta, theta)`` when the mode depends on ``x1 + i x2`` only.

        Returns ``None`` unless every deck element stabilizes the equator, in
        which case the deck sum is ``collapse * Q_k``.
        """
        if self.collapse is None:
            return None
        eta = np.asarray(eta, dtype=float)
        theta = np.asarray(theta, dtype=float)
        with np.errstate(divide="ignore"):
            mag = np.exp(0.25 * (self.n - 1) * math.log(self.k) + self.k * np.log(np.cos(eta)))
        ph = np.exp(1j * np.remainder(self.k * theta, 2 * math.pi))
        return self.collapse * np.outer(mag, ph)

    def defect(self):
        """``||(Delta + lam^2) e|| / ||e||``; zero for an exact eigenfunction."""
        return 0.0


def deck_sum_values(S, k, x):
    """``sum_{g in Gamma} Q_k(g x)`` for any ``k`` (no divisibility requirement)."""
    x = np.asarray(x, dtype=float)
    highest_weight(S.n, k, x)  # validates the points
    total = np.zeros(x.shape[:-1], dtype=complex)
    for g in S.deck_group:
        total += highest_weight(S.n, k, x @ g.T, check=False)
    return total


def deck_sum_mode_k(S, E, k):
    """Low-level entry point taking the degree directly."""
    if k < 1:
        raise ValueError("k must be positive")
    if k % E.order:
        raise KNotMultipleOfM(f"k = {k} is not a multiple of the stabilizer order {E.order}")
    collapse = None
    if not E.others:
        # each element rotates x1 + i x2 by 2 pi j / m, so Q_k(g x) = e^{2 pi i j k / m} Q_k(x) = Q_k(x)
        collapse = float(E.order)
    return SphereMode(n=S.n, k=k, quotient=S, multiplicity=E.order, collapse=collapse)


def deck_sum_mode(S: SphereQuotient, E: EquatorStabilizer, ell: int) -> SphereMode:
    """The eigenfunction ``sum_alpha Q_k(alpha x)`` with ``k = ell * m``."""
    if ell < 1:
        raise ValueError("ell must be positive")
    return deck_sum_mode_k(S, E, ell * E.order)


def distance_to_equator(x):
    x = np.asarray(x, dtype=float)
    return np.arccos(np.clip(np.hypot(x[..., 0], x[..., 1]), 0.0, 1.0))
