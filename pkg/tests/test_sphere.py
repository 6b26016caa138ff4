import math

import numpy as np
import pytest

from knappmodes import presets
from knappmodes.errors import KNotMultipleOfM, NotOnSphere
from knappmodes.geometry import equator_stabilizer
from knappmodes.sphere import (
    deck_sum_mode,
    deck_sum_mode_k,
    deck_sum_values,
    highest_weight,
    highest_weight_l2_sq_s2,
    highest_weight_lp_closed_form,
    sphere_eigenvalue,
)


def s2_point(eta, theta):
    return np.stack([np.cos(eta) * np.cos(theta), np.cos(eta) * np.sin(theta), np.sin(eta)], axis=-1)


def test_eigenvalues():
    assert sphere_eigenvalue(2, 3) == pytest.approx(3.464102, abs=1e-6)
    assert sphere_eigenvalue(5, 0) == 0.0
    assert sphere_eigenvalue(3, 10) == pytest.approx(math.sqrt(120))


def test_highest_weight_examples():
    assert highest_weight(2, 3, [1.0, 0.0, 0.0]) == pytest.approx(3 ** 0.25)
    for k in (1, 7, 300):
        assert highest_weight(2, k, [0.0, 0.0, 1.0]) == 0
    x = s2_point(0.5, 0.3)
    assert abs(highest_weight(2, 200, x)) == pytest.approx(200 ** 0.25 * math.cos(0.5) ** 200, rel=1e-10)
    assert abs(highest_weight(2, 200, x)) == pytest.approx(1.7e-11, rel=0.05)


def test_highest_weight_large_k_is_finite():
    x = s2_point(np.linspace(-1.5, 1.5, 101), 0.7)
    v = highest_weight(2, 20000, x)
    assert np.all(np.isfinite(v))


def test_off_sphere_rejected():
    with pytest.raises(NotOnSphere):
        highest_weight(2, 3, [1.0, 1.0, 0.0])


def test_closed_form_s2_special_case():
    for k in (1, 4, 57):
        assert highest_weight_lp_closed_form(2, k, 2) == pytest.approx(highest_weight_l2_sq_s2(k), rel=1e-13)
    assert highest_weight_l2_sq_s2(4) == pytest.approx(10.213, abs=1e-3)


def test_closed_form_against_direct_quadrature_s3():
    # ||Q_k||_2^2 on S^3: integrate cos^{2k}(eta) cos(eta) sin(eta) over eta, times (2 pi)^2
    from scipy.integrate import quad

    k = 6
    val, _ = quad(lambda e: math.cos(e) ** (2 * k) * math.cos(e) * math.sin(e), 0, math.pi / 2)
    direct = k * (2 * math.pi) ** 2 * val
    assert highest_weight_lp_closed_form(3, k, 2) == pytest.approx(direct, rel=1e-12)


def _laplacian_s2(f, eta, theta, h):
    # (1/cos e) d/de (cos e df/de) + (1/cos^2 e) d^2f/dtheta^2, central differences
    fe_p = f(eta + h, theta)
    fe_m = f(eta - h, theta)
    f0 = f(eta, theta)
    d2e = (fe_p - 2 * f0 + fe_m) / h ** 2
    d1e = (fe_p - fe_m) / (2 * h)
    d2t = (f(eta, theta + h) - 2 * f0 + f(eta, theta - h)) / h ** 2
    return d2e - np.tan(eta) * d1e + d2t / np.cos(eta) ** 2


def test_laplace_beltrami_eigenfunction_second_order():
    k = 12
    rng = np.random.default_rng(1)
    eta = rng.uniform(-1.0, 1.0, 20)
    theta = rng.uniform(0, 2 * math.pi, 20)

    def f(e, t):
        return highest_weight(2, k, s2_point(e, t), check=False)

    target = -sphere_eigenvalue(2, k) ** 2 * f(eta, theta)
    errs = []
    for h in (1e-2, 5e-3):
        errs.append(np.max(np.abs(_laplacian_s2(f, eta, theta, h) - target)))
    assert errs[1] < 1e-3 * np.max(np.abs(target)) + 1e-12
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_identity_group_mode_is_q_k():
    S = presets.sphere(2)
    mode = deck_sum_mode(S, equator_stabilizer(S), 5)
    x = s2_point(np.array([0.1, -0.4]), np.array([2.0, 0.3]))
    np.testing.assert_allclose(mode(x), highest_weight(2, 5, x))


def test_rp2_parity():
    S = presets.rp_n(2)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1000, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    assert np.max(np.abs(deck_sum_values(S, 7, x))) < 1e-12
    np.testing.assert_allclose(deck_sum_values(S, 8, x), 2 * highest_weight(2, 8, x), rtol=1e-12, atol=1e-300)


def test_rp2_mode_needs_even_k():
    S = presets.rp_n(2)
    with pytest.raises(KNotMultipleOfM):
        deck_sum_mode_k(S, equator_stabilizer(S), 7)
    mode = deck_sum_mode(S, equator_stabilizer(S), 4)
    assert mode.k == 8 and mode.collapse == 2.0


def test_quaternion_mode_not_collapsed():
    S = presets.quaternion()
    mode = deck_sum_mode(S, equator_stabilizer(S), 3)
    assert mode.k == 12 and mode.collapse is None
    assert mode.eta_theta_values(np.zeros(1), np.zeros(1)) is None
    # at the base point the stabilizer terms add to 4 Q_k, the rest vanish
    x = np.array([[1.0, 0.0, 0.0, 0.0]])
    assert mode(x)[0] == pytest.approx(4 * 12 ** 0.5)


def test_collapsed_fast_path_matches_points():
    S = presets.lens(3, 1)
    mode = deck_sum_mode(S, equator_stabilizer(S), 2)
    eta = np.array([0.2, 0.9])
    theta = np.array([0.0, 1.1, 4.0])
    grid = mode.eta_theta_values(eta, theta)
    for i, e in enumerate(eta):
        for j, t in enumerate(theta):
            x = np.array([math.cos(e) * math.cos(t), math.cos(e) * math.sin(t), math.sin(e) * 0.6,
                          math.sin(e) * 0.8])
            assert grid[i, j] == pytest.approx(mode(x[None])[0], rel=1e-12)
