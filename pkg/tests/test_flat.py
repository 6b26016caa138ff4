import dataclasses
import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.integrate import quad

from knappmodes import presets
from knappmodes.errors import (
    CertificationFailed,
    DeltaOutOfRange,
    NotCertified,
    SeparationNotReached,
    WindowViolated,
)
from knappmodes.flat import (
    TrigPolynomial,
    active_frequencies,
    bump_chi,
    chi_hat,
    evaluate_torus_mode,
    knapp_tube,
    make_bump,
    quadratic_form,
    quasimode_defect,
    select_frequency,
    separation_threshold,
    spaceform_mode,
    spectral_window_check,
    torus_mode,
    window_certificate,
)
from knappmodes.geometry import choose_axis_line
from knappmodes.norms import l2_exact_parseval


@pytest.fixture(scope="module")
def bump1():
    return make_bump(1, 0.5)


def test_chi_integral_1d(bump1):
    ref, _ = quad(lambda u: math.exp(-1 / (1 - u * u)), -1, 1)
    assert ref == pytest.approx(0.443994, abs=1e-6)
    assert bump1.chi_integral == pytest.approx(ref, rel=1e-12)
    assert float(bump1.transform_radial(0.0)) == pytest.approx(bump1.amplitude * ref * bump1.rho, rel=1e-10)


def test_chi_hat_against_adaptive_quadrature():
    for v in (0.0, 0.3, 2.7, 11.0):
        ref, _ = quad(lambda u: math.exp(-1 / (1 - u * u)) * math.cos(2 * math.pi * v * u), -1, 1, limit=200)
        assert float(chi_hat(np.array([v]), 1)[0]) == pytest.approx(ref, abs=1e-13)


def test_bump_transform_properties(bump1):
    x = np.linspace(0.0, 30.0, 301)
    np.testing.assert_array_equal(bump1.transform_radial(x), bump1.transform_radial(-x))
    np.testing.assert_allclose(bump1.transform_radial(x), bump1.transform_radial(x, exact=True), atol=1e-10)
    assert np.min(bump1.transform_radial(np.linspace(0, 1, 201))) >= 1.0
    assert bump1.lower_bound >= 1.0
    assert bump1.phi(np.array([bump1.rho + 1e-9])) == 0.0
    assert bump_chi(np.array([[1.0], [-1.0], [1.5]])).tolist() == [0.0, 0.0, 0.0]


def test_bump_rho_one_fails_certification():
    with pytest.raises(CertificationFailed):
        make_bump(1, 1.0)
    with pytest.raises(ValueError):
        make_bump(1, 1.5)


def test_bump_2d_certifies():
    b = make_bump(2, 0.5)
    assert b.lower_bound >= 1.0


def test_select_frequency_examples():
    lam, xi0 = select_frequency(presets.torus(), 7)
    assert lam == 7 and xi0.tolist() == [0.0, 1.0]
    F = presets.torus(np.diag([1.0, 2.0]))
    lam, xi0 = select_frequency(F, 10)
    np.testing.assert_allclose(xi0, [0.0, 2.0])
    assert lam == pytest.approx(5.0)
    np.testing.assert_allclose(quadratic_form(F), np.diag([1.0, 0.25]))


def test_select_frequency_normalized_for_any_lattice():
    rng = np.random.default_rng(3)
    for _ in range(5):
        B = np.triu(rng.uniform(0.5, 2.0, (3, 3)))
        B[:-1, -1] = 0.0
        F = presets.torus(B, n=3)
        lam, xi0 = select_frequency(F, 9)
        G = quadratic_form(F)
        assert xi0 @ G @ xi0 == pytest.approx(1.0, abs=1e-12)
        grad = G @ xi0
        np.testing.assert_allclose(grad[:-1], 0.0, atol=1e-12)
        assert lam * xi0[-1] == pytest.approx(9.0)


def test_window_example_passes(bump1):
    F = presets.torus()
    mode = torus_mode(F, bump1, 100, 0.1)
    cert = spectral_window_check(mode)
    assert cert.margin > 0
    lam, xi0 = select_frequency(F, 100)
    act = active_frequencies(lam, xi0, 1.0, 10.0)
    assert np.max(np.abs(act)) == 3
    assert window_certificate(quadratic_form(F), lam, 0.1, 100, act).passed


def test_window_violation(bump1):
    F = presets.torus()
    wide = dataclasses.replace(bump1, rho=1.3)
    mode = torus_mode(F, wide, 100, 0.1)
    with pytest.raises(WindowViolated) as err:
        spectral_window_check(mode)
    assert set(err.value.offending) == {(-4,), (4,)}
    with pytest.raises(NotCertified):
        evaluate_torus_mode(mode, np.zeros((1, 2)))


def test_poisson_duality_torus(bump1):
    mode = torus_mode(presets.torus(), bump1, 100, 0.1)
    rng = np.random.default_rng(0)
    y = rng.uniform(0, 1, (1000, 2))
    a = evaluate_torus_mode(mode, y, "frequency")
    b = evaluate_torus_mode(mode, y, "poisson")
    assert np.max(np.abs(a - b)) < 1e-8


def test_axis_value_dominates(bump1):
    mode = torus_mode(presets.torus(), bump1, 400, 0.25)
    y = np.array([[0.0, 0.13], [0.0, 0.77]])
    assert np.all(np.abs(mode.frequency_side(y)) >= mode.lam_delta ** 0.25)


def test_periodicity(bump1):
    mode = torus_mode(presets.torus(), bump1, 60, 0.3)
    rng = np.random.default_rng(2)
    y = rng.uniform(0, 1, (50, 2))
    for e in np.eye(2):
        np.testing.assert_allclose(mode.frequency_side(y + e), mode.frequency_side(y), atol=1e-10)


def test_torus_spaceform_is_single_term(bump1):
    F = presets.torus()
    m = spaceform_mode(F, 80, 0.3, bump=bump1)
    y = np.random.default_rng(4).uniform(0, 1, (20, 2))
    np.testing.assert_allclose(m(y), m.torus.frequency_side(y), atol=1e-12)


def test_klein_spaceform_is_two_terms(bump1):
    K = presets.klein_bottle()
    m = spaceform_mode(K, 80, 0.3, bump=bump1, c0=0.25)
    glide = K.coset_reps[1]
    x = np.random.default_rng(5).uniform(0, 1, (20, 2))
    expect = m.torus.frequency_side(x) + m.torus.frequency_side(glide(x))
    np.testing.assert_allclose(m(x), expect, atol=1e-12)


@pytest.mark.parametrize("F", [presets.klein_bottle(), presets.torus(np.array([[1.0, 0.3], [0.0, 1.2]]))])
def test_deck_invariance(F, bump1):
    m = spaceform_mode(F, 50, 0.4, bump=bump1, c0=0.25)
    x = np.random.default_rng(6).uniform(-1, 2, (100, 2))
    for g in F.generators:
        np.testing.assert_allclose(m(g(x)), m(x), atol=1e-10)


def test_delta_range_enforced(bump1):
    with pytest.raises(DeltaOutOfRange):
        spaceform_mode(presets.torus(), 100, 0.01, bump=bump1)
    with pytest.raises(DeltaOutOfRange):
        spaceform_mode(presets.torus(), 100, 1.5, bump=bump1)


def test_klein_tube_threshold():
    A = choose_axis_line(presets.klein_bottle(), x0_prime=0.01)
    assert separation_threshold(A) == pytest.approx(4.0e4)


def test_torus_tube_vacuous(bump1):
    m = spaceform_mode(presets.torus(), 100, 0.25, bump=bump1)
    t = knapp_tube(m)
    assert t.offdiag == 0.0 and t.separation_margin == pytest.approx(m.lam_delta)
    assert t.volume == pytest.approx(2 * t.half_length * 2 * t.radius)
    assert t.radius == pytest.approx(m.axis.c1 / math.sqrt(m.lam_delta))


def test_klein_tube_separation_enforced(bump1):
    m = spaceform_mode(presets.klein_bottle(), 100, 0.25, bump=bump1, c0=0.25)
    with pytest.raises(SeparationNotReached):
        knapp_tube(m)
    assert knapp_tube(m, enforce=False).separation_margin < 0


def test_defect_sphere_is_zero():
    from knappmodes.geometry import equator_stabilizer
    from knappmodes.sphere import deck_sum_mode

    S = presets.rp_n(2)
    assert quasimode_defect(deck_sum_mode(S, equator_stabilizer(S), 3)).physical == 0.0


def test_defect_within_bound(bump1):
    for F in (presets.torus(), presets.klein_bottle()):
        m = spaceform_mode(F, 150, 0.25, bump=bump1, c0=0.25)
        d = quasimode_defect(m)
        assert d.passed
        assert d.spectral <= d.bound_spectral


def test_defect_at_window_edge():
    # one frequency (3, 4) with |w| = 5 = lam + delta / 2
    lam, delta = 4.9, 0.2
    trig = TrigPolynomial(basis_inv=np.eye(2), freqs=np.array([[3, 4]]), coeffs=np.array([1.0 + 0j]))
    mode = SimpleNamespace(lam=lam, delta=delta, quotient=presets.torus(), trig=trig)
    d = quasimode_defect(mode)
    assert d.physical == pytest.approx(4 * math.pi ** 2 * delta * (lam + delta / 4), rel=1e-12)
    assert d.spectral == pytest.approx(delta * (lam + delta / 4), rel=1e-12)


def test_parseval_single_exponential():
    trig = TrigPolynomial(basis_inv=np.eye(2), freqs=np.array([[1, 2]]), coeffs=np.array([1.0 + 0j]))
    assert trig.l2_squared(1.0, 1) == pytest.approx(1.0)


def test_parseval_torus_formula(bump1):
    B = np.diag([1.0, 1.5])
    F = presets.torus(B)
    m = spaceform_mode(F, 90, 0.3, bump=bump1)
    t = m.torus
    coeffs = bump1.phi((t.active - t.lam * t.xi0[:1]) / math.sqrt(t.lam_delta))
    direct = t.lam_delta ** -0.5 * np.sum(coeffs ** 2) * 1.5
    assert l2_exact_parseval(m) == pytest.approx(direct, rel=1e-12)
