import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rieszwave import kernels as K


# ---------------------------------------------------------------------------
# wave multiplier
# ---------------------------------------------------------------------------

def test_wave_multiplier_zero_frequency_is_t():
    assert K.wave_multiplier(0.75, 0.0) == 0.75
    assert K.wave_multiplier(2.0, 0.0) == 2.0


def test_wave_multiplier_nonpositive_time_is_zero():
    assert K.wave_multiplier(0.0, 3.0) == 0.0
    assert K.wave_multiplier(-1.0, 3.0) == 0.0
    out = K.wave_multiplier(np.array([-0.5, 0.0, 0.5]), 1.0)
    assert out[0] == 0.0 and out[1] == 0.0 and out[2] != 0.0


def test_wave_multiplier_matches_closed_form():
    t, r = 0.63, 2.17
    expect = math.sin(2 * math.pi * t * r) / (2 * math.pi * r)
    assert K.wave_multiplier(t, r) == pytest.approx(expect, rel=1e-14)


def test_wave_multiplier_broadcasts():
    t = np.array([[0.5], [1.0]])
    r = np.array([0.0, 1.0, 2.0])
    out = K.wave_multiplier(t, r)
    assert out.shape == (2, 3)
    assert out[0, 0] == 0.5 and out[1, 0] == 1.0


@given(st.floats(1e-6, 2.0), st.floats(0.0, 1e4))
@settings(max_examples=200, deadline=None)
def test_wave_multiplier_bounded_by_t(t, r):
    assert abs(K.wave_multiplier(t, r)) <= t


def test_bound_suite_passes():
    res = K.multiplier_bound_suite(horizon=2.0, samples=20_000, seed=7)
    assert res.passed
    assert all(m >= 0.0 for m in res.worst_margins.values())
    # the sup bounds are attained (at r = 0 resp. t = s), so the worst
    # margins of the tight inequalities must be exactly zero
    assert res.worst_margins["value_le_t"] == 0.0
    assert res.worst_margins["lipschitz_time"] == 0.0


def test_bound_suite_summary_roundtrip():
    res = K.multiplier_bound_suite(samples=1000, seed=1)
    s = res.summary()
    assert s["passed"] is True
    assert set(s["worst_margins"]) == {
        "value_le_t", "square_decay", "lipschitz_half",
        "lipschitz_time", "bessel_domination"}


# ---------------------------------------------------------------------------
# geometry and tau
# ---------------------------------------------------------------------------

def test_sphere_area_and_ball_volume():
    assert K.sphere_area(1) == pytest.approx(2.0)
    assert K.sphere_area(2) == pytest.approx(2 * math.pi)
    assert K.sphere_area(3) == pytest.approx(4 * math.pi)
    assert K.ball_volume(2) == pytest.approx(math.pi)
    assert K.ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_ball_overlap_endpoints():
    for d in (1, 2, 3, 4):
        full = K.ball_overlap_volume(d, 0.0)
        assert full == pytest.approx(K.ball_volume(d), rel=1e-12)
        assert K.ball_overlap_volume(d, 2.0) == pytest.approx(0.0, abs=1e-12)


def test_ball_overlap_closed_form_matches_cap_formula():
    s = np.linspace(0.0, 2.0, 41)
    for d in (1, 2, 3):
        closed = K.ball_overlap_volume(d, s)
        caps = 2.0 * K._cap_volume(d, 1.0 - s / 2.0)
        np.testing.assert_allclose(closed, caps, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("beta", [0.1, 0.25, 0.5, 0.75, 0.9])
def test_tau_d1_closed_form(beta):
    closed = 2.0 ** (3.0 - beta) / ((1.0 - beta) * (2.0 - beta))
    assert K.tau_beta(1, beta) == pytest.approx(closed, rel=1e-9)


def test_tau_d3_beta1_closed_form():
    assert K.tau_beta(3, 1.0) == pytest.approx(32 * math.pi ** 2 / 15, rel=1e-9)


@pytest.mark.parametrize("d,beta", [(1, 0.5), (2, 1.0), (2, 1.5), (3, 1.0),
                                    (3, 0.5), (4, 1.2)])
def test_tau_routes_agree(d, beta):
    real = K.tau_beta(d, beta, "real")
    fourier = K.tau_beta(d, beta, "fourier")
    assert fourier == pytest.approx(real, rel=1e-8)
    if d == 3:
        assert K.tau_beta(3, beta, "newton") == pytest.approx(real, rel=1e-8)


def test_tau_rejects_bad_parameters():
    with pytest.raises(ValueError):
        K.tau_beta(1, 1.0)
    with pytest.raises(ValueError):
        K.tau_beta(2, 2.0)
    with pytest.raises(ValueError):
        K.tau_beta(3, -0.1)
    with pytest.raises(ValueError):
        K.tau_beta(2, 1.0, "newton")
    with pytest.raises(ValueError):
        K.tau_beta(2, 1.0, "nope")


# ---------------------------------------------------------------------------
# Riesz constant and kernel objects
# ---------------------------------------------------------------------------

def test_riesz_constant_reference_values():
    assert K.riesz_constant(1, 0.5) == pytest.approx(1.0, rel=1e-14)
    assert K.riesz_constant(2, 1.0) == pytest.approx(1.0, rel=1e-14)
    assert K.riesz_constant(3, 1.0) == pytest.approx(1.0 / math.pi, rel=1e-14)


def test_riesz_constant_parseval_gaussian():
    # self-dual witness g(x) = exp(-pi |x|^2):
    # int |x|^{-beta} g = c int |xi|^{beta-d} g must hold in every dimension
    from scipy import integrate
    for d, beta in [(1, 0.5), (2, 1.2), (3, 1.0)]:
        area = K.sphere_area(d)
        left, _ = integrate.quad(
            lambda r: area * r ** (d - 1 - beta) * math.exp(-math.pi * r * r),
            0, 20, epsabs=0, epsrel=1e-12)
        right, _ = integrate.quad(
            lambda r: area * r ** (beta - 1) * math.exp(-math.pi * r * r),
            0, 20, epsabs=0, epsrel=1e-12)
        assert K.riesz_constant(d, beta) * right == pytest.approx(left, rel=1e-10)


def test_riesz_kernel_validation():
    K.RieszKernel(1, 0.5)
    K.RieszKernel(3, 1.9)
    with pytest.raises(ValueError):
        K.RieszKernel(1, 1.0)   # beta must stay below min(2, d)
    with pytest.raises(ValueError):
        K.RieszKernel(3, 2.0)
    with pytest.raises(ValueError):
        K.RieszKernel(2, 0.0)


def test_riesz_kernel_spectral_density():
    kern = K.RieszKernel(2, 1.0)
    rho = np.array([0.5, 1.0, 2.0])
    np.testing.assert_allclose(kern.spectral_density(rho),
                               kern.constant * rho ** (1.0 - 2.0))
    np.testing.assert_allclose(kern.covariance(np.array([2.0])), [2.0 ** -1.0])


def test_bessel_multiplier():
    bm = K.BesselMultiplier(2.0)
    assert bm.value(0.0) == 1.0
    assert bm.value(1.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        K.BesselMultiplier(0.0)


def test_bessel_dominates_wave_multiplier():
    horizon = 2.0
    bm = K.BesselMultiplier(1.0)
    r = np.linspace(0.0, 50.0, 2001)
    t = np.linspace(0.0, horizon, 41)[:, None]
    v = np.abs(K.wave_multiplier(t, r[None, :]))
    cap = math.sqrt(1.0 + 2.0 * horizon ** 2) * bm.value(r)[None, :]
    assert np.all(v <= cap)


# ---------------------------------------------------------------------------
# mollifier family
# ---------------------------------------------------------------------------

def test_mollifier_scale_rule():
    fam = K.MollifierFamily(1)
    assert fam.scale(1) == 2.0
    assert fam.scale(5) == 32.0
    with pytest.raises(ValueError):
        fam.scale(0)


def test_mollifier_transform_at_zero_is_one():
    for d in (1, 2, 3, 4):
        fam = K.MollifierFamily(d)
        assert fam.transform(3, 0.0) == 1.0


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_mollifier_table_matches_quadrature(d):
    fam = K.MollifierFamily(d)
    pts = [0.3, 1.7, 5.0, 31.0]
    table = fam.transform(1, np.array(pts))
    quad = np.array([fam.transform_quad(1, x) for x in pts])
    np.testing.assert_allclose(table, quad, atol=5e-8)


def test_mollifier_transform_far_field_uses_quadrature():
    fam = K.MollifierFamily(1)
    rho = 3.0 * K._TABLE_RHO_MAX
    direct = fam.transform_quad(1, rho)
    assert fam.transform(1, rho) == pytest.approx(direct, abs=1e-12)


def test_mollifier_transform_bounded_and_even():
    fam = K.MollifierFamily(2)
    rho = np.linspace(0.0, 40.0, 500)
    vals = fam.transform(2, rho)
    assert np.all(np.abs(vals) <= 1.0)
    np.testing.assert_array_equal(vals, fam.transform(2, -rho))


def test_mollifier_dyadic_consistency():
    # F Lambda_n(rho) is F Lambda(rho / 2^n): doubling n at doubled rho agrees
    fam = K.MollifierFamily(1)
    rho = np.array([0.7, 2.2, 9.0])
    np.testing.assert_allclose(fam.transform(1, rho), fam.transform(2, 2 * rho),
                               rtol=0, atol=1e-12)


def test_mollifier_transform_shrinks_spread_with_n():
    # larger n concentrates Lambda_n, so the transform flattens toward 1
    fam = K.MollifierFamily(1)
    rho = 3.0
    vals = [fam.transform(n, rho) for n in (1, 2, 3, 4, 5)]
    diffs = [abs(1.0 - v) for v in vals]
    assert all(a > b for a, b in zip(diffs, diffs[1:]))


def test_mollifier_rejects_unsupported_dimension():
    with pytest.raises(ValueError):
        K.MollifierFamily(5)


# ---------------------------------------------------------------------------
# limit functionals
# ---------------------------------------------------------------------------

def _unit_functional(horizon=1.0):
    kern = K.RieszKernel(1, 0.5)
    return K.LimitFunctional.constant_sigma(kern, 1.0, horizon,
                                            tau=K.tau_beta(1, 0.5))


def test_limiting_variance_cubic_law():
    lf = _unit_functional()
    tau = lf.tau
    for t in (0.25, 0.5, 1.0):
        assert K.limiting_variance(t, lf) == pytest.approx(tau * t ** 3 / 3,
                                                           rel=1e-12)


def test_limiting_covariance_closed_form():
    lf = _unit_functional()
    tau = lf.tau
    s, t = 0.5, 1.0
    expect = tau * (s * s * t / 2.0 - s ** 3 / 6.0)
    assert K.limiting_covariance(s, t, lf) == pytest.approx(expect, rel=1e-12)
    assert K.limiting_covariance(t, s, lf) == K.limiting_covariance(s, t, lf)


def test_limiting_covariance_diagonal_equals_variance_for_constant_sigma():
    lf = _unit_functional()
    for t in (0.3, 0.7, 1.0):
        assert K.limiting_covariance(t, t, lf) == pytest.approx(
            K.limiting_variance(t, lf), rel=1e-12)


def test_limit_functional_piecewise_linear_is_exact():
    # tabulated path p(r) = 2 + 3r on a coarse grid; the weighted integrals
    # have closed forms, so the piecewise-polynomial evaluation must be exact
    kern = K.RieszKernel(1, 0.5)
    tau = 2.0
    times = np.array([0.0, 0.4, 1.0])
    path = 2.0 + 3.0 * times
    lf = K.LimitFunctional(kernel=kern, times=times, mean_square_path=path,
                           mean_path=path, tau=tau)
    t = 1.0
    # int_0^1 (1-r)^2 (2+3r) dr = 2/3 + 3/12
    expect_var = tau * (2.0 / 3.0 + 0.25)
    assert K.limiting_variance(t, lf) == pytest.approx(expect_var, rel=1e-13)
    s = 0.4
    # int_0^0.4 (0.4-r)(1-r)(2+3r)^2 dr, expanded monomials:
    # integrand = (0.4 - 1.4 r + r^2)(4 + 12 r + 9 r^2)
    coef = np.polynomial.polynomial.polymul(
        [0.4, -1.4, 1.0], [4.0, 12.0, 9.0])
    anti = np.polynomial.polynomial.polyint(coef)
    expect_cov = tau * np.polynomial.polynomial.polyval(0.4, anti)
    assert K.limiting_covariance(s, t, lf) == pytest.approx(expect_cov,
                                                            rel=1e-13)


def test_limit_functional_validates_inputs():
    kern = K.RieszKernel(1, 0.5)
    with pytest.raises(ValueError):
        K.LimitFunctional(kernel=kern, times=np.array([0.0]),
                          mean_square_path=np.array([1.0]),
                          mean_path=np.array([1.0]), tau=1.0)
    with pytest.raises(ValueError):
        K.LimitFunctional(kernel=kern, times=np.array([0.0, 0.0]),
                          mean_square_path=np.ones(2),
                          mean_path=np.ones(2), tau=1.0)
    with pytest.raises(ValueError):
        K.LimitFunctional(kernel=kern, times=np.array([0.0, 1.0]),
                          mean_square_path=np.ones(3),
                          mean_path=np.ones(2), tau=1.0)
    lf = _unit_functional()
    with pytest.raises(ValueError):
        K.limiting_variance(2.0, lf)


@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0))
@settings(max_examples=60, deadline=None)
def test_limiting_covariance_symmetric_property(s, t):
    lf = _unit_functional()
    a = K.limiting_covariance(s, t, lf)
    b = K.limiting_covariance(t, s, lf)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


@given(st.floats(0.0, 1.0))
@settings(max_examples=60, deadline=None)
def test_limiting_variance_monotone_property(t):
    lf = _unit_functional()
    assert K.limiting_variance(t, lf) <= K.limiting_variance(1.0, lf) + 1e-15
