from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdsing.angular import AngularGeometry, AngularProfile, builtin_profile
from fdsing.envelopes import (
    AlphaTilde,
    ConstantSelectionError,
    Stationary,
    SubEnvelope,
    SubsolutionParams,
    SuperEnvelope,
    SupersolutionParams,
    TravelingWave,
    VerificationGrid,
    derive_traveling_wave_constant,
    envelope_report,
    matching_jump,
    matching_radius,
    select_subsolution_constants,
    select_supersolution_constant,
    squeeze_check,
    strong_form_residual,
    supersolution_bounds,
    traveling_wave_constant_closed_form,
)
from fdsing.regimes import ProblemParams


def test_stationary_residual_zero():
    rng = np.random.default_rng(1)
    r = 10 ** rng.uniform(-4, 1, 2000)
    for n, m in [(3, 0.6), (4, 0.3), (2, 0.5)]:
        res = strong_form_residual(Stationary(1.3, n, m), r, 0.0, 0.0)
        assert np.max(np.abs(res)) == 0.0


def test_alpha_tilde_solves_sphere_flow():
    at = AlphaTilde(A=2.0, t0=1.0, m=0.5)
    t = np.linspace(0, 3, 31)
    assert np.max(np.abs(at.sphere_residual(t))) < 1e-12
    # the spatially constant field is not a solution of the full equation
    h = 1e-6
    assert abs((at(1 + h) - at(1 - h)) / (2 * h)) > 1.0


def test_supersolution_value_at_unit_radius():
    g = AngularGeometry(3, 8)
    env = SuperEnvelope(ProblemParams(3, 0.2, 3.0, 2.0), AngularProfile.constant(g), SupersolutionParams(1.0))
    assert env(1.0, 0.3, 0.0) == pytest.approx(243.0, rel=1e-14)


def test_supersolution_constant_constant_alpha(sphere_case):
    params, alpha = sphere_case
    sup = select_supersolution_constant(alpha, params)
    assert sup.A == 1.0
    inner, outer = supersolution_bounds(alpha, params)
    # with sigma_max = -0.24 < 0 the inner bound is m (m nu)(m nu + 2)
    assert inner == pytest.approx(0.2 * 0.4 * 2.4)
    assert outer < 1.0


def test_supersolution_constant_second_example():
    g = AngularGeometry(3, 8)
    p = ProblemParams(3, 0.5, 5.0, 4.5)
    alpha = AngularProfile.constant(g)
    sup = select_supersolution_constant(alpha, p)
    assert sup.A >= max(1.0, *supersolution_bounds(alpha, p))
    R, TH, T = VerificationGrid().mesh(g)
    env = SuperEnvelope(p, alpha, sup)
    assert np.all(env.residual(R, TH, T) >= -1e-9 * (1 + np.abs(env.w_t(R, TH, T))))


def test_selection_rejects_a2_failure():
    g = AngularGeometry(3, 8)
    alpha = AngularProfile.constant(g)
    with pytest.raises(ValueError):
        select_supersolution_constant(alpha, ProblemParams(3, 0.2, 3.0, 0.5))
    with pytest.raises(ValueError):
        select_subsolution_constants(alpha, ProblemParams(3, 0.5, 4.0, 1.0))


def test_subsolution_constants_constant_alpha(sphere_case):
    params, alpha = sphere_case
    sub = select_subsolution_constants(alpha, params)
    assert sub.mu == 6.0
    assert sub.delta == pytest.approx(0.125)
    assert sub.delta < (params.lam - params.nu) / (sub.mu - params.nu)
    assert sub.B > 1 and sub.b0 > 1


def test_subsolution_squeeze_against_upper_envelope(sphere_case):
    params, alpha = sphere_case
    sup = select_supersolution_constant(alpha, params)
    wp = SuperEnvelope(params, alpha, sup)
    u0 = lambda r, th: wp(r, th, 0.0)  # noqa: E731
    sub = select_subsolution_constants(alpha, params, u0)
    assert squeeze_check(u0, alpha, sup, sub, params).passed


@pytest.mark.parametrize("case", ["circle_case", "sphere_case"])
def test_envelope_signs(case, request):
    params, alpha = request.getfixturevalue(case)
    sup = select_supersolution_constant(alpha, params)
    sub = select_subsolution_constants(alpha, params)
    R, TH, T = VerificationGrid().mesh(alpha.geometry)
    wp = SuperEnvelope(params, alpha, sup)
    assert np.all(wp.residual(R, TH, T) >= -1e-9 * (1 + np.abs(wp.w_t(R, TH, T))))
    wm = SubEnvelope(params, alpha, sub)
    with np.errstate(all="ignore"):
        res = wm.residual(R, TH, T)
        scale = 1 + np.abs(wm.w_t(R, TH, T))
    near = np.abs(np.log(R) - wm.log_rho(T)) < 1e-9
    assert np.all((res <= 1e-9 * scale) | near | ~np.isfinite(res))


def test_subsolution_branches_match(sphere_case):
    params, alpha = sphere_case
    sub = SubsolutionParams(6.0, 0.125, 2.0, 30.0)
    env = SubEnvelope(params, alpha, sub)
    for t in (0.0, 0.5, 1.0):
        rho = env.rho(t)
        expected = 1.0 * 0.125 ** 5 * rho ** (-3.0)
        assert env.inner(rho, 0.2, t) == pytest.approx(expected, rel=1e-10)
        assert env.outer(rho, 0.2, t) == pytest.approx(expected, rel=1e-10)
        assert env.inner(env.zero_radius(t), 0.2, t) == 0.0


def test_matching_jump_formula(circle_case):
    params, alpha = circle_case
    sub = select_subsolution_constants(alpha, params)
    env = SubEnvelope(params, alpha, sub)
    th = alpha.geometry.theta
    for t in np.linspace(0, 2, 9):
        jump, formula = matching_jump(env, th, t)
        assert np.all(jump > 0)
        np.testing.assert_allclose(jump, formula, rtol=1e-10)


def test_matching_radius_properties(sphere_case):
    params, _ = sphere_case
    sub = SubsolutionParams(6.0, 0.125, 2.0, 30.0)
    t = np.linspace(0, 2, 21)
    rho = matching_radius(sub, params, t)
    assert np.all(rho < 1) and np.all(np.diff(rho) < 0)
    # vanishing delta: rho tends to the zero point b^{-1/q}
    tiny = SubsolutionParams(6.0, 1e-12, 2.0, 30.0)
    assert matching_radius(tiny, params, 0.0) == pytest.approx(2.0 ** (-1 / params.q), rel=1e-10)


def test_rho_dot_matches_finite_difference(sphere_case):
    params, alpha = sphere_case
    env = SubEnvelope(params, alpha, SubsolutionParams(6.0, 0.125, 2.0, 30.0))
    h = 1e-6
    fd = (env.rho(0.3 + h) - env.rho(0.3 - h)) / (2 * h)
    assert env.rho_dot(0.3) == pytest.approx(fd, rel=1e-7)
    assert env.rho_dot(0.3) <= 0


@settings(max_examples=25, deadline=None)
@given(st.floats(-3.5, 0.9), st.floats(0.1, 6.0), st.floats(0.05, 1.5))
def test_analytic_vs_finite_difference_super(logr, theta, t):
    g = AngularGeometry(2, 32)
    params = ProblemParams(2, 0.2, 3.0, 2.0)
    env = SuperEnvelope(params, builtin_profile(g, "cosine", amplitude=0.3), SupersolutionParams(1.0))
    r = 10.0**logr
    a = strong_form_residual(env, r, theta, t)
    fd = strong_form_residual(env, r, theta, t, differentiation="finite_difference", h=1e-4)
    scale = abs(env.w_t(r, theta, t)) + abs(env.lap_wm(r, theta, t))
    assert abs(a - fd) < 1e-5 * scale


def test_fd_rejects_kink(sphere_case):
    params, alpha = sphere_case
    env = SubEnvelope(params, alpha, SubsolutionParams(6.0, 0.125, 2.0, 30.0))
    with pytest.raises(ValueError):
        strong_form_residual(env, env.rho(0.5), 0.3, 0.5, differentiation="fd", h=1e-3)
    with pytest.raises(TypeError):
        strong_form_residual(lambda r, th, t: r, 1.0, 0.0, 0.0)


def test_traveling_wave_constant():
    fit = derive_traveling_wave_constant(3, 0.6)
    assert fit.C == pytest.approx(traveling_wave_constant_closed_form(3, 0.6), rel=1e-12)
    assert fit.C == pytest.approx(1.8**2.5, rel=1e-12)
    assert fit.max_rel_residual < 1e-8


def test_traveling_wave_invariance_and_ray():
    w = TravelingWave(3, 0.6, C=2.0)
    x = np.array([[0.2, -0.1, 0.3]])
    for s in (0.1, 0.7):
        assert w(x + s * w.a, np.array([s])) == pytest.approx(w(x, np.array([0.0])), rel=1e-13)
    # the bracket vanishes on the ray behind the wave
    for eps in (1e-2, 1e-3, 1e-4):
        y = np.array([[eps, 0.0, -1.0]])
        assert w(y, np.array([0.0]))[0] > 0.1 * eps ** (-2 / (1 - 0.6))


def test_traveling_wave_rejects_low_m():
    with pytest.raises((ValueError, ConstantSelectionError)):
        traveling_wave_constant_closed_form(4, 0.2)


def test_squeeze_geometric_mean_and_violation(sphere_case):
    params, alpha = sphere_case
    sup = SupersolutionParams(1.0)
    sub = select_subsolution_constants(alpha, params)
    wp, wm = SuperEnvelope(params, alpha, sup), SubEnvelope(params, alpha, sub)
    gm = lambda r, th: np.sqrt(np.maximum(wm(r, th, 0.0), 1e-300) * wp(r, th, 0.0))  # noqa: E731
    assert squeeze_check(gm, alpha, sup, sub, params).passed
    big = lambda r, th: wp(r, th, 0.0) * (1 + 1e6 * (r > 10))  # noqa: E731
    rep = squeeze_check(big, alpha, sup, sub, params)
    assert not rep.passed
    assert rep.worst_upper["r"] > 10


def test_squeeze_a3_datum(circle_case):
    params, alpha = circle_case
    u0 = lambda r, th: (alpha(th) ** 0.2 * r ** (-0.6) + 1.0) ** 5  # noqa: E731
    sup = select_supersolution_constant(alpha, params)
    sub = select_subsolution_constants(alpha, params, u0)
    assert squeeze_check(u0, alpha, sup, sub, params).passed


def test_envelope_report_fields(circle_case):
    params, alpha = circle_case
    sup = select_supersolution_constant(alpha, params)
    sub = select_subsolution_constants(alpha, params)
    rep = envelope_report(alpha, params, sup, sub)
    assert rep["supersolution"]["A"] == sup.A
    assert rep["subsolution"]["residual_ok"]
    assert rep["subsolution"]["matching_jump_rel_err"] < 1e-10


def test_supersolution_asymptotic_identity(circle_case):
    params, alpha = circle_case
    env = SuperEnvelope(params, alpha, SupersolutionParams(1.0))
    r = np.logspace(-4, -2, 20)
    th = alpha.geometry.theta[3]
    lhs = env(r, th, 0.5) ** 0.2 * r ** 0.6 - alpha(th) ** 0.2
    rhs = np.exp(0.5) * r ** 0.2 + r**0.6
    np.testing.assert_allclose(lhs, rhs, rtol=1e-8)
