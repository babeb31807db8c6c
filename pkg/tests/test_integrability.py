from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdsing.angular import AngularGeometry, builtin_profile
from fdsing.envelopes import SubEnvelope, select_subsolution_constants, traveling_wave_constant_closed_form
from fdsing.integrability import (
    divergence_diagnosis,
    local_lp_mass,
    lp_schedule,
    snaking_threshold,
    traveling_wave_lp_mass,
)
from fdsing.regimes import ProblemParams, sphere_area


def _monomial_exact(n, gam, eps):
    if gam == n:
        return sphere_area(n) * np.log(1 / eps)
    return sphere_area(n) * (1 - eps ** (n - gam)) / (n - gam)


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("shift", [None, 0.0, 1.0, 0.5])
def test_monomials_are_exact(n, shift):
    gammas = [0.0, 1.0, n - 1.0] if shift is None else [n + shift]
    for gam in gammas:
        eps = 1e-3
        v = local_lp_mass(lambda r, th, t, g=gam: r ** (-g), 1, eps, n)
        assert v == pytest.approx(_monomial_exact(n, gam, eps), rel=1e-8)


def test_worked_examples_in_three_dimensions():
    eps = 1e-4
    v35 = local_lp_mass(lambda r, th, t: r**-3.5, 1, eps, 3)
    v3 = local_lp_mass(lambda r, th, t: r**-3.0, 1, eps, 3)
    assert v35 == pytest.approx(4 * np.pi * (eps**-0.5 - 1) / 0.5, rel=1e-8)
    assert v3 == pytest.approx(4 * np.pi * np.log(1 / eps), rel=1e-8)


def test_angular_weights_and_time_window():
    g = AngularGeometry(3, 16)
    u = lambda r, th, t: (1 + 0.5 * np.cos(th)) * (1 + t)
    v = local_lp_mass(u, 2, 0.1, 3, g, window=(0.0, 2.0))
    # int_0^2 (1+t)^2 dt * int_S (1 + .5 cos)^2 * int_.1^1 r^2 dr
    exact = (27 - 1) / 3 * (4 * np.pi * (1 + 0.25 / 3)) * (1 - 1e-3) / 3
    assert v == pytest.approx(exact, rel=1e-10)


def test_large_powers_do_not_overflow():
    v = local_lp_mass(lambda r, th, t: r**-40.0, 8, 1e-3, 3)
    assert v == np.inf or v > 1e300 or np.isfinite(v)
    assert not np.isnan(v)


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        local_lp_mass(lambda r, th, t: r, 0.5, 0.1, 3)
    with pytest.raises(ValueError):
        local_lp_mass(lambda r, th, t: r, 1, 2.0, 3)
    with pytest.raises(ValueError):
        divergence_diagnosis([1e-1, 1e-2, 1e-3, 1e-4], [1, 2, 3, 4])


@given(st.floats(min_value=0.3, max_value=2.5), st.floats(min_value=0.5, max_value=5.0))
@settings(max_examples=25, deadline=None)
def test_diagnosis_power_law(q, c):
    eps = lp_schedule(1e-2, 0.3, 10)
    r = divergence_diagnosis(eps, 1.0 + c * eps ** (-q))
    assert r.classification == "power_divergent"
    assert r.exponent == pytest.approx(q, rel=1e-4)


def test_diagnosis_log_and_finite():
    eps = lp_schedule(1e-2, 0.3, 10)
    assert divergence_diagnosis(eps, 2 + 3 * np.log(1 / eps)).classification == "log_divergent"
    assert divergence_diagnosis(eps, 5 - eps**0.7).classification == "finite"
    assert divergence_diagnosis(eps, 5 - 2 * eps**1.5).classification == "finite"


def test_diagnosis_ambiguous_on_noisy_data():
    rng = np.random.default_rng(0)
    eps = lp_schedule(1e-2, 0.5, 6)
    vals = 1 + 0.05 * eps**-0.1 + 0.2 * rng.standard_normal(eps.size)
    assert divergence_diagnosis(eps, vals).classification == "ambiguous"


@pytest.mark.parametrize("lam, expected", [(3.0, "log_divergent"), (3.5, "power_divergent")])
def test_subsolution_lp_classification(lam, expected, tmp_path):
    g = AngularGeometry(3, 16)
    alpha = builtin_profile(g, "constant")
    params = ProblemParams(3, 0.2, lam, 2.0)
    env = SubEnvelope(params, alpha, select_subsolution_constants(alpha, params))
    window = (0.0, params.q / env.sub.B)
    eps = lp_schedule()
    assert env.rho(window[1]) > eps[0]
    vals = [local_lp_mass(env, 1, e, 3, g, window=window) for e in eps]
    rep = divergence_diagnosis(eps, vals, p=1, region={"window": window})
    assert rep.classification == expected
    if expected == "power_divergent":
        assert rep.exponent == pytest.approx(0.5, rel=0.05)
    rep.to_json(tmp_path / "lp.json")
    rep.to_csv(tmp_path / "lp.csv")
    assert json.loads((tmp_path / "lp.json").read_text())["divergent"] is True


def test_bounded_field_is_finite():
    eps = lp_schedule(1e-2, 0.3, 8)
    vals = [local_lp_mass(lambda r, th, t: 1.0 + 0 * r, 2, e, 3) for e in eps]
    assert divergence_diagnosis(eps, vals).classification == "finite"


def test_traveling_wave_is_not_locally_integrable():
    C = traveling_wave_constant_closed_form(3, 0.6)
    eps = lp_schedule(1e-2, 0.5, 8)
    vals = [traveling_wave_lp_mass(C, 3, 0.6, 1, e, n_t=12, n_y=12) for e in eps]
    rep = divergence_diagnosis(eps, vals)
    assert rep.classification == "power_divergent"
    # the ray integrand behaves like |x'|^{n-1-2p/(1-m)}
    assert rep.exponent == pytest.approx(2 / 0.4 - 2, rel=0.02)


def test_traveling_wave_mass_scales_with_constant():
    a = traveling_wave_lp_mass(1.0, 3, 0.6, 1, 1e-2, n_t=8, n_y=8)
    b = traveling_wave_lp_mass(2.0, 3, 0.6, 1, 1e-2, n_t=8, n_y=8)
    assert b == pytest.approx(2 * a, rel=1e-12)


def test_snaking_threshold():
    s = snaking_threshold(3, 0.6)
    assert s.threshold == pytest.approx(0.4)
    assert s.no_p_at_least_one
    s = snaking_threshold(5, 0.2)
    assert s.threshold == pytest.approx(1.6) and not s.no_p_at_least_one
    with pytest.raises(ValueError):
        snaking_threshold(3, 1.0)
