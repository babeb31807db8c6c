from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from fdsing.angular import AngularGeometry, AngularProfile
from fdsing.critical import (
    CriticalFlowError,
    evolve_critical,
    fixed_point,
    hamiltonian_energy,
    linear_period,
    orbit_sweep,
    period_curve,
    separable_solution,
    trace_orbit,
)
from fdsing.envelopes import AlphaTilde

A = C = -0.25
M = 0.2


def _period_oracle(b0):
    """Period of the orbit through (b0, 0) by quadrature of dt = db / v."""
    V = lambda b: 0.5 * A * b * b - C * b**6 / 6  # noqa: E731
    E = V(b0)
    b1 = brentq(lambda b: V(b) - E, 1e-9, 1.0 - 1e-12)
    c, d = 0.5 * (b0 + b1), 0.5 * (b0 - b1)
    f = lambda ph: d * np.cos(ph) / np.sqrt(2 * (E - V(c + d * np.sin(ph))))  # noqa: E731
    return 2 * quad(f, -np.pi / 2, np.pi / 2, limit=200)[0]


def test_constant_data_follows_alpha_tilde():
    g = AngularGeometry(3, 16)
    tr = evolve_critical(AngularProfile.constant(g, 1.0), 3, 0.5, 1.0, 0.05)
    assert tr.A == pytest.approx(2.0)
    exact = AlphaTilde(tr.A, 1.0, 0.5)
    for s in tr.states:
        assert np.max(np.abs(s.profile.values / exact(s.t) - 1)) < 1e-6
    assert tr.times[-1] == pytest.approx(1.0)


def test_zero_horizon_returns_initial_state():
    g = AngularGeometry(2, 16)
    a0 = AngularProfile.from_function(g, lambda th: 1 + 0.2 * np.cos(th))
    tr = evolve_critical(a0, 2, 0.5, 0.0, 0.1)
    assert len(tr.states) == 1 and tr.states[0].profile is a0


def test_flow_preserves_mean_decay_law_on_circle():
    # on S^1 with A > 0 the mean of alpha^m drives growth; LB leaves the mean of alpha^m untouched
    g = AngularGeometry(2, 32)
    a0 = AngularProfile.from_function(g, lambda th: 1 + 0.2 * np.cos(th))
    tr = evolve_critical(a0, 2, 0.5, 0.5, 0.05)
    v = tr.values()
    dmean = np.gradient(v.mean(axis=1), tr.times)
    rhs = tr.A * (v**0.5).mean(axis=1)
    assert np.allclose(dmean[1:-1], rhs[1:-1], rtol=5e-3)


def test_vanishing_data_reports_blowdown_time():
    # n=3, m=0.2 gives A = -0.25; constant data vanish at t* = t0 / ((1-m)|A|)
    g = AngularGeometry(3, 8)
    with pytest.raises(CriticalFlowError) as info:
        evolve_critical(AngularProfile.constant(g, 1.0), 3, 0.2, 10.0, 0.05)
    assert info.value.blowdown_estimate == pytest.approx(1.0 / (0.8 * 0.25), rel=0.05)


def test_hamiltonian_energy_values():
    assert hamiltonian_energy(1.0, 0.0, A, C, M) == pytest.approx(-0.125 + 0.25 / 6)
    assert hamiltonian_energy(1.3, 0.4, A, C, M) == hamiltonian_energy(1.3, -0.4, A, C, M)
    with pytest.raises(ValueError):
        hamiltonian_energy(0.0, 0.1, A, C, M)


def test_fixed_point_and_linear_period():
    assert fixed_point(A, C, M) == pytest.approx(1.0)
    assert linear_period(A, C, M) == pytest.approx(2 * np.pi)
    assert linear_period(0.25, 0.25, M) == np.inf
    o = trace_orbit((1.0, 0.0), A, C, M)
    assert o.status == "degenerate" and o.period == pytest.approx(2 * np.pi)


@pytest.mark.parametrize("b0", [1.01, 1.2, 1.3])
def test_orbit_period_matches_quadrature(b0):
    o = trace_orbit((b0, 0.0), A, C, M)
    assert o.status == "closed" and o.candidate
    assert o.closure_error < 1e-8
    assert o.period == pytest.approx(_period_oracle(b0), rel=1e-7)


def test_small_amplitude_period_tends_to_two_pi():
    o = trace_orbit((1.001, 0.0), A, C, M)
    assert o.period == pytest.approx(2 * np.pi, rel=0.01)


def test_energy_drift_is_tiny():
    o = trace_orbit((1.2, 0.0), A, C, M, n_returns=3)
    assert o.energy_drift < 1e-10
    assert o.energy_oscillation < 1e-8


def test_off_section_start():
    o = trace_orbit((1.0, 0.1), A, C, M)
    assert o.status == "closed"
    E = hamiltonian_energy(1.0, 0.1, A, C, M)
    assert o.energy == pytest.approx(E)


def test_orbit_crossing_zero_is_not_a_candidate():
    o = trace_orbit((1.5, 0.0), A, C, M)
    assert o.status == "positivity_lost" and not o.candidate


def test_no_closed_orbits_when_A_positive():
    rng = np.random.default_rng(5)
    starts = [(1.0 + rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)) for _ in range(100)]
    orbits = orbit_sweep(starts, 0.25, 0.25, 0.2, max_time=20.0)
    assert not any(o.status == "closed" for o in orbits)


def test_period_curve_increases_with_amplitude():
    rows = period_curve([1.02, 1.1, 1.2, 1.3], A, C, M, h=1e-3)
    periods = [r["period"] for r in rows]
    assert all(np.diff(periods) > 0)
    assert periods[0] > 2 * np.pi


def test_separable_residual_from_orbit():
    o = trace_orbit((1.2, 0.0), A, C, M)
    sep = separable_solution(o.profile(256), C, 1.0, 2, M, A=A)
    rng = np.random.default_rng(0)
    th = rng.uniform(0, o.period, 1000)
    t = rng.uniform(0, 1, 1000)
    assert np.max(np.abs(sep.residual(th, t))) < 1e-6


def test_separable_fixed_point_reduces_to_alpha_tilde():
    g = AngularGeometry(3, 8)
    Acrit = 2.0  # n=3, m=0.5
    b = fixed_point(Acrit, 1.0, 0.5)
    sep = separable_solution(AngularProfile.constant(g, b), 1.0, 1.0, 3, 0.5)
    assert np.max(np.abs(sep.residual(g.theta, 0.3))) < 1e-13
    tilde = AlphaTilde(Acrit, 1.0 * b ** ((1 - 0.5) / 0.5), 0.5)
    # tau beta^{1/m} with C=1 equals alpha tilde after absorbing beta into t0
    assert sep(g.theta, 0.0)[0] == pytest.approx(b**2)
    assert tilde(0.0) == pytest.approx(b**2)


@given(st.floats(min_value=0.05, max_value=0.9), st.floats(min_value=0.1, max_value=2), st.floats(min_value=0.5, max_value=2), st.booleans())
@settings(max_examples=30, deadline=None)
def test_tau_identity(m, C, t0, negative):
    g = AngularGeometry(2, 8)
    C = -C if negative else C
    sep = separable_solution(AngularProfile.constant(g, 1.0), C, t0, 2, m, A=C)
    t = np.linspace(0, 0.2 * t0 / (1 + abs(C)), 5)
    assert sep.tau_identity_error(t) < 1e-6


def test_sign_mismatch_warns():
    g = AngularGeometry(2, 8)
    with pytest.warns(RuntimeWarning):
        separable_solution(AngularProfile.constant(g, 1.0), 1.0, 1.0, 2, 0.2, A=-0.25)
