from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdsing.angular import AngularGeometry, AngularProfile, builtin_profile
from fdsing.envelopes import (
    Stationary,
    SubEnvelope,
    SuperEnvelope,
    SupersolutionParams,
    select_subsolution_constants,
    select_supersolution_constant,
)
from fdsing.regimes import ProblemParams
from fdsing.solver import (
    BoundaryTrace,
    Field,
    RadialGrid,
    SolverConfig,
    SolverError,
    advance,
    fit_asymptotic_coefficient,
    initialize,
    manufactured_convergence,
    simulate,
)


def _sphere_setup(Ns=64, n_theta=1):
    params = ProblemParams(3, 0.2, 3.0, 2.0)
    g = AngularGeometry(3, n_theta)
    alpha = AngularProfile.constant(g)
    grid = RadialGrid.from_radii(1e-4, 1e2, Ns, g)
    return params, alpha, grid


def test_grid_rejects_nonpositive_rmin():
    with pytest.raises(ValueError):
        RadialGrid.from_radii(0.0, 1.0, 10, AngularGeometry(2, 4))


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(newton_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(bc_mode="free")


def test_initialize_envelope_exactly():
    params, alpha, grid = _sphere_setup()
    env = SuperEnvelope(params, alpha, SupersolutionParams(1.0))
    field, _ = initialize(lambda r, th: env(r, th, 0.0), grid)
    R, TH = grid.mesh()
    np.testing.assert_array_equal(field.values, env(R, TH, 0.0))


def test_initialize_power_fit():
    params, alpha, grid = _sphere_setup()
    u0 = lambda r, th: (r ** (-0.6) + 1.0) ** 5  # noqa: E731
    _, fit = initialize(u0, grid, m=params.m)
    assert fit.exponent == pytest.approx(params.m * params.lam, rel=1e-2)


def test_initialize_rejects_zero():
    _, _, grid = _sphere_setup()
    with pytest.raises(ValueError):
        initialize(lambda r, th: np.where(r > 1, 0.0, 1.0), grid)


def test_stationary_is_discrete_steady_state():
    g = AngularGeometry(3, 4)
    grid = RadialGrid.from_radii(1e-4, 1e2, 64, g)
    st_ = Stationary(1.0, 3, 0.6)
    field, _ = initialize(lambda r, th: st_(r), grid)
    cfg = SolverConfig(bc_mode="pin_asymptotic", newton_tol=1e-12)
    out, _ = advance(field, 0.05, cfg, 3, 0.6, BoundaryTrace(lambda r, th, t: st_(r)))
    assert np.max(np.abs(out.values / field.values - 1)) < 1e-12


@pytest.mark.parametrize("n, m", [(2, 0.5), (3, 0.3)])
def test_manufactured_order_two(n, m):
    study = manufactured_convergence(n=n, m=m)
    assert abs(study.observed_order - 2.0) < 0.2


def test_halving_path():
    params, alpha, grid = _sphere_setup(Ns=32)
    env = SuperEnvelope(params, alpha, SupersolutionParams(1.0))
    R, TH = grid.mesh()
    field = Field(grid, 0.0, 0.5 * env(R, TH, 0.0))
    cfg = SolverConfig(newton_max_iter=2, newton_tol=1e-12)
    out, info = advance(field, 5.0, cfg, 3, 0.2, BoundaryTrace(lambda r, th, t: env(r, th, t)))
    assert info.halvings > 0
    assert out.t == pytest.approx(5.0)
    assert np.all(out.values > 0)


def test_retry_budget_exhausted():
    params, alpha, grid = _sphere_setup(Ns=32)
    env = SuperEnvelope(params, alpha, SupersolutionParams(1.0))
    R, TH = grid.mesh()
    field = Field(grid, 0.0, 0.5 * env(R, TH, 0.0))
    cfg = SolverConfig(newton_max_iter=1, newton_tol=1e-14, max_halvings=2)
    with pytest.raises(SolverError) as exc:
        advance(field, 5.0, cfg, 3, 0.2, BoundaryTrace(lambda r, th, t: env(r, th, t)))
    assert "dt" in exc.value.diagnostics


def _constant_alpha_envelopes(params, alpha, u0):
    sup = select_supersolution_constant(alpha, params)
    sub = select_subsolution_constants(alpha, params, u0)
    return SuperEnvelope(params, alpha, sup), SubEnvelope(params, alpha, sub)


@pytest.mark.slow
def test_simulate_constant_alpha_sandwich():
    params, alpha, grid = _sphere_setup(Ns=256)
    u0 = lambda r, th: (r ** (-0.6) + r ** (-0.4) + 1.0) ** 5  # noqa: E731
    wp, wm = _constant_alpha_envelopes(params, alpha, u0)
    cfg = SolverConfig(t_end=1.0, dt_initial=1e-3, dt_max=5e-2)
    traj, rep = simulate(u0, grid, params, cfg, upper=wp, lower=wm)
    assert rep.passed and rep.max_violation < 1e-3
    assert traj.final.t == pytest.approx(1.0)


def test_simulate_from_upper_envelope_stays_below():
    params, alpha, grid = _sphere_setup(Ns=96)
    wp = SuperEnvelope(params, alpha, select_supersolution_constant(alpha, params))
    cfg = SolverConfig(t_end=0.3, dt_initial=1e-3, snapshot_times=(0.1, 0.2))
    traj, rep = simulate(lambda r, th: wp(r, th, 0.0), grid, params, cfg, upper=wp)
    assert max(rep.upper_violation) < 1e-3
    assert [round(t, 12) for t, _ in traj.snapshots] == [0.0, 0.1, 0.2, 0.3]


def test_simulate_zero_horizon():
    params, alpha, grid = _sphere_setup(Ns=32)
    wp = SuperEnvelope(params, alpha, SupersolutionParams(1.0))
    traj, rep = simulate(lambda r, th: wp(r, th, 0.0), grid, params, SolverConfig(t_end=0.0), upper=wp)
    assert len(traj.snapshots) == 1 and traj.steps == []


def test_fit_recovers_envelope_coefficient():
    params = ProblemParams(2, 0.2, 3.0, 2.0)
    g = AngularGeometry(2, 32)
    alpha = builtin_profile(g, "cosine", amplitude=0.3)
    env = SuperEnvelope(params, alpha, SupersolutionParams(1.0))
    grid = RadialGrid.from_radii(1e-4, 1e2, 256, g)
    R, TH = grid.mesh()
    fit = fit_asymptotic_coefficient(Field(grid, 1.0, env(R, TH, 1.0)), params, (0, 40))
    np.testing.assert_allclose(fit.alpha_hat.values, alpha.values, rtol=1e-8)
    assert fit.remainder_exponent == pytest.approx(-params.m * params.nu, rel=1e-6)
    assert not fit.ill_conditioned
    with pytest.raises(ValueError):
        fit_asymptotic_coefficient(Field(grid, 1.0, env(R, TH, 1.0)), params, (0, 2))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([2, 3]))
def test_discrete_comparison(seed, n):
    # the finite-volume angular operator keeps the implicit step monotone
    rng = np.random.default_rng(seed)
    g = AngularGeometry(n, 8)
    grid = RadialGrid.from_radii(1e-2, 1e1, 24, g)
    lo = np.exp(rng.uniform(-1, 1, (grid.Ns, grid.Nth)))
    hi = lo * np.exp(rng.uniform(0, 1, lo.shape))
    cfg = SolverConfig(bc_mode="pin_field", angular_scheme="fv", newton_tol=1e-13)
    a, _ = advance(Field(grid, 0.0, lo), 0.01, cfg, n, 0.4)
    b, _ = advance(Field(grid, 0.0, hi), 0.01, cfg, n, 0.4)
    assert np.all(b.values - a.values >= -1e-10 * b.values)


def test_harness_mass_conservation():
    g = AngularGeometry(2, 16)
    grid = RadialGrid(0.0, 3.0, 64, g)
    s = grid.s[:, None]
    w0 = 1.0 + 0.5 * np.exp(-((s - 1.5) ** 2)) * (1 + 0.3 * np.cos(g.theta))[None, :]
    field = Field(grid, 0.0, w0)
    cfg = SolverConfig(bc_mode="neumann", harness=True, newton_tol=1e-14)
    mass = lambda f: float(np.sum(f.values * g.weights[None, :]))  # noqa: E731
    m0 = mass(field)
    for _ in range(5):
        new, _ = advance(field, 0.01, cfg, 2, 0.5)
        assert abs(mass(new) - mass(field)) < 1e-10 * m0
        field = new
    assert not np.allclose(field.values, w0)


def test_dirichlet_mode_needs_trace():
    _, _, grid = _sphere_setup(Ns=16)
    field = Field(grid, 0.0, np.ones((16, 1)))
    with pytest.raises(ValueError):
        advance(field, 0.1, SolverConfig(bc_mode="pin_asymptotic"), 3, 0.2)


def test_snapshot_csv(tmp_path):
    _, _, grid = _sphere_setup(Ns=8)
    f = Field(grid, 0.0, np.arange(1, 9, dtype=float)[:, None])
    f.to_csv(tmp_path / "w.csv")
    data = np.loadtxt(tmp_path / "w.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(data[:, 0], grid.r)
    np.testing.assert_allclose(data[:, 1], np.arange(1, 9))
