"""Full nonlinear stepping: transport bounds, balances, trajectories."""

import numpy as np
import pytest

from rtlab import (
    Grid,
    NonlinearStepper,
    PhysicalParams,
    ScalarField,
    State,
    VelocityField,
    advect_density,
    analytic_mode,
    builtin_profile,
    density_bounds,
    dirichlet_form,
    norm_l2,
    run,
    sample_profile,
    state_norms,
)
from rtlab.lab import random_divergence_free
from rtlab.linear import LinearState, LinearStepper


def stream_function_velocity(grid, psi):
    """Exactly divergence-free MAC field from corner values of psi."""
    ux = (psi[:, 1:] - psi[:, :-1]) / grid.h[1]
    uz = -(psi[1:, :] - psi[:-1, :]) / grid.h[0]
    return VelocityField(grid, [ux, uz])


def windowed(t, lo=0.2, hi=0.8):
    w = np.zeros_like(t)
    m = (t > lo) & (t < hi)
    w[m] = np.sin(np.pi * (t[m] - lo) / (hi - lo)) ** 2
    return w


def test_advection_zero_velocity_is_identity(linear_profile):
    grid = Grid((12, 12), (1.0, 1.0))
    rho_bar, drho_bar = sample_profile(linear_profile, grid)
    rng = np.random.default_rng(3)
    pert = ScalarField(grid, 0.01 * rng.standard_normal(grid.n))
    out = advect_density(pert, VelocityField(grid), rho_bar, drho_bar, 0.01)
    # sweeps add and subtract the background, so exactness is up to roundoff
    np.testing.assert_allclose(out.values, pert.values, atol=1e-14)


def test_advection_preserves_constant_density():
    grid = Grid((12, 12), (1.0, 1.0))
    profile = builtin_profile("linear", {"a": 2.0, "b": 0.0, "height": 1.0})
    rho_bar, drho_bar = sample_profile(profile, grid)
    rng = np.random.default_rng(5)
    vel = random_divergence_free(grid, rng)
    vel = vel * (0.1 / vel.max_abs())
    out = advect_density(ScalarField(grid), vel, rho_bar, drho_bar, 0.01)
    np.testing.assert_allclose(out.values, 0.0, atol=1e-14)


def test_advection_rejects_large_cfl(linear_profile):
    grid = Grid((8, 8), (1.0, 1.0))
    rho_bar, drho_bar = sample_profile(linear_profile, grid)
    vel = VelocityField(grid)
    vel.components[0][1:-1, :] = 1.0
    with pytest.raises(ValueError, match="CFL"):
        advect_density(ScalarField(grid), vel, rho_bar, drho_bar, 1.0)


def test_density_bounds_include_wall_extension(linear_profile):
    grid = Grid((8, 8), (1.0, 1.0))
    rho_bar, drho_bar = sample_profile(linear_profile, grid)
    lo, hi = density_bounds(ScalarField(grid), rho_bar, drho_bar)
    # the background is linear, so the closure extrema are the wall values
    assert lo == pytest.approx(float(rho_bar.values.min())
                               - 0.5 * grid.h[1] * drho_bar.values.max())
    assert hi == pytest.approx(float(rho_bar.values.max())
                               + 0.5 * grid.h[1] * drho_bar.values.max())


def test_equilibrium_is_exact_fixed_point(linear_profile, params):
    grid = Grid((16, 16), (1.0, 1.0))
    stepper = NonlinearStepper(grid, linear_profile, params)
    st = stepper.zero_state()
    for _ in range(50):
        st, rep = stepper.step(st, stepper.dt_visc)
    assert norm_l2(st.rho_pert) == 0.0
    assert st.vel.max_abs() == 0.0
    assert rep.divergence_residual == 0.0


def test_transport_respects_closure_bounds(linear_profile, params):
    grid = Grid((16, 16), (1.0, 1.0))
    stepper = NonlinearStepper(grid, linear_profile, params)
    rng = np.random.default_rng(7)
    vel = random_divergence_free(grid, rng)
    vel = vel * (0.2 / vel.max_abs())
    x = grid.cell_centers(0)[:, None] * np.ones((1, 16))
    z = grid.cell_centers(1)[None, :] * np.ones((16, 1))
    pert = ScalarField(grid, 0.05 * np.sin(7 * x) * np.cos(5 * z))
    initial = State(0.0, pert, vel, ScalarField(grid))
    lo, hi = density_bounds(pert, stepper.rho_bar, stepper.drho_bar)
    summary = run(stepper, initial, 1.0)
    assert summary.failure is None
    assert summary.series("rho_min").min() >= lo - 1e-12
    assert summary.series("rho_max").max() <= hi + 1e-12


def test_divergence_residual_small_along_trajectory(growth_16):
    res = growth_16
    prob = res.problem
    stepper = NonlinearStepper(prob.grid, prob.profile, prob.params)
    mode = analytic_mode(res, 0.0)
    st = State(0.0, 0.01 * mode.rho_pert, 0.01 * mode.vel, ScalarField(prob.grid))
    for _ in range(25):
        st, rep = stepper.step(st, stepper.adaptive_dt(st))
        assert rep.divergence_residual <= 1e-8 * max(1.0, st.vel.max_abs())
        assert np.isfinite(rep.energy_residual)
        assert rep.rho_min > 0


def test_momentum_pure_diffusion_energy_decay(params):
    # constant background: no buoyancy coupling, velocity just diffuses
    grid = Grid((16, 16), (1.0, 1.0))
    profile = builtin_profile("linear", {"a": 1.5, "b": 0.0, "height": 1.0})
    stepper = NonlinearStepper(grid, profile, PhysicalParams(mu=0.05))
    nc = 17
    xc = np.linspace(0, 1, nc)[:, None]
    zc = np.linspace(0, 1, nc)[None, :]
    psi = 0.02 * np.sin(np.pi * xc) ** 2 * np.sin(np.pi * zc) ** 2
    vel = stream_function_velocity(grid, psi * np.ones((nc, nc)))
    st = State(0.0, ScalarField(grid), vel, ScalarField(grid))
    ke_prev = stepper.kinetic_energy(st)
    dt = 0.2 * stepper.dt_visc
    for k in range(30):
        st, rep = stepper.step(st, dt)
        ke = stepper.kinetic_energy(st)
        assert ke < ke_prev
        # dissipation-only balance within 5 percent
        drop = (ke_prev - ke) / dt
        diss = stepper.params.mu * dirichlet_form(st.vel)
        assert drop == pytest.approx(diss, rel=0.05)
        ke_prev = ke
    assert norm_l2(st.rho_pert) <= 1e-13


def test_linearization_consistency_one_step(linear_profile, params):
    grid = Grid((24, 24), (1.0, 1.0))
    nl = NonlinearStepper(grid, linear_profile, params)
    ls = LinearStepper(grid, linear_profile, params)
    nc = 25
    xc = np.linspace(0, 1, nc)[:, None]
    zc = np.linspace(0, 1, nc)[None, :]
    psi = (windowed(xc * np.ones((1, nc))) * windowed(zc * np.ones((nc, 1)))
           * np.sin(4 * np.pi * xc) * np.sin(3 * np.pi * zc))
    vel = stream_function_velocity(grid, psi)
    x = grid.cell_centers(0)[:, None] * np.ones((1, 24))
    z = grid.cell_centers(1)[None, :] * np.ones((24, 1))
    rho = windowed(x) * windowed(z) * np.sin(5 * x) * np.cos(4 * z)
    dt = 0.5 * nl.dt_visc
    lref = ls.step(LinearState(0.0, ScalarField(grid, rho), vel,
                               ScalarField(grid)), dt)
    ratios = []
    for delta in (1e-4, 1e-5, 1e-6):
        st = State(0.0, ScalarField(grid, delta * rho), delta * vel,
                   ScalarField(grid))
        nxt, _ = nl.step(st, dt)
        mismatch = np.sqrt(
            norm_l2(nxt.rho_pert - delta * lref.rho_pert) ** 2
            + norm_l2(nxt.vel - delta * lref.vel) ** 2
        )
        ratios.append(mismatch / delta**2)
    # second-order agreement: mismatch/delta^2 stays bounded as delta drops
    assert max(ratios) <= 2.0 * min(ratios) + 1e-9


def test_run_zero_data_gives_zero_trajectory(linear_profile, params):
    grid = Grid((12, 12), (1.0, 1.0))
    stepper = NonlinearStepper(grid, linear_profile, params)
    summary = run(stepper, stepper.zero_state(), 0.2)
    assert summary.failure is None
    assert summary.series("rho_l2").max() == 0.0
    assert summary.series("ud_l2").max() == 0.0


def test_run_records_failure_instead_of_raising(linear_profile, params):
    grid = Grid((12, 12), (1.0, 1.0))
    stepper = NonlinearStepper(grid, linear_profile, params)
    rng = np.random.default_rng(9)
    vel = random_divergence_free(grid, rng)
    vel = vel * (1.0 / vel.max_abs())
    st = State(0.0, ScalarField(grid), vel, ScalarField(grid))
    # a fixed dt far beyond the advective CFL must truncate, not crash
    summary = run(stepper, st, 1.0, dt_override=1.0)
    assert summary.failure is not None and "CFL" in summary.failure


def test_state_norms_fields(linear_profile, params):
    grid = Grid((10, 10), (1.0, 1.0))
    rng = np.random.default_rng(30)
    vel = random_divergence_free(grid, rng)
    st = State(0.0, ScalarField(grid, rng.standard_normal(grid.n)), vel,
               ScalarField(grid))
    ns = state_norms(st)
    assert set(ns) == {"rho_l2", "ud_l2", "uh_l2", "u_l2", "energy"}
    assert ns["u_l2"] == pytest.approx(
        np.hypot(ns["ud_l2"], ns["uh_l2"]), rel=1e-12)
    assert ns["energy"] >= ns["rho_l2"]
