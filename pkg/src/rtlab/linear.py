"""Linearized dynamics around the stratified rest state.

The semi-discrete system is

    sigma_t = -rho_bar' * u_d          (cell centers, u_d averaged to cells)
    rho_bar u_t = -grad q + mu lap u - g sigma e_d,   div u = 0, no-slip

and the time stepper is first-order splitting: explicit density transport,
then Crank-Nicolson viscosity with the new buoyancy and the lagged pressure
gradient, closed by a density-weighted incremental projection.  The grown
eigenmode e^{Lambda t} (sigma~, v~, p~) solves the semi-discrete system
exactly, so deviation under stepping measures pure time-discretization error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import assemble
from .grid import Grid, ScalarField, VelocityField
from .growth import GrowthRateResult
from .operators import face_to_center, norm_l2
from .profiles import DensityProfile, PhysicalParams, sample_profile
from .solvers import HelmholtzSolver, ProjectionSolver


@dataclass
class LinearState:
    t: float
    rho_pert: ScalarField
    vel: VelocityField
    pressure: ScalarField


def analytic_mode(result: GrowthRateResult, t: float) -> LinearState:
    """The grown eigenmode e^{Lambda t} (-rho_bar' v_d / Lambda, v, p)."""
    if result.lambda_ <= 0:
        raise ValueError("analytic mode requires a positive growth rate")
    prob = result.problem
    lam = result.lambda_
    dax = prob.grid.d - 1
    amp = float(np.exp(lam * t))
    vd_cells = face_to_center(result.eigenfield.components[dax], dax)
    sigma = ScalarField(prob.grid, -prob.drho_bar.values * vd_cells / lam)
    return LinearState(
        t=t,
        rho_pert=amp * sigma,
        vel=amp * result.eigenfield,
        pressure=amp * result.pressure,
    )


class LinearStepper:
    """Owns the factorized solvers for one grid/profile/params triple."""

    def __init__(self, grid: Grid, profile: DensityProfile, params: PhysicalParams):
        self.grid = grid
        self.params = params
        self.rho_bar, self.drho_bar = sample_profile(profile, grid)
        self.ops = assemble.for_grid(grid)
        self.space = self.ops.space
        self.rho_faces = self.ops.face_weights(self.rho_bar.values)
        self.projection = ProjectionSolver(grid, 1.0 / self.rho_faces)
        dax = grid.d - 1
        self._Td = self.ops.T[dax]
        self._voff = self.space.offsets[dax]
        self._helmholtz: dict[float, HelmholtzSolver] = {}
        # explicit transport and CN viscosity both want a diffusive guard
        self.dt_max = (
            0.25 * min(grid.h) ** 2 * float(self.rho_bar.values.min()) / params.mu
        )

    def _solver_for(self, dt: float) -> HelmholtzSolver:
        hs = self._helmholtz.get(dt)
        if hs is None:
            hs = HelmholtzSolver(self.grid, self.rho_faces, dt, self.params.mu)
            self._helmholtz[dt] = hs
        return hs

    def step(self, state: LinearState, dt: float) -> LinearState:
        if dt <= 0:
            raise ValueError("dt must be positive")
        if dt > self.dt_max * (1 + 1e-12):
            raise ValueError(
                f"dt = {dt:.3e} exceeds the diffusive guard "
                f"0.25 h^2 min(rho)/mu = {self.dt_max:.3e}"
            )
        g = self.params.g
        dax = self.grid.d - 1
        u = self.space.pack(state.vel)
        q = state.pressure.values.ravel()

        ud_cells = face_to_center(state.vel.components[dax], dax)
        sigma = state.rho_pert.values - dt * self.drho_bar.values * ud_cells

        rhs = (self.rho_faces / dt) * u + 0.5 * self.params.mu * (self.ops.L @ u)
        rhs -= self.ops.G @ q
        rhs[self._voff :] -= g * (self._Td.T @ sigma.ravel())
        u_star = self._solver_for(dt).solve(rhs)

        phi = self.projection.solve_pressure((self.ops.D @ u_star) / dt)
        u_new = u_star - dt * (1.0 / self.rho_faces) * (self.ops.G @ phi)
        q_new = q + phi - np.mean(q + phi)

        vel = self.space.unpack(u_new)
        return LinearState(
            t=state.t + dt,
            rho_pert=ScalarField(self.grid, sigma),
            vel=vel,
            pressure=ScalarField(self.grid, q_new.reshape(self.grid.n)),
        )

    def zero_state(self) -> LinearState:
        return LinearState(
            0.0, ScalarField(self.grid), VelocityField(self.grid), ScalarField(self.grid)
        )


def evolve(
    stepper: LinearStepper,
    state: LinearState,
    t_end: float,
    dt: float,
    record=None,
) -> LinearState:
    """March to t_end in uniform steps (last one shortened); call
    record(state) after every step if given."""
    if record is not None:
        record(state)
    while state.t < t_end - 1e-12 * max(1.0, t_end):
        step_dt = min(dt, t_end - state.t)
        state = stepper.step(state, step_dt)
        if record is not None:
            record(state)
    return state


def state_deviation(a: LinearState, b: LinearState) -> float:
    """L2 distance over (density perturbation, velocity); pressure excluded."""
    dr = norm_l2(a.rho_pert - b.rho_pert)
    du = norm_l2(a.vel - b.vel)
    return float(np.sqrt(dr * dr + du * du))


def perturbation_norm(state) -> float:
    return float(
        np.sqrt(norm_l2(state.rho_pert) ** 2 + norm_l2(state.vel) ** 2)
    )


def measured_growth_rate(series) -> float:
    """Least-squares slope of log(value) against t over the last half.

    series: iterable of (t, value) with strictly increasing t and value > 0.
    """
    pts = list(series)
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    t = np.array([p[0] for p in pts], dtype=float)
    v = np.array([p[1] for p in pts], dtype=float)
    if np.any(v <= 0):
        raise ValueError("values must be positive")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    k = len(pts) // 2
    tt, lv = t[k:], np.log(v[k:])
    if len(tt) < 2 or tt[-1] == tt[0]:
        raise ValueError("degenerate fitting window")
    return float(np.polyfit(tt, lv, 1)[0])
