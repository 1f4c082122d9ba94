"""Full perturbation dynamics: variable-density incompressible flow around
the stratified rest state.

One step is first-order splitting:
  1. advect the total density rho = pert + background with a dimension-split
     second-order upwind scheme (minmod limiter, local Courant correction,
     global-bounds failsafe clip), then subtract the background;
  2. momentum update: explicit second-order upwind advection, Crank-Nicolson
     viscosity with the updated density in the time term, explicit buoyancy
     from the new perturbation, incremental projection with coefficient
     1/(new total density).

The rest state (pert, u) = (0, 0) is an exact fixed point: buoyancy vanishes
and the hydrostatic balance never enters (the evolved pressure is the
perturbation only).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import assemble
from .grid import Grid, ScalarField, VelocityField
from .operators import (
    center_to_face,
    dirichlet_form,
    face_to_center,
    inner,
    norm_h2,
    norm_l2,
    vertical_cell_velocity,
)
from .profiles import DensityProfile, PhysicalParams, sample_profile
from .solvers import ConvergenceError, HelmholtzSolver, ProjectionSolver, pcg


@dataclass
class State:
    t: float
    rho_pert: ScalarField
    vel: VelocityField
    pressure: ScalarField


@dataclass
class StepReport:
    dt: float
    divergence_residual: float
    rho_min: float
    rho_max: float
    energy_residual: float
    pressure_iterations: int


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.where(np.abs(a) < np.abs(b), a, b)
    return np.where(a * b > 0.0, out, 0.0)


def _sweep(total, u, axis, h, dt, lo_ghost, hi_ghost):
    """One dimension-split advection sweep in incremental (gradient) form.

    u: full face array for this axis (wall faces are zero).  Ghost cell
    values are supplied by the caller.  Face states are upwind with a minmod
    slope and the local Courant correction; the update preserves constants
    and, with the caller's bounds clip, the running extrema.
    """
    def sl(s):
        idx = [slice(None)] * total.ndim
        idx[axis] = s
        return tuple(idx)

    ext = np.concatenate([lo_ghost, total, hi_ghost], axis=axis)
    dm = ext[sl(slice(1, -1))] - ext[sl(slice(None, -2))]
    dp = ext[sl(slice(2, None))] - ext[sl(slice(1, -1))]
    s = _minmod(dm, dp)  # limited one-cell increment, per cell

    nu = u * (dt / h)
    nu_int = nu[sl(slice(1, -1))]
    left = total[sl(slice(None, -1))]
    right = total[sl(slice(1, None))]
    s_left = s[sl(slice(None, -1))]
    s_right = s[sl(slice(1, None))]
    hat_int = np.where(
        nu_int >= 0.0,
        left + 0.5 * (1.0 - nu_int) * s_left,
        right - 0.5 * (1.0 + nu_int) * s_right,
    )
    hat = np.zeros_like(u)
    hat[sl(slice(1, -1))] = hat_int  # wall faces carry u = 0

    u_r, u_l = nu[sl(slice(1, None))], nu[sl(slice(None, -1))]
    hat_r, hat_l = hat[sl(slice(1, None))], hat[sl(slice(None, -1))]
    return total - (u_r * (hat_r - total) + u_l * (total - hat_l))


def density_bounds(
    rho_pert: ScalarField, rho_bar: ScalarField, drho_bar: ScalarField
) -> tuple[float, float]:
    """Invariant density interval for transport: extrema of the total density
    over the closed box.  Cell values sample the interior; the wall values are
    reached by extending the background slope half a cell beyond the last
    center, so the interval is taken over cells and wall extensions."""
    grid = rho_pert.grid
    dax = grid.d - 1
    h = grid.h[dax]
    total = rho_pert.values + rho_bar.values
    lo_wall = total.take([0], axis=dax) - 0.5 * h * drho_bar.values.take([0], axis=dax)
    hi_wall = total.take([-1], axis=dax) + 0.5 * h * drho_bar.values.take([-1], axis=dax)
    m = min(total.min(), lo_wall.min(), hi_wall.min())
    M = max(total.max(), lo_wall.max(), hi_wall.max())
    return float(m), float(M)


def advect_density(
    rho_pert: ScalarField,
    vel: VelocityField,
    rho_bar: ScalarField,
    drho_bar: ScalarField,
    dt: float,
    bounds: tuple[float, float] | None = None,
) -> ScalarField:
    """Transport the total density by vel for time dt; return the new
    perturbation.  Requires max|u| dt / min h <= 1/2.

    bounds, when given, is the invariant interval the total density is
    clipped to after each sweep (see density_bounds); the natural choice is
    the interval of the initial data of the whole run, which makes the
    min/max principle hold exactly over arbitrarily long trajectories.  By
    default the interval of the current input is used.
    """
    grid = rho_pert.grid
    cfl = vel.max_abs() * dt / min(grid.h)
    if cfl > 0.5 + 1e-12:
        raise ValueError(
            f"advection CFL {cfl:.3f} exceeds 0.5; reduce dt below "
            f"{0.5 * min(grid.h) / max(vel.max_abs(), 1e-300):.3e}"
        )
    if bounds is None:
        bounds = density_bounds(rho_pert, rho_bar, drho_bar)
    total = rho_pert.values + rho_bar.values
    dax = grid.d - 1
    for axis in range(grid.d):
        lo = total.take([0], axis=axis).copy()
        hi = total.take([-1], axis=axis).copy()
        if axis == dax:
            # extend the background slope through the wall; the perturbation
            # part of the ghost is mirrored (zero slope)
            h = grid.h[dax]
            lo -= h * drho_bar.values.take([0], axis=dax)
            hi += h * drho_bar.values.take([-1], axis=dax)
        total = _sweep(total, vel.components[axis], axis, grid.h[axis], dt, lo, hi)
        np.clip(total, bounds[0], bounds[1], out=total)
    return ScalarField(grid, total - rho_bar.values)


def _advection_term(vel: VelocityField) -> VelocityField:
    """(u . grad) u at the faces of each component, second-order upwind,
    odd-reflection ghosts (velocity vanishes on the walls)."""
    grid = vel.grid
    d = grid.d
    out = VelocityField(grid)
    for i in range(d):
        c = vel.components[i]
        acc = np.zeros_like(c)
        for a in range(d):
            if a == i:
                w = c
            else:
                # component a averaged to the faces of component i
                w = center_to_face(face_to_center(vel.components[a], a), i)
            ext = _odd_extend(c, a, own=(a == i))
            acc += _upwind_deriv(ext, w, a, grid.h[a])
        out.components[i] = acc
    out.enforce_noslip()
    return out


def _odd_extend(c: np.ndarray, axis: int, own: bool) -> np.ndarray:
    """Two ghost layers by odd reflection.  Along the component's own axis
    the wall value sits on the grid (reflect through index 0); tangentially
    the wall is midway to the first sample (reflect across the half cell)."""
    def sl(s):
        idx = [slice(None)] * c.ndim
        idx[axis] = s
        return tuple(idx)

    if own:
        lo = -c[sl(slice(2, 0, -1))]
        hi = -c[sl(slice(-2, -4, -1))]
    else:
        lo = -c[sl(slice(1, None, -1))]
        hi = -c[sl(slice(None, -3, -1))]
    return np.concatenate([lo, c, hi], axis=axis)


def _upwind_deriv(ext: np.ndarray, w: np.ndarray, axis: int, h: float) -> np.ndarray:
    """w * dc/dx_axis with a 3-point one-sided difference biased against w."""
    def sl(s):
        idx = [slice(None)] * ext.ndim
        idx[axis] = s
        return tuple(idx)

    c0 = ext[sl(slice(2, -2))]
    cm1, cm2 = ext[sl(slice(1, -3))], ext[sl(slice(0, -4))]
    cp1, cp2 = ext[sl(slice(3, -1))], ext[sl(slice(4, None))]
    fwd = (3.0 * c0 - 4.0 * cm1 + cm2) / (2.0 * h)
    bwd = (-3.0 * c0 + 4.0 * cp1 - cp2) / (2.0 * h)
    return w * np.where(w >= 0.0, fwd, bwd)


class NonlinearStepper:
    """Owns grid-, profile- and dt-keyed solver caches for one trajectory."""

    def __init__(self, grid: Grid, profile: DensityProfile, params: PhysicalParams):
        self.grid = grid
        self.params = params
        self.rho_bar, self.drho_bar = sample_profile(profile, grid)
        self.ops = assemble.for_grid(grid)
        self.space = self.ops.space
        self.rho_bar_faces = self.ops.face_weights(self.rho_bar.values)
        # background-coefficient factorizations; per step the true density is
        # a perturbation of these, handled by preconditioned CG
        self.projection = ProjectionSolver(grid, 1.0 / self.rho_bar_faces)
        self._helmholtz: dict[float, HelmholtzSolver] = {}
        self.dt_visc = (
            0.25 * min(grid.h) ** 2 * float(self.rho_bar.values.min()) / params.mu
        )
        self.solver_tol = 1e-12

    def zero_state(self) -> State:
        return State(
            0.0, ScalarField(self.grid), VelocityField(self.grid), ScalarField(self.grid)
        )

    def _background_helmholtz(self, dt: float) -> HelmholtzSolver:
        hs = self._helmholtz.get(dt)
        if hs is None:
            hs = HelmholtzSolver(self.grid, self.rho_bar_faces, dt, self.params.mu)
            self._helmholtz[dt] = hs
        return hs

    def adaptive_dt(self, state: State) -> float:
        advective = 0.4 * min(self.grid.h) / max(state.vel.max_abs(), 1e-12)
        return min(advective, self.dt_visc)

    def momentum_step(self, state: State, rho_new: ScalarField, dt: float):
        """Velocity/pressure update given the already-advected density.

        Returns (velocity, pressure, solver iteration count)."""
        mu, g = self.params.mu, self.params.g
        total = rho_new.values + self.rho_bar.values
        if total.min() <= 0.0:
            raise ConvergenceError("total density lost positivity")
        rho_f = self.ops.face_weights(total)
        u = self.space.pack(state.vel)
        q = state.pressure.values.ravel()

        adv = self.space.pack(_advection_term(state.vel))
        rhs = (rho_f / dt) * u - rho_f * adv + 0.5 * mu * (self.ops.L @ u)
        rhs -= self.ops.G @ q
        dax = self.grid.d - 1
        voff = self.space.offsets[dax]
        rhs[voff:] -= g * (self.ops.T[dax].T @ rho_new.values.ravel())

        bg = self._background_helmholtz(dt)
        helm = lambda x: (rho_f / dt) * x - 0.5 * mu * (self.ops.L @ x)
        u_star, it_h = pcg(
            helm, rhs, bg.solve, tol=self.solver_tol, maxiter=500, x0=u
        )

        # incremental projection with coefficient 1/(new total density)
        c = 1.0 / rho_f
        b = -(self.ops.D @ u_star) / dt
        apply_pois = lambda x: -(self.ops.D @ (c * (self.ops.G @ x)))

        # the pinned factorization of -D c_bar G is symmetric positive
        # definite, so it is a valid CG preconditioner as is; the gauge is
        # fixed after the solve
        def precond(r):
            return -self.projection.lu.solve(r)

        # absolute floor tied to the velocity scale: once the divergence
        # defect is negligible against |u*|/(dt h) the projection is converged
        floor = (
            self.solver_tol
            * float(np.linalg.norm(u_star))
            / (dt * min(self.grid.h))
        )
        phi, it_p = pcg(
            apply_pois, b, precond, tol=self.solver_tol, maxiter=500, atol=floor
        )
        phi -= np.mean(phi)
        u_new = u_star - dt * c * (self.ops.G @ phi)
        q_new = q + phi
        q_new -= np.mean(q_new)

        vel = self.space.unpack(u_new)
        pressure = ScalarField(self.grid, q_new.reshape(self.grid.n))
        return vel, pressure, it_h + it_p

    def step(
        self,
        state: State,
        dt: float,
        bounds: tuple[float, float] | None = None,
    ) -> tuple[State, StepReport]:
        rho_new = advect_density(
            state.rho_pert, state.vel, self.rho_bar, self.drho_bar, dt, bounds
        )
        vel, pressure, iters = self.momentum_step(state, rho_new, dt)
        new = State(state.t + dt, rho_new, vel, pressure)
        total = rho_new.values + self.rho_bar.values
        div = norm_l2(
            ScalarField(self.grid, (self.ops.D @ self.space.pack(vel)).reshape(self.grid.n))
        )
        report = StepReport(
            dt=dt,
            divergence_residual=float(div),
            rho_min=float(total.min()),
            rho_max=float(total.max()),
            energy_residual=self.energy_balance_residual(state, new, dt),
            pressure_iterations=iters,
        )
        return new, report

    def kinetic_energy(self, state: State) -> float:
        total = state.rho_pert.values + self.rho_bar.values
        rho_f = self.ops.face_weights(total)
        u = self.space.pack(state.vel)
        return 0.5 * float(u @ (rho_f * u)) * self.grid.cell_volume

    def energy_balance_residual(self, before: State, after: State, dt: float) -> float:
        """Defect of the discrete energy identity
        d/dt KE + mu |grad u|^2 + g <pert, u_d> = 0, evaluated at the end of
        the step; first-order small in dt on smooth trajectories."""
        ke0, ke1 = self.kinetic_energy(before), self.kinetic_energy(after)
        dissipation = self.params.mu * dirichlet_form(after.vel)
        buoy = self.params.g * inner(
            after.rho_pert, ScalarField(self.grid, vertical_cell_velocity(after.vel))
        )
        resid = (ke1 - ke0) / dt + dissipation + buoy
        return float(abs(resid) / max(1.0, ke1 / dt))


@dataclass
class TrajectoryRow:
    t: float
    rho_l2: float
    ud_l2: float
    uh_l2: float
    energy: float
    rho_min: float
    rho_max: float
    energy_residual: float
    dt: float


@dataclass
class TrajectorySummary:
    rows: list[TrajectoryRow] = field(default_factory=list)
    failure: str | None = None
    final_state: State | None = None

    @property
    def times(self):
        return np.array([r.t for r in self.rows])

    def series(self, name: str):
        return np.array([getattr(r, name) for r in self.rows])


def state_norms(state: State) -> dict:
    grid = state.vel.grid
    dax = grid.d - 1
    uh_sq = 0.0
    for i in range(dax):
        comp = VelocityField(grid)
        comp.components[i] = state.vel.components[i]
        uh_sq += norm_l2(comp) ** 2
    ud = VelocityField(grid)
    ud.components[dax] = state.vel.components[dax]
    return {
        "rho_l2": norm_l2(state.rho_pert),
        "ud_l2": norm_l2(ud),
        "uh_l2": float(np.sqrt(uh_sq)),
        "u_l2": norm_l2(state.vel),
        "energy": float(
            np.sqrt(norm_l2(state.rho_pert) ** 2 + norm_h2(state.vel) ** 2)
        ),
    }


def run(
    stepper: NonlinearStepper,
    initial: State,
    tmax: float,
    max_steps: int = 2_000_000,
    dt_override: float | None = None,
    observer=None,
) -> TrajectorySummary:
    """March to tmax with adaptive dt (CFL 0.4 with a viscous cap) or a
    fixed dt; record norms, extrema and energy residuals each step.  Solver
    failure truncates the trajectory and is recorded, not raised."""
    summary = TrajectorySummary()
    state = initial
    last_report = None

    def record(rep: StepReport | None):
        ns = state_norms(state)
        summary.rows.append(
            TrajectoryRow(
                t=state.t,
                rho_l2=ns["rho_l2"],
                ud_l2=ns["ud_l2"],
                uh_l2=ns["uh_l2"],
                energy=ns["energy"],
                rho_min=rep.rho_min if rep else float("nan"),
                rho_max=rep.rho_max if rep else float("nan"),
                energy_residual=rep.energy_residual if rep else 0.0,
                dt=rep.dt if rep else 0.0,
            )
        )
        if observer is not None:
            observer(state, rep)

    total0 = stepper.rho_bar.values + initial.rho_pert.values
    first = StepReport(0.0, 0.0, float(total0.min()), float(total0.max()), 0.0, 0)
    record(first)
    # one invariant interval for the whole trajectory: the min/max principle
    # is then exact relative to the initial data
    bounds = density_bounds(initial.rho_pert, stepper.rho_bar, stepper.drho_bar)
    steps = 0
    while state.t < tmax - 1e-12 * max(1.0, tmax) and steps < max_steps:
        dt = dt_override if dt_override is not None else stepper.adaptive_dt(state)
        dt = min(dt, tmax - state.t)
        try:
            state, last_report = stepper.step(state, dt, bounds)
        except (ConvergenceError, ValueError, FloatingPointError) as exc:
            summary.failure = f"step failed at t = {state.t:.6g}: {exc}"
            break
        record(last_report)
        steps += 1
    if steps >= max_steps and state.t < tmax:
        summary.failure = f"step budget exhausted at t = {state.t:.6g}"
    summary.final_state = state
    return summary
