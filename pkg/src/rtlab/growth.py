"""Growth rate of the unstable stratification by the penalized-quotient method.

For each penalty s >= 0, alpha(s) is the largest value of

    ( g * int rho' w_d^2  -  s * mu * int |grad w|^2 ) / int rho |w|^2

over discretely divergence-free velocity fields with no-slip walls.  The
growth rate is the positive root of  s^2 = alpha(s), located by bisection
(alpha is nonincreasing in s, so the root is unique when alpha(0) > 0).

The maximizer for each s comes from a shifted power iteration projected onto
the divergence-free subspace; the projection is orthogonal in the
density-weighted inner product, which keeps the iterated operator
self-adjoint on the constraint subspace.  A dense reduced-pencil oracle
(oracle_alpha_dense) provides an independent cross-check on small grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assemble
from .grid import Grid, ScalarField, VelocityField
from .operators import (
    center_to_face,
    divergence,
    face_to_center,
    gradient,
    laplacian_dirichlet,
    norm_l2,
    weighted_inner,
)
from .profiles import DensityProfile, PhysicalParams, sample_profile
from .solvers import ConvergenceError, ProjectionSolver

_SEED = 12345
_MAX_POWER_ITERS = 20000


class VariationalProblem:
    """Grid, sampled density data, and cached solver structures."""

    def __init__(
        self,
        grid: Grid,
        profile: DensityProfile,
        params: PhysicalParams,
        power_tol: float = 1e-9,
        fp_tol: float = 1e-13,
    ):
        self.grid = grid
        self.profile = profile
        self.params = params
        self.power_tol = power_tol
        self.fp_tol = fp_tol
        self.rho_bar, self.drho_bar = sample_profile(profile, grid)

        ops = assemble.for_grid(grid)
        self.ops = ops
        self.space = ops.space
        self.rho_faces = ops.face_weights(self.rho_bar.values)
        dax = grid.d - 1
        Td = ops.T[dax]  # vertical faces -> cells averaging
        drho_diag = sp.diags(self.drho_bar.values.ravel())
        buoy_block = params.g * (Td.T @ drho_diag @ Td)
        n = self.space.size
        lo = self.space.offsets[dax]
        # embed the vertical-component block into the full packed space
        self.A = sp.bmat(
            [
                [sp.csr_matrix((lo, lo)), None],
                [None, buoy_block],
            ],
            format="csr",
        )
        assert self.A.shape == (n, n)
        self.sL = ops.L  # vector Laplacian; the form s*mu*|grad w|^2 is -mu<Lw,w>
        self.projection = ProjectionSolver(grid, 1.0 / self.rho_faces)
        self._lap_gershgorin = 4.0 * sum(1.0 / h**2 for h in grid.h)
        self._warm: np.ndarray | None = None

    # -- quadratic forms on packed vectors ---------------------------------

    def apply_K(self, w: np.ndarray, s: float) -> np.ndarray:
        """(A - s B) w with B = mu * (negative Laplacian)."""
        return self.A @ w + (s * self.params.mu) * (self.sL @ w)

    def rayleigh(self, w: np.ndarray, s: float) -> float:
        return float(w @ self.apply_K(w, s)) / float(w @ (self.rho_faces * w))

    def shift(self, s: float) -> float:
        rf_min = float(self.rho_faces.min())
        # wall faces never enter the packed space, so rf_min > 0
        return (
            self.params.g * float(np.abs(self.drho_bar.values).max()) / rf_min
            + s * self.params.mu * self._lap_gershgorin / rf_min
        )

    def m_normalize(self, w: np.ndarray) -> np.ndarray:
        nrm = np.sqrt(float(w @ (self.rho_faces * w)) * self.grid.cell_volume)
        return w / nrm

    def seed_vector(self) -> np.ndarray:
        rng = np.random.default_rng(_SEED)
        w = rng.standard_normal(self.space.size)
        return self.m_normalize(self.projection.project(w))

    def to_field(self, w: np.ndarray) -> VelocityField:
        return self.space.unpack(w)


@dataclass
class AlphaResult:
    value: float
    maximizer: np.ndarray  # packed, density-normalized
    iterations: int
    residual: float


def alpha(
    prob: VariationalProblem, s: float, warm_start: np.ndarray | None = None
) -> AlphaResult:
    """Largest penalized quotient at penalty s, with its maximizer.

    Iterates the projected shifted operator P M^-1 (K + sigma M) P in the
    symmetrized coordinates y = M^{1/2} w, where it is a plain symmetric
    matrix with the constrained spectrum (shifted) plus a zero block; the
    leading eigenpair is extracted by Lanczos iteration, which handles the
    tightly clustered top of the spectrum that defeats single-vector power
    steps.  The returned value is the exact Rayleigh quotient of the
    maximizer, verified against a density-weighted residual."""
    if s < 0:
        raise ValueError("penalty s must be nonnegative")
    sigma = prob.shift(s)
    rf = prob.rho_faces
    root = np.sqrt(rf)
    n = prob.space.size
    count = {"matvecs": 0}

    def hv(y):
        count["matvecs"] += 1
        x = prob.projection.project(y / root)
        z = prob.apply_K(x, s) + sigma * (rf * x)
        return root * prob.projection.project(z / rf)

    op = spla.LinearOperator((n, n), matvec=hv, dtype=float)
    w0 = warm_start if warm_start is not None else prob.seed_vector()
    if warm_start is not None:
        # keep the start vector from being deficient in the new top branch
        # when eigenvalue curves cross between nearby penalties
        w0 = w0 + 1e-3 * np.linalg.norm(w0) * prob.seed_vector()
    v0 = root * prob.projection.project(w0)
    k = min(4, n - 2)
    try:
        vals, vecs = spla.eigsh(op, k=k, which="LA", v0=v0, tol=0,
                                ncv=min(n - 1, max(2 * k + 1, 40)),
                                maxiter=_MAX_POWER_ITERS)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(
            f"eigen iteration did not converge at s={s}: {exc}"
        ) from exc
    top = int(np.argmax(vals))
    w = prob.m_normalize(prob.projection.project(vecs[:, top] / root))
    theta = prob.rayleigh(w, s)
    r = prob.projection.project(prob.apply_K(w, s) / rf) - theta * w
    residual = float(np.sqrt(float(r @ (rf * r)) * prob.grid.cell_volume))
    if residual > 1e3 * prob.power_tol * max(1.0, abs(theta)):
        raise ConvergenceError(
            f"maximizer residual {residual:.3e} too large at s={s}",
            residual=residual,
        )
    return AlphaResult(theta, w, count["matvecs"], residual)


def oracle_alpha_dense(prob: VariationalProblem, s: float) -> float:
    """Independent dense route: probe the field operators column by column,
    build an explicit basis of the divergence-free subspace, and solve the
    reduced symmetric generalized eigenproblem."""
    n = prob.space.size
    if n > 2000:
        raise ValueError(f"dense oracle limited to 2000 unknowns, got {n}")
    grid = prob.grid
    g_const = prob.params.g
    mu = prob.params.mu
    dax = grid.d - 1
    drho = prob.drho_bar.values

    ncell = grid.n_cells
    D = np.zeros((ncell, n))
    K = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        v = prob.space.unpack(e)
        D[:, j] = divergence(v).values.ravel()
        col = VelocityField(grid)
        wd_cells = face_to_center(v.components[dax], dax)
        col.components[dax] = g_const * center_to_face(drho * wd_cells, dax)
        lap = laplacian_dirichlet(v)
        for i in range(grid.d):
            col.components[i] += s * mu * lap.components[i]
        K[:, j] = prob.space.pack(col)
    M = np.zeros(n)
    for i in range(grid.d):
        wf = center_to_face(prob.rho_bar.values, i)
        sl = prob.space.interior(i)
        M[prob.space.offsets[i] : prob.space.offsets[i + 1]] = wf[sl].ravel()

    Z = scipy.linalg.null_space(D)
    Kr = Z.T @ K @ Z
    Kr = 0.5 * (Kr + Kr.T)
    Mr = Z.T @ (M[:, None] * Z)
    Mr = 0.5 * (Mr + Mr.T)
    eigvals = scipy.linalg.eigvalsh(Kr, Mr)
    return float(eigvals[-1])


@dataclass
class GrowthRateResult:
    lambda_: float
    eigenfield: VelocityField | None
    pressure: ScalarField | None
    alpha_at_lambda: float | None
    fixedpoint_residual: float | None
    eigen_residual: float | None
    refinement_residual: float | None
    iterations: int
    marginal: bool
    problem: VariationalProblem

    @property
    def stable(self) -> bool:
        return self.lambda_ == 0.0


def solve_lambda(prob: VariationalProblem) -> GrowthRateResult:
    """Locate the positive root of s^2 = alpha(s), or report stability."""
    total_iters = 0
    a0 = alpha(prob, 0.0)
    total_iters += a0.iterations
    if a0.value <= 0.0 or a0.value < 1e-12:
        return GrowthRateResult(
            lambda_=0.0,
            eigenfield=None,
            pressure=None,
            alpha_at_lambda=a0.value,
            fixedpoint_residual=None,
            eigen_residual=None,
            refinement_residual=None,
            iterations=total_iters,
            marginal=bool(0.0 < a0.value < 1e-12),
            problem=prob,
        )

    warm = a0.maximizer
    s_lo, f_lo = 0.0, a0.value
    s_hi = float(np.sqrt(a0.value))

    def F(sv):
        nonlocal warm, total_iters
        res = alpha(prob, sv, warm_start=warm)
        warm = res.maximizer
        total_iters += res.iterations
        return res.value - sv * sv

    f_hi = F(s_hi)
    doublings = 0
    while f_hi > 0.0:
        s_lo, f_lo = s_hi, f_hi
        s_hi *= 2.0
        f_hi = F(s_hi)
        doublings += 1
        if doublings > 60:
            raise ConvergenceError("bracket expansion failed: alpha never below s^2")

    tol = prob.fp_tol * max(1.0, s_hi)
    while s_hi - s_lo > tol:
        mid = 0.5 * (s_lo + s_hi)
        if F(mid) > 0.0:
            s_lo = mid
        else:
            s_hi = mid
    lam = 0.5 * (s_lo + s_hi)

    vel, pressure, alpha_lam, eig_res, ref_res, iters = eigenpair(prob, lam, warm)
    total_iters += iters
    return GrowthRateResult(
        lambda_=lam,
        eigenfield=vel,
        pressure=pressure,
        alpha_at_lambda=alpha_lam,
        fixedpoint_residual=abs(lam * lam - alpha_lam),
        eigen_residual=eig_res,
        refinement_residual=ref_res,
        iterations=total_iters,
        marginal=False,
        problem=prob,
    )


def eigenpair(
    prob: VariationalProblem, lam: float, warm_start: np.ndarray | None = None
):
    """Maximizer at s = lam plus the recovered pressure and residuals.

    Returns (velocity, pressure, alpha(lam), eigen_residual,
    refinement_residual, iterations).  eigen_residual is the normalized
    momentum-equation defect on the solve grid; refinement_residual evaluates
    the same defect for the solution restricted to a once-coarsened grid,
    which exposes the discretization error of the eigenpair.
    """
    if lam <= 0:
        raise ValueError("eigenpair requires a positive growth rate")
    res = alpha(prob, lam, warm_start=warm_start)
    w = res.maximizer
    vel = prob.to_field(w)

    # momentum defect without pressure is (up to iteration error) a discrete
    # gradient; invert it for the pressure
    r_vec = prob.apply_K(w, lam) - (lam * lam) * (prob.rho_faces * w)
    plain = ProjectionSolver(prob.grid)
    rhs = prob.ops.D @ r_vec
    phi = plain.solve_pressure(rhs)
    pressure = ScalarField(prob.grid, (phi / lam).reshape(prob.grid.n))

    defect = r_vec - prob.ops.G @ phi
    scale = np.linalg.norm(lam * lam * prob.rho_faces * w)
    eigen_residual = float(np.linalg.norm(defect)) / float(scale)

    ref_res = _refinement_residual(prob, lam, vel, pressure)
    return vel, pressure, res.value, eigen_residual, ref_res, res.iterations


def coarsen_scalar(f: ScalarField) -> ScalarField:
    g = f.grid
    if any(k % 2 for k in g.n):
        raise ValueError("coarsening needs even cell counts")
    coarse = Grid(tuple(k // 2 for k in g.n), g.L)
    vals = f.values
    for a in range(g.d):
        sh = list(vals.shape)
        sh[a] //= 2
        sh.insert(a + 1, 2)
        vals = vals.reshape(sh).mean(axis=a + 1)
    return ScalarField(coarse, vals)


def coarsen_velocity(v: VelocityField) -> VelocityField:
    """Face restriction: subsample along the normal axis, mean tangentially.
    Preserves the discrete divergence-free property and wall values."""
    g = v.grid
    if any(k % 2 for k in g.n):
        raise ValueError("coarsening needs even cell counts")
    coarse = Grid(tuple(k // 2 for k in g.n), g.L)
    comps = []
    for i, c in enumerate(v.components):
        arr = np.take(c, np.arange(0, g.n[i] + 1, 2), axis=i)
        for a in range(g.d):
            if a == i:
                continue
            sh = list(arr.shape)
            sh[a] //= 2
            sh.insert(a + 1, 2)
            arr = arr.reshape(sh).mean(axis=a + 1)
        comps.append(arr)
    return VelocityField(coarse, comps)


def _refinement_residual(
    prob: VariationalProblem,
    lam: float,
    vel: VelocityField,
    pressure: ScalarField,
) -> float | None:
    g = prob.grid
    if any(k % 2 or k < 8 for k in g.n):
        return None
    vc = coarsen_velocity(vel)
    pc = coarsen_scalar(pressure)
    cg = vc.grid
    rho_c, drho_c = sample_profile(prob.profile, cg)
    dax = cg.d - 1

    lap = laplacian_dirichlet(vc)
    gp = gradient(pc)
    wd_cells = face_to_center(vc.components[dax], dax)
    buoy = center_to_face(drho_c.values * wd_cells, dax)

    resid = VelocityField(cg)
    scale_field = VelocityField(cg)
    for i in range(cg.d):
        rf = center_to_face(rho_c.values, i)
        resid.components[i] = (
            lam**2 * rf * vc.components[i]
            + lam * gp.components[i]
            - lam * prob.params.mu * lap.components[i]
        )
        scale_field.components[i] = lam**2 * rf * vc.components[i]
    resid.components[dax] -= prob.params.g * buoy
    resid.enforce_noslip()
    return norm_l2(resid) / norm_l2(scale_field)


def eigen_checks(result: GrowthRateResult) -> dict:
    """Qualitative facts about the eigenfield used by contracts and tests."""
    prob = result.problem
    v = result.eigenfield
    dax = prob.grid.d - 1
    wd_cells = face_to_center(v.components[dax], dax)
    rho_w = ScalarField(prob.grid, prob.drho_bar.values * wd_cells)
    horiz = sum(
        float(np.abs(v.components[i]).max()) for i in range(prob.grid.d - 1)
    )
    return {
        "vertical_nonzero": float(np.abs(v.components[dax]).max()) > 0.0,
        "horizontal_nonzero": horiz > 0.0,
        "weighted_drho_norm": norm_l2(rho_w),
        "divergence_norm": norm_l2(divergence(v)),
        "weighted_norm": weighted_inner(v, v, prob.rho_bar),
    }
