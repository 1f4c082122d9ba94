"""Pressure solves and projections.

Two routes are provided on purpose:

  * poisson_solve / leray_project: the public field-level operations, using
    diagonally preconditioned conjugate gradients on the (possibly variable
    coefficient) pure-Neumann pressure operator, gauge fixed by zero mean;
  * ProjectionSolver / HelmholtzSolver: cached sparse factorizations used
    inside the eigenvalue iteration and the time steppers, where the same
    system is solved thousands of times.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assemble
from .grid import Grid, ScalarField, VelocityField
from .operators import center_to_face, divergence, gradient, norm_l2


class CompatibilityError(ValueError):
    """Right-hand side is not mean-free, so the Neumann problem is unsolvable."""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


def _face_coeffs(grid: Grid, coeff: ScalarField | None) -> list[np.ndarray]:
    """Coefficient averaged to faces; wall faces get 0 (no flux)."""
    out = []
    for i in range(grid.d):
        if coeff is None:
            c = np.zeros(grid.face_shape(i))
            c[assemble.PackedSpace(grid).interior(i)] = 1.0
        else:
            c = center_to_face(coeff.values, i)
        out.append(c)
    return out


def _apply_pressure_op(grid: Grid, cf: list[np.ndarray], phi: np.ndarray) -> np.ndarray:
    v = gradient(ScalarField(grid, phi))
    for i in range(grid.d):
        v.components[i] *= cf[i]
    return divergence(v).values


def poisson_solve(
    rhs: ScalarField,
    coeff: ScalarField | None = None,
    tol: float = 1e-10,
    max_iters: int | None = None,
) -> ScalarField:
    """Solve div(coeff grad phi) = rhs with no-flux walls and mean(phi) = 0.

    coeff is cell centered and must be strictly positive when given; rhs must
    be mean-free up to 1e-10 relative (pure-Neumann compatibility).
    """
    grid = rhs.grid
    b = rhs.values.ravel()
    nrm = float(np.linalg.norm(b))
    if nrm == 0.0:
        return ScalarField(grid)
    if abs(float(np.mean(b))) > 1e-10 * nrm:
        raise CompatibilityError(
            f"rhs mean {np.mean(b):.3e} exceeds compatibility tolerance"
        )
    if coeff is not None and float(coeff.values.min()) <= 0.0:
        raise ValueError("coefficient must be strictly positive")

    cf = _face_coeffs(grid, coeff)
    shape = grid.n

    def matvec(x):
        return _apply_pressure_op(grid, cf, x.reshape(shape)).ravel()

    # diagonal of the operator: -(sum of adjacent face coefficients)/h^2
    diag = np.zeros(shape)
    for i in range(grid.d):
        d = grid.d
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[i] = slice(None, -1)
        hi[i] = slice(1, None)
        diag -= (cf[i][tuple(lo)] + cf[i][tuple(hi)]) / grid.h[i] ** 2
    inv_diag = 1.0 / diag.ravel()

    ncell = grid.n_cells
    op = spla.LinearOperator((ncell, ncell), matvec=matvec)
    precond = spla.LinearOperator((ncell, ncell), matvec=lambda x: inv_diag * x)
    maxiter = max_iters if max_iters is not None else 10 * ncell

    b0 = b - np.mean(b)  # exact compatibility for the Krylov solve
    info_holder = {"iters": 0}

    def cb(_):
        info_holder["iters"] += 1

    x, info = spla.cg(op, b0, rtol=tol, atol=0.0, maxiter=maxiter, M=precond,
                      callback=cb)
    x -= np.mean(x)
    res = float(np.linalg.norm(matvec(x) - b0))
    if info != 0 or res > 10 * tol * nrm:
        raise ConvergenceError(
            f"pressure solve stalled after {info_holder['iters']} iterations",
            residual=res,
        )
    out = ScalarField(grid, x.reshape(shape))
    out.iterations = info_holder["iters"]
    return out


def leray_project(v: VelocityField, coeff: ScalarField | None = None) -> VelocityField:
    """Remove the (coeff-weighted) gradient part: v - coeff grad(phi) with
    div of the result zero to solver tolerance."""
    grid = v.grid
    div = divergence(v)
    if norm_l2(div) == 0.0:
        return v.copy()
    # div of a no-slip field telescopes to zero mean; strip the roundoff
    div = ScalarField(grid, div.values - np.mean(div.values))
    phi = poisson_solve(div, coeff)
    cf = _face_coeffs(grid, coeff)
    gphi = gradient(phi)
    out = v.copy()
    for i in range(grid.d):
        out.components[i] -= cf[i] * gphi.components[i]
    out.enforce_noslip()
    return out


class ProjectionSolver:
    """Projection onto discretely divergence-free fields, orthogonal in the
    inner product weighted by the given face coefficients (1/density).

    Uses a pinned sparse LU of D diag(c) G, exact for compatible data.
    """

    def __init__(self, grid: Grid, coeff_faces: np.ndarray | None = None):
        ops = assemble.for_grid(grid)
        self.ops = ops
        if coeff_faces is None:
            coeff_faces = np.ones(ops.space.size)
        self.coeff = coeff_faces
        lp = ops.D @ sp.diags(coeff_faces) @ ops.G
        lp = lp.tolil()
        lp[0, 0] -= 1.0  # gauge pin; harmless for compatible right-hand sides
        self.lu = spla.splu(lp.tocsc())

    def solve_pressure(self, rhs_cells: np.ndarray) -> np.ndarray:
        phi = self.lu.solve(rhs_cells)
        return phi - np.mean(phi)

    def project(self, u: np.ndarray) -> np.ndarray:
        """Packed-vector projection: u - c G phi, D(c G phi) = D u."""
        rhs = self.ops.D @ u
        phi = self.solve_pressure(rhs)
        return u - self.coeff * (self.ops.G @ phi)


class HelmholtzSolver:
    """(rho_f/dt - (mu/2) Lap) with no-slip walls, factorized once."""

    def __init__(self, grid: Grid, rho_faces: np.ndarray, dt: float, mu: float):
        ops = assemble.for_grid(grid)
        self.ops = ops
        self.dt = dt
        self.mu = mu
        self.rho_faces = rho_faces
        mat = sp.diags(rho_faces / dt) - 0.5 * mu * ops.L
        self.matrix = sp.csr_matrix(mat)
        self.lu = spla.splu(mat.tocsc())

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.lu.solve(rhs)


def pcg(matvec, b, precond_solve, tol: float, maxiter: int, x0=None, atol=0.0):
    """Plain preconditioned CG on a matrix-free SPD operator.

    Stops when ||r|| <= max(tol*||b||, atol). Returns (x, iterations);
    raises ConvergenceError on stall or breakdown.
    """
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - matvec(x) if x0 is not None else b.copy()
    bnrm = float(np.linalg.norm(b))
    target = max(tol * bnrm, atol)
    if bnrm == 0.0 or float(np.linalg.norm(r)) <= target:
        return x, 0
    z = precond_solve(r)
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, maxiter + 1):
        Ap = matvec(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            # semidefinite roundoff floor; the residual tells whether the
            # answer is already usable
            raise ConvergenceError(
                "pcg breakdown (nonpositive curvature)",
                residual=float(np.linalg.norm(r)) / max(bnrm, 1e-300),
            )
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if float(np.linalg.norm(r)) <= target:
            return x, k
        z = precond_solve(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"pcg exceeded {maxiter} iterations",
        residual=float(np.linalg.norm(r)) / max(bnrm, 1e-300),
    )
