"""Discrete operators on the MAC grid.

Divergence, gradient, no-slip vector Laplacian, face/center averaging, and
the quadrature norms.  All functions are pure; inputs are never modified.

Conventions:
  * gradient is the negative adjoint of divergence under the cell-volume
    inner products (exact summation by parts for fields with zero wall
    faces);
  * the vector Laplacian enforces u = 0 on walls by odd-reflection ghosts
    in the tangential directions; the wall-normal faces are boundary values
    (zero) themselves;
  * velocity H1 uses the Dirichlet form matching -<lap u, u>, scalar H1 uses
    interior differences only (no boundary condition is implied for cell
    data).
"""

from __future__ import annotations

import numpy as np

from .grid import Grid, ScalarField, VelocityField, _same_grid


def _sl(d: int, axis: int, s) -> tuple:
    idx = [slice(None)] * d
    idx[axis] = s
    return tuple(idx)


def divergence(v: VelocityField) -> ScalarField:
    """Cell-centered divergence from face-normal differences."""
    g = v.grid
    out = np.zeros(g.n)
    for i, c in enumerate(v.components):
        out += np.diff(c, axis=i) / g.h[i]
    return ScalarField(g, out)


def gradient(phi: ScalarField) -> VelocityField:
    """Face-normal differences; wall faces are zero (no flux through walls)."""
    g = phi.grid
    comps = []
    for i in range(g.d):
        c = np.zeros(g.face_shape(i))
        c[_sl(g.d, i, slice(1, -1))] = np.diff(phi.values, axis=i) / g.h[i]
        comps.append(c)
    return VelocityField(g, comps)


def _second_diff_interior(c: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Second difference along the component's own axis; wall rows left 0."""
    out = np.zeros_like(c)
    d = c.ndim
    mid = _sl(d, axis, slice(1, -1))
    lo = _sl(d, axis, slice(None, -2))
    hi = _sl(d, axis, slice(2, None))
    out[mid] = (c[hi] - 2.0 * c[mid] + c[lo]) / h**2
    return out


def _second_diff_reflect(c: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Second difference with odd-reflection ghosts (u=0 midway to the wall)."""
    d = c.ndim
    first = c[_sl(d, axis, slice(0, 1))]
    last = c[_sl(d, axis, slice(-1, None))]
    padded = np.concatenate([-first, c, -last], axis=axis)
    mid = _sl(d, axis, slice(1, -1))
    lo = _sl(d, axis, slice(None, -2))
    hi = _sl(d, axis, slice(2, None))
    return (padded[hi] - 2.0 * padded[mid] + padded[lo]) / h**2


def laplacian_dirichlet(v: VelocityField) -> VelocityField:
    """Component-wise Laplacian with no-slip walls; wall faces of the result
    stay zero."""
    g = v.grid
    comps = []
    for i, c in enumerate(v.components):
        lap = np.zeros_like(c)
        for a in range(g.d):
            if a == i:
                lap += _second_diff_interior(c, a, g.h[a])
            else:
                lap += _second_diff_reflect(c, a, g.h[a])
        lap[_sl(g.d, i, 0)] = 0.0
        lap[_sl(g.d, i, -1)] = 0.0
        comps.append(lap)
    return VelocityField(g, comps)


def face_to_center(c: np.ndarray, axis: int) -> np.ndarray:
    """Average the faces of one component to cell centers along its axis."""
    d = c.ndim
    return 0.5 * (c[_sl(d, axis, slice(1, None))] + c[_sl(d, axis, slice(None, -1))])


def center_to_face(w: np.ndarray, axis: int) -> np.ndarray:
    """Average cell data to the interior faces normal to `axis`; wall faces 0.

    This is the adjoint of face_to_center on fields with zero wall faces.
    """
    d = w.ndim
    shape = list(w.shape)
    shape[axis] += 1
    out = np.zeros(shape)
    out[_sl(d, axis, slice(1, -1))] = 0.5 * (
        w[_sl(d, axis, slice(1, None))] + w[_sl(d, axis, slice(None, -1))]
    )
    return out


def vertical_cell_velocity(v: VelocityField) -> np.ndarray:
    """Vertical component averaged to cell centers."""
    dax = v.grid.d - 1
    return face_to_center(v.components[dax], dax)


def buoyancy_field(rho_pert: ScalarField, g_const: float) -> VelocityField:
    """-g * rho_pert * e_d mapped to vertical faces (adjoint averaging)."""
    g = rho_pert.grid
    dax = g.d - 1
    comps = [np.zeros(g.face_shape(i)) for i in range(g.d)]
    comps[dax] = -g_const * center_to_face(rho_pert.values, dax)
    return VelocityField(g, comps)


# ---------------------------------------------------------------------------
# norms and inner products
# ---------------------------------------------------------------------------

def inner(a, b) -> float:
    """Plain L2 inner product (cell-volume quadrature)."""
    _same_grid(a, b)
    vol = a.grid.cell_volume
    if isinstance(a, ScalarField):
        return float(np.sum(a.values * b.values) * vol)
    s = 0.0
    for ca, cb in zip(a.components, b.components):
        s += float(np.sum(ca * cb))
    return s * vol


def weighted_inner(a, b, weight: ScalarField) -> float:
    """Inner product weighted by a cell-centered field.

    For velocities the weight is averaged to each component's faces, which
    keeps the product symmetric and bounded by inf/sup of the weight.
    """
    _same_grid(a, b)
    _same_grid(a, weight)
    vol = a.grid.cell_volume
    if isinstance(a, ScalarField):
        return float(np.sum(a.values * b.values * weight.values) * vol)
    s = 0.0
    for i, (ca, cb) in enumerate(zip(a.components, b.components)):
        wf = center_to_face(weight.values, i)
        # wall faces of wf are zero but so are ca, cb there
        s += float(np.sum(ca * cb * wf))
    return s * vol


def norm_l2(f) -> float:
    return float(np.sqrt(max(inner(f, f), 0.0)))


def dirichlet_form(v: VelocityField) -> float:
    """Sum of squared first differences matching -<laplacian(v), v> exactly."""
    g = v.grid
    vol = g.cell_volume
    total = 0.0
    for i, c in enumerate(v.components):
        for a in range(g.d):
            h = g.h[a]
            diffs = np.diff(c, axis=a) / h
            total += float(np.sum(diffs**2)) * vol
            if a != i:
                # odd-reflection ghosts add 2*(u_edge/h)^2 per wall cell
                first = c[_sl(g.d, a, 0)]
                last = c[_sl(g.d, a, -1)]
                total += 2.0 * float(np.sum(first**2) + np.sum(last**2)) / h**2 * vol
    return total


def _grad_sq_scalar(f: ScalarField) -> float:
    g = f.grid
    total = 0.0
    for a in range(g.d):
        diffs = np.diff(f.values, axis=a) / g.h[a]
        total += float(np.sum(diffs**2))
    return total * g.cell_volume


def norm_h1(f) -> float:
    if isinstance(f, ScalarField):
        return float(np.sqrt(inner(f, f) + _grad_sq_scalar(f)))
    return float(np.sqrt(inner(f, f) + dirichlet_form(f)))


def _second_derivs_sq(arr: np.ndarray, h: tuple[float, ...]) -> float:
    """All second partials via twice-applied np.gradient (one-sided at walls)."""
    d = arr.ndim
    total = 0.0
    firsts = [np.gradient(arr, h[a], axis=a) for a in range(d)]
    for a in range(d):
        for b in range(a, d):
            sec = np.gradient(firsts[a], h[b], axis=b)
            total += float(np.sum(sec**2))
    return total


def norm_h2(f) -> float:
    """Discrete H2: H1 plus all second differences (frozen, documented choice;
    only ratios of this norm are ever asserted)."""
    g = f.grid
    vol = g.cell_volume
    if isinstance(f, ScalarField):
        extra = _second_derivs_sq(f.values, g.h) * vol
    else:
        extra = sum(_second_derivs_sq(c, g.h) for c in f.components) * vol
    return float(np.sqrt(norm_h1(f) ** 2 + extra))
