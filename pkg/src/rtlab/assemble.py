"""Sparse matrix assembly on packed MAC unknowns.

Velocity unknowns are the interior faces of each component, concatenated in
component order; wall faces are identically zero and carry no unknown.
Scalars are raveled cell arrays.  All matrices are Kronecker chains of 1D
blocks, so they apply to C-order raveled arrays axis by axis.

The matrices implement exactly the same stencils as the field operators in
operators.py; tests cross-check the two on random data.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .grid import Grid, VelocityField
from .operators import center_to_face, _sl


def _kron_chain(blocks) -> sp.csr_matrix:
    m = blocks[0]
    for b in blocks[1:]:
        m = sp.kron(m, b, format="csr")
    return sp.csr_matrix(m)


def _eye(n: int) -> sp.csr_matrix:
    return sp.identity(n, format="csr")


def _div_1d(n: int, h: float) -> sp.csr_matrix:
    """Cells x interior-faces difference block: (f_right - f_left)/h."""
    main = np.full(n - 1, 1.0 / h)
    lower = np.full(n - 1, -1.0 / h)
    return sp.diags([main, lower], [0, -1], shape=(n, n - 1), format="csr")


def _avg_1d(n: int) -> sp.csr_matrix:
    """Cells x interior-faces averaging block (wall faces are zero)."""
    main = np.full(n - 1, 0.5)
    lower = np.full(n - 1, 0.5)
    return sp.diags([main, lower], [0, -1], shape=(n, n - 1), format="csr")


def _lap_own_1d(n: int, h: float) -> sp.csr_matrix:
    """1D Laplacian on interior faces; wall faces are zero Dirichlet values."""
    m = n - 1
    return sp.diags(
        [np.full(m - 1, 1.0), np.full(m, -2.0), np.full(m - 1, 1.0)],
        [-1, 0, 1],
        format="csr",
    ) / h**2


def _lap_tangential_1d(m: int, h: float) -> sp.csr_matrix:
    """1D Laplacian across a tangential axis with odd-reflection ghosts."""
    diag = np.full(m, -2.0)
    diag[0] = -3.0
    diag[-1] = -3.0
    return sp.diags(
        [np.full(m - 1, 1.0), diag, np.full(m - 1, 1.0)], [-1, 0, 1], format="csr"
    ) / h**2


class PackedSpace:
    """Mapping between VelocityField components and one packed vector."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.shapes = []
        for i in range(grid.d):
            s = list(grid.n)
            s[i] -= 1
            self.shapes.append(tuple(s))
        sizes = [int(np.prod(s)) for s in self.shapes]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.size = int(self.offsets[-1])

    def interior(self, i: int):
        return _sl(self.grid.d, i, slice(1, -1))

    def pack(self, v: VelocityField) -> np.ndarray:
        return np.concatenate(
            [v.components[i][self.interior(i)].ravel() for i in range(self.grid.d)]
        )

    def unpack(self, vec: np.ndarray) -> VelocityField:
        v = VelocityField(self.grid)
        for i in range(self.grid.d):
            block = vec[self.offsets[i] : self.offsets[i + 1]]
            v.components[i][self.interior(i)] = block.reshape(self.shapes[i])
        return v

    def component(self, vec: np.ndarray, i: int) -> np.ndarray:
        return vec[self.offsets[i] : self.offsets[i + 1]].reshape(self.shapes[i])


class GridOperators:
    """Assembled sparse operators for one grid (cached; see for_grid)."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.space = PackedSpace(grid)
        d, n, h = grid.d, grid.n, grid.h

        div_blocks = []
        for i in range(d):
            chain = [
                _div_1d(n[a], h[a]) if a == i else _eye(n[a]) for a in range(d)
            ]
            div_blocks.append(_kron_chain(chain))
        self.D = sp.hstack(div_blocks, format="csr")  # cells x packed faces
        self.G = sp.csr_matrix(-self.D.T)

        lap_blocks = []
        for i in range(d):
            li = None
            for a in range(d):
                chain = []
                for b in range(d):
                    if b == a:
                        chain.append(
                            _lap_own_1d(n[b], h[b])
                            if b == i
                            else _lap_tangential_1d(n[b], h[b])
                        )
                    else:
                        chain.append(_eye(n[b] - 1 if b == i else n[b]))
                term = _kron_chain(chain)
                li = term if li is None else li + term
            lap_blocks.append(li)
        self.L = sp.block_diag(lap_blocks, format="csr")

        avg_blocks = []
        for i in range(d):
            chain = [
                _avg_1d(n[a]) if a == i else _eye(n[a]) for a in range(d)
            ]
            avg_blocks.append(_kron_chain(chain))
        # face->cell averaging per component
        self.T = avg_blocks

    def face_weights(self, cell_values: np.ndarray) -> np.ndarray:
        """Average a cell field to every packed interior face."""
        parts = []
        for i in range(self.grid.d):
            wf = center_to_face(cell_values, i)
            parts.append(wf[self.space.interior(i)].ravel())
        return np.concatenate(parts)

    def vertical_face_select(self) -> np.ndarray:
        """Boolean mask of packed unknowns belonging to the vertical component."""
        mask = np.zeros(self.space.size, dtype=bool)
        i = self.grid.d - 1
        mask[self.space.offsets[i] : self.space.offsets[i + 1]] = True
        return mask


_CACHE: dict[Grid, GridOperators] = {}


def for_grid(grid: Grid) -> GridOperators:
    ops = _CACHE.get(grid)
    if ops is None:
        ops = GridOperators(grid)
        _CACHE[grid] = ops
    return ops
