"""Staggered (MAC) grid and field containers.

The domain is an axis-aligned box with the last axis vertical; gravity acts
along -e_d.  Scalars (density, pressure) live at cell centers, velocity
components on the faces normal to their axis.  Boundary-normal faces carry
exactly zero (no-slip walls).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"RTFLD1"
HEADER_BYTES = 64


class GridMismatchError(ValueError):
    """Fields from different grids were combined."""


@dataclass(frozen=True)
class Grid:
    """Uniform box discretization.

    n: cells per axis, L: physical extents.  The last axis is vertical.
    """

    n: tuple[int, ...]
    L: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(k) for k in self.n))
        object.__setattr__(self, "L", tuple(float(x) for x in self.L))
        if len(self.n) != len(self.L):
            raise ValueError("n and L must have the same length")
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if any(k < 4 for k in self.n):
            raise ValueError(f"need at least 4 cells per axis, got {self.n}")
        if any(x <= 0 for x in self.L):
            raise ValueError(f"extents must be positive, got {self.L}")

    @property
    def d(self) -> int:
        return len(self.n)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(Li / ni for Li, ni in zip(self.L, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.n))

    def cell_centers(self, axis: int) -> np.ndarray:
        """1D coordinates of cell centers along `axis`."""
        h = self.h[axis]
        return (np.arange(self.n[axis]) + 0.5) * h

    def face_coords(self, axis: int) -> np.ndarray:
        """1D coordinates of the faces normal to `axis` (including walls)."""
        return np.arange(self.n[axis] + 1) * self.h[axis]

    def face_shape(self, axis: int) -> tuple[int, ...]:
        s = list(self.n)
        s[axis] += 1
        return tuple(s)


class ScalarField:
    """Cell-centered scalar values."""

    def __init__(self, grid: Grid, values: np.ndarray | None = None):
        self.grid = grid
        if values is None:
            values = np.zeros(grid.n)
        values = np.asarray(values, dtype=float)
        if values.shape != grid.n:
            raise ValueError(f"values shape {values.shape} != grid cells {grid.n}")
        self.values = values

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def __add__(self, other):
        _same_grid(self, other)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other):
        _same_grid(self, other)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, a: float):
        return ScalarField(self.grid, self.values * a)

    __rmul__ = __mul__


class VelocityField:
    """MAC velocity: component i lives on the faces normal to axis i.

    Component arrays have the cell shape with axis i enlarged by one; the
    first and last slabs along axis i are the wall faces and must stay 0.
    """

    def __init__(self, grid: Grid, components: list[np.ndarray] | None = None):
        self.grid = grid
        if components is None:
            components = [np.zeros(grid.face_shape(i)) for i in range(grid.d)]
        if len(components) != grid.d:
            raise ValueError("one component per axis required")
        comps = []
        for i, c in enumerate(components):
            c = np.asarray(c, dtype=float)
            if c.shape != grid.face_shape(i):
                raise ValueError(
                    f"component {i} shape {c.shape} != {grid.face_shape(i)}"
                )
            comps.append(c)
        self.components = comps

    def copy(self) -> "VelocityField":
        return VelocityField(self.grid, [c.copy() for c in self.components])

    def enforce_noslip(self) -> None:
        """Zero the wall-normal boundary faces in place."""
        for i, c in enumerate(self.components):
            sl = [slice(None)] * self.grid.d
            sl[i] = 0
            c[tuple(sl)] = 0.0
            sl[i] = -1
            c[tuple(sl)] = 0.0

    def boundary_face_max(self) -> float:
        m = 0.0
        for i, c in enumerate(self.components):
            sl = [slice(None)] * self.grid.d
            sl[i] = 0
            m = max(m, float(np.abs(c[tuple(sl)]).max()))
            sl[i] = -1
            m = max(m, float(np.abs(c[tuple(sl)]).max()))
        return m

    def max_abs(self) -> float:
        return max(float(np.abs(c).max()) for c in self.components)

    def __add__(self, other):
        _same_grid(self, other)
        return VelocityField(
            self.grid,
            [a + b for a, b in zip(self.components, other.components)],
        )

    def __sub__(self, other):
        _same_grid(self, other)
        return VelocityField(
            self.grid,
            [a - b for a, b in zip(self.components, other.components)],
        )

    def __mul__(self, a: float):
        return VelocityField(self.grid, [c * a for c in self.components])

    __rmul__ = __mul__


def _same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise GridMismatchError("fields live on different grids")


def write_component(path, grid: Grid, values: np.ndarray) -> None:
    """Write one field component: 64-byte header then little-endian float64.

    Header: magic "RTFLD1", pad, uint64 d, three uint64 cell counts and three
    float64 extents (zero-filled beyond dimension d).
    """
    n3 = list(grid.n) + [0] * (3 - grid.d)
    L3 = list(grid.L) + [0.0] * (3 - grid.d)
    header = struct.pack("<6s2xQ3Q3d", MAGIC, grid.d, *n3, *L3)
    assert len(header) == HEADER_BYTES
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def read_component(path) -> tuple[Grid, np.ndarray]:
    """Read a component written by write_component; shape is inferred."""
    with open(path, "rb") as f:
        header = f.read(HEADER_BYTES)
        if len(header) != HEADER_BYTES:
            raise ValueError("truncated field file header")
        magic, d, n1, n2, n3, L1, L2, L3 = struct.unpack("<6s2xQ3Q3d", header)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        n = (n1, n2, n3)[:d]
        L = (L1, L2, L3)[:d]
        grid = Grid(n, L)
        raw = np.frombuffer(f.read(), dtype="<f8")
    size = raw.size
    # cell-centered or any face shape of this grid
    for shape in [grid.n] + [grid.face_shape(i) for i in range(d)]:
        if int(np.prod(shape)) == size:
            return grid, raw.reshape(shape).astype(float)
    raise ValueError(f"component size {size} fits no field shape of {grid}")
