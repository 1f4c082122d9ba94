"""Steady density profiles rho(z) on the vertical axis.

A profile is admissible when it is positive and C2 with rho' > 0 somewhere
(a heavier layer sits above a lighter one in some region).  The classical
stronger assumption inf rho' > 0 is tracked separately so experiments can
target profiles that violate it; `local_bump` is the headline case with
rho' > 0 only inside an interior band and rho' < 0 elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import Grid, ScalarField

_SCAN_POINTS = 10_000
_POSITIVE_EPS = 1e-12


@dataclass(frozen=True)
class PhysicalParams:
    """Shear viscosity and gravitational constant, both strictly positive."""

    mu: float = 0.01
    g: float = 1.0

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError(f"viscosity mu must be positive, got {self.mu}")
        if self.g <= 0:
            raise ValueError(f"gravity g must be positive, got {self.g}")


@dataclass(frozen=True)
class DensityProfile:
    name: str
    rho: Callable[[np.ndarray], np.ndarray]
    drho: Callable[[np.ndarray], np.ndarray]
    height: float
    params: dict = field(default_factory=dict)
    unstable_somewhere: bool = False  # rho' > 0 on some open set
    uniformly_unstable: bool = False  # inf rho' > 0
    c2_caveat: str | None = None

    def scan(self, npts: int = _SCAN_POINTS):
        z = np.linspace(0.0, self.height, npts)
        return z, np.asarray(self.rho(z), dtype=float), np.asarray(
            self.drho(z), dtype=float
        )


def _finalize(name, rho, drho, height, params, c2_caveat=None) -> DensityProfile:
    z = np.linspace(0.0, height, _SCAN_POINTS)
    rv = np.asarray(rho(z), dtype=float)
    dv = np.asarray(drho(z), dtype=float)
    if rv.min() <= 0.0:
        raise ValueError(
            f"profile '{name}' reaches non-positive density (min {rv.min():.4g})"
        )
    return DensityProfile(
        name=name,
        rho=rho,
        drho=drho,
        height=height,
        params=dict(params),
        unstable_somewhere=bool(dv.max() > _POSITIVE_EPS),
        uniformly_unstable=bool(dv.min() > _POSITIVE_EPS),
        c2_caveat=c2_caveat,
    )


def _bump(s: np.ndarray) -> np.ndarray:
    """C-infinity bump, 1 at s=0, identically 0 for |s| >= 1."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - si**2))
    return out


def builtin_profile(kind: str, params: dict | None = None) -> DensityProfile:
    """Construct one of the built-in profiles.

    kinds:
      linear(a, b):          rho = a + b z, uniformly unstable stratification
      tanh_interface(rho_m, rho_a, z0, w): smoothed two-layer interface
      local_bump(rho0, peak, fall, z1, z2):
                             rho' > 0 only inside (z1, z2), rho' < 0 outside
      stable(a, b):          rho = a - b z, rho' < 0 everywhere
    All take `height` (default 1.0), the vertical extent the profile lives on.
    """
    p = dict(params or {})
    height = float(p.pop("height", 1.0))
    if height <= 0:
        raise ValueError("height must be positive")

    if kind == "linear":
        a = float(p.pop("a", 1.0))
        b = float(p.pop("b", 1.0))
        _reject_unknown(kind, p)
        return _finalize(
            "linear",
            lambda z: a + b * np.asarray(z, dtype=float),
            lambda z: np.full_like(np.asarray(z, dtype=float), b),
            height,
            {"a": a, "b": b, "height": height},
        )

    if kind == "stable":
        a = float(p.pop("a", 2.0))
        b = float(p.pop("b", 1.0))
        _reject_unknown(kind, p)
        if b <= 0:
            raise ValueError("stable profile needs b > 0")
        return _finalize(
            "stable",
            lambda z: a - b * np.asarray(z, dtype=float),
            lambda z: np.full_like(np.asarray(z, dtype=float), -b),
            height,
            {"a": a, "b": b, "height": height},
        )

    if kind == "tanh_interface":
        rho_m = float(p.pop("rho_m", 2.0))
        rho_a = float(p.pop("rho_a", 0.5))
        z0 = float(p.pop("z0", height / 2))
        w = float(p.pop("w", height / 10))
        _reject_unknown(kind, p)
        if w <= 0:
            raise ValueError("interface width w must be positive")
        return _finalize(
            "tanh_interface",
            lambda z: rho_m + rho_a * np.tanh((np.asarray(z, dtype=float) - z0) / w),
            lambda z: rho_a / w / np.cosh((np.asarray(z, dtype=float) - z0) / w) ** 2,
            height,
            {"rho_m": rho_m, "rho_a": rho_a, "z0": z0, "w": w, "height": height},
        )

    if kind == "local_bump":
        rho0 = float(p.pop("rho0", 1.0))
        peak = float(p.pop("peak", 1.0))
        fall = float(p.pop("fall", 0.05))
        z1 = float(p.pop("z1", 0.3 * height))
        z2 = float(p.pop("z2", 0.7 * height))
        _reject_unknown(kind, p)
        if not (0.0 <= z1 < z2 <= height):
            raise ValueError("need 0 <= z1 < z2 <= height")
        if peak <= 0 or fall <= 0 or fall >= peak:
            raise ValueError("need 0 < fall < peak")
        zc = 0.5 * (z1 + z2)
        zw = 0.5 * (z2 - z1)
        # derivative in closed form: positive only strictly inside (z1, z2)
        amp = peak + fall

        def drho(z):
            return amp * _bump((np.asarray(z, dtype=float) - zc) / zw) - fall

        # density by smooth quadrature of the derivative (C2 by construction)
        zg = np.linspace(0.0, height, 4097)
        spline = CubicSpline(zg, drho(zg)).antiderivative()

        def rho(z):
            return rho0 + spline(np.asarray(z, dtype=float))

        return _finalize(
            "local_bump",
            rho,
            drho,
            height,
            {
                "rho0": rho0,
                "peak": peak,
                "fall": fall,
                "z1": z1,
                "z2": z2,
                "height": height,
            },
        )

    raise ValueError(
        f"unknown profile kind '{kind}'; "
        "valid kinds: linear, tanh_interface, local_bump, stable"
    )


def _reject_unknown(kind: str, leftover: dict) -> None:
    if leftover:
        raise ValueError(f"unknown parameters for '{kind}': {sorted(leftover)}")


def profile_from_csv(path, height: float | None = None) -> DensityProfile:
    """Tabulated profile from a two-column CSV (z, rho), spline differentiated.

    Cubic splines are only piecewise C2; this is recorded in c2_caveat
    metadata rather than rejected.
    """
    data = np.loadtxt(path, delimiter=",")
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 4:
        raise ValueError("CSV profile needs two columns (z, rho), >= 4 rows")
    z, r = data[:, 0], data[:, 1]
    if not np.all(np.diff(z) > 0):
        raise ValueError("CSV z column must be strictly increasing")
    spline = CubicSpline(z, r)
    h = float(height if height is not None else z[-1])
    return _finalize(
        f"csv:{path}",
        spline,
        spline.derivative(),
        h,
        {"source": str(path)},
        c2_caveat="cubic spline: C2 between knots only",
    )


def sample_profile(profile: DensityProfile, grid: Grid) -> tuple[ScalarField, ScalarField]:
    """Sample rho and rho' at cell-center heights as cell fields."""
    dax = grid.d - 1
    z = grid.cell_centers(dax)
    rho_line = np.asarray(profile.rho(z), dtype=float)
    drho_line = np.asarray(profile.drho(z), dtype=float)
    if rho_line.min() <= 0.0:
        raise ValueError(
            f"profile '{profile.name}' non-positive at sampled heights"
        )
    shape = [1] * grid.d
    shape[dax] = grid.n[dax]
    rho = np.broadcast_to(rho_line.reshape(shape), grid.n).copy()
    drho = np.broadcast_to(drho_line.reshape(shape), grid.n).copy()
    return ScalarField(grid, rho), ScalarField(grid, drho)
