"""Background density profiles and their stability classification."""

import numpy as np
import pytest

from rtlab import (
    Grid,
    PhysicalParams,
    builtin_profile,
    profile_from_csv,
    sample_profile,
)


def test_params_validation():
    with pytest.raises(ValueError):
        PhysicalParams(mu=0.0)
    with pytest.raises(ValueError):
        PhysicalParams(g=-1.0)


def test_linear_profile_classification():
    p = builtin_profile("linear", {"height": 1.0})
    assert p.unstable_somewhere and p.uniformly_unstable
    z, rho, drho = p.scan()
    assert rho.min() > 0 and drho.min() > 0


def test_stable_profile_classification():
    p = builtin_profile("stable", {"height": 1.0})
    assert not p.unstable_somewhere and not p.uniformly_unstable
    _, _, drho = p.scan()
    assert drho.max() < 0


def test_local_bump_is_weakly_unstable_only():
    # density increases inside a thin band and decreases elsewhere: the
    # somewhere-unstable condition holds, the uniform one does not
    p = builtin_profile("local_bump", {"height": 1.0})
    assert p.unstable_somewhere and not p.uniformly_unstable
    _, _, drho = p.scan()
    assert drho.max() > 0 > drho.min()


def test_tanh_interface_classification():
    p = builtin_profile("tanh_interface", {"height": 1.0})
    assert p.unstable_somewhere
    _, rho, drho = p.scan()
    assert rho.min() > 0 and drho.min() >= 0


def test_unknown_kind_and_params_rejected():
    with pytest.raises(ValueError):
        builtin_profile("vortex")
    with pytest.raises(ValueError):
        builtin_profile("linear", {"height": 1.0, "bogus": 3})
    with pytest.raises(ValueError):
        builtin_profile("linear", {"height": -1.0})


def test_nonpositive_density_rejected():
    with pytest.raises(ValueError):
        builtin_profile("linear", {"a": 0.1, "b": -1.0, "height": 1.0})


def test_sample_profile_matches_callables():
    p = builtin_profile("linear", {"a": 1.0, "b": 1.0, "height": 2.0})
    grid = Grid((6, 8), (1.0, 2.0))
    rho, drho = sample_profile(p, grid)
    z = grid.cell_centers(1)
    np.testing.assert_allclose(rho.values[0, :], 1.0 + z, atol=1e-14)
    np.testing.assert_allclose(drho.values, 1.0, atol=1e-14)
    # constant in the horizontal directions
    assert np.ptp(rho.values, axis=0).max() == 0.0


def test_profile_from_csv_roundtrip(tmp_path):
    z = np.linspace(0.0, 1.0, 101)
    rho = 1.0 + 0.8 * z
    path = tmp_path / "profile.csv"
    np.savetxt(path, np.column_stack([z, rho]), delimiter=",")
    p = profile_from_csv(path)
    assert p.height == pytest.approx(1.0)
    assert p.unstable_somewhere
    assert p.c2_caveat is not None
    zz = np.linspace(0.05, 0.95, 7)
    np.testing.assert_allclose(p.rho(zz), 1.0 + 0.8 * zz, atol=1e-6)
    np.testing.assert_allclose(p.drho(zz), 0.8, atol=1e-4)
