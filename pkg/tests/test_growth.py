"""Variational growth-rate solver against oracles and exact properties."""

import numpy as np
import pytest

from rtlab import (
    Grid,
    PhysicalParams,
    VariationalProblem,
    alpha,
    builtin_profile,
    divergence,
    eigen_checks,
    norm_l2,
    oracle_alpha_dense,
    solve_lambda,
)
from rtlab.growth import coarsen_scalar, coarsen_velocity, eigenpair
from rtlab.lab import random_divergence_free


def make_problem(n, kind="linear", mu=0.01, g=1.0, prof_params=None):
    grid = Grid((n, n), (1.0, 1.0))
    profile = builtin_profile(kind, dict(prof_params or {}, height=1.0))
    return VariationalProblem(grid, profile, PhysicalParams(mu=mu, g=g))


def test_alpha_rejects_negative_penalty():
    prob = make_problem(8)
    with pytest.raises(ValueError):
        alpha(prob, -1.0)


def test_alpha_agrees_with_dense_oracle_small_grid():
    prob = make_problem(8)
    for s in (0.0, 0.3):
        a = alpha(prob, s).value
        o = oracle_alpha_dense(prob, s)
        assert abs(a - o) <= 1e-9 * (1.0 + abs(a))


def test_alpha_monotone_nonincreasing_in_s():
    prob = make_problem(8)
    vals = [alpha(prob, s).value for s in (0.0, 0.2, 0.5)]
    assert vals[0] >= vals[1] - 1e-9
    assert vals[1] >= vals[2] - 1e-9


def test_alpha_scales_linearly_with_gravity_at_s_zero():
    a1 = alpha(make_problem(8, g=1.0), 0.0).value
    a2 = alpha(make_problem(8, g=2.0), 0.0).value
    assert a2 == pytest.approx(2.0 * a1, rel=1e-8)


def test_alpha_negative_for_huge_penalty():
    prob = make_problem(8)
    drho_max = float(prob.drho_bar.values.max())
    s_big = 1e6 * prob.params.g * drho_max / prob.params.mu
    assert alpha(prob, s_big).value < 0.0


def test_stable_profile_reports_no_growth():
    grid = Grid((8, 8), (1.0, 1.0))
    profile = builtin_profile("stable", {"height": 1.0})
    prob = VariationalProblem(grid, profile, PhysicalParams())
    assert alpha(prob, 0.0).value <= 0.0
    res = solve_lambda(prob)
    assert res.stable and res.lambda_ == 0.0
    assert res.eigenfield is None and not res.marginal


def test_solve_lambda_fixed_point_small_grid():
    res = solve_lambda(make_problem(12))
    assert res.lambda_ > 0
    assert abs(res.lambda_ ** 2 - res.alpha_at_lambda) <= 1e-8 * max(
        1.0, res.lambda_ ** 2
    )
    assert res.fixedpoint_residual <= 1e-8


def test_growth_result_eigenfield_contracts(growth_16):
    res = growth_16
    checks = eigen_checks(res)
    assert checks["vertical_nonzero"] and checks["horizontal_nonzero"]
    assert checks["divergence_norm"] <= 1e-9
    # the maximizer is normalized in the density-weighted inner product
    assert checks["weighted_norm"] == pytest.approx(1.0, abs=1e-9)
    assert res.eigen_residual <= 1e-6
    assert res.pressure.values.mean() == pytest.approx(0.0, abs=1e-12)


def test_eigenpair_rejects_nonpositive_rate():
    with pytest.raises(ValueError):
        eigenpair(make_problem(8), 0.0)


def test_coarsening_preserves_divergence_free():
    grid = Grid((16, 16), (1.0, 1.0))
    rng = np.random.default_rng(12)
    v = random_divergence_free(grid, rng)
    vc = coarsen_velocity(v)
    assert vc.grid.n == (8, 8)
    assert norm_l2(divergence(vc)) <= 1e-10 * max(1.0, vc.max_abs())
    assert vc.boundary_face_max() == 0.0


def test_coarsen_scalar_is_block_mean():
    grid = Grid((8, 8), (1.0, 1.0))
    from rtlab import ScalarField
    f = ScalarField(grid, np.arange(64, dtype=float).reshape(8, 8))
    fc = coarsen_scalar(f)
    assert fc.grid.n == (4, 4)
    assert fc.values[0, 0] == pytest.approx(np.mean([0, 1, 8, 9]))
    assert fc.values[1, 2] == pytest.approx(np.mean([20, 21, 28, 29]))


def test_lambda_decreases_with_viscosity():
    lam_lo = solve_lambda(make_problem(12, mu=0.01)).lambda_
    lam_hi = solve_lambda(make_problem(12, mu=0.05)).lambda_
    assert lam_hi < lam_lo


def test_local_bump_unstable_despite_mostly_stable_gradient():
    res = solve_lambda(make_problem(16, kind="local_bump"))
    assert res.lambda_ > 0
