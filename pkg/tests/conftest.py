import pytest

from rtlab import (
    Grid,
    PhysicalParams,
    VariationalProblem,
    builtin_profile,
    solve_lambda,
)


def solve_square(n, profile, params, **kw):
    grid = Grid((n, n), (1.0, 1.0))
    return solve_lambda(VariationalProblem(grid, profile, params, **kw))


@pytest.fixture(scope="session")
def params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def linear_profile():
    return builtin_profile("linear", {"height": 1.0})


# The growth solves below are the expensive shared inputs; they are computed
# once per session and reused by the unit tests and the acceptance criteria.

@pytest.fixture(scope="session")
def growth_16(linear_profile, params):
    return solve_square(16, linear_profile, params)


@pytest.fixture(scope="session")
def growth_32(linear_profile, params):
    return solve_square(32, linear_profile, params)


@pytest.fixture(scope="session")
def growth_64(linear_profile, params):
    return solve_square(64, linear_profile, params)
