import numpy as np
import pytest

from doublephase import NonlinearitySpec, ProblemConfig, unit_square


def make_cfg(n=17, p=1.8, q=2.2, mu="x1", nl=None, direction=None):
    nl = nl or NonlinearitySpec("pure-power", r=4)
    return ProblemConfig.build(unit_square(n), p, q, mu, nl, direction)


def random_dirichlet(grid, rng, scale=1.0):
    return grid.field(scale * rng.standard_normal(grid.counts)).with_zero_boundary()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cfg():
    return make_cfg()


@pytest.fixture
def laplace_cfg():
    """p = 2, mu = 0, f = t^3: the semilinear model problem."""
    return make_cfg(p=2, q=2.2, mu=0)
