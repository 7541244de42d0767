import numpy as np
import pytest

from markovopt.core import SamplePoint, WeaklyConvexProblem, WholeSpace, bind_population
from markovopt.samplers import MarkovChain


def quadratic_1d(center=0.3, constraint=None, bound=2.0):
    """f(theta) = 0.5 (theta - x)^2 averaged over the chain's samples x."""
    return WeaklyConvexProblem(
        dim=1,
        sample_loss=lambda th, x: 0.5 * float((th[0] - x.payload[0]) ** 2),
        stoch_subgrad=lambda th, x: th - x.payload,
        rho=0.0, subgrad_bound=bound, subgrad_lipschitz=1.0, value_bound=bound ** 2,
        constraint=constraint if constraint is not None else WholeSpace(),
        grad_lipschitz=1.0, name="quad1d")


def single_state(value):
    return MarkovChain(np.array([[1.0]]), (SamplePoint(np.atleast_1d(np.asarray(value, float)), 0),))


def constant_oracle(g, dim=1, constraint=None, bound=None):
    g = np.atleast_1d(np.asarray(g, float))
    return WeaklyConvexProblem(
        dim=dim, sample_loss=lambda th, x: float(g @ th), stoch_subgrad=lambda th, x: g.copy(),
        rho=0.0, subgrad_bound=bound or max(float(np.linalg.norm(g)), 1e-12), subgrad_lipschitz=1e-12,
        value_bound=1e6, constraint=constraint if constraint is not None else WholeSpace())


@pytest.fixture
def quad_problem():
    def make(center=0.3, constraint=None):
        chain = single_state(center)
        return bind_population(quadratic_1d(center, constraint), chain), chain
    return make
