import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from markovopt.core import (L1, Ball, Box, Indicator, NonnegBall, NonnegOrthant, SamplePoint,
                            Simplex, WholeSpace, Zero, expected_gradient, normal_cone_dist,
                            project, prox_reg)
from markovopt.errors import ConfigurationError, PreconditionError
from markovopt.samplers import MarkovChain, make_iid, two_state

from conftest import constant_oracle


# ---- examples ----

def test_project_box_clamps():
    np.testing.assert_array_equal(project(Box([0, 0], [1, 1]), [1.5, -0.3]), [1.0, 0.0])


def test_project_ball_scales():
    np.testing.assert_allclose(project(Ball(np.zeros(2), 1.0), [3, 4]), [0.6, 0.8])


def test_project_simplex_against_grid():
    v = np.array([0.2, 0.2])
    # independent oracle: grid search over u = (a, 1-a)
    a = np.linspace(0, 1, 100_001)
    obj = 0.5 * ((a - v[0]) ** 2 + (1 - a - v[1]) ** 2)
    best = a[np.argmin(obj)]
    np.testing.assert_allclose(project(Simplex(1.0), v), [best, 1 - best], atol=1e-5)
    np.testing.assert_allclose(project(Simplex(1.0), v), [0.5, 0.5], atol=1e-15)


def test_project_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        project(Box([0, 0], [1, 1]), [1.0, 2.0, 3.0])


def test_invalid_sets_rejected():
    with pytest.raises(ConfigurationError):
        Box([1.0], [0.0])
    with pytest.raises(ConfigurationError):
        Ball(np.zeros(2), 0.0)
    with pytest.raises(ConfigurationError):
        Simplex(-1.0)


def test_prox_examples():
    np.testing.assert_array_equal(prox_reg(Zero(), 3.0, [1, 2]), [1, 2])
    np.testing.assert_allclose(prox_reg(L1(1.0), 0.5, [2, -0.2]), [1.5, 0.0])
    np.testing.assert_array_equal(prox_reg(Indicator(Box([0], [1])), 7.0, [3]), [1.0])


def test_prox_step_must_be_positive():
    with pytest.raises(PreconditionError):
        prox_reg(Zero(), 0.0, [1.0])


def test_expected_gradient_two_state_symmetry():
    chain = two_state(0.5, 0.5, samples=[[1.0], [-1.0]])
    prob = constant_oracle(0.0)
    prob = type(prob)(**{**prob.__dict__, "stoch_subgrad": lambda th, x: x.payload.copy()})
    assert expected_gradient(prob, chain, [0.0])[0] == pytest.approx(0.0, abs=1e-15)


def test_expected_gradient_single_state():
    chain = MarkovChain(np.array([[1.0]]), (SamplePoint(np.array([2.5]), 0),))
    prob = constant_oracle(0.0)
    prob = type(prob)(**{**prob.__dict__, "stoch_subgrad": lambda th, x: x.payload * th})
    assert expected_gradient(prob, chain, [2.0])[0] == 5.0


def test_expected_gradient_weighted_sum():
    chain = make_iid([0.5, 0.25, 0.25], [[2.0], [0.0], [-4.0]])
    prob = constant_oracle(0.0)
    prob = type(prob)(**{**prob.__dict__, "stoch_subgrad": lambda th, x: x.payload.copy()})
    direct = 0.5 * 2.0 + 0.25 * 0.0 + 0.25 * -4.0
    assert expected_gradient(prob, chain, [0.0])[0] == pytest.approx(direct, abs=1e-15)


def test_normal_cone_dist_examples():
    assert normal_cone_dist(WholeSpace(), [0, 0], [3, 4]) == pytest.approx(5.0)
    assert normal_cone_dist(Box([0], [1]), [0], [2]) == 0.0
    assert normal_cone_dist(Box([0], [1]), [0.5], [2]) == pytest.approx(2.0)


def test_normal_cone_dist_infeasible():
    with pytest.raises(PreconditionError):
        normal_cone_dist(Box([0], [1]), [1.5], [1.0])


def test_normal_cone_dist_ball_and_orthant():
    # on the sphere the normal cone is the outward ray
    assert normal_cone_dist(Ball(np.zeros(2), 1.0), [1, 0], [-2, 1]) == pytest.approx(1.0)
    assert normal_cone_dist(NonnegOrthant(), [0, 1], [3, 0]) == 0.0
    assert normal_cone_dist(NonnegOrthant(), [0, 1], [-3, 0]) == pytest.approx(3.0)


def test_simplex_normal_cone_against_qp():
    # dist(0, g + N) = min over the cone; for the simplex N(theta) = {mu 1 - w, w >= 0, w_i = 0 off zeros}
    rng = np.random.default_rng(4)
    S = Simplex(1.0)
    for _ in range(50):
        theta = S.project(rng.normal(size=4) * 2)
        g = rng.normal(size=4)
        zero = theta <= 1e-12
        best = np.inf
        for mu in np.linspace(-5, 5, 20_001):
            r = g + mu
            r[zero] = np.minimum(r[zero], 0.0)  # subtract w >= 0 where allowed
            best = min(best, np.linalg.norm(r))
        assert normal_cone_dist(S, theta, g) == pytest.approx(best, abs=2e-3)


# ---- properties ----

def _sets(dim):
    return [WholeSpace(), Box.uniform(dim, -1.0, 0.5), Ball(np.full(dim, 0.2), 1.3),
            NonnegOrthant(), NonnegBall(1.5), Simplex(2.0)]


vec = arrays(np.float64, 4, elements=st.floats(-10, 10, allow_nan=False))


@pytest.mark.parametrize("cset", _sets(4), ids=lambda s: type(s).__name__)
@settings(max_examples=200, deadline=None)
@given(v=vec, w=vec)
def test_projection_nonexpansive_and_idempotent(cset, v, w):
    pv, pw = project(cset, v), project(cset, w)
    assert np.linalg.norm(pv - pw) <= np.linalg.norm(v - w) + 1e-12
    np.testing.assert_allclose(project(cset, pv), pv, atol=1e-12)
    assert cset.contains(pv)


@pytest.mark.parametrize("cset", _sets(4), ids=lambda s: type(s).__name__)
@settings(max_examples=200, deadline=None)
@given(v=vec, u=vec)
def test_projection_variational_inequality(cset, v, u):
    pv = project(cset, v)
    u = project(cset, u)  # any feasible point
    assert np.dot(v - pv, u - pv) <= 1e-9 * (1 + np.linalg.norm(v) * np.linalg.norm(u))


@pytest.mark.parametrize("reg", [Zero(), L1(0.7), Indicator(Box.uniform(4, -1, 1)), Indicator(Simplex(1.0))],
                         ids=lambda r: type(r).__name__)
@settings(max_examples=200, deadline=None)
@given(v=vec, w=vec, step=st.floats(1e-3, 5))
def test_prox_firmly_nonexpansive(reg, v, w, step):
    a, b = prox_reg(reg, step, v), prox_reg(reg, step, w)
    assert np.dot(a - b, a - b) <= np.dot(a - b, v - w) + 1e-9


@pytest.mark.parametrize("cset", _sets(3), ids=lambda s: type(s).__name__)
def test_normal_cone_zero_iff_fixed_point(cset):
    rng = np.random.default_rng(1)
    hits = 0
    for _ in range(1000):
        theta = project(cset, rng.normal(size=3) * 2)
        # half of the draws are built to be stationary: g = theta - (theta + n) with n in the normal cone
        if rng.random() < 0.5:
            g = theta - rng.normal(size=3) * 2
            theta = project(cset, g)
            g = theta - g   # then proj(theta - g) = theta
        else:
            g = rng.normal(size=3)
        d = normal_cone_dist(cset, theta, g)
        fixed = np.linalg.norm(project(cset, theta - g) - theta) <= 1e-10
        assert (d <= 1e-10) == fixed
        hits += fixed
    assert hits > 300


def test_box_normal_cone_coordinatewise_formula():
    rng = np.random.default_rng(2)
    for lo_hi in itertools.product([0.0, 1.0, 0.4], repeat=3):
        theta = np.array(lo_hi)
        g = rng.normal(size=3)
        r = g.copy()
        r[(theta == 0.0) & (g > 0)] = 0.0
        r[(theta == 1.0) & (g < 0)] = 0.0
        assert normal_cone_dist(Box.uniform(3, 0, 1), theta, g) == pytest.approx(np.linalg.norm(r))
