import numpy as np
import pytest

from markovopt.core import Ball, Box, L1, WholeSpace, bind_population, normal_cone_dist
from markovopt.errors import ConfigurationError, ConvergenceError, UnsupportedOperation
from markovopt.problems import nonconvex_quadratic, phase_retrieval_l1
from markovopt.samplers import cycle_walk, make_rng
from markovopt.stationarity import (MoreauConfig, gap_bruteforce, gradient_mapping_norm, moreau_grad,
                                    moreau_prox, moreau_value, post_process, stationarity_gap_bruteforce,
                                    stationarity_report)

from conftest import quadratic_1d, single_state


def bound(problem, chain):
    return bind_population(problem, chain)


def test_moreau_1d_quadratic_closed_forms(quad_problem):
    prob, _ = quad_problem(0.0)
    cfg = MoreauConfig(rho_hat=1.0)
    assert moreau_prox(prob, cfg, [2.0])[0] == pytest.approx(1.0, abs=1e-8)
    assert moreau_grad(prob, cfg, [2.0])[0] == pytest.approx(1.0, abs=1e-8)
    assert moreau_value(prob, cfg, [2.0]) == pytest.approx(1.0, abs=1e-8)


def test_moreau_at_stationary_point(quad_problem):
    prob, _ = quad_problem(0.4)
    cfg = MoreauConfig(rho_hat=3.0)
    assert moreau_prox(prob, cfg, [0.4])[0] == pytest.approx(0.4, abs=1e-12)
    assert moreau_grad(prob, cfg, [0.4])[0] == pytest.approx(0.0, abs=1e-10)
    assert moreau_value(prob, cfg, [0.4]) == pytest.approx(prob.full_loss(np.array([0.4])), abs=1e-12)


def test_moreau_constrained_against_grid(quad_problem):
    prob, _ = quad_problem(3.0, Box([0], [1]))
    cfg = MoreauConfig(rho_hat=2.0)
    grid = np.linspace(0, 1, 1_000_001)
    obj = 0.5 * (grid - 3) ** 2 + 0.5 * 2.0 * (grid - 0.5) ** 2
    th = moreau_prox(prob, cfg, [0.5])[0]
    assert th == pytest.approx(grid[np.argmin(obj)], abs=1e-6)
    assert th == pytest.approx(1.0, abs=1e-12)
    # KKT at the upper bound: the prox objective's derivative points outward
    assert (th - 3) + 2.0 * (th - 0.5) < 0


def test_rho_hat_must_exceed_rho():
    prob, chain = nonconvex_quadratic(cycle_walk(4), dim=3)
    with pytest.raises(ConfigurationError):
        moreau_prox(prob, MoreauConfig(rho_hat=prob.rho), np.zeros(3))


def test_inner_solver_exhaustion_is_reported():
    prob, chain = nonconvex_quadratic(cycle_walk(4), dim=5, seed=1)
    with pytest.raises(ConvergenceError) as err:
        moreau_prox(prob, MoreauConfig(rho_hat=1.1 * prob.rho, inner_tol=1e-14, inner_max_iters=3),
                    np.full(5, 0.9))
    assert err.value.residual > 0


def test_needs_population_oracle():
    with pytest.raises(UnsupportedOperation):
        moreau_prox(quadratic_1d(), MoreauConfig(rho_hat=1.0), [0.0])


def test_moreau_grad_matches_finite_differences():
    prob, chain = nonconvex_quadratic(cycle_walk(6), dim=5, seed=3, box=10.0)
    cfg = MoreauConfig(rho_hat=2 * prob.rho, inner_tol=1e-13)
    rng = make_rng(0)
    h = 1e-5
    for _ in range(10):
        th = rng.uniform(-1, 1, 5)
        g = moreau_grad(prob, cfg, th)
        fd = np.array([(moreau_value(prob, cfg, th + h * e) - moreau_value(prob, cfg, th - h * e)) / (2 * h)
                       for e in np.eye(5)])
        assert np.linalg.norm(fd - g) <= 1e-4 * np.linalg.norm(g)


def test_report_identities():
    prob, chain = nonconvex_quadratic(cycle_walk(6), dim=6, seed=2)
    rho_hat = 2 * prob.rho
    cfg = MoreauConfig(rho_hat=rho_hat)
    rng = make_rng(5)
    L = prob.subgrad_bound
    for _ in range(100):
        th = prob.constraint.project(rng.uniform(-1.2, 1.2, 6))
        rep = stationarity_report(prob, cfg, th)
        assert rep.moreau_grad_norm == rho_hat * rep.proxpoint_distance
        assert rep.proxpoint_distance <= 2 * L / (rho_hat - prob.rho)
        assert rep.normal_cone_dist_at_proxpoint <= rep.moreau_grad_norm + rho_hat * cfg.inner_tol * 10
        # envelope ordering
        env = moreau_value(prob, cfg, th)
        assert env <= prob.full_loss(th) + 1e-12


def test_prox_map_lipschitz():
    prob, chain = nonconvex_quadratic(cycle_walk(6), dim=6, seed=4)
    rho_hat = 1.5 * prob.rho
    cfg = MoreauConfig(rho_hat=rho_hat, inner_tol=1e-12)
    rng = make_rng(6)
    k = rho_hat / (rho_hat - prob.rho)
    for _ in range(200):
        a, b = rng.uniform(-2, 2, (2, 6))
        pa, pb = moreau_prox(prob, cfg, a), moreau_prox(prob, cfg, b)
        assert np.linalg.norm(pa - pb) <= k * np.linalg.norm(a - b) + 1e-9


def test_envelope_lower_bounded_by_min():
    prob, chain = nonconvex_quadratic(cycle_walk(4), dim=3, seed=7)
    cfg = MoreauConfig(rho_hat=2 * prob.rho)
    rng = make_rng(7)
    # crude inf over the box by sampling plus corners
    pts = np.vstack([rng.uniform(-1, 1, (20000, 3)),
                     np.array(np.meshgrid(*[[-1, 1]] * 3)).reshape(3, -1).T])
    inf = min(prob.full_loss(p) for p in pts)
    for _ in range(50):
        th = rng.uniform(-1, 1, 3)
        env = moreau_value(prob, cfg, th)
        assert inf - 1e-3 <= env <= prob.full_loss(th) + 1e-12


def test_gradient_mapping_examples():
    prob = bound(quadratic_1d(0.0), single_state(0.0))
    prob2 = type(prob)(**{**prob.__dict__, "dim": 2,
                          "full_grad": lambda th: th.copy(), "constraint": Ball(np.zeros(2), 1.0)})
    assert gradient_mapping_norm(prob2, 1.0, [1.0, 0.0]) == pytest.approx(1.0)
    assert gradient_mapping_norm(prob, 1.0, [0.0]) == 0.0


def test_gradient_mapping_vs_moreau():
    # both measures at the same parameter lambda = 1/rho_hat with rho_hat = 2 rho
    prob, chain = nonconvex_quadratic(cycle_walk(6), dim=6, seed=8)
    rho_hat = 2 * prob.rho
    cfg = MoreauConfig(rho_hat=rho_hat)
    rng = make_rng(8)
    for _ in range(1000):
        th = prob.constraint.project(rng.uniform(-1.2, 1.2, 6))
        lhs = gradient_mapping_norm(prob, rho_hat, th)
        assert lhs <= 1.5 * np.linalg.norm(moreau_grad(prob, cfg, th)) + rho_hat * cfg.inner_tol


def test_gradient_mapping_mixed_parameters_counterexample():
    # with the mapping at 1/(2 rho_hat) but the envelope at 1/rho_hat the 3/2 factor is not enough
    prob, chain = nonconvex_quadratic(cycle_walk(6), dim=6, seed=8)
    rho_hat = 2 * prob.rho
    cfg = MoreauConfig(rho_hat=rho_hat)
    rng = make_rng(8)
    ratios = []
    for _ in range(200):
        th = prob.constraint.project(rng.uniform(-1.2, 1.2, 6))
        ratios.append(gradient_mapping_norm(prob, 2 * rho_hat, th) / np.linalg.norm(moreau_grad(prob, cfg, th)))
    assert max(ratios) > 1.5 + 1e-3


def test_gradient_mapping_needs_smooth():
    prob, chain = phase_retrieval_l1(cycle_walk(4), dim=3)
    with pytest.raises(UnsupportedOperation):
        gradient_mapping_norm(prob, 2 * prob.rho + 1, np.zeros(3))


def test_subgrad_mode_on_nonsmooth_problem():
    prob, chain = phase_retrieval_l1(cycle_walk(4), dim=3, seed=1)
    cfg = MoreauConfig(rho_hat=2 * prob.rho, inner_tol=1e-7)
    th = np.array([0.5, -0.3, 0.2])
    rep = stationarity_report(prob, cfg, th)
    assert rep.grad_map_norm is None
    assert rep.moreau_grad_norm == pytest.approx(cfg.rho_hat * rep.proxpoint_distance)
    # the prox point minimizes the subproblem: compare with random perturbations
    th_hat = moreau_prox(prob, cfg, th)
    obj = lambda u: prob.full_loss(u) + 0.5 * cfg.rho_hat * np.sum((u - th) ** 2)
    rng = make_rng(1)
    base = obj(th_hat)
    for d in rng.normal(size=(200, 3)):
        u = prob.constraint.project(th_hat + 1e-2 * d)
        assert obj(u) >= base - 1e-5


def test_l1_composite_prox_mode():
    prob = bound(quadratic_1d(1.0), single_state(1.0))
    cfg = MoreauConfig(rho_hat=1.0, regularizer=L1(0.5))
    # stationary point of 0.5(x-1)^2 + 0.5|x| is 0.5: the prox fixes it
    assert moreau_prox(prob, cfg, [0.5])[0] == pytest.approx(0.5, abs=1e-8)


# ---- post-processing ----

def test_post_process_at_minimizer():
    prob = bound(quadratic_1d(0.3, Box([0], [1])), single_state(0.3))
    breve, dist = post_process(prob, single_state(0.3), np.array([0.3]), 100, seed=0)
    assert breve[0] == pytest.approx(0.3) and dist == pytest.approx(0.0, abs=1e-15)


def test_post_process_single_state_is_gradient_mapping_point():
    prob, chain = nonconvex_quadratic(single_state(np.zeros(1)), dim=4, seed=0)
    rng = make_rng(3)
    for _ in range(5):
        th = prob.constraint.project(rng.uniform(-1, 1, 4))
        breve, dist = post_process(prob, chain, th, 50, seed=1)
        np.testing.assert_allclose(breve, prob.constraint.project(th - prob.full_grad(th)), atol=1e-14)
        assert dist == pytest.approx(normal_cone_dist(prob.constraint, breve, prob.full_grad(breve)))


def test_post_process_needs_smooth():
    prob, chain = phase_retrieval_l1(cycle_walk(4), dim=3)
    with pytest.raises(UnsupportedOperation):
        post_process(prob, chain, np.zeros(3), 10, seed=0)


# ---- brute-force gap ----

def test_gap_interior_equals_gradient_norm():
    g = np.array([0.3, -0.4, 0.1])
    gap = gap_bruteforce(WholeSpace(), np.zeros(3), g, 20_000)
    assert gap == pytest.approx(np.linalg.norm(g), rel=1e-2)


def test_gap_corner_in_normal_cone():
    assert gap_bruteforce(Box.uniform(2, 0, 1), np.zeros(2), np.array([1.0, 2.0]), 1000) == 0.0


def test_gap_matches_normal_cone_dist_on_boxes():
    rng = make_rng(9)
    worst = 0.0
    for _ in range(100):
        dim = int(rng.integers(1, 5))
        box = Box.uniform(dim, -1.0, 1.0)
        th = np.clip(rng.uniform(-1.5, 1.5, dim), -1, 1)
        g = rng.normal(size=dim)
        worst = max(worst, abs(gap_bruteforce(box, th, g, 10_000) - normal_cone_dist(box, th, g)))
    assert worst <= 1e-2


def test_gap_bound_at_proxpoint():
    prob, chain = nonconvex_quadratic(cycle_walk(6), dim=4, seed=10)
    cfg = MoreauConfig(rho_hat=2 * prob.rho)
    rng = make_rng(10)
    for _ in range(20):
        th = prob.constraint.project(rng.uniform(-1.5, 1.5, 4))
        th_hat = moreau_prox(prob, cfg, th)
        gap = stationarity_gap_bruteforce(prob, th_hat, 5000)
        assert gap <= cfg.rho_hat * np.linalg.norm(th_hat - th) + 1e-2
