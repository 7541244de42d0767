"""Builtin benchmark problems over finite-state chains.

Each builder takes the chain whose states generate the data and returns
``(problem, chain)``: the chain comes back with its per-state samples filled
in, and the problem already carries the exact pi-weighted ``full_grad`` and
``full_loss``.
"""

from __future__ import annotations

import numpy as np

from .core import Ball, Box, SamplePoint, WeaklyConvexProblem, WholeSpace, bind_population
from .errors import ConfigurationError
from .samplers import make_rng


def _pi(chain):
    if chain.stationary is None:
        raise ConfigurationError("builtin problems need an ergodic chain")
    return chain.stationary


def _centered(rng, pi, shape, scale):
    xi = scale * rng.standard_normal(shape)
    return xi - pi @ xi


def nonconvex_quadratic(chain, dim=20, seed=0, noise=1.0, box=1.0, free_fraction=0.5, samples=None):
    """f(theta) = 1/2 theta'A theta + b'theta over the box [-box, box]^dim.

    A is block diagonal: a positive definite block on the first
    ``free_fraction * dim`` coordinates, whose minimizer lies strictly inside
    the box, and a negative definite block on the rest, which pushes those
    coordinates to a face. The spectrum spans [-1, 1] with ||A|| = 1. State s
    adds a linear perturbation xi_s with pi-weighted mean zero, so
    G = A theta + b + xi_s.
    """
    rng = make_rng(seed)
    pi = _pi(chain)
    nf = int(round(free_fraction * dim))
    nn = dim - nf

    def block(n, lo, hi):
        if n == 0:
            return np.zeros((0, 0))
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        return (Q * rng.uniform(lo, hi, n)) @ Q.T

    A = np.zeros((dim, dim))
    A[:nf, :nf] = block(nf, 0.2, 1.0)
    A[nf:, nf:] = block(nn, -1.0, -0.2)
    A /= np.abs(np.linalg.eigvalsh(A)).max()
    A = 0.5 * (A + A.T)
    b = 0.5 * rng.standard_normal(dim)
    if nf:
        # place the free block's minimizer at half the box width
        target = 0.5 * box * rng.uniform(-1.0, 1.0, nf)
        b[:nf] = -A[:nf, :nf] @ target
    if samples is None:
        xi = _centered(rng, pi, (chain.n_states, dim), noise / np.sqrt(dim))
    else:
        xi = np.asarray(samples, dtype=np.float64).reshape(chain.n_states, dim)
    chain = chain.with_samples([SamplePoint(xi[s], s) for s in range(chain.n_states)])
    normA = float(np.linalg.norm(A, 2))
    radius = box * np.sqrt(dim)
    shift = float(np.linalg.norm(b) + np.linalg.norm(xi, axis=1).max())
    xibar = pi @ xi

    def loss(theta, x):
        return 0.5 * theta @ (A @ theta) + (b + x.payload) @ theta

    def grad(theta, x):
        return A @ theta + b + x.payload

    problem = WeaklyConvexProblem(
        dim=dim, sample_loss=loss, stoch_subgrad=grad,
        rho=normA, subgrad_bound=normA * radius + shift, subgrad_lipschitz=normA,
        value_bound=0.5 * normA * radius ** 2 + shift * radius,
        constraint=Box.uniform(dim, -box, box), grad_lipschitz=normA,
        full_grad=lambda th: A @ th + b + xibar,
        full_loss=lambda th: float(0.5 * th @ (A @ th) + (b + xibar) @ th),
        smooth=True, name="nonconvex_quadratic", data={"A": A, "b": b, "xi": xi})
    return problem, chain


def phase_retrieval_l1(chain, dim=10, seed=0, radius=2.0, noise=0.1, samples=None):
    """f(theta) = E |<a_s, theta>^2 - b_s| over the ball of the given radius.

    Nonsmooth and weakly convex with rho = 2 max ||a_s||^2. The per-sample
    subgradient jumps across the kink, so the Lipschitz constant declared for
    G only holds piecewise.
    """
    rng = make_rng(seed)
    S = chain.n_states
    if samples is None:
        a = rng.standard_normal((S, dim)) / np.sqrt(dim)
        truth = rng.standard_normal(dim)
        truth *= 0.5 * radius / np.linalg.norm(truth)
        bvals = (a @ truth) ** 2 + noise * rng.standard_normal(S)
        data = np.hstack([a, bvals[:, None]])
    else:
        data = np.asarray(samples, dtype=np.float64).reshape(S, dim + 1)
    chain = chain.with_samples([SamplePoint(data[s], s) for s in range(S)])
    amax = float(np.max(np.sum(data[:, :dim] ** 2, axis=1)))
    bmax = float(np.abs(data[:, dim]).max())

    def loss(theta, x):
        a, bv = x.payload[:dim], x.payload[dim]
        return abs((a @ theta) ** 2 - bv)

    def grad(theta, x):
        a, bv = x.payload[:dim], x.payload[dim]
        inner = a @ theta
        return np.sign(inner * inner - bv) * 2.0 * inner * a

    problem = WeaklyConvexProblem(
        dim=dim, sample_loss=loss, stoch_subgrad=grad,
        rho=2.0 * amax, subgrad_bound=2.0 * amax * radius, subgrad_lipschitz=2.0 * amax,
        value_bound=amax * radius ** 2 + bmax,
        constraint=Ball(np.zeros(dim), radius), smooth=False, name="phase_retrieval_l1")
    return bind_population(problem, chain), chain


def lasso_prox(chain, dim=1, seed=0, spread=0.5, target=1.0, radius=10.0, samples=None):
    """f(theta) = E 1/2 ||theta - c_s||^2, paired with an L1 regularizer.

    With pi-mean c_bar the composite minimizer of f + w||.||_1 is
    soft_threshold(c_bar, w). The iterates never leave the ball of the given
    radius for steps <= 1, which is where the declared constants hold.
    """
    rng = make_rng(seed)
    pi = _pi(chain)
    if samples is None:
        c = np.full((chain.n_states, dim), float(target)) + _centered(rng, pi, (chain.n_states, dim), spread)
    else:
        c = np.asarray(samples, dtype=np.float64).reshape(chain.n_states, dim)
    chain = chain.with_samples([SamplePoint(c[s], s) for s in range(chain.n_states)])
    cmax = float(np.linalg.norm(c, axis=1).max())
    cbar = pi @ c

    def loss(theta, x):
        d = theta - x.payload
        return 0.5 * d @ d

    def grad(theta, x):
        return theta - x.payload

    problem = WeaklyConvexProblem(
        dim=dim, sample_loss=loss, stoch_subgrad=grad,
        rho=0.0, subgrad_bound=radius + cmax, subgrad_lipschitz=1.0,
        value_bound=0.5 * (radius + cmax) ** 2, constraint=WholeSpace(dim),
        grad_lipschitz=1.0, probe_radius=radius,
        full_grad=lambda th: th - cbar,
        full_loss=lambda th: float(0.5 * (th - cbar) @ (th - cbar) + 0.5 * pi @ np.sum((c - cbar) ** 2, axis=1)),
        name="lasso_prox", data={"c": c, "cbar": cbar})
    return problem, chain


def sanity_check_constants(problem, chain, n_probes=10_000, seed=0, rtol=1e-9):
    """Randomized probe of the declared A2/A3/A4 constants; returns a list of violations.

    The Lipschitz bound on G is only probed for smooth problems.
    """
    rng = make_rng(seed)
    cset = problem.constraint
    dim = problem.dim

    def draw():
        if isinstance(cset, Box) and cset.bounded:
            return rng.uniform(cset.lower, cset.upper)
        if isinstance(cset, Ball):
            u = rng.standard_normal(dim)
            return cset.center + cset.radius * rng.random() ** (1 / dim) * u / np.linalg.norm(u)
        u = rng.standard_normal(dim)
        th = problem.probe_radius * rng.random() ** (1 / dim) * u / np.linalg.norm(u)
        return cset.project(th) if cset.bounded else th

    bad = []
    states = rng.integers(chain.n_states, size=n_probes)
    for i in range(n_probes):
        x = chain.samples[states[i]]
        th, th2 = draw(), draw()
        g = problem.stoch_subgrad(th, x)
        if np.linalg.norm(g) > problem.subgrad_bound * (1 + rtol):
            bad.append(("subgrad_bound", i))
        if abs(problem.sample_loss(th, x)) > problem.value_bound * (1 + rtol):
            bad.append(("value_bound", i))
        if problem.smooth:
            lip = np.linalg.norm(g - problem.stoch_subgrad(th2, x))
            if lip > problem.subgrad_lipschitz * np.linalg.norm(th - th2) * (1 + 1e-7) + 1e-12:
                bad.append(("subgrad_lipschitz", i))
    return bad


from .odl import odl_synthetic  # noqa: E402  (odl does not import this module)

BUILTINS = {
    "nonconvex_quadratic": nonconvex_quadratic,
    "phase_retrieval_l1": phase_retrieval_l1,
    "lasso_prox": lasso_prox,
    "odl_synthetic": odl_synthetic,
}
