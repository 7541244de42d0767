"""Stationarity measures: Moreau envelope, gradient mapping, gaps, post-processing.

The envelope parameter is fixed to lambda = 1/rho_hat. The proximal point

    theta_hat = argmin_u  f(u) + r(u) + iota_Theta(u) + (rho_hat/2) ||u - theta||^2

is computed with an inner solver on the population objective (exact
pi-weighted oracle), so reported norms carry no sampling noise, only the
inner-solver slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .core import (L1, Box, Indicator, NonnegOrthant, Simplex, WholeSpace, Zero, as_vector,
                   normal_cone_dist)
from .errors import ConfigurationError, ConvergenceError, UnsupportedOperation
from .samplers import SampleStream, k_schedule, make_rng

MODES = ("projgrad", "proxgrad", "subgrad")


@dataclass(frozen=True)
class MoreauConfig:
    rho_hat: float
    inner_tol: float = 1e-9
    inner_max_iters: Optional[int] = None
    inner_mode: Optional[str] = None        # None: pick from the problem
    regularizer: object = field(default_factory=Zero)
    constraint: object = None               # None: the problem's own set

    def __post_init__(self):
        if not self.rho_hat > 0:
            raise ConfigurationError("rho_hat must be positive")
        if self.inner_mode is not None and self.inner_mode not in MODES:
            raise ConfigurationError(f"inner_mode must be one of {MODES}")


@dataclass(frozen=True)
class StationarityReport:
    moreau_grad_norm: float
    grad_map_norm: Optional[float]
    proxpoint_distance: float
    normal_cone_dist_at_proxpoint: Optional[float]
    inner_iters_used: int


def _resolve(problem, cfg):
    if not cfg.rho_hat > problem.rho:
        raise ConfigurationError(
            f"rho_hat={cfg.rho_hat} must exceed rho={problem.rho} for a well-posed prox")
    if problem.full_grad is None:
        raise UnsupportedOperation(
            "Moreau diagnostics need the exact population oracle (full_grad)")
    reg = cfg.regularizer
    cset = problem.constraint if cfg.constraint is None else cfg.constraint
    if isinstance(reg, Indicator):
        cset, reg = reg.set, Zero()
    mode = cfg.inner_mode
    if mode is None:
        if not problem.smooth:
            mode = "subgrad"
        else:
            mode = "projgrad" if isinstance(reg, Zero) else "proxgrad"
    if mode == "proxgrad" and not isinstance(cset, WholeSpace):
        raise UnsupportedOperation("proxgrad inner mode handles f + r over the whole space only")
    if mode == "projgrad" and not isinstance(reg, Zero):
        raise ConfigurationError("projgrad inner mode cannot handle a regularizer")
    return cset, reg, mode


def _iteration_cap(kappa, tol, d0):
    q = math.log(kappa / (kappa - 1.0)) if kappa > 1 else 1.0
    return int(math.ceil(math.log(max(d0, tol) / tol) / q)) + 50


def _solve_prox(problem, cfg, theta):
    """Return (theta_hat, iterations, final change)."""
    theta = as_vector(theta)
    cset, reg, mode = _resolve(problem, cfg)
    rho_hat, tol = cfg.rho_hat, cfg.inner_tol
    grad = problem.full_grad
    mu = rho_hat - problem.rho
    if mode == "subgrad":
        return _solve_prox_subgrad(problem, cset, rho_hat, mu, tol, cfg.inner_max_iters, theta)
    smooth = rho_hat + problem.smoothness
    s = 1.0 / smooth
    kappa = smooth / mu
    u = cset.project(theta) if mode == "projgrad" else theta.copy()

    def update(u):
        v = u - s * (grad(u) + rho_hat * (u - theta))
        return cset.project(v) if mode == "projgrad" else reg.prox(s, v)

    u_new = update(u)
    change = float(np.linalg.norm(u_new - u))
    cap = cfg.inner_max_iters or _iteration_cap(kappa, tol, kappa * change)
    it = 1
    while change > tol:
        if it >= cap:
            raise ConvergenceError(
                f"prox solve did not reach tolerance {tol:g} in {cap} iterations "
                f"(last change {change:.3e})", residual=change, iterations=it)
        u, u_new = u_new, update(u_new)
        change = float(np.linalg.norm(u_new - u))
        it += 1
    return u_new, it, change


def _solve_prox_subgrad(problem, cset, rho_hat, mu, tol, max_iters, theta):
    # projected subgradient on the mu-strongly convex subproblem with steps
    # 2/(mu (k+1)) and k-weighted averaging; tolerance applies to the average
    grad = problem.full_grad
    cap = max_iters or 10 ** 6
    u = cset.project(theta)
    avg = u.copy()
    wsum = 0.0
    for k in range(1, cap + 1):
        g = grad(u) + rho_hat * (u - theta)
        u = cset.project(u - (2.0 / (mu * (k + 1))) * g)
        wsum += k
        prev = avg
        avg = avg + (k / wsum) * (u - avg)
        change = float(np.linalg.norm(avg - prev))
        if k > 10 and change <= tol:
            return cset.project(avg), k, change
    raise ConvergenceError(f"subgradient prox solve hit {cap} iterations (last change {change:.3e})",
                           residual=change, iterations=cap)


def moreau_prox(problem, cfg, theta) -> np.ndarray:
    return _solve_prox(problem, cfg, theta)[0]


def moreau_grad(problem, cfg, theta) -> np.ndarray:
    """rho_hat (theta - prox(theta)): gradient of the envelope with lambda = 1/rho_hat."""
    theta = as_vector(theta)
    return cfg.rho_hat * (theta - moreau_prox(problem, cfg, theta))


def moreau_value(problem, cfg, theta) -> float:
    if problem.full_loss is None:
        raise UnsupportedOperation("moreau_value needs the population loss (full_loss)")
    theta = as_vector(theta)
    th = moreau_prox(problem, cfg, theta)
    _, reg, _ = _resolve(problem, cfg)
    diff = th - theta
    return float(problem.full_loss(th) + reg.value(th) + 0.5 * cfg.rho_hat * (diff @ diff))


def gradient_mapping_norm(problem, rho_hat, theta, regularizer=None, constraint=None) -> float:
    """rho_hat ||theta - proj(theta - grad f(theta)/rho_hat)||.

    With an L1 regularizer the projection is replaced by its prox.
    """
    if not problem.smooth or problem.full_grad is None:
        raise UnsupportedOperation("gradient mapping needs a smooth problem with full_grad")
    theta = as_vector(theta)
    v = theta - problem.full_grad(theta) / rho_hat
    cset = problem.constraint if constraint is None else constraint
    if regularizer is None or isinstance(regularizer, Zero):
        step = cset.project(v)
    elif isinstance(regularizer, Indicator):
        step = regularizer.set.project(v)
    else:
        step = regularizer.prox(1.0 / rho_hat, v)
    return float(rho_hat * np.linalg.norm(theta - step))


def composite_dist(theta, g, reg, cset) -> float:
    """dist(0, g + dr(theta) + N_Theta(theta)) for Zero/Indicator/L1 regularizers."""
    if isinstance(reg, Indicator):
        return normal_cone_dist(reg.set, theta, g)
    if isinstance(reg, L1):
        if not isinstance(cset, WholeSpace):
            raise UnsupportedOperation("L1 plus a constraint set is not supported")
        w = reg.weight
        nz = theta != 0
        r = np.where(nz, g + w * np.sign(theta), np.maximum(np.abs(g) - w, 0.0))
        return float(np.linalg.norm(r))
    return normal_cone_dist(cset, theta, g)


def stationarity_report(problem, cfg, theta) -> StationarityReport:
    theta = as_vector(theta)
    th, iters, _ = _solve_prox(problem, cfg, theta)
    cset, reg, _ = _resolve(problem, cfg)
    dist = float(np.linalg.norm(theta - th))
    gm = ncd = None
    if problem.smooth:
        gm = gradient_mapping_norm(problem, cfg.rho_hat, theta, reg, cset)
        ncd = composite_dist(th, problem.full_grad(th), reg, cset)
    return StationarityReport(cfg.rho_hat * dist, gm, dist, ncd, iters)


def moreau_config_for_run(problem, config, rho_hat):
    reg = config.regularizer if config.algorithm == "prox" else Zero()
    cset = None if config.algorithm != "prox" else WholeSpace()
    return MoreauConfig(rho_hat=rho_hat, inner_tol=config.inner_tol,
                        inner_max_iters=config.inner_max_iters,
                        regularizer=reg, constraint=cset)


def attach_diagnostics(trace, problem, config):
    """Fill the Moreau/gradient-mapping columns of ``trace`` at its checkpoints."""
    cfg = moreau_config_for_run(problem, config, trace.rho_hat)
    reports = [stationarity_report(problem, cfg, th) for th in trace.checkpoint_iterates]
    trace.moreau_grad_norms = np.array([r.moreau_grad_norm for r in reports])
    trace.proxpoint_dists = np.array([r.proxpoint_distance for r in reports])
    if problem.smooth:
        trace.grad_map_norms = np.array([r.grad_map_norm for r in reports])
    trace.extras["normal_cone_dist_at_proxpoint"] = np.array(
        [np.nan if r.normal_cone_dist_at_proxpoint is None else r.normal_cone_dist_at_proxpoint
         for r in reports])
    trace.extras["inner_iters"] = np.array([r.inner_iters_used for r in reports])
    return trace


# ---------------------------------------------------------------------------
# post-processing
# ---------------------------------------------------------------------------

def averaged_gradient(problem, chain, theta, n_hat, seed, c_log=1.0) -> np.ndarray:
    """Mean of G(theta, x_i) over n_hat draws of a fresh stream after burn-in.

    The stream starts in a seed-chosen state and discards k_schedule(n_hat, c_log)
    draws before averaging.
    """
    theta = as_vector(theta)
    init_ss, stream_ss = np.random.SeedSequence(seed).spawn(2)
    s0 = int(make_rng(init_ss).integers(chain.n_states))
    stream = SampleStream(chain, s0, stream_ss)
    for _ in range(k_schedule(n_hat, c_log)):
        stream.step_state()
    # one gradient per state, weighted by visit counts
    counts = np.bincount(stream.states(n_hat), minlength=chain.n_states)
    acc = np.zeros(problem.dim)
    for s in np.nonzero(counts)[0]:
        acc += counts[s] * problem.stoch_subgrad(theta, chain.samples[s])
    return acc / n_hat


def post_process(problem, chain, theta, n_hat, seed, c_log=1.0):
    """theta_breve = proj(theta - averaged gradient) and its exact stationarity."""
    if not problem.smooth:
        raise UnsupportedOperation("post-processing is defined for smooth problems")
    if problem.full_grad is None:
        raise UnsupportedOperation("post-processing diagnostics need full_grad")
    theta = as_vector(theta)
    g = averaged_gradient(problem, chain, theta, n_hat, seed, c_log)
    breve = problem.constraint.project(theta - g)
    return breve, normal_cone_dist(problem.constraint, breve, problem.full_grad(breve))


# ---------------------------------------------------------------------------
# brute-force stationarity gap
# ---------------------------------------------------------------------------

def _sphere_points(dim, n):
    pts = qmc.Halton(d=dim, scramble=False).random(n + 1)[1:]
    z = ndtri(np.clip(pts, 1e-12, 1 - 1e-12))
    nrm = np.linalg.norm(z, axis=1)
    return z[nrm > 1e-12] / nrm[nrm > 1e-12, None]


def _extra_directions(cset, theta):
    dim = theta.size
    eye = np.eye(dim)
    dirs = [eye, -eye]
    if isinstance(cset, Box) and dim <= 12:
        corners = np.array(np.meshgrid(*zip(cset.lower, cset.upper), indexing="ij")).reshape(dim, -1).T
        dirs.append(corners - theta)
    if isinstance(cset, Simplex):
        dirs.append(cset.scale * eye - theta)
        dirs.append((eye[:, None, :] - eye[None, :, :]).reshape(-1, dim))
    d = np.vstack(dirs)
    nrm = np.linalg.norm(d, axis=1)
    return d[nrm > 1e-12] / nrm[nrm > 1e-12, None]


def _face_directions(cset, theta, sphere):
    # sphere points with each subset of the active coordinates zeroed, so
    # directions lying in the faces of the feasible cone get sampled too
    if isinstance(cset, Box):
        active = np.nonzero((theta <= cset.lower + 1e-12) | (theta >= cset.upper - 1e-12))[0]
    elif isinstance(cset, NonnegOrthant):
        active = np.nonzero(theta <= 1e-12)[0]
    else:
        return np.empty((0, theta.size))
    if active.size == 0 or active.size > 8:
        return np.empty((0, theta.size))
    out = []
    for mask in range(1, 1 << active.size):
        zero = active[[(mask >> j) & 1 == 1 for j in range(active.size)]]
        d = sphere.copy()
        d[:, zero] = 0.0
        nrm = np.linalg.norm(d, axis=1)
        keep = nrm > 1e-12
        out.append(d[keep] / nrm[keep, None])
    return np.vstack(out)


def _feasible_rows(cset, pts):
    if isinstance(cset, Box):
        return np.all((pts >= cset.lower) & (pts <= cset.upper), axis=1)
    if isinstance(cset, NonnegOrthant):
        return np.all(pts >= 0.0, axis=1)
    if isinstance(cset, WholeSpace):
        return np.ones(len(pts), dtype=bool)
    return np.array([cset.contains(x, tol=0.0) for x in pts])


def gap_bruteforce(cset, theta, g, n_dirs) -> float:
    """max(0, sup over sampled feasible unit directions d of <-g, d>)."""
    theta, g = as_vector(theta), as_vector(g)
    sphere = _sphere_points(theta.size, n_dirs)
    dirs = np.vstack([sphere, _face_directions(cset, theta, sphere), _extra_directions(cset, theta)])
    feasible = _feasible_rows(cset, theta + 1e-6 * dirs)
    if not feasible.any():
        return 0.0
    return float(max(0.0, np.max(dirs[feasible] @ (-g))))


def stationarity_gap_bruteforce(problem, theta_star, n_dirs) -> float:
    if not problem.smooth or problem.full_grad is None:
        raise UnsupportedOperation("brute-force gap needs a smooth problem with full_grad")
    theta_star = as_vector(theta_star)
    return gap_bruteforce(problem.constraint, theta_star, problem.full_grad(theta_star), n_dirs)
