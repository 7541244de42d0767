"""Projected SGD, AdaGrad-norm, stochastic heavy ball and prox-subgradient loops.

All four loops draw their samples from a :class:`~markovopt.samplers.SampleStream`
and record the same :class:`Trace`. Index conventions:

* iteration ``t`` (1-based) uses the ``t``-th draw of the stream for PSGD,
  AdaGrad and the prox variant, i.e. the sample the algorithms call x_{t+1};
* heavy ball seeds ``z_1 = G(theta_1, x_1)`` with the first draw, and
  iteration ``t`` draws x_{t+1} for ``z_{t+1}``. With ``beta = 1`` this makes
  its trajectory identical to PSGD on the same seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import Indicator, Zero, as_vector
from .errors import AbortedRunError, ConfigurationError, PreconditionError
from .samplers import SampleStream, make_rng


# ---------------------------------------------------------------------------
# step schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigurationError("step size must be positive")


@dataclass(frozen=True)
class InvSqrt:
    """alpha_t = c / sqrt(t)."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigurationError("step size constant must be positive")


@dataclass(frozen=True)
class AdaGradNorm:
    """alpha_t = alpha / sqrt(v_t), v_t = v0 + sum of squared gradient norms so far."""

    alpha: float = 1.0
    v0: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.v0 > 0):
            raise ConfigurationError("AdaGradNorm needs alpha > 0 and v0 > 0")


def step_size(schedule, t, grad_sq_accum=0.0) -> float:
    """Step for iteration ``t``.

    For AdaGradNorm ``grad_sq_accum`` is the accumulated sum of squared
    gradient norms *including* the current gradient; v0 is added here.
    """
    if t < 1:
        raise PreconditionError("step_size: t must be >= 1")
    if isinstance(schedule, Constant):
        return schedule.c
    if isinstance(schedule, InvSqrt):
        return schedule.c / math.sqrt(t)
    if isinstance(schedule, AdaGradNorm):
        return schedule.alpha / math.sqrt(schedule.v0 + grad_sq_accum)
    raise ConfigurationError(f"unknown schedule {schedule!r}")


# ---------------------------------------------------------------------------
# configuration and trace
# ---------------------------------------------------------------------------

ALGORITHMS = ("psgd", "adagrad", "shb", "prox")


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "psgd"
    schedule: object = field(default_factory=lambda: InvSqrt(1.0))
    horizon: int = 1000
    beta: float = 1.0
    z1: Optional[np.ndarray] = None
    regularizer: object = field(default_factory=Zero)
    rho_hat: Optional[float] = None
    seed: int = 0
    checkpoint_stride: Optional[int] = None  # None: powers of two plus T
    checkpoints: Optional[tuple] = None      # explicit list overrides the stride
    diagnostics_on: bool = False
    theta1: Optional[np.ndarray] = None
    initial_state: int = 0
    shb_grad_at: str = "next_iterate"
    record_loss: str = "every"               # every | checkpoints | none
    inner_tol: float = 1e-9
    inner_max_iters: Optional[int] = None
    check_feasibility: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"algorithm must be one of {ALGORITHMS}")
        if not (isinstance(self.horizon, (int, np.integer)) and self.horizon >= 1):
            raise ConfigurationError("horizon T must be a positive integer")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigurationError("beta must lie in (0,1]")
        if self.shb_grad_at not in ("next_iterate", "current_iterate"):
            raise ConfigurationError("shb_grad_at must be next_iterate or current_iterate")
        if self.record_loss not in ("every", "checkpoints", "none"):
            raise ConfigurationError("record_loss must be every, checkpoints or none")
        if self.checkpoint_stride is not None and self.checkpoint_stride < 1:
            raise ConfigurationError("checkpoint_stride must be positive")

    def resolved_rho_hat(self, problem):
        if self.rho_hat is None:
            return 2.0 * problem.rho if problem.rho > 0 else 1.0
        if not self.rho_hat > problem.rho:
            raise ConfigurationError(
                f"rho_hat={self.rho_hat} must exceed the weak-convexity modulus rho={problem.rho}")
        if self.algorithm == "shb" and self.rho_hat < 2 * problem.rho:
            raise ConfigurationError("heavy ball requires rho_hat >= 2 rho")
        return float(self.rho_hat)


def checkpoint_schedule(T, stride=None, explicit=None) -> np.ndarray:
    if explicit is not None:
        pts = {int(t) for t in explicit if 1 <= t <= T}
    elif stride is None:
        pts = {1 << k for k in range(T.bit_length()) if (1 << k) <= T}
    else:
        pts = {1} | set(range(stride, T + 1, stride))
    pts.add(T)
    return np.array(sorted(pts), dtype=np.int64)


@dataclass
class Trace:
    algorithm: str
    horizon: int
    step_sizes: np.ndarray
    theta_change: np.ndarray
    grad_norms: np.ndarray
    losses: np.ndarray
    checkpoints: np.ndarray
    checkpoint_iterates: np.ndarray
    output_index: int
    output_iterate: np.ndarray
    final_iterate: np.ndarray
    states: np.ndarray
    rho_hat: float
    moreau_grad_norms: Optional[np.ndarray] = None
    grad_map_norms: Optional[np.ndarray] = None
    proxpoint_dists: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def iterates(self):
        return [(int(t), th) for t, th in zip(self.checkpoints, self.checkpoint_iterates)]

    def output_weights(self):
        if self.algorithm == "adagrad":
            return np.ones(self.horizon)
        return self.step_sizes


def sample_output_index(weights, rng) -> int:
    """Draw k in {1..T} with P(k) proportional to weights[k-1]."""
    w = np.asarray(weights, dtype=np.float64)
    cum = np.cumsum(w)
    k = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(k, w.size - 1) + 1


def select_output(trace, mode="weighted_random"):
    """Return (t, theta_t) chosen per the output rule."""
    if mode in ("weighted_random", "WeightedRandom"):
        return trace.output_index, trace.output_iterate
    if mode in ("argmin_moreau", "ArgminMoreau"):
        if trace.moreau_grad_norms is None:
            raise ConfigurationError("ArgminMoreau output needs Moreau diagnostics at checkpoints")
        i = int(np.argmin(trace.moreau_grad_norms))  # first minimum wins ties
        return int(trace.checkpoints[i]), trace.checkpoint_iterates[i]
    raise ConfigurationError(f"unknown output mode {mode!r}")


# ---------------------------------------------------------------------------
# loops
# ---------------------------------------------------------------------------

def _initial_point(problem, config):
    theta = (np.zeros(problem.dim) if config.theta1 is None
             else as_vector(config.theta1).copy())
    if theta.shape != (problem.dim,):
        raise ConfigurationError(f"theta1 has shape {theta.shape}, problem dimension is {problem.dim}")
    if config.theta1 is None:
        theta = problem.constraint.project(theta)
    if config.algorithm != "prox" and not problem.constraint.contains(theta):
        raise PreconditionError("initial iterate is not feasible")
    return theta


def _grad(problem, theta, x, t):
    g = problem.stoch_subgrad(theta, x)
    if not np.all(np.isfinite(g)):
        raise AbortedRunError(f"oracle returned a non-finite subgradient at t={t}", t=t)
    return g


class _Recorder:
    def __init__(self, problem, config, T):
        self.problem = problem
        self.T = T
        self.alpha = np.empty(T)
        self.change = np.empty(T)
        self.gnorm = np.empty(T)
        self.loss = np.full(T, np.nan)
        self.states = np.empty(T, dtype=np.int64)
        self.ckpts = checkpoint_schedule(T, config.checkpoint_stride, config.checkpoints)
        self._ck_set = {int(t): i for i, t in enumerate(self.ckpts)}
        self.ck_iter = np.empty((self.ckpts.size, problem.dim))
        self.loss_mode = config.record_loss if problem.full_loss is not None else "none"
        self.tau = None
        self.theta_tau = None

    def before_update(self, t, theta):
        i = self._ck_set.get(t)
        if i is not None:
            self.ck_iter[i] = theta
        if self.loss_mode == "every" or (self.loss_mode == "checkpoints" and i is not None):
            self.loss[t - 1] = self.problem.full_loss(theta)
        if t == self.tau:
            self.theta_tau = theta.copy()

    def after_update(self, t, alpha, theta, theta_new, gnorm, state):
        self.alpha[t - 1] = alpha
        self.change[t - 1] = np.linalg.norm(theta_new - theta)
        self.gnorm[t - 1] = gnorm
        self.states[t - 1] = state


def _prepare(problem, config, algorithm):
    if config.algorithm != algorithm:
        config = replace(config, algorithm=algorithm)
    rho_hat = config.resolved_rho_hat(problem)
    ss = np.random.SeedSequence(config.seed)
    stream_ss, tau_ss = ss.spawn(2)
    return config, rho_hat, stream_ss, make_rng(tau_ss)


def _finish(problem, config, rec, rho_hat, theta, extras, t0):
    trace = Trace(
        algorithm=config.algorithm, horizon=config.horizon,
        step_sizes=rec.alpha, theta_change=rec.change, grad_norms=rec.gnorm,
        losses=rec.loss, checkpoints=rec.ckpts, checkpoint_iterates=rec.ck_iter,
        output_index=rec.tau, output_iterate=rec.theta_tau, final_iterate=theta,
        states=rec.states, rho_hat=rho_hat, extras=extras)
    if config.diagnostics_on:
        from .stationarity import attach_diagnostics
        attach_diagnostics(trace, problem, config)
    trace.wall_time = time.perf_counter() - t0
    return trace


def _check_feasible(problem, config, theta, t):
    if config.check_feasibility and not problem.constraint.contains(theta):
        raise AbortedRunError(f"iterate left the constraint set at t={t}", t=t)


def _run_plain(problem, chain, config, algorithm):
    """Shared loop for PSGD and the prox variant (fixed schedules)."""
    t0 = time.perf_counter()
    config, rho_hat, stream_ss, tau_rng = _prepare(problem, config, algorithm)
    if not isinstance(config.schedule, (Constant, InvSqrt)):
        raise ConfigurationError(f"{algorithm} needs a Constant or InvSqrt schedule")
    T = config.horizon
    theta = _initial_point(problem, config)
    stream = SampleStream(chain, config.initial_state, stream_ss)
    rec = _Recorder(problem, config, T)
    alphas = np.array([step_size(config.schedule, t) for t in range(1, T + 1)])
    rec.tau = sample_output_index(alphas, tau_rng)
    cset, reg = problem.constraint, config.regularizer
    for t in range(1, T + 1):
        rec.before_update(t, theta)
        x = stream.step()
        g = _grad(problem, theta, x, t)
        alpha = alphas[t - 1]
        if algorithm == "psgd":
            theta_new = cset.project(theta - alpha * g)
            _check_feasible(problem, config, theta_new, t)
        else:
            theta_new = reg.prox(alpha, theta - alpha * g)
            if isinstance(reg, Indicator):
                _check_feasible(problem, config, theta_new, t)
        rec.after_update(t, alpha, theta, theta_new, np.linalg.norm(g), stream.current_state)
        theta = theta_new
    return _finish(problem, config, rec, rho_hat, theta, {}, t0)


def run_psgd(problem, chain, config) -> Trace:
    """theta_{t+1} = proj(theta_t - alpha_t G(theta_t, x_{t+1}))."""
    return _run_plain(problem, chain, config, "psgd")


def run_prox_subgrad(problem, chain, config) -> Trace:
    """theta_{t+1} = prox_{alpha_t r}(theta_t - alpha_t G(theta_t, x_{t+1}))."""
    return _run_plain(problem, chain, config, "prox")


def run_adagrad(problem, chain, config) -> Trace:
    """AdaGrad-norm; v_t absorbs the current gradient before alpha_t is formed."""
    t0 = time.perf_counter()
    config, rho_hat, stream_ss, tau_rng = _prepare(problem, config, "adagrad")
    sched = config.schedule
    if not isinstance(sched, AdaGradNorm):
        raise ConfigurationError("adagrad needs an AdaGradNorm schedule")
    T = config.horizon
    theta = _initial_point(problem, config)
    stream = SampleStream(chain, config.initial_state, stream_ss)
    rec = _Recorder(problem, config, T)
    rec.tau = sample_output_index(np.ones(T), tau_rng)
    v = np.empty(T)
    accum = 0.0
    cset = problem.constraint
    for t in range(1, T + 1):
        rec.before_update(t, theta)
        x = stream.step()
        g = _grad(problem, theta, x, t)
        gsq = float(g @ g)
        accum += gsq
        alpha = step_size(sched, t, accum)
        v[t - 1] = sched.v0 + accum
        theta_new = cset.project(theta - alpha * g)
        _check_feasible(problem, config, theta_new, t)
        rec.after_update(t, alpha, theta, theta_new, math.sqrt(gsq), stream.current_state)
        theta = theta_new
    return _finish(problem, config, rec, rho_hat, theta, {"v": v}, t0)


def run_shb(problem, chain, config) -> Trace:
    """Stochastic heavy ball.

    theta_{t+1} = proj(theta_t - alpha_t z_t)
    z_{t+1} = beta G(theta', x_{t+1}) + (1 - beta)/alpha_{t+1} (theta_t - theta_{t+1})

    where theta' is theta_{t+1} (``shb_grad_at="next_iterate"``) or theta_t.
    """
    t0 = time.perf_counter()
    config, rho_hat, stream_ss, tau_rng = _prepare(problem, config, "shb")
    if not isinstance(config.schedule, (Constant, InvSqrt)):
        raise ConfigurationError("shb needs a Constant or InvSqrt schedule")
    beta, T = config.beta, config.horizon
    theta = _initial_point(problem, config)
    stream = SampleStream(chain, config.initial_state, stream_ss)
    rec = _Recorder(problem, config, T)
    alphas = np.array([step_size(config.schedule, t) for t in range(1, T + 2)])
    rec.tau = sample_output_index(alphas[:T], tau_rng)
    if config.z1 is None:
        z = _grad(problem, theta, stream.step(), 0)
    else:
        z = as_vector(config.z1).copy()
    z_norms = np.empty(T + 1)
    z_norms[0] = np.linalg.norm(z)
    at_next = config.shb_grad_at == "next_iterate"
    cset = problem.constraint
    for t in range(1, T + 1):
        rec.before_update(t, theta)
        x = stream.step()
        alpha = alphas[t - 1]
        theta_new = cset.project(theta - alpha * z)
        _check_feasible(problem, config, theta_new, t)
        g = _grad(problem, theta_new if at_next else theta, x, t)
        z_new = beta * g
        if beta < 1.0:
            z_new = z_new + ((1.0 - beta) / alphas[t]) * (theta - theta_new)
        rec.after_update(t, alpha, theta, theta_new, np.linalg.norm(g), stream.current_state)
        z_norms[t] = np.linalg.norm(z_new)
        theta, z = theta_new, z_new
    return _finish(problem, config, rec, rho_hat, theta, {"z_norms": z_norms}, t0)


RUNNERS = {"psgd": run_psgd, "adagrad": run_adagrad, "shb": run_shb, "prox": run_prox_subgrad}


def run(problem, chain, config) -> Trace:
    return RUNNERS[config.algorithm](problem, chain, config)
