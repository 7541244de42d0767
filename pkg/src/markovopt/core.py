"""Constraint sets, regularizer proxes and the problem oracle.

Every algorithm in the package works on flat float64 vectors. Matrix-valued
parameters (dictionaries in ODL) are flattened row-major before they reach
anything in here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .errors import ConfigurationError, PreconditionError

FEAS_TOL = 1e-9


def as_vector(v) -> np.ndarray:
    return np.atleast_1d(np.asarray(v, dtype=np.float64))


def _check_dim(expected, v):
    if expected is not None and v.shape != (expected,):
        raise ConfigurationError(
            f"dimension mismatch: set has dimension {expected}, vector has shape {v.shape}")


# ---------------------------------------------------------------------------
# constraint sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WholeSpace:
    dim: Optional[int] = None

    def project(self, v):
        return v.copy()

    def contains(self, v, tol=FEAS_TOL):
        return bool(np.all(np.isfinite(v)))

    def tangent_project(self, theta, d):
        return d

    @property
    def bounded(self):
        return False


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = as_vector(self.lower), as_vector(self.upper)
        if lo.shape != hi.shape:
            raise ConfigurationError("Box bounds must have the same shape")
        if np.any(lo > hi):
            raise ConfigurationError("Box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, dim, lo, hi):
        return cls(np.full(dim, float(lo)), np.full(dim, float(hi)))

    @property
    def dim(self):
        return self.lower.size

    @property
    def bounded(self):
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def project(self, v):
        return np.minimum(np.maximum(v, self.lower), self.upper)

    def contains(self, v, tol=FEAS_TOL):
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))

    def tangent_project(self, theta, d):
        d = d.copy()
        at_lo = theta <= self.lower + FEAS_TOL
        at_hi = theta >= self.upper - FEAS_TOL
        d[at_lo] = np.maximum(d[at_lo], 0.0)
        d[at_hi] = np.minimum(d[at_hi], 0.0)
        return d


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center))
        if not self.radius > 0:
            raise ConfigurationError(f"Ball radius must be positive, got {self.radius}")

    @property
    def dim(self):
        return self.center.size

    @property
    def bounded(self):
        return True

    def project(self, v):
        diff = v - self.center
        nrm = np.linalg.norm(diff)
        if nrm <= self.radius:
            return v.copy()
        return self.center + diff * (self.radius / nrm)

    def contains(self, v, tol=FEAS_TOL):
        return bool(np.linalg.norm(v - self.center) <= self.radius + tol)

    def tangent_project(self, theta, d):
        diff = theta - self.center
        nrm = np.linalg.norm(diff)
        if nrm < self.radius - FEAS_TOL:
            return d
        n = diff / nrm
        s = n @ d
        return d - s * n if s > 0 else d


@dataclass(frozen=True)
class NonnegOrthant:
    dim: Optional[int] = None

    @property
    def bounded(self):
        return False

    def project(self, v):
        return np.maximum(v, 0.0)

    def contains(self, v, tol=FEAS_TOL):
        return bool(np.all(v >= -tol))

    def tangent_project(self, theta, d):
        d = d.copy()
        zero = theta <= FEAS_TOL
        d[zero] = np.maximum(d[zero], 0.0)
        return d


@dataclass(frozen=True)
class NonnegBall:
    """Nonnegative vectors with Euclidean (Frobenius) norm at most ``radius``."""

    radius: float
    dim: Optional[int] = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigurationError(f"NonnegBall radius must be positive, got {self.radius}")

    @property
    def bounded(self):
        return True

    def project(self, v):
        # orthant is a cone and the ball is centred at its apex, so the
        # composition of the two projections is the projection onto the intersection
        u = np.maximum(v, 0.0)
        nrm = np.linalg.norm(u)
        if nrm > self.radius:
            u *= self.radius / nrm
        return u

    def contains(self, v, tol=FEAS_TOL):
        return bool(np.all(v >= -tol) and np.linalg.norm(v) <= self.radius + tol)

    def tangent_project(self, theta, d):
        d = d.copy()
        zero = theta <= FEAS_TOL
        d[zero] = np.maximum(d[zero], 0.0)
        if np.linalg.norm(theta) >= self.radius - FEAS_TOL:
            n = np.where(zero, 0.0, theta)
            n /= np.linalg.norm(n)
            free = ~zero
            s = n[free] @ d[free]
            if s > 0:
                d[free] -= s * n[free]
        return d


@dataclass(frozen=True)
class Simplex:
    """{u >= 0, sum(u) = scale}."""

    scale: float = 1.0
    dim: Optional[int] = None

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigurationError(f"Simplex scale must be positive, got {self.scale}")

    @property
    def bounded(self):
        return True

    def project(self, v):
        u = np.sort(v)[::-1]
        css = np.cumsum(u) - self.scale
        idx = np.arange(1, v.size + 1)
        k = np.nonzero(u - css / idx > 0)[0][-1]
        tau = css[k] / (k + 1.0)
        return np.maximum(v - tau, 0.0)

    def contains(self, v, tol=FEAS_TOL):
        return bool(np.all(v >= -tol) and abs(v.sum() - self.scale) <= tol * max(1, v.size))

    def tangent_project(self, theta, d):
        # T = {sum d = 0, d_i >= 0 where theta_i = 0}; find the shift mu with
        # sum_F (d - mu) + sum_Z max(d - mu, 0) = 0 by scanning breakpoints.
        zero = theta <= FEAS_TOL
        dF, dZ = d[~zero], np.sort(d[zero])[::-1]
        total, count = dF.sum(), dF.size
        mu = total / count
        for k in range(dZ.size):
            if dZ[k] <= mu:
                break
            total += dZ[k]
            count += 1
            mu = total / count
        out = d - mu
        out[zero] = np.maximum(out[zero], 0.0)
        return out


ConstraintSet = Any  # one of the dataclasses above


def project(cset, v) -> np.ndarray:
    v = as_vector(v)
    _check_dim(getattr(cset, "dim", None), v)
    return cset.project(v)


def normal_cone_dist(cset, theta, g) -> float:
    """dist(0, g + N(theta)), via the projection of -g onto the tangent cone."""
    theta, g = as_vector(theta), as_vector(g)
    _check_dim(getattr(cset, "dim", None), theta)
    if not cset.contains(theta):
        raise PreconditionError("normal_cone_dist: theta is not feasible")
    return float(np.linalg.norm(cset.tangent_project(theta, -g)))


# ---------------------------------------------------------------------------
# regularizers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Zero:
    def value(self, v):
        return 0.0

    def prox(self, step, v):
        return v.copy()


@dataclass(frozen=True)
class L1:
    weight: float

    def __post_init__(self):
        if self.weight < 0:
            raise ConfigurationError("L1 weight must be nonnegative")

    def value(self, v):
        return self.weight * float(np.abs(v).sum())

    def prox(self, step, v):
        return soft_threshold(v, step * self.weight)


@dataclass(frozen=True)
class Indicator:
    set: Any

    def value(self, v):
        return 0.0 if self.set.contains(v) else np.inf

    def prox(self, step, v):
        return project(self.set, v)


def soft_threshold(v, tau):
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def prox_reg(reg, step, v) -> np.ndarray:
    if not step > 0:
        raise PreconditionError(f"prox step must be positive, got {step}")
    return reg.prox(step, as_vector(v))


# ---------------------------------------------------------------------------
# problems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplePoint:
    payload: np.ndarray
    state_index: Optional[int] = None


@dataclass(frozen=True)
class WeaklyConvexProblem:
    """Per-sample loss, stochastic subgradient oracle and declared constants.

    ``full_grad``/``full_loss`` are the exact population quantities under the
    stationary distribution; they are only set when computable (finite chains,
    see :func:`bind_population`). ``grad_lipschitz`` is the gradient-Lipschitz
    constant for smooth problems (defaults to ``rho``).
    """

    dim: int
    sample_loss: Callable[[np.ndarray, SamplePoint], float]
    stoch_subgrad: Callable[[np.ndarray, SamplePoint], np.ndarray]
    rho: float
    subgrad_bound: float
    subgrad_lipschitz: float
    value_bound: float
    constraint: Any = field(default_factory=WholeSpace)
    full_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    full_loss: Optional[Callable[[np.ndarray], float]] = None
    smooth: bool = True
    grad_lipschitz: Optional[float] = None
    probe_radius: float = 10.0
    name: str = "problem"
    data: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def smoothness(self):
        return self.rho if self.grad_lipschitz is None else self.grad_lipschitz


def expected_gradient(problem, chain, theta) -> np.ndarray:
    """sum_s pi(s) G(theta, x_s): the population subgradient."""
    theta = as_vector(theta)
    out = np.zeros(problem.dim)
    for w, x in zip(chain.stationary, chain.samples):
        if w:
            out += w * problem.stoch_subgrad(theta, x)
    return out


def expected_loss(problem, chain, theta) -> float:
    theta = as_vector(theta)
    return float(sum(w * problem.sample_loss(theta, x)
                     for w, x in zip(chain.stationary, chain.samples) if w))


def bind_population(problem, chain):
    """Return ``problem`` with exact pi-weighted full_grad/full_loss attached."""
    from dataclasses import replace
    return replace(problem,
                   full_grad=lambda th: expected_gradient(problem, chain, th),
                   full_loss=lambda th: expected_loss(problem, chain, th))
