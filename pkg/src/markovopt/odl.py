"""Online dictionary learning by projected SGD over Markovian data matrices.

Each state s of the chain carries a data matrix X_s (p x n). The per-sample
loss is the optimal value of the coding problem

    l(X, theta) = min_{H >= 0}  ||X - theta H||_F^2 + kappa2 ||H||_F^2 + lam ||H||_1

and, the minimizer being unique for kappa2 > 0, its gradient in theta is
2 (theta H* - X) H*^T (Danskin). The dictionary theta (p x r) lives in the
nonnegative Frobenius ball and is flattened row-major for the generic loops.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .algorithms import Constant, RunConfig, run
from .core import NonnegBall, SamplePoint, WeaklyConvexProblem
from .errors import ConfigurationError, ConvergenceError, PreconditionError
from .samplers import MarkovChain, cycle_walk, make_rng


DEFAULT_STEP = 1.2e-4   # constant step, calibrated on the planted benchmark


@dataclass(frozen=True)
class ODLConfig:
    rank: int = 4
    kappa2: float = 0.5
    l1_weight: float = 0.1
    coding_tol: float = 1e-8
    coding_max_iters: int = 100_000
    nonneg_codes: bool = True
    schedule: object = field(default_factory=lambda: Constant(DEFAULT_STEP))
    horizon: int = 20_000
    seed: int = 0
    algorithm: str = "psgd"
    beta: float = 1.0
    radius: Optional[float] = None   # None: twice the planted dictionary's norm
    init_scale: float = 0.25         # theta_1 norm as a fraction of the radius
    checkpoints: Optional[tuple] = None
    diagnostics_on: bool = True

    def __post_init__(self):
        if not self.kappa2 > 0:
            raise ConfigurationError("kappa2 must be positive (unique codes)")
        if self.l1_weight < 0:
            raise ConfigurationError("l1_weight must be nonnegative")
        if self.rank < 1:
            raise ConfigurationError("rank must be positive")
        if not 0 < self.init_scale <= 1:
            raise ConfigurationError("init_scale must lie in (0,1]")


@dataclass(frozen=True, eq=False)
class Dictionary:
    matrix: np.ndarray
    constraint: object = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ConfigurationError("dictionary must be a p x r matrix")
        object.__setattr__(self, "matrix", m)
        if self.constraint is None:
            object.__setattr__(self, "constraint", NonnegBall(max(np.linalg.norm(m), 1e-12), m.size))

    @property
    def flat(self):
        return self.matrix.ravel()


@dataclass(frozen=True)
class CodeResult:
    H: np.ndarray
    residual: float
    iterations: int


def coding_objective(X, theta, H, kappa2, l1_weight):
    R = X - theta @ H
    return float(np.sum(R * R) + kappa2 * np.sum(H * H) + l1_weight * np.abs(H).sum())


def sparse_code(X, theta, cfg, H0=None) -> CodeResult:
    """Minimize ||X - theta H||^2 + kappa2 ||H||^2 + lam ||H||_1 over the code set.

    Proximal gradient with step 1/(2 ||theta||_2^2 + 2 kappa2), all columns at
    once. The residual is the largest per-column gradient-mapping norm, which
    vanishes exactly at the KKT points; iteration stops once it is at most
    ``cfg.coding_tol``.
    """
    X = np.asarray(X, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if X.ndim != 2 or theta.ndim != 2 or X.shape[0] != theta.shape[0]:
        raise PreconditionError(f"incompatible shapes: X {X.shape}, theta {theta.shape}")
    r, n = theta.shape[1], X.shape[1]
    H = np.zeros((r, n)) if H0 is None else np.array(H0, dtype=np.float64)
    gram = theta.T @ theta
    TX = theta.T @ X
    lip = 2.0 * np.linalg.eigvalsh(gram)[-1] + 2.0 * cfg.kappa2
    s = 1.0 / lip
    shrink = s * cfg.l1_weight

    # fold the gradient step into one affine map: H - s grad = M H + c
    M = (1.0 - 2.0 * s * cfg.kappa2) * np.eye(r) - 2.0 * s * gram
    c = 2.0 * s * TX
    if cfg.nonneg_codes:
        c -= shrink
        H = np.maximum(H, 0.0)
    tol_sq = (cfg.coding_tol / lip) ** 2
    for it in range(cfg.coding_max_iters + 1):
        V = M @ H
        V += c
        if cfg.nonneg_codes:
            np.maximum(V, 0.0, out=V)
        else:
            V = np.sign(V) * np.maximum(np.abs(V) - shrink, 0.0)
        D = V - H
        D *= D
        worst = D.sum(axis=0).max() if n else 0.0
        if worst <= tol_sq:
            return CodeResult(H, math.sqrt(worst) * lip, it)
        H = V
    resid = math.sqrt(worst) * lip
    raise ConvergenceError(
        f"sparse coding did not reach KKT residual {cfg.coding_tol:g} in "
        f"{cfg.coding_max_iters} iterations (residual {resid:.3e})",
        residual=resid, iterations=cfg.coding_max_iters)


def dict_subgradient(X, theta, H) -> np.ndarray:
    """2 (theta H - X) H^T, the Danskin gradient of the coding value in theta."""
    return 2.0 * (theta @ H - X) @ H.T


class ODLOracle:
    """Per-state coding with warm starts; tracks the worst KKT residual seen."""

    def __init__(self, data, p, r, cfg):
        self.data = [np.asarray(X, dtype=np.float64) for X in data]
        self.p, self.r, self.cfg = p, r, cfg
        self._warm = {}
        self.max_residual = 0.0
        self.calls = 0
        self._stacked = np.hstack(self.data) if self.data else np.zeros((p, 0))

    def _code(self, key, X, theta):
        res = sparse_code(X, theta, self.cfg, self._warm.get(key))
        self._warm[key] = res.H
        self.max_residual = max(self.max_residual, res.residual)
        self.calls += 1
        return res.H

    def subgrad(self, theta_flat, x):
        theta = theta_flat.reshape(self.p, self.r)
        X = self.data[x.state_index]
        H = self._code(("s", x.state_index), X, theta)
        return dict_subgradient(X, theta, H).ravel()

    def loss(self, theta_flat, x):
        theta = theta_flat.reshape(self.p, self.r)
        X = self.data[x.state_index]
        H = self._code(("s", x.state_index), X, theta)
        return coding_objective(X, theta, H, self.cfg.kappa2, self.cfg.l1_weight)

    def _population_codes(self, theta):
        # columns of all states are independent, so one stacked solve suffices
        return self._code("pop", self._stacked, theta)

    def full_grad(self, pi, theta_flat):
        theta = theta_flat.reshape(self.p, self.r)
        H = self._population_codes(theta)
        R = theta @ H - self._stacked
        out = np.zeros((self.p, self.r))
        start = 0
        for w, X in zip(pi, self.data):
            n = X.shape[1]
            if w:
                out += w * 2.0 * R[:, start:start + n] @ H[:, start:start + n].T
            start += n
        return out.ravel()

    def full_loss(self, pi, theta_flat):
        theta = theta_flat.reshape(self.p, self.r)
        H = self._population_codes(theta)
        R = self._stacked - theta @ H
        total, start = 0.0, 0
        k2, lam = self.cfg.kappa2, self.cfg.l1_weight
        for w, X in zip(pi, self.data):
            n = X.shape[1]
            sl = slice(start, start + n)
            if w:
                total += w * float(np.sum(R[:, sl] ** 2) + k2 * np.sum(H[:, sl] ** 2)
                                   + lam * np.abs(H[:, sl]).sum())
            start += n
        return total


def odl_problem(chain, p, r, cfg, radius):
    """WeaklyConvexProblem for ODL on the chain's data matrices.

    Codes satisfy kappa2 ||H||^2 <= ||X||^2 (compare with H = 0), which bounds
    every constant below. rho = 2 max ||H||^2 is an upper estimate of the
    weak-convexity modulus taken from that code radius, not a sharp value.
    """
    if chain.stationary is None:
        raise ConfigurationError("ODL diagnostics need an ergodic chain")
    data = [np.asarray(x.payload, dtype=np.float64).reshape(p, -1) for x in chain.samples]
    oracle = ODLOracle(data, p, r, cfg)
    pi = np.array(chain.stationary)
    xmax = max(float(np.linalg.norm(X)) for X in data)
    hmax = xmax / math.sqrt(cfg.kappa2)
    rho = max(2.0 * hmax ** 2, 1e-12)
    return WeaklyConvexProblem(
        dim=p * r,
        sample_loss=oracle.loss, stoch_subgrad=oracle.subgrad,
        rho=rho, subgrad_bound=2.0 * (radius * hmax + xmax) * hmax,
        subgrad_lipschitz=rho, value_bound=xmax ** 2,
        constraint=NonnegBall(radius, p * r),
        full_grad=lambda th: oracle.full_grad(pi, th),
        full_loss=lambda th: oracle.full_loss(pi, th),
        smooth=True, grad_lipschitz=rho, probe_radius=radius, name="odl_synthetic",
        data={"oracle": oracle, "p": p, "r": r})


def synth_markov_data(p, n, r, n_states, planted_seed, noise=0.01, laziness=0.5, density=0.5):
    """Planted nonnegative dictionary and a lazy cycle walk over data matrices.

    X_s = theta* H_s + E_s with H_s >= 0 sparse and E_s uniform on
    [0, noise * max|theta* H_s|] (nonnegative, so X_s stays in the data set).
    Returns (chain, Dictionary(theta*)).
    """
    if min(p, n, r, n_states) < 1:
        raise PreconditionError("dimensions must be positive")
    rng = make_rng(planted_seed)
    theta = rng.uniform(0.0, 1.0, (p, r))
    theta /= np.linalg.norm(theta, axis=0, keepdims=True)
    mats = []
    for _ in range(n_states):
        H = rng.uniform(0.0, 1.0, (r, n)) * (rng.random((r, n)) < density)
        clean = theta @ H
        top = float(np.abs(clean).max())
        X = clean + rng.uniform(0.0, 1.0, clean.shape) * (noise * top)
        mats.append(np.maximum(X, 0.0))
    chain = cycle_walk(n_states, laziness,
                       samples=[SamplePoint(X, s) for s, X in enumerate(mats)])
    return chain, Dictionary(theta)


def default_checkpoints(T):
    pts = {1, T}
    pts.update(1 << k for k in range(T.bit_length()) if (1 << k) <= T)
    pts.update(t for t in (100, T // 10) if 1 <= t <= T)
    return tuple(sorted(pts))


def initial_dictionary(p, r, radius, cfg):
    rng = make_rng(np.random.SeedSequence(cfg.seed, spawn_key=(7,)))
    th = rng.uniform(0.0, 1.0, (p, r))
    return th * (cfg.init_scale * radius / np.linalg.norm(th))


def run_odl(chain, cfg, p=None, radius=None):
    """Projected SGD (or AdaGrad / heavy ball via ``cfg.algorithm``) on ODL.

    Returns ``(trace, problem)``. Population diagnostics use the exact
    pi-weighted oracle; ``trace.extras['max_coding_residual']`` is the worst
    KKT residual of every coding solve made during the run.
    """
    X0 = np.asarray(chain.samples[0].payload, dtype=np.float64)
    if X0.ndim != 2 and p is None:
        raise PreconditionError("pass p when the chain's payloads are flattened")
    p = X0.shape[0] if X0.ndim == 2 else p
    r = cfg.rank
    if radius is None:
        radius = cfg.radius
    if radius is None:
        raise ConfigurationError("ODL needs a dictionary radius (cfg.radius or radius=)")
    problem = odl_problem(chain, p, r, cfg, radius)
    rc = RunConfig(algorithm=cfg.algorithm, schedule=cfg.schedule, horizon=cfg.horizon,
                   beta=cfg.beta, seed=cfg.seed,
                   checkpoints=cfg.checkpoints or default_checkpoints(cfg.horizon),
                   diagnostics_on=cfg.diagnostics_on, record_loss="checkpoints",
                   theta1=initial_dictionary(p, r, radius, cfg).ravel())
    trace = run(problem, chain, rc)
    trace.extras["max_coding_residual"] = problem.data["oracle"].max_residual
    return trace, problem


def odl_synthetic(chain=None, p=10, r=4, n=20, n_states=16, seed=0, noise=0.01,
                  laziness=0.5, kappa2=0.5, l1_weight=0.1, radius=None):
    """Builtin: planted benchmark as ``(problem, chain)``.

    A supplied chain only contributes its transition matrix; the data
    matrices are always synthesized (one per state).
    """
    if chain is not None:
        n_states = chain.n_states
    data_chain, planted = synth_markov_data(p, n, r, n_states, seed, noise, laziness)
    if chain is not None:
        data_chain = MarkovChain(chain.transition, data_chain.samples)
    cfg = ODLConfig(rank=r, kappa2=kappa2, l1_weight=l1_weight)
    if radius is None:
        radius = 2.0 * float(np.linalg.norm(planted.matrix))
    problem = odl_problem(data_chain, p, r, cfg, radius)
    return replace(problem, data={**problem.data, "planted": planted.matrix, "radius": radius}), data_chain


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------

def dump_chain_csv(chain, directory):
    """One file per state: header ``p,n,state``, then the matrix rows."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for s, x in enumerate(chain.samples):
        X = np.asarray(x.payload, dtype=np.float64)
        path = directory / f"state_{s:04d}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "n", "state"])
            w.writerow([X.shape[0], X.shape[1], s])
            for row in X:
                w.writerow([repr(float(v)) for v in row])
        paths.append(path)
    with open(directory / "transition.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        for row in chain.transition:
            w.writerow([repr(float(v)) for v in row])
    return paths


def load_chain_csv(directory):
    directory = Path(directory)
    P = np.loadtxt(directory / "transition.csv", delimiter=",", ndmin=2)
    mats = {}
    for path in sorted(directory.glob("state_*.csv")):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != ["p", "n", "state"]:
            raise ConfigurationError(f"{path}: expected header p,n,state")
        p, n, s = (int(v) for v in rows[1])
        X = np.array(rows[2:], dtype=np.float64)
        if X.shape != (p, n):
            raise ConfigurationError(f"{path}: header says {p}x{n}, found {X.shape}")
        mats[s] = X
    samples = [SamplePoint(mats[s], s) for s in range(P.shape[0])]
    return MarkovChain(P, samples)
