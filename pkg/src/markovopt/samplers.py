"""Finite-state Markov chain data streams and mixing coefficients.

The mixing coefficient used throughout is

    Delta(m) = max_s || P^m(s, .) - pi ||_TV,

the worst-case distance to stationarity after ``m`` transitions. For a
Markov chain the conditional law of x_{t+1} given x_1..x_{t-k} only depends
on x_{t-k}, so the coefficient for the window [t-k, t+1] is Delta(k + 1).

Random numbers come from numpy's Philox (counter-based) bit generator seeded
through ``SeedSequence``; trial streams are derived with
``SeedSequence(master_seed, spawn_key=(trial,))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import SamplePoint, as_vector
from .errors import ChainError, PreconditionError

ROW_TOL = 1e-12
STATIONARY_TOL = 1e-10


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def trial_seed(master_seed, trial) -> int:
    """64-bit seed for trial ``trial`` derived from the master seed."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(trial,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _check_stochastic(P):
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise ChainError(f"transition matrix must be square and non-empty, got shape {P.shape}")
    if np.any(P < 0) or not np.all(np.isfinite(P)):
        raise ChainError("transition matrix has negative or non-finite entries")
    sums = P.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > ROW_TOL)[0]
    if bad.size:
        i = int(bad[0])
        raise ChainError(f"row {i} of the transition matrix sums to {float(sums[i])!r}, not 1")
    return P


def ergodicity_check(P):
    """Return None if P is irreducible and aperiodic, else the failing check's name."""
    S = P.shape[0]
    adj = (P > 0).astype(np.int64)
    reach = np.eye(S, dtype=np.int64) | adj
    for _ in range(max(S - 1, 0)):
        reach = ((reach @ (np.eye(S, dtype=np.int64) | adj)) > 0).astype(np.int64)
    if not np.all(reach):
        return "irreducibility"
    power = adj.copy()
    for _ in range(S * S):
        if np.all(power):
            return None
        power = ((power @ adj) > 0).astype(np.int64)
    return None if np.all(power) else "aperiodicity"


def stationary_distribution(P) -> np.ndarray:
    P = _check_stochastic(P)
    failed = ergodicity_check(P)
    if failed is not None:
        raise ChainError(f"chain fails the {failed} check: no power of P up to S^2 is positive")
    S = P.shape[0]
    A = P.T - np.eye(S)
    A[-1, :] = 1.0
    b = np.zeros(S)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.maximum(pi, 0.0)
    pi /= pi.sum()
    resid = np.max(np.abs(pi @ P - pi))
    if resid > STATIONARY_TOL:
        raise ChainError(f"stationary solve residual {resid:.3e} exceeds {STATIONARY_TOL}")
    return pi


@dataclass(frozen=True, eq=False)
class MarkovChain:
    """Finite-state chain with a state -> sample map.

    Built with ``strict=True`` (the default) the chain must be irreducible and
    aperiodic, and ``stationary`` holds the unique invariant law. Non-strict
    chains (periodic or reducible, used as deterministic streams) keep
    ``stationary = None``.
    """

    transition: np.ndarray
    samples: tuple = None
    strict: bool = True
    stationary: np.ndarray = field(default=None, init=False)
    is_irreducible_aperiodic: bool = field(default=False, init=False)

    def __post_init__(self):
        P = _check_stochastic(self.transition)
        P.setflags(write=False)
        object.__setattr__(self, "transition", P)
        S = P.shape[0]
        samples = self.samples
        if samples is None:
            samples = [SamplePoint(np.array([float(s)]), s) for s in range(S)]
        samples = tuple(x if isinstance(x, SamplePoint) else SamplePoint(np.asarray(x, dtype=np.float64), s)
                        for s, x in enumerate(samples))
        if len(samples) != S:
            raise ChainError(f"{len(samples)} samples given for {S} states")
        object.__setattr__(self, "samples", samples)
        ok = ergodicity_check(P) is None
        object.__setattr__(self, "is_irreducible_aperiodic", ok)
        if ok:
            pi = stationary_distribution(P)
            pi.setflags(write=False)
            object.__setattr__(self, "stationary", pi)
        elif self.strict:
            stationary_distribution(P)  # raises with the failing check
        object.__setattr__(self, "_cum", np.cumsum(P, axis=1))

    @property
    def n_states(self):
        return self.transition.shape[0]

    def with_samples(self, samples):
        return MarkovChain(self.transition, tuple(samples), strict=self.strict)

    def stream(self, seed, initial_state=0):
        return SampleStream(self, initial_state, seed)


def matrix_power(P, m):
    """P^m by repeated squaring, renormalising rows after every product."""
    S = P.shape[0]
    result = np.eye(S)
    base = np.array(P, dtype=np.float64)
    while m > 0:
        if m & 1:
            result = result @ base
            result /= result.sum(axis=1, keepdims=True)
        m >>= 1
        if m:
            base = base @ base
            base /= base.sum(axis=1, keepdims=True)
    return result


def tv_distance(p, q, tol=1e-9) -> float:
    p, q = as_vector(p), as_vector(q)
    if p.shape != q.shape:
        raise PreconditionError("tv_distance: distributions have different lengths")
    for d in (p, q):
        if np.any(d < -tol) or abs(d.sum() - 1.0) > tol:
            raise PreconditionError("tv_distance: input is not a probability vector")
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))


def _tv_rows(M, pi):
    return 0.5 * np.abs(M - pi).sum(axis=1)


def mixing_bound(chain, m) -> float:
    if m < 0:
        raise PreconditionError("mixing_bound: m must be nonnegative")
    return float(_tv_rows(matrix_power(chain.transition, m), chain.stationary).max())


def mixing_profile(chain, m_max) -> np.ndarray:
    """[mixing_bound(chain, m) for m = 0..m_max] via successive products."""
    P, pi = chain.transition, chain.stationary
    M = np.eye(chain.n_states)
    out = np.empty(m_max + 1)
    for m in range(m_max + 1):
        out[m] = _tv_rows(M, pi).max()
        M = M @ P
        M /= M.sum(axis=1, keepdims=True)
    return out


def fit_geometric_rate(values, m_start=1):
    """Least-squares fit of log(values[m]) = log C + m log(lambda); returns (C, lambda)."""
    values = np.asarray(values, dtype=np.float64)
    ms = np.arange(values.size)
    keep = (ms >= m_start) & (values > 1e-13)
    slope, intercept = np.polyfit(ms[keep], np.log(values[keep]), 1)
    return float(np.exp(intercept)), float(np.exp(slope))


def make_iid(pi, sample_of_state=None) -> MarkovChain:
    pi = as_vector(pi)
    if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
        raise PreconditionError("make_iid: pi is not a distribution")
    P = np.tile(pi / pi.sum(), (pi.size, 1))
    return MarkovChain(P, None if sample_of_state is None else tuple(sample_of_state))


def two_state(a, b, samples=None) -> MarkovChain:
    return MarkovChain(np.array([[1 - a, a], [b, 1 - b]]), samples)


def cycle_walk(n_states, laziness=0.5, samples=None) -> MarkovChain:
    """Lazy random walk on a cycle: stay w.p. laziness, else step +-1 uniformly."""
    S = n_states
    if S == 1:
        return MarkovChain(np.ones((1, 1)), samples)
    P = np.zeros((S, S))
    move = (1.0 - laziness) / 2.0
    for s in range(S):
        P[s, s] += laziness
        P[s, (s + 1) % S] += move
        P[s, (s - 1) % S] += move
    return MarkovChain(P, samples)


def random_chain(n_states, rng, sparsity=0.0, samples=None) -> MarkovChain:
    """Random dense-ish ergodic chain (a self-loop on every state keeps it aperiodic)."""
    while True:
        P = rng.random((n_states, n_states))
        if sparsity:
            P *= rng.random((n_states, n_states)) >= sparsity
        P += np.eye(n_states) * 0.1
        P /= P.sum(axis=1, keepdims=True)
        if ergodicity_check(P) is None:
            return MarkovChain(P, samples)


def k_schedule(t, c_log) -> int:
    if t < 1:
        raise PreconditionError("k_schedule: t must be >= 1")
    return int(min(t, max(1, math.ceil(c_log * math.log(t + 1)))))


def a1_partial_sums(chain, alphas, c_log):
    """Partial sums of alpha_t * Delta(k_t + 1), t = 1..len(alphas)."""
    alphas = np.asarray(alphas, dtype=np.float64)
    ks = [k_schedule(t, c_log) for t in range(1, alphas.size + 1)]
    prof = mixing_profile(chain, max(ks) + 1)
    terms = alphas * prof[np.asarray(ks) + 1]
    return np.cumsum(terms)


class SampleStream:
    """Single-owner sample sequence driven by a seeded Philox generator."""

    _BLOCK = 4096

    def __init__(self, chain, initial_state=0, seed=0):
        if not 0 <= initial_state < chain.n_states:
            raise PreconditionError(f"initial state {initial_state} out of range")
        self.chain = chain
        self.current_state = int(initial_state)
        self.rng_seed = seed
        self.step_count = 0
        self._rng = make_rng(seed)
        self._buf = np.empty(0)
        self._pos = 0

    def _uniform(self):
        if self._pos == self._buf.size:
            self._buf = self._rng.random(self._BLOCK)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def step_state(self) -> int:
        row = self.chain._cum[self.current_state]
        s = int(np.searchsorted(row, self._uniform(), side="right"))
        if s >= row.size:  # cumulative row sum ended a hair below 1
            s = int(np.nonzero(self.chain.transition[self.current_state])[0][-1])
        self.current_state = s
        self.step_count += 1
        return s

    def step(self) -> SamplePoint:
        return self.chain.samples[self.step_state()]

    def states(self, n) -> np.ndarray:
        return np.fromiter((self.step_state() for _ in range(n)), dtype=np.int64, count=n)
