"""Property-verification suite.

Every check is deterministic given the seed, needs no files or network, and
reports a margin: how far the measured quantity sits inside its bound
(positive means pass). The full suite runs in well under a minute.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..algorithms import AdaGradNorm, Constant, InvSqrt, RunConfig, run_adagrad, run_shb, step_size
from ..core import Box, normal_cone_dist
from ..problems import nonconvex_quadratic, phase_retrieval_l1
from ..samplers import (cycle_walk, make_iid, make_rng, matrix_power, mixing_profile,
                        random_chain, two_state)
from ..stationarity import (MoreauConfig, gap_bruteforce, gradient_mapping_norm, moreau_grad,
                            moreau_prox, moreau_value, stationarity_report)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""
    seconds: float = 0.0


@dataclass
class VerifyReport:
    seed: int
    results: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    @property
    def exit_code(self):
        return 0 if self.passed else 1

    def table(self):
        w = max(len(r.name) for r in self.results)
        lines = [f"{'check':<{w}}  result  {'margin':>11}  time   detail"]
        for r in self.results:
            lines.append(f"{r.name:<{w}}  {'PASS' if r.passed else 'FAIL':<6}  {r.margin:>11.4g}  "
                         f"{r.seconds:5.1f}s  {r.detail}")
        lines.append(f"{sum(r.passed for r in self.results)}/{len(self.results)} checks passed")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# numeric inequalities
# ---------------------------------------------------------------------------

def log_sum_lhs(a, v0):
    """sum_i a_i / (v0 + sum_{j<=i} a_j)."""
    a = np.asarray(a, dtype=np.float64)
    return float(np.sum(a / (v0 + np.cumsum(a))))


def sqrt_sum_lhs(a):
    """sum_i a_i / sqrt(sum_{j<=i} a_j); leading zero terms count as 0."""
    a = np.asarray(a, dtype=np.float64)
    c = np.cumsum(a)
    pos = c > 0
    return float(np.sum(a[pos] / np.sqrt(c[pos])))


def check_num_seq(seed, n_seq=1000):
    rng = make_rng(seed)
    worst1 = worst2 = np.inf
    for _ in range(n_seq):
        n = int(rng.integers(1, 300))
        kind = rng.integers(3)
        if kind == 0:
            a = rng.exponential(1.0, n)
        elif kind == 1:
            a = rng.pareto(1.5, n) * (rng.random(n) < 0.7)
        else:
            a = 10.0 ** rng.uniform(-6, 3, n)
        v0 = 10.0 ** rng.uniform(-3, 2)
        s = a.sum()
        # both sides agree to O(x^2) for tiny a_i/v0, so allow double rounding
        r1, r2 = math.log1p(s / v0), 2.0 * math.sqrt(s)
        worst1 = min(worst1, r1 - log_sum_lhs(a, v0) + 1e-12 * max(r1, 1.0))
        worst2 = min(worst2, r2 - sqrt_sum_lhs(a) + 1e-12 * max(r2, 1.0))
    return worst1, worst2


# ---------------------------------------------------------------------------
# individual checks
# ---------------------------------------------------------------------------

def _quadratic(dim=20, seed=0):
    return nonconvex_quadratic(cycle_walk(8, 0.5), dim=dim, seed=seed)


def _box_points(rng, problem, n):
    c = problem.constraint
    return rng.uniform(c.lower, c.upper, (n, problem.dim))


def check_prox_lipschitz(seed, n_pairs=1000):
    rng = make_rng(seed)
    problem, _ = _quadratic()
    rh = 2.0 * problem.rho
    cfg = MoreauConfig(rho_hat=rh, inner_tol=1e-11)
    bound = rh / (rh - problem.rho)
    pts = _box_points(rng, problem, 2 * n_pairs)
    worst = np.inf
    for a, b in zip(pts[:n_pairs], pts[n_pairs:]):
        d = np.linalg.norm(a - b)
        ratio = np.linalg.norm(moreau_prox(problem, cfg, a) - moreau_prox(problem, cfg, b)) / d
        worst = min(worst, bound + 2 * cfg.inner_tol * bound / d - ratio)
    # 1-D quadratic f = -x^2/2 (rho = 1), rho_hat = 2: prox(x) = 2x exactly
    one_d = 2.0 - abs(2.0 * 0.3 - 2.0 * (-0.7)) / 1.0
    return min(worst, one_d), f"bound rho_hat/(rho_hat-rho) = {bound:g}"


def check_proxpoint_bound(seed, n=1000):
    rng = make_rng(seed)
    out = []
    for problem, _ in (_quadratic(), phase_retrieval_l1(cycle_walk(6, 0.5), dim=4, seed=seed)):
        rh = 2.0 * problem.rho
        cfg = MoreauConfig(rho_hat=rh, inner_tol=1e-9 if problem.smooth else 1e-7)
        bound = 2.0 * problem.subgrad_bound / (rh - problem.rho)
        cset = problem.constraint
        m = n if problem.smooth else n // 10
        if isinstance(cset, Box):
            pts = _box_points(rng, problem, m)
        else:
            u = rng.standard_normal((m, problem.dim))
            pts = cset.center + cset.radius * rng.random((m, 1)) ** (1 / problem.dim) * (
                u / np.linalg.norm(u, axis=1, keepdims=True))
        worst = min(bound - np.linalg.norm(moreau_prox(problem, cfg, th) - th) for th in pts)
        out.append(worst / bound)
    return min(out), "relative slack, smooth and nonsmooth problems"


def check_shb_recursion(seed, T=10_000):
    problem, chain = _quadratic()
    L = problem.subgrad_bound
    worst = np.inf
    for beta in (0.1, 0.5, 0.9):
        for sched in (Constant(0.05), InvSqrt(0.5)):
            cfg = RunConfig(algorithm="shb", schedule=sched, horizon=T, beta=beta, seed=seed,
                            record_loss="none")
            tr = run_shb(problem, chain, cfg)
            z2 = tr.extras["z_norms"] ** 2                      # z_1 .. z_{T+1}
            alpha = np.array([step_size(sched, t) for t in range(1, T + 2)])
            rhs = beta * L ** 2 + (1 - beta) * (alpha[:-1] / alpha[1:]) ** 2 * z2[:-1]
            worst = min(worst, float(np.min((rhs - z2[1:]) / (beta * L ** 2))))
            summed = alpha[0] ** 2 * z2[0] + beta * L ** 2 * np.sum(alpha[1:] ** 2)
            worst = min(worst, float((summed - beta * np.sum(alpha[:-1] ** 2 * z2[:-1])) / summed))
    return worst, "||z_{t+1}||^2 <= beta L^2 + (1-beta)(a_t/a_{t+1})^2 ||z_t||^2, and its sum"


def check_gradmap_vs_moreau(seed, n=1000):
    rng = make_rng(seed)
    problem, _ = _quadratic()
    rh = 2.0 * problem.rho
    cfg = MoreauConfig(rho_hat=rh)
    worst = np.inf
    for th in _box_points(rng, problem, n):
        m = np.linalg.norm(moreau_grad(problem, cfg, th))
        g = gradient_mapping_norm(problem, rh, th)
        worst = min(worst, 1.5 * m + rh * cfg.inner_tol - g)
    return worst, "grad-map norm <= 1.5 x Moreau grad norm"


def check_moreau_fd(seed, n=20, h=1e-5):
    rng = make_rng(seed)
    worst = np.inf
    for k in range(3):
        problem, _ = _quadratic(dim=5, seed=seed + k)
        cfg = MoreauConfig(rho_hat=2.0 * problem.rho, inner_tol=1e-13)
        for th in _box_points(rng, problem, n):
            th = np.clip(th, -0.9, 0.9)
            g = moreau_grad(problem, cfg, th)
            fd = np.array([(moreau_value(problem, cfg, th + h * e) - moreau_value(problem, cfg, th - h * e))
                           / (2 * h) for e in np.eye(problem.dim)])
            rel = np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-8)
            worst = min(worst, 1e-4 - rel)
    return worst, "central differences, h = 1e-5, rel. err <= 1e-4"


def check_gap_crosscheck(seed, n=100, n_dirs=10_000):
    rng = make_rng(seed)
    worst = np.inf
    for _ in range(n):
        d = int(rng.integers(1, 4))
        lo = rng.uniform(-1.0, 0.0, d)
        hi = lo + rng.uniform(0.2, 1.5, d)
        box = Box(lo, hi)
        th = box.project(rng.uniform(lo - 0.5, hi + 0.5))
        g = rng.standard_normal(d)
        err = abs(gap_bruteforce(box, th, g, n_dirs) - normal_cone_dist(box, th, g))
        worst = min(worst, 1e-2 - err)
    return worst, "|gap - normal_cone_dist| <= 1e-2"


def check_near_stationarity(seed, n=200):
    rng = make_rng(seed)
    problem, _ = _quadratic()
    rh = 2.0 * problem.rho
    cfg = MoreauConfig(rho_hat=rh)
    worst = np.inf
    for th in _box_points(rng, problem, n):
        rep = stationarity_report(problem, cfg, th)
        worst = min(worst, rep.moreau_grad_norm + rh * cfg.inner_tol - rep.normal_cone_dist_at_proxpoint,
                    1e-12 - abs(rep.proxpoint_distance - rep.moreau_grad_norm / rh))
    return worst, "dist(0, df(theta_hat)+N) <= Moreau norm + slack; ||theta_hat-theta|| = lambda ||grad phi||"


def check_envelope_ordering(seed, n=200):
    rng = make_rng(seed)
    problem, _ = _quadratic()
    cfg = MoreauConfig(rho_hat=2.0 * problem.rho)
    worst = np.inf
    for th in _box_points(rng, problem, n):
        worst = min(worst, problem.full_loss(th) - moreau_value(problem, cfg, th) + 1e-9)
    return worst, "phi_lambda(theta) <= phi(theta)"


def check_adagrad_telescoping(seed, T=5000):
    problem, chain = _quadratic()
    sched = AdaGradNorm(1.0, 1.0)
    tr = run_adagrad(problem, chain, RunConfig(algorithm="adagrad", schedule=sched, horizon=T,
                                               seed=seed, record_loss="none"))
    g2 = tr.grad_norms ** 2
    lhs = np.cumsum(tr.step_sizes * g2)
    rhs = 2.0 * sched.alpha * np.sqrt(np.cumsum(g2))
    return float(np.min(rhs - lhs)), "sum a_t ||G_t||^2 <= 2 alpha sqrt(sum ||G_t||^2)"


def verification_chains(seed, max_states=10):
    """Chains with 1..max_states states: cycle walks, dense and sparse random chains, i.i.d."""
    rng = make_rng(seed)
    chains = []
    for S in range(1, max_states + 1):
        chains.append(cycle_walk(S, 0.5))
        chains.append(cycle_walk(S, 0.1))
        chains.append(random_chain(S, rng))
        chains.append(random_chain(S, rng, sparsity=0.6))
        chains.append(make_iid(rng.dirichlet(np.ones(S))))
        if S == 2:
            chains.append(two_state(0.05, 0.2))
    return chains


def bias_bound_margin(problem, chain, thetas, m_max=50, factor=1.0, atol=1e-12):
    """min over s, m, theta of factor*L*Delta(m) - ||E_{P^m(s,.)} G - E_pi G||.

    ``atol`` (relative to L) absorbs double rounding where Delta(m) is exactly 0.
    """
    pi = chain.stationary
    prof = mixing_profile(chain, m_max)
    P = chain.transition
    worst = np.inf
    for th in thetas:
        G = np.array([problem.stoch_subgrad(th, x) for x in chain.samples])
        mean = pi @ G
        M = np.eye(chain.n_states)
        for m in range(m_max + 1):
            bias = np.linalg.norm(M @ G - mean, axis=1).max()
            worst = min(worst, problem.subgrad_bound * (factor * prof[m] + atol) - bias)
            M = M @ P
            M /= M.sum(axis=1, keepdims=True)
    return worst


def check_key_lemma(seed, n_theta=100, m_max=50):
    rng = make_rng(seed)
    worst = np.inf
    count = 0
    for chain in verification_chains(seed):
        problem, chain = nonconvex_quadratic(chain, dim=5, seed=int(rng.integers(1 << 31)))
        thetas = _box_points(rng, problem, n_theta)
        worst = min(worst, bias_bound_margin(problem, chain, thetas, m_max) / problem.subgrad_bound)
        count += 1
    return worst, f"{count} chains with S <= 10, m <= {m_max}, {n_theta} thetas each (relative to L)"


def check_mixing_monotone(seed, m_max=200):
    worst = np.inf
    for chain in verification_chains(seed):
        prof = mixing_profile(chain, m_max)
        worst = min(worst, float(np.min(prof[:-1] - prof[1:])) + 1e-12)
        worst = min(worst, 1e-10 - abs(prof[m_max] - 0.5 * np.abs(
            matrix_power(chain.transition, m_max) - chain.stationary).sum(axis=1).max()))
    return worst, "Delta(m) nonincreasing for m <= 200; successive products agree with repeated squaring"


CHECKS = (
    ("prox_lipschitz", check_prox_lipschitz),
    ("proxpoint_bound", check_proxpoint_bound),
    ("num_seq_log", None),
    ("num_seq_sqrt", None),
    ("shb_momentum_recursion", check_shb_recursion),
    ("gradmap_vs_moreau", check_gradmap_vs_moreau),
    ("moreau_finite_difference", check_moreau_fd),
    ("gap_vs_normal_cone", check_gap_crosscheck),
    ("near_stationarity", check_near_stationarity),
    ("envelope_ordering", check_envelope_ordering),
    ("adagrad_telescoping", check_adagrad_telescoping),
    ("key_lemma_bias", check_key_lemma),
    ("mixing_monotone", check_mixing_monotone),
)


def verify_suite(seed=0, only=None) -> VerifyReport:
    report = VerifyReport(seed)
    for name, fn in CHECKS:
        if only is not None and name not in only:
            continue
        t0 = time.perf_counter()
        if name == "num_seq_log":
            w1, w2 = check_num_seq(seed)
            ex1 = math.log(5.0) - log_sum_lhs([1, 1, 1, 1], 1.0)
            ex2 = 4.0 - sqrt_sum_lhs([1, 1, 1, 1])
            dt = time.perf_counter() - t0
            report.results.append(CheckResult("num_seq_log", min(w1, ex1) >= 0, min(w1, ex1),
                                              "1000 sequences + a=(1,1,1,1): 77/60 <= ln 5", dt))
            report.results.append(CheckResult("num_seq_sqrt", min(w2, ex2) >= 0, min(w2, ex2),
                                              "1000 sequences + a=(1,1,1,1): 2.7844 <= 4", 0.0))
            continue
        if fn is None:
            continue
        try:
            margin, detail = fn(seed)
            ok = bool(margin >= 0)
        except Exception as exc:  # a crashing check is a failing check
            margin, detail, ok = -np.inf, f"{type(exc).__name__}: {exc}", False
        report.results.append(CheckResult(name, ok, float(margin), detail, time.perf_counter() - t0))
    return report
