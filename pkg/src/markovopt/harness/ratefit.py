"""Log-log rate fits of stationarity metrics against the horizon."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import PreconditionError
from ..samplers import make_rng

METRICS = ("min_moreau_sq", "final_moreau_sq", "weighted_avg_moreau_sq")


@dataclass(frozen=True)
class RateFit:
    log2_T: np.ndarray
    values: np.ndarray        # trials x checkpoints
    slope: float
    intercept: float
    ci: tuple
    r2: float
    metric: str


def metric_curve(trace, metric="min_moreau_sq"):
    """Metric at each checkpoint T of one trace.

    min_moreau_sq: min over checkpoints <= T of ||grad phi||^2;
    final_moreau_sq: the value at T itself;
    weighted_avg_moreau_sq: step-size weighted average over checkpoints <= T,
    each checkpoint standing for the steps since the previous one.
    """
    if trace.moreau_grad_norms is None:
        raise PreconditionError("rate fits need Moreau diagnostics (diagnostics_on)")
    sq = np.asarray(trace.moreau_grad_norms, dtype=np.float64) ** 2
    if metric == "min_moreau_sq":
        return np.minimum.accumulate(sq)
    if metric == "final_moreau_sq":
        return sq
    if metric == "weighted_avg_moreau_sq":
        cum = np.concatenate([[0.0], np.cumsum(trace.step_sizes)])
        ck = np.asarray(trace.checkpoints)
        prev = np.concatenate([[0], ck[:-1]])
        w = cum[ck] - cum[prev]
        return np.cumsum(w * sq) / np.cumsum(w)
    raise PreconditionError(f"unknown metric {metric!r}; expected one of {METRICS}")


def _ols(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def fit_values(checkpoints, values, metric="min_moreau_sq", n_boot=1000, seed=0):
    """OLS of log2(mean over trials) on log2(T), with a trial-bootstrap 95% CI."""
    T = np.asarray(checkpoints, dtype=np.float64)
    V = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if T.size < 4:
        raise PreconditionError(f"rate fit needs >= 4 checkpoints, got {T.size}")
    if V.shape[0] < 5:
        raise PreconditionError(f"rate fit needs >= 5 trials, got {V.shape[0]}")
    if V.shape[1] != T.size:
        raise PreconditionError("values must have one column per checkpoint")
    mean = V.mean(axis=0)
    if np.any(mean <= 0):
        raise PreconditionError("mean metric must be positive at every checkpoint to take logs")
    x = np.log2(T)
    slope, intercept, r2 = _ols(x, np.log2(mean))
    rng = make_rng(seed)
    boots = []
    for _ in range(n_boot):
        m = V[rng.integers(V.shape[0], size=V.shape[0])].mean(axis=0)
        if np.all(m > 0):
            boots.append(_ols(x, np.log2(m))[0])
    lo, hi = np.percentile(boots, [2.5, 97.5]) if boots else (np.nan, np.nan)
    return RateFit(x, V, slope, intercept, (float(lo), float(hi)), r2, metric)


def rate_fit(traces, metric="min_moreau_sq", tmin=None, tmax=None, n_boot=1000, seed=0):
    """Fit over the checkpoints shared by all traces, restricted to [tmin, tmax]."""
    if len(traces) < 5:
        raise PreconditionError(f"rate fit needs >= 5 trials, got {len(traces)}")
    ck = np.asarray(traces[0].checkpoints)
    for tr in traces[1:]:
        if not np.array_equal(tr.checkpoints, ck):
            raise PreconditionError("all traces must share the same checkpoints")
    curves = np.array([metric_curve(tr, metric) for tr in traces])
    keep = np.ones(ck.size, dtype=bool)
    if tmin is not None:
        keep &= ck >= tmin
    if tmax is not None:
        keep &= ck <= tmax
    return fit_values(ck[keep], curves[:, keep], metric, n_boot, seed)
