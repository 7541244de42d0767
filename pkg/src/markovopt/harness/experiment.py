"""Seeded multi-trial experiments with deterministic, parallelism-invariant output."""

from __future__ import annotations

import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .. import __version__
from ..errors import AbortedRunError, ConfigurationError, ConvergenceError
from ..samplers import trial_seed
from .config import ExperimentConfig, build_problem, build_run_config, validate
from .io import write_summary_json, write_trace_csv


@dataclass
class ExperimentResult:
    traces: list                       # None where the trial aborted
    errors: dict = field(default_factory=dict)   # trial -> message
    summary: dict = field(default_factory=dict)
    out_dir: Path = None

    @property
    def aborted(self):
        return bool(self.errors)

    @property
    def exit_code(self):
        return 1 if self.errors else 0


def version_string():
    """Package version plus the short commit hash when run from a git checkout."""
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _odl_config(raw, seed):
    from ..odl import ODLConfig
    from .config import build_schedule
    a, o = raw["algorithm"], raw.get("odl", {})
    kw = {k: o[k] for k in ("rank", "kappa2", "l1_weight", "coding_tol", "coding_max_iters",
                            "init_scale", "radius") if k in o}
    return ODLConfig(schedule=build_schedule(a["schedule"]), horizon=a["horizon"], seed=seed,
                     algorithm=a["name"], beta=a["beta"],
                     checkpoints=tuple(a["checkpoints"]) if a.get("checkpoints") else None,
                     diagnostics_on=a["diagnostics_on"], **kw)


def run_trial(raw, trial):
    """Run one trial from a validated raw config; returns (trial, trace, error)."""
    cfg = ExperimentConfig(raw)
    seed = trial_seed(raw["master_seed"], trial)
    problem, chain = build_problem(cfg)
    try:
        if raw["problem"]["name"] == "odl_synthetic":
            from ..odl import run_odl
            trace, _ = run_odl(chain, _odl_config(raw, seed), radius=problem.data["radius"])
        else:
            from ..algorithms import run
            trace = run(problem, chain, build_run_config(cfg, problem, seed))
    except (AbortedRunError, ConvergenceError, FloatingPointError) as exc:
        return trial, None, f"{type(exc).__name__}: {exc}"
    return trial, trace, None


def resolved_settings(cfg, problem):
    """Defaults that depend on the problem, echoed into the summary."""
    a = cfg.raw["algorithm"]
    rc = build_run_config(cfg, problem, 0)
    from ..algorithms import checkpoint_schedule
    from ..odl import default_checkpoints
    if problem.name == "odl_synthetic" and not a.get("checkpoints"):
        ck = list(default_checkpoints(a["horizon"]))
    else:
        ck = checkpoint_schedule(a["horizon"], a["checkpoint_stride"], a.get("checkpoints")).tolist()
    return {
        "rho": problem.rho,
        "rho_hat": rc.resolved_rho_hat(problem),
        "checkpoints": ck,
        "constants": {"subgrad_bound": problem.subgrad_bound,
                      "subgrad_lipschitz": problem.subgrad_lipschitz,
                      "value_bound": problem.value_bound},
    }


def check_constants(problem, chain, n_probes=10_000, seed=0):
    from ..problems import sanity_check_constants
    bad = sanity_check_constants(problem, chain, n_probes=n_probes, seed=seed)
    if bad:
        kinds = sorted({k for k, _ in bad})
        raise ConfigurationError(
            f"declared constants of {problem.name} fail {len(bad)} of {n_probes} probes: {', '.join(kinds)}")


def run_experiment(config, threads=1, out_dir=None, write=True, n_probes=10_000):
    """Run every trial of ``config`` and persist one CSV per trial plus summary.json.

    Trials are seeded from ``master_seed`` by trial index and merged in index
    order, so the bytes written do not depend on ``threads``.
    """
    if isinstance(config, dict):
        config = validate(config)
    t0 = time.perf_counter()
    raw = config.raw
    problem, chain = build_problem(config)
    if n_probes:
        check_constants(problem, chain, n_probes)
    n = raw["trials"]
    if threads > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=min(threads, n)) as pool:
            results = list(pool.map(run_trial, [raw] * n, range(n)))
    else:
        results = [run_trial(raw, i) for i in range(n)]
    results.sort(key=lambda r: r[0])
    traces = [r[1] for r in results]
    errors = {r[0]: r[2] for r in results if r[2] is not None}

    out = Path(out_dir) if out_dir is not None else config.output
    manifest = []
    if write:
        out.mkdir(parents=True, exist_ok=True)
        for i, tr in enumerate(traces):
            if tr is not None:
                name = f"trial_{i:03d}.csv"
                write_trace_csv(tr, out / name)
                manifest.append({"trial": i, "file": name, "seed": trial_seed(raw["master_seed"], i)})
    summary = {
        "version": version_string(),
        "config": raw,
        "resolved": resolved_settings(config, problem),
        "trials": [{
            "trial": i,
            "seed": trial_seed(raw["master_seed"], i),
            "status": "aborted" if tr is None else "ok",
            "error": errors.get(i),
            "output_index": None if tr is None else tr.output_index,
            "final_loss": None if tr is None else tr.losses[-1],
            "final_moreau_grad_norm": (None if tr is None or tr.moreau_grad_norms is None
                                       else tr.moreau_grad_norms[-1]),
        } for i, tr in enumerate(traces)],
        "manifest": manifest,
        "wall_time_s": time.perf_counter() - t0,
    }
    if write:
        write_summary_json(summary, out / "summary.json")
    return ExperimentResult(traces, errors, summary, out)


def with_diagnostics(config):
    """Copy of ``config`` with Moreau diagnostics switched on."""
    raw = dict(config.raw)
    raw["algorithm"] = {**raw["algorithm"], "diagnostics_on": True}
    return replace(config, raw=raw)
