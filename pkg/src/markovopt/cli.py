"""Command line entry point.

    markovopt run CONFIG        run all trials, write CSVs + summary.json
    markovopt rate CONFIG       same, then fit the log-log rate of the stationarity metric
    markovopt odl CONFIG        dictionary-learning benchmark report
    markovopt verify [--seed N] property-verification suite

Exit codes: 0 success, 1 an aborted trial or failed check, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import ConfigurationError, PreconditionError


def _horizon(text):
    """Accept plain integers and powers written as 2^k."""
    try:
        if "^" in text:
            base, exp = text.split("^")
            return int(base) ** int(exp)
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or b^k, got {text!r}") from None


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes for trials")
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="print nothing on success")
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="markovopt", parents=[common],
                                     description="Stochastic first-order methods on Markovian data.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run an experiment config")
    p.add_argument("config")
    p = sub.add_parser("rate", parents=[common], help="run and fit the convergence rate")
    p.add_argument("config")
    p.add_argument("--tmin", type=_horizon, default=None)
    p.add_argument("--tmax", type=_horizon, default=None)
    p.add_argument("--metric", default=None,
                   choices=["min_moreau_sq", "final_moreau_sq", "weighted_avg_moreau_sq"])
    p = sub.add_parser("odl", parents=[common], help="dictionary-learning benchmark")
    p.add_argument("config")
    p = sub.add_parser("verify", parents=[common], help="property-verification suite")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _say(args, *lines):
    if not getattr(args, "quiet", False):
        for line in lines:
            print(line)


def _load(args):
    from .harness.config import load_config
    return load_config(args.config)


def _run(args, config):
    from .harness.experiment import run_experiment
    res = run_experiment(config, threads=getattr(args, "threads", 1), out_dir=getattr(args, "out", None))
    for i, err in sorted(res.errors.items()):
        print(f"trial {i} aborted: {err}", file=sys.stderr)
    return res


def cmd_run(args):
    res = _run(args, _load(args))
    ok = len(res.traces) - len(res.errors)
    _say(args, f"{ok}/{len(res.traces)} trials completed; results in {res.out_dir}")
    return res.exit_code


def cmd_rate(args):
    from .harness.experiment import with_diagnostics
    from .harness.io import write_summary_json
    from .harness.ratefit import rate_fit
    config = with_diagnostics(_load(args))
    rate = config.raw.get("rate", {})
    metric = args.metric or rate.get("metric", "min_moreau_sq")
    tmin = args.tmin if args.tmin is not None else rate.get("tmin")
    tmax = args.tmax if args.tmax is not None else rate.get("tmax")
    if config.raw["trials"] < 5:
        raise ConfigurationError(f"{config.source}: rate fits need trials >= 5")
    res = _run(args, config)
    done = [t for t in res.traces if t is not None]
    fit = rate_fit(done, metric, tmin, tmax)
    record = {"metric": metric, "tmin": tmin, "tmax": tmax, "slope": fit.slope,
              "slope_ci95": list(fit.ci), "r2": fit.r2, "intercept": fit.intercept,
              "log2_T": fit.log2_T, "mean_metric": fit.values.mean(axis=0),
              "trials_used": len(done)}
    write_summary_json(record, res.out_dir / "rate.json")
    _say(args, f"{metric}: slope {fit.slope:.4f} (95% CI {fit.ci[0]:.4f} .. {fit.ci[1]:.4f}), "
               f"R^2 {fit.r2:.4f} over {fit.log2_T.size} checkpoints, {len(done)} trials")
    return res.exit_code


def cmd_odl(args):
    from .harness.io import write_summary_json
    config = _load(args)
    if config.raw["problem"]["name"] != "odl_synthetic":
        raise ConfigurationError(f"{config.source}: the odl command needs problem.name = odl_synthetic")
    res = _run(args, config)
    done = [t for t in res.traces if t is not None]
    if not done:
        return 1
    T = done[0].horizon
    ck = list(done[0].checkpoints)
    f_T = float(np.median([t.losses[T - 1] for t in done]))
    record = {"trials_used": len(done), "median_loss_T": f_T,
              "max_coding_residual": max(t.extras["max_coding_residual"] for t in done)}
    lines = [f"median f(theta_T) = {f_T:.6g}"]
    if T // 10 in ck:
        f_10 = float(np.median([t.losses[T // 10 - 1] for t in done]))
        record["median_loss_T_over_10"] = f_10
        lines.append(f"median f(theta_T/10) = {f_10:.6g}  (ratio {f_T / f_10:.4f})")
    if done[0].moreau_grad_norms is not None and 100 in ck:
        ratios = [t.moreau_grad_norms[-1] / t.moreau_grad_norms[ck.index(100)] for t in done]
        record["moreau_ratio_T_vs_100"] = ratios
        lines.append(f"Moreau grad norm at T / at t=100: max {max(ratios):.4f}")
    lines.append(f"worst coding KKT residual {record['max_coding_residual']:.3e}")
    write_summary_json(record, res.out_dir / "odl.json")
    _say(args, *lines)
    return res.exit_code


def cmd_verify(args):
    from .harness.verify import verify_suite
    report = verify_suite(args.seed)
    if not getattr(args, "quiet", False) or not report.passed:
        print(report.table())
    return report.exit_code


COMMANDS = {"run": cmd_run, "rate": cmd_rate, "odl": cmd_odl, "verify": cmd_verify}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
