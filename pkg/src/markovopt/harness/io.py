"""CSV traces and JSON summaries.

Floats are written with ``repr``, Python's shortest round-trip decimal, so
reading a file back gives the exact same doubles.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

TRACE_COLUMNS = ("t", "alpha_t", "loss", "moreau_grad_norm", "grad_map_norm",
                 "proxpoint_dist", "theta_change_norm")


def _cell(v):
    if v is None:
        return ""
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def trace_rows(trace):
    """One row per iteration; diagnostics only appear on checkpoint rows."""
    diag = {}
    if trace.moreau_grad_norms is not None:
        gm = trace.grad_map_norms
        for i, t in enumerate(trace.checkpoints):
            diag[int(t)] = (trace.moreau_grad_norms[i],
                            None if gm is None else gm[i],
                            trace.proxpoint_dists[i])
    for t in range(1, trace.horizon + 1):
        m, g, d = diag.get(t, (None, None, None))
        yield (str(t), _cell(trace.step_sizes[t - 1]), _cell(trace.losses[t - 1]),
               _cell(m), _cell(g), _cell(d), _cell(trace.theta_change[t - 1]))


def write_trace_csv(trace, path):
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            w.writerows(trace_rows(trace))
    except OSError as exc:
        raise OSError(f"cannot write trace CSV {path}: {exc.strerror or exc}") from exc
    return path


def read_trace_csv(path):
    """Column name -> float array (NaN for empty cells)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        out[name] = np.array([float(r[j]) if r[j] else np.nan for r in body])
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_summary_json(records, path):
    path = Path(path)
    try:
        with open(path, "w") as fh:
            json.dump(_jsonable(records), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write summary JSON {path}: {exc.strerror or exc}") from exc
    return path
