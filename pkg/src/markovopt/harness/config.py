"""Experiment configuration: JSON schema, validation and object construction.

A config is a JSON object::

    {
      "problem":   {"name": "nonconvex_quadratic", "dim": 20, "params": {"seed": 0}},
      "chain":     {"type": "cycle_walk", "n_states": 8, "laziness": 0.5},
      "algorithm": {"name": "psgd", "schedule": {"type": "inv_sqrt", "c": 1.0},
                    "horizon": 32768, "diagnostics_on": true},
      "trials": 20,
      "master_seed": 0,
      "output": "runs/quadratic"
    }

Unknown keys are rejected at every level. Every error message names the
offending line of the file when it can be located.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from ..algorithms import AdaGradNorm, Constant, InvSqrt, RunConfig
from ..core import L1, Indicator, Zero
from ..errors import ChainError, ConfigurationError
from ..samplers import MarkovChain, cycle_walk, make_iid, two_state

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCHEDULE_SCHEMA = {"oneOf": [
    _obj({"type": {"const": "constant"}, "c": _POS}, ["type", "c"]),
    _obj({"type": {"const": "inv_sqrt"}, "c": _POS}, ["type", "c"]),
    _obj({"type": {"const": "adagrad_norm"}, "alpha": _POS, "v0": _POS}, ["type"]),
]}

REGULARIZER_SCHEMA = {"oneOf": [
    _obj({"type": {"const": "zero"}}, ["type"]),
    _obj({"type": {"const": "l1"}, "weight": {"type": "number", "minimum": 0}}, ["type", "weight"]),
    _obj({"type": {"const": "indicator"}}, ["type"]),
]}

CHAIN_SCHEMA = {"oneOf": [
    _obj({"type": {"const": "inline"},
          "transition": {"type": "array", "items": {"type": "array", "items": _NUM}}},
         ["type", "transition"]),
    _obj({"type": {"const": "two_state"}, "a": _NUM, "b": _NUM}, ["type", "a", "b"]),
    _obj({"type": {"const": "cycle_walk"}, "n_states": _POS_INT,
          "laziness": {"type": "number", "minimum": 0, "maximum": 1}}, ["type", "n_states"]),
    _obj({"type": {"const": "iid_from"}, "pi": {"type": "array", "items": _NUM, "minItems": 1}},
         ["type", "pi"]),
]}

BUILTIN_NAMES = ("nonconvex_quadratic", "phase_retrieval_l1", "lasso_prox", "odl_synthetic")

CONFIG_SCHEMA = _obj({
    "problem": _obj({
        "name": {"enum": list(BUILTIN_NAMES)},
        "dim": _POS_INT,
        "params": {"type": "object"},
        "samples": {"type": "object", "additionalProperties": {"type": "array"}},
    }, ["name"]),
    "chain": CHAIN_SCHEMA,
    "algorithm": _obj({
        "name": {"enum": ["psgd", "adagrad", "shb", "prox"]},
        "schedule": SCHEDULE_SCHEMA,
        "horizon": _POS_INT,
        "beta": _NUM,
        "rho_hat": {"anyOf": [_POS, {"type": "null"}]},
        "checkpoint_stride": {"anyOf": [_POS_INT, {"type": "null"}]},
        "checkpoints": {"type": "array", "items": _POS_INT},
        "diagnostics_on": {"type": "boolean"},
        "record_loss": {"enum": ["every", "checkpoints", "none"]},
        "shb_grad_at": {"enum": ["next_iterate", "current_iterate"]},
        "regularizer": REGULARIZER_SCHEMA,
        "initial_state": {"type": "integer", "minimum": 0},
        "theta1": {"type": "array", "items": _NUM},
        "inner_tol": _POS,
    }, ["name", "horizon"]),
    "odl": _obj({
        "rank": _POS_INT, "kappa2": _POS, "l1_weight": {"type": "number", "minimum": 0},
        "coding_tol": _POS, "coding_max_iters": _POS_INT, "init_scale": _POS, "radius": _POS,
    }),
    "rate": _obj({
        "metric": {"enum": ["min_moreau_sq", "final_moreau_sq", "weighted_avg_moreau_sq"]},
        "tmin": _POS_INT, "tmax": _POS_INT,
    }),
    "trials": _POS_INT,
    "master_seed": {"type": "integer", "minimum": 0},
    "output": {"type": "string"},
}, ["problem", "algorithm"])

DEFAULTS = {"trials": 1, "master_seed": 0, "output": "runs/out"}
ALGORITHM_DEFAULTS = {"schedule": {"type": "inv_sqrt", "c": 1.0}, "beta": 1.0,
                      "diagnostics_on": False, "record_loss": "every",
                      "shb_grad_at": "next_iterate", "regularizer": {"type": "zero"},
                      "initial_state": 0, "inner_tol": 1e-9}
CHAIN_DEFAULT = {"type": "cycle_walk", "n_states": 8, "laziness": 0.5}


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict                      # validated, defaults filled; echoed into outputs
    source: str = "<dict>"
    text: str = field(default="", repr=False, compare=False)

    @property
    def trials(self):
        return self.raw["trials"]

    @property
    def master_seed(self):
        return self.raw["master_seed"]

    @property
    def output(self):
        return Path(self.raw["output"])


def _line_of(text, path):
    """Best-effort line number of the JSON element at ``path``."""
    if not text:
        return None
    keys = [p for p in path if isinstance(p, str)]
    lines = text.splitlines()
    start = 0
    found = None
    for k in keys:
        needle = f'"{k}"'
        for i in range(start, len(lines)):
            if needle in lines[i]:
                found, start = i + 1, i
                break
    return found


def _fail(source, text, path, msg):
    line = _line_of(text, list(path))
    where = f"{source}:{line}" if line else source
    loc = "/".join(str(p) for p in path) or "<root>"
    raise ConfigurationError(f"{where}: {loc}: {msg}")


def _schema_message(err):
    # for oneOf failures, report the branch selected by the "type" tag
    if err.validator == "oneOf" and isinstance(err.instance, dict) and err.context:
        tag = err.instance.get("type")
        matching = [e for e in err.context
                    if not (e.validator == "const" and list(e.relative_path) == ["type"])]
        branch = [e for e in matching if tag is not None
                  and err.validator_value[e.relative_schema_path[0]]["properties"]
                  .get("type", {}).get("const") == tag]
        pick = branch or matching
        if pick:
            e = pick[0]
            return list(err.absolute_path) + list(e.relative_path), e.message
        return list(err.absolute_path), f"unknown type {tag!r}"
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        if extra:
            return list(err.absolute_path) + [extra[0]], f"unknown key {extra[0]!r}"
    return list(err.absolute_path), err.message


def validate(raw, source="<dict>", text=""):
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        path, msg = _schema_message(errors[0])
        _fail(source, text, path, msg)
    cfg = json.loads(json.dumps(raw))
    for k, v in DEFAULTS.items():
        cfg.setdefault(k, v)
    if "chain" not in cfg:
        # the ODL builder synthesizes its own cycle walk when no chain is given
        cfg["chain"] = None if cfg["problem"]["name"] == "odl_synthetic" else dict(CHAIN_DEFAULT)
    alg = cfg["algorithm"]
    if cfg["problem"]["name"] == "odl_synthetic" and alg["name"] != "adagrad":
        from ..odl import DEFAULT_STEP
        alg.setdefault("schedule", {"type": "constant", "c": DEFAULT_STEP})
    for k, v in ALGORITHM_DEFAULTS.items():
        alg.setdefault(k, json.loads(json.dumps(v)))
    if alg["name"] == "adagrad" and alg["schedule"]["type"] != "adagrad_norm":
        alg["schedule"] = {"type": "adagrad_norm", "alpha": 1.0, "v0": 1.0}
    if alg["schedule"]["type"] == "adagrad_norm":
        alg["schedule"].setdefault("alpha", 1.0)
        alg["schedule"].setdefault("v0", 1.0)
    alg.setdefault("rho_hat", None)
    alg.setdefault("checkpoint_stride", None)
    # semantic checks the schema cannot express
    if not 0.0 < alg["beta"] <= 1.0:
        _fail(source, text, ["algorithm", "beta"], "beta must lie in (0,1]")
    if alg["name"] != "adagrad" and alg["schedule"]["type"] == "adagrad_norm":
        _fail(source, text, ["algorithm", "schedule"], f"{alg['name']} needs a constant or inv_sqrt schedule")
    if alg["regularizer"]["type"] != "zero" and alg["name"] != "prox":
        _fail(source, text, ["algorithm", "regularizer"], "regularizers are only used by the prox algorithm")
    rate = cfg.get("rate")
    if rate is not None:
        rate.setdefault("metric", "min_moreau_sq")
    if cfg["chain"] is not None:
        try:
            build_chain(cfg["chain"])
        except ChainError as exc:
            _fail(source, text, ["chain"], str(exc))
    return ExperimentConfig(cfg, source, text)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"{path}: cannot read config: {exc.strerror or exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg} (column {exc.colno})") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}:1: config must be a JSON object")
    return validate(raw, str(path), text)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def build_chain(spec, samples=None):
    t = spec["type"]
    if t == "inline":
        return MarkovChain(np.array(spec["transition"], dtype=np.float64), samples)
    if t == "two_state":
        return two_state(spec["a"], spec["b"], samples)
    if t == "cycle_walk":
        return cycle_walk(spec["n_states"], spec.get("laziness", 0.5), samples)
    if t == "iid_from":
        pi = np.asarray(spec["pi"], dtype=np.float64)
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise ChainError(f"iid_from: pi must be a probability vector (sums to {pi.sum()!r})")
        return make_iid(pi, samples)
    raise ConfigurationError(f"unknown chain type {t!r}")


def build_schedule(spec):
    t = spec["type"]
    if t == "constant":
        return Constant(spec["c"])
    if t == "inv_sqrt":
        return InvSqrt(spec["c"])
    return AdaGradNorm(spec["alpha"], spec["v0"])


def build_regularizer(spec, constraint):
    t = spec["type"]
    if t == "l1":
        return L1(spec["weight"])
    if t == "indicator":
        return Indicator(constraint)
    return Zero()


def build_problem(cfg: ExperimentConfig):
    """(problem, chain) for the configured builtin."""
    from ..problems import BUILTINS
    raw = cfg.raw
    spec = raw["problem"]
    chain = None if raw["chain"] is None else build_chain(raw["chain"])
    params = dict(spec.get("params", {}))
    samples = spec.get("samples")
    if samples is not None and chain is not None:
        try:
            params["samples"] = [samples[str(s)] for s in range(chain.n_states)]
        except KeyError as exc:
            raise ConfigurationError(f"problem/samples: no sample given for state {exc.args[0]}") from exc
    name = spec["name"]
    try:
        if name == "odl_synthetic":
            odl = raw.get("odl", {})
            for k in ("rank", "kappa2", "l1_weight", "radius"):
                if k in odl:
                    params.setdefault({"rank": "r"}.get(k, k), odl[k])
            if "dim" in spec:
                params.setdefault("p", spec["dim"])
            return BUILTINS[name](chain, **params)
        if "dim" in spec:
            params["dim"] = spec["dim"]
        return BUILTINS[name](chain, **params)
    except TypeError as exc:
        raise ConfigurationError(f"problem/params: {exc}") from exc


def build_run_config(cfg: ExperimentConfig, problem, seed) -> RunConfig:
    a = cfg.raw["algorithm"]
    return RunConfig(
        algorithm=a["name"], schedule=build_schedule(a["schedule"]), horizon=a["horizon"],
        beta=a["beta"], regularizer=build_regularizer(a["regularizer"], problem.constraint),
        rho_hat=a["rho_hat"], seed=seed, checkpoint_stride=a["checkpoint_stride"],
        checkpoints=tuple(a["checkpoints"]) if a.get("checkpoints") else None,
        diagnostics_on=a["diagnostics_on"],
        theta1=None if a.get("theta1") is None else np.asarray(a["theta1"], dtype=np.float64),
        initial_state=a["initial_state"], shb_grad_at=a["shb_grad_at"],
        record_loss=a["record_loss"], inner_tol=a["inner_tol"])
