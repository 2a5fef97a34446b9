"""Sectioned key-value configuration.

Example::

    [model]
    family = operon
    d = 2
    rates = 1, 2
    jump_rate = 1
    width = 1
    eps = 0.05

    [constants]
    alpha = -1

    [budget]
    steps = 1000

Vectors are comma or space separated; matrix rows are separated by ``;``.
Unknown sections or keys are rejected.
"""

import configparser
from dataclasses import replace

import numpy as np

from .errors import ConfigError, PdmpError
from .gene import OperonModel, build_operon_spec, operon_inputs
from .models import SwitchingModel, build_switching_spec, switching_inputs

INT, FLOAT, STR, VEC, MAT, SCALAR_OR_VEC = "int", "float", "str", "vec", "mat", "sov"

MODEL_KEYS = {
    "operon": {"family": STR, "d": INT, "rates": VEC, "jump_rate": FLOAT, "width": FLOAT,
               "density": STR, "beta_min": FLOAT, "beta_max": FLOAT, "eps": FLOAT,
               "perturbation": STR},
    "switching": {"family": STR, "gamma": FLOAT, "centers": VEC, "jump_rate": FLOAT,
                  "beta_min": FLOAT, "beta_max": FLOAT, "switch_rows": MAT,
                  "switch_slope": FLOAT, "perturbation": STR, "eps": FLOAT},
}
CONSTANT_KEYS = {"L": FLOAT, "alpha": FLOAT, "lcal": SCALAR_OR_VEC, "L_w": FLOAT,
                 "L_p": FLOAT, "L_pi": FLOAT, "delta_p": FLOAT, "delta_pi": FLOAT}
BUDGET_KEYS = {"steps": INT, "horizon": FLOAT, "replicas": INT, "draws": INT, "pairs": INT,
               "states": INT, "grid": INT, "mc": INT, "samples": INT, "burn_in": INT,
               "thin": INT, "per_point": INT, "seeds": INT, "max_steps": INT,
               "subsample": INT, "block": INT}
EXPERIMENT_KEYS = {"state": VEC, "regime": INT, "start_b": VEC, "t_grid": VEC,
                   "checkpoints": VEC, "tolerance": FLOAT, "measure_a": STR,
                   "measure_b": STR, "time_burn_in": FLOAT, "c": FLOAT}
SECTIONS = {"model": None, "constants": CONSTANT_KEYS, "budget": BUDGET_KEYS,
            "experiment": EXPERIMENT_KEYS}


def _parse(value, kind, where):
    try:
        if kind == INT:
            return int(value)
        if kind == FLOAT:
            return float(value)
        if kind == STR:
            return value.strip()
        if kind == VEC:
            return [float(v) for v in value.replace(",", " ").split()]
        if kind == MAT:
            return [[float(v) for v in row.replace(",", " ").split()]
                    for row in value.split(";") if row.strip()]
        if kind == SCALAR_OR_VEC:
            vals = [float(v) for v in value.replace(",", " ").split()]
            return vals[0] if len(vals) == 1 else vals
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {value!r} as {kind}") from exc
    raise ConfigError(f"{where}: unknown type {kind}")


def parse_config_text(text, source="<string>"):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    out = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        keys = SECTIONS[sec]
        if sec == "model":
            fam = cp[sec].get("family", "operon").strip()
            if fam not in MODEL_KEYS:
                raise ConfigError(f"{source}: [model] family: unknown family {fam!r}")
            keys = MODEL_KEYS[fam]
        vals = {}
        for k, v in cp[sec].items():
            where = f"{source}: [{sec}] {k}"
            if k not in keys:
                raise ConfigError(f"{where}: unknown key")
            vals[k] = _parse(v, keys[k], where)
        out[sec] = vals
    if "model" not in out:
        raise ConfigError(f"{source}: missing [model] section")
    return out


def build_from_config(cfg, source="<string>"):
    """Turn parsed sections into ``(spec, inputs, plan)``."""
    model = dict(cfg["model"])
    fam = model.pop("family", "operon")
    try:
        if fam == "operon":
            if "rates" in model:
                model["rates"] = tuple(model["rates"])
            d = model.get("d", len(model.get("rates", (1.0, 2.0))))
            model["d"] = d
            if "rates" not in model:
                raise ConfigError(f"{source}: [model] rates: required for the operon family")
            m = OperonModel(**model)
            spec, inputs = build_operon_spec(m), operon_inputs(m)
        else:
            if "switch_rows" in model:
                rows = model["switch_rows"]
                for r, row in enumerate(rows):
                    if abs(sum(row) - 1.0) > 1e-9:
                        raise ConfigError(f"{source}: [model] switch_rows: row {r} sums to "
                                          f"{sum(row):.12g}, not 1")
                model["switch_rows"] = tuple(tuple(r) for r in rows)
            if "centers" in model:
                model["centers"] = tuple(model["centers"])
            m = SwitchingModel(**model)
            spec, inputs = build_switching_spec(m), switching_inputs(m)
    except ConfigError:
        raise
    except (PdmpError, TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: [model]: {exc}") from exc
    over = cfg.get("constants", {})
    if "lcal" in over and isinstance(over["lcal"], list):
        over = dict(over, lcal=tuple(over["lcal"]))
    alpha = over.get("alpha", inputs.alpha)
    if alpha >= spec.jump_rate:
        raise ConfigError(f"{source}: [constants] alpha: the flow exponent alpha = {alpha:g} "
                          f"must be below the jump rate {spec.jump_rate:g}")
    try:
        inputs = replace(inputs, **over)
    except (PdmpError, ValueError) as exc:
        raise ConfigError(f"{source}: [constants]: {exc}") from exc
    plan = {**cfg.get("budget", {}), **cfg.get("experiment", {})}
    return spec, inputs, plan


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return build_from_config(parse_config_text(text, str(path)), str(path))


def default_state(spec, plan):
    from .core import HybridState
    y = plan.get("state")
    y = np.zeros(spec.dim) if y is None else np.asarray(y, dtype=float)
    if y.shape != (spec.dim,):
        raise ConfigError(f"[experiment] state: expected {spec.dim} components")
    return HybridState(y, plan.get("regime", 0))
