"""Experiment configuration: a TOML file with a versioned schema."""

import math
import sys

from .errors import ConfigurationError
from .initial_data import InitialData
from .scale import ScaleFactor

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1

_TOP = {"schema", "command", "seed", "scale_factor", "initial_data", "simulate", "sweep",
        "blowup", "oracle", "spherical", "thresholds", "output"}

DEFAULTS = {
    "simulate": {"times": [0.0, 1.0], "alpha_grid": [-2.0, 2.0, 5]},
    "sweep": {"epsilons": [], "t_max": 1e6, "alpha_box": [-5.0, 5.0], "grid": 41},
    "blowup": {"t_max": 1e6, "alpha_box": [-5.0, 5.0], "grid": 41, "time_points": 257},
    "oracle": {"N": [200, 400, 800], "x_lo": -10.0, "x_hi": 10.0, "cfl": 0.45, "t_end": 1.0,
               "reconstruction": "none", "snapshots": 4, "geometry": "planar", "curvature": False},
    "spherical": {"alphas": [0.0], "dim": 3, "curvature": False, "threshold": 1e6},
    "thresholds": {"delta": 0.9},
}


def load(path):
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from None
    return validate(raw)


def validate(raw):
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a table")
    if raw.get("schema") != SCHEMA_VERSION:
        raise ConfigurationError(f"config needs schema = {SCHEMA_VERSION}")
    extra = set(raw) - _TOP
    if extra:
        raise ConfigurationError(f"unknown config sections: {sorted(extra)}")
    for key in ("scale_factor", "initial_data"):
        if key not in raw or not isinstance(raw[key], dict):
            raise ConfigurationError(f"config needs a [{key}] table")
    cfg = {"schema": SCHEMA_VERSION, "command": raw.get("command"), "seed": int(raw.get("seed", 0)),
           "scale_factor": dict(raw["scale_factor"]), "initial_data": dict(raw["initial_data"]),
           "output": dict(raw.get("output", {}))}
    for section, default in DEFAULTS.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ConfigurationError(f"[{section}] must be a table")
        unknown = set(given) - set(default)
        if unknown:
            raise ConfigurationError(f"unknown keys in [{section}]: {sorted(unknown)}")
        merged = dict(default)
        merged.update(given)
        cfg[section] = merged
    # build once to surface schema errors early
    cfg["_scale"] = ScaleFactor.from_config(cfg["scale_factor"])
    cfg["_data"] = InitialData.from_config(cfg["initial_data"])
    eps = cfg["sweep"]["epsilons"]
    if not isinstance(eps, list) or not all(isinstance(e, (int, float)) for e in eps):
        raise ConfigurationError("sweep.epsilons must be a list of numbers")
    if any(not (e > 0 and math.isfinite(e)) for e in eps):
        raise ConfigurationError("sweep.epsilons must be strictly positive")
    cap = cfg["_data"].eps_max
    if any(e >= cap for e in eps):
        raise ConfigurationError(f"sweep.epsilons must stay below eps_max = {cap:.6g}")
    for sec in ("blowup", "sweep"):
        box = cfg[sec]["alpha_box"]
        if not (isinstance(box, list) and len(box) == 2 and box[0] < box[1]):
            raise ConfigurationError(f"{sec}.alpha_box must be [lo, hi] with lo < hi")
    N = cfg["oracle"]["N"]
    cfg["oracle"]["N"] = [int(v) for v in (N if isinstance(N, list) else [N])]
    return cfg
