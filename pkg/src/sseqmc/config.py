"""Run configuration: parsing, validation, presets and model construction."""
from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from . import cnumber, manybody
from .ensemble import DEFAULT_DIVERGENCE_CAP
from .noise import ConfigurationError

MODEL_IDS = ("free_expansion", "kerr", "genkerr", "boson_generic", "two_mode", "fermion_toy")

# model-id -> {parameter: default}
MODEL_PARAMS = {
    "free_expansion": {"eta": 1.0, "mass": 1.0, "alpha0": 0.0, "beta0_star": 0.0},
    "kerr": {"omega": 1.0, "kerr_k": 0.1, "alpha0": 1.0, "beta0_star": 1.0, "n_max": 30},
    "genkerr": {"omega": 1.0, "k1": 0.1, "k2": 0.05, "alpha0": 1.0, "beta0_star": 1.0, "n_max": 30, "noise_order": 3},
    "two_mode": {"n_particles": 17, "omega_rabi": 1.0, "kerr_k": 0.1, "trace_tol": manybody.TRACE_TOL},
    "boson_generic": {"n_modes": 2, "n_particles": 4, "system_seed": 11, "t_scale": 1.0, "o_scale": 0.3,
                      "trace_tol": manybody.TRACE_TOL},
    "fermion_toy": {"n_levels": 4, "n_particles": 2, "system_seed": 7, "t_scale": 1.0, "o_scale": 0.12,
                    "trace_tol": manybody.TRACE_TOL},
}

DEFAULT_OBSERVABLES = {
    "free_expansion": ["x2"],
    "kerr": ["a"],
    "genkerr": ["a"],
    "two_mode": ["p1"],
    "boson_generic": ["p1"],
    "fermion_toy": ["rho_00", "rho_11", "rho_22", "rho_33", "rho_01", "rho_23"],
}

ALIASES = {"N": "n_particles", "K": "kerr_k", "Omega": "omega_rabi", "seed": "master_seed",
           "model_id": "model", "output": "output_path", "out": "output_path"}

INT_PARAMS = {"n_max", "noise_order", "n_particles", "n_modes", "n_levels", "system_seed"}
COMPLEX_PARAMS = {"alpha0", "beta0_star"}
POSITIVE_PARAMS = {"eta", "mass", "n_max", "n_particles", "n_modes", "n_levels"}

RUN_KEYS = ("model", "n_traj", "dt", "t_max", "sample_every", "observables", "master_seed", "hbar",
            "divergence_cap", "renormalize", "output_path", "params")

PRESETS = {
    "fig1": {"model": "two_mode", "N": 17, "K": 0.1, "Omega": 1.0, "dt": 1e-3, "t_max": 6.0,
             "n_traj": 10000, "sample_every": 100, "observables": ["p1"], "renormalize": True, "seed": 2024},
    "free_expansion": {"model": "free_expansion", "eta": 1.0, "mass": 1.0, "dt": 1e-3, "t_max": 2.0,
                       "n_traj": 10000, "sample_every": 500, "observables": ["x2", "X2"], "seed": 1},
    "kerr": {"model": "kerr", "omega": 1.0, "kerr_k": 0.1, "alpha0": 1.0, "beta0_star": 1.0, "dt": 1e-4,
             "t_max": 1.0, "n_traj": 10000, "sample_every": 500, "observables": ["a", "n"], "seed": 2},
    "genkerr": {"model": "genkerr", "omega": 1.0, "k1": 0.1, "k2": 0.05, "alpha0": 0.7, "beta0_star": 0.7,
                "dt": 1e-4, "t_max": 0.5, "n_traj": 10000, "sample_every": 250, "observables": ["a", "a3"],
                "seed": 3},
    "fermion_toy": {"model": "fermion_toy", "dt": 1e-4, "t_max": 0.5, "n_traj": 10000, "sample_every": 250,
                    "seed": 4},
}


@dataclass
class RunConfig:
    model: str
    params: dict = field(default_factory=dict)
    n_traj: int = 1000
    dt: float = 1e-3
    t_max: float = 1.0
    sample_every: int = 1
    observables: list = field(default_factory=list)
    master_seed: int = 0
    hbar: float = 1.0
    divergence_cap: float = DEFAULT_DIVERGENCE_CAP
    renormalize: bool = False
    output_path: str | None = None

    def time_grid(self):
        step = self.dt * self.sample_every
        n = int(math.floor(self.t_max / step + 1e-9))
        return np.arange(n + 1) * step

    def echo(self):
        """Plain-data view used for the CSV preamble."""
        d = asdict(self)
        d["params"] = {k: (str(v) if isinstance(v, complex) else v) for k, v in self.params.items()}
        return d


def _fail(key, msg):
    raise ConfigurationError(f"{key}: {msg}")


def _as_int(key, v, minimum=None):
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        _fail(key, f"expected an integer, got {v!r}")
    if isinstance(v, int):
        i = v
    else:
        try:
            i = int(v) if isinstance(v, str) and v.strip().lstrip("+-").isdigit() else float(v)
        except ValueError:
            _fail(key, f"expected an integer, got {v!r}")
        if isinstance(i, float):
            if not i.is_integer():
                _fail(key, f"expected an integer, got {v!r}")
            i = int(i)
    if minimum is not None and i < minimum:
        _fail(key, f"must be >= {minimum}, got {i}")
    return i


def _as_float(key, v, positive=False):
    if isinstance(v, bool):
        _fail(key, f"expected a number, got {v!r}")
    try:
        f = float(v)
    except (TypeError, ValueError):
        _fail(key, f"expected a number, got {v!r}")
    if not math.isfinite(f):
        _fail(key, "must be finite")
    if positive and not f > 0:
        _fail(key, f"must be > 0, got {f}")
    return f


def _as_complex(key, v):
    try:
        c = complex(str(v).replace(" ", "")) if isinstance(v, str) else complex(v)
    except (TypeError, ValueError):
        _fail(key, f"expected a complex number, got {v!r}")
    if not np.isfinite(c):
        _fail(key, "must be finite")
    return c


def _as_bool(key, v):
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("true", "false", "on", "off", "yes", "no", "1", "0"):
        return v.lower() in ("true", "on", "yes", "1")
    if isinstance(v, int) and v in (0, 1):
        return bool(v)
    _fail(key, f"expected a boolean, got {v!r}")


def _validate_param(model, key, v):
    if key in INT_PARAMS:
        return _as_int(key, v, 1 if key in POSITIVE_PARAMS else 0)
    if key in COMPLEX_PARAMS:
        return _as_complex(key, v)
    if key == "trace_tol":
        return None if v is None else _as_float(key, v, positive=True)
    return _as_float(key, v, positive=key in POSITIVE_PARAMS)


def _normalise_keys(doc):
    out = {}
    for k, v in doc.items():
        k = ALIASES.get(str(k), str(k))
        if k in out:
            _fail(k, "given more than once")
        out[k] = v
    return out


def config_from_mapping(doc) -> RunConfig:
    """Validate a flat mapping (model parameters may sit at top level or under ``params``)."""
    if not isinstance(doc, dict):
        raise ConfigurationError("configuration must be a key-value mapping")
    doc = _normalise_keys(doc)
    model = doc.pop("model", None)
    if model is None:
        _fail("model", "missing")
    if model not in MODEL_IDS:
        _fail("model", f"unknown model {model!r}; choose from {', '.join(MODEL_IDS)}")
    allowed = MODEL_PARAMS[model]
    params = dict(allowed)
    nested = doc.pop("params", None) or {}
    if not isinstance(nested, dict):
        _fail("params", "must be a mapping")
    nested = _normalise_keys(nested)
    run = {}
    for k, v in list(doc.items()) + [(k, v) for k, v in nested.items()]:
        if k in allowed:
            params[k] = _validate_param(model, k, v)
        elif k in RUN_KEYS and k not in nested:
            run[k] = v
        else:
            _fail(k, f"unknown key for model {model!r}")
    cfg = RunConfig(model=model, params=params)
    if "n_traj" in run:
        cfg.n_traj = _as_int("n_traj", run["n_traj"], 1)
    if "dt" in run:
        cfg.dt = _as_float("dt", run["dt"], positive=True)
    if "t_max" in run:
        cfg.t_max = _as_float("t_max", run["t_max"], positive=True)
    if "sample_every" in run:
        cfg.sample_every = _as_int("sample_every", run["sample_every"], 1)
    if "master_seed" in run:
        cfg.master_seed = _as_int("master_seed", run["master_seed"], 0)
        if cfg.master_seed >= 2**64:
            _fail("master_seed", "must fit in 64 bits")
    if "hbar" in run:
        cfg.hbar = _as_float("hbar", run["hbar"], positive=True)
    if "divergence_cap" in run:
        cfg.divergence_cap = _as_float("divergence_cap", run["divergence_cap"], positive=True)
    if "renormalize" in run:
        cfg.renormalize = _as_bool("renormalize", run["renormalize"])
    if "output_path" in run:
        cfg.output_path = None if run["output_path"] is None else str(run["output_path"])
    obs = run.get("observables", DEFAULT_OBSERVABLES[model])
    if isinstance(obs, str):
        obs = [o.strip() for o in obs.split(",") if o.strip()]
    if not isinstance(obs, (list, tuple)) or not obs or not all(isinstance(o, str) for o in obs):
        _fail("observables", "must be a non-empty list of observable ids")
    cfg.observables = list(obs)
    if cfg.dt * cfg.sample_every > cfg.t_max * (1 + 1e-12):
        _fail("sample_every", "dt * sample_every exceeds t_max")
    model_obj = build_model(cfg)
    for o in cfg.observables:
        try:
            model_obj.check_observables([o])
        except ConfigurationError:
            _fail("observables", f"model {model!r} has no observable {o!r}")
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse a YAML (or JSON) document into a validated :class:`RunConfig`.

    A ``preset: name`` entry starts from that preset; other keys override it.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"malformed configuration document: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigurationError("configuration must be a key-value mapping")
    return config_from_mapping(merge_preset(doc))


def merge_preset(doc):
    doc = dict(doc)
    name = doc.pop("preset", None)
    if name is None:
        return doc
    base = preset(name)
    base = _normalise_keys(base)
    base.update(_normalise_keys(doc))
    if base.get("model") != PRESETS[name]["model"]:
        # parameters of the preset model may not apply to another model
        keep = set(_normalise_keys(doc))
        base = {k: v for k, v in base.items() if k in keep or k in RUN_KEYS}
    return base


def preset(name: str) -> dict:
    if name not in PRESETS:
        _fail("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return copy.deepcopy(PRESETS[name])


def build_model(cfg: RunConfig):
    """Instantiate the SDE model described by ``cfg``."""
    p = dict(cfg.params)
    hbar = cfg.hbar
    if cfg.model == "free_expansion":
        pr = cnumber.FreeExpansionParams(p["eta"], p["mass"], hbar)
        return cnumber.FreeExpansion(pr, p["alpha0"], p["beta0_star"])
    if cfg.model == "kerr":
        pr = cnumber.KerrParams(p["omega"], p["kerr_k"], hbar)
        return cnumber.Kerr(pr, p["alpha0"], p["beta0_star"], p["n_max"])
    if cfg.model == "genkerr":
        pr = cnumber.GenKerrParams(p["omega"], p["k1"], p["k2"], hbar)
        if p["noise_order"] not in (2, 3):
            _fail("noise_order", "must be 2 or 3")
        return cnumber.GenKerr(pr, p["alpha0"], p["beta0_star"], p["n_max"], p["noise_order"])
    if cfg.model == "two_mode":
        pr = manybody.TwoModeParams(p["n_particles"], p["omega_rabi"], p["kerr_k"], hbar)
        return manybody.TwoMode(pr, renormalize=cfg.renormalize, trace_tol=p["trace_tol"])
    if cfg.model == "boson_generic":
        return manybody.boson_generic(
            p["n_modes"], p["n_particles"], p["system_seed"], p["t_scale"], p["o_scale"], hbar,
            renormalize=cfg.renormalize, trace_tol=p["trace_tol"],
        )
    if cfg.model == "fermion_toy":
        if p["n_particles"] > p["n_levels"]:
            _fail("n_particles", "must not exceed n_levels")
        return manybody.fermion_toy(
            p["n_levels"], p["n_particles"], p["system_seed"], p["t_scale"], p["o_scale"], hbar,
            renormalize=cfg.renormalize, trace_tol=p["trace_tol"],
        )
    _fail("model", f"unknown model {cfg.model!r}")
