"""Run configuration: INI files, figure presets, environment and CLI overrides.

Resolution order, later wins: mode defaults, preset, config file,
environment (``PTSB_WORKERS``, ``PTSB_OUTPUT_DIR``), command-line flags.

A config file has one section per concern::

    [model]
    delta = 0.3
    eps = 0.1

    [bath]
    scheme = wilson
    Lambda = 1.2

Keys are case sensitive (``Lambda`` is the Wilson ratio, ``lambda`` the
coupling). Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .errors import ConfigError
from .model import BathSpec, ModelParams

MODES = ("bath", "spectrum", "dynamics", "validate")
SCHEMES = ("wilson", "uniform", "linear_finite", "single")
ENV_WORKERS = "PTSB_WORKERS"
ENV_OUTPUT_DIR = "PTSB_OUTPUT_DIR"


@dataclass(frozen=True)
class RunConfig:
    mode: str
    # model
    delta: float = 0.3
    eps: float = 0.1
    lam: float = 0.0
    bias_kind: str = "imaginary"
    s: float = 1.0
    omega_c: float = 1.0
    # bath
    scheme: str = "wilson"
    Lambda: float = 1.2
    M: int = 80
    omega_max: float = 4.0
    omega_1: float = 1.0
    omega_M: float = 1.4
    omega_0: float = 1.0
    # spectrum / validate
    axis: str = "lambda"
    grid_min: float = 0.0
    grid_max: float = 1.0
    grid_count: int = 51
    branches: int = 1
    tol: float = 1e-10
    delta_ep: float = 1e-6
    ep_rel_width: float = 1e-4
    n_max: int = 0
    check_step: int = 0
    check_every: int = 10
    conv_tol: float = 1e-8
    # dynamics
    t_end: float = 200.0
    rtol: float = 1e-8
    atol: float = 1e-10
    stride: float = 0.05
    r_floor: float = 1e-8
    # run
    name: str = ""
    out_dir: str = "."
    workers: int = 1
    preset: str = ""
    variants: tuple = field(default=(), compare=False)

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.delta, self.eps, self.lam, self.bias_kind, self.s, self.omega_c)

    @property
    def bath_spec(self) -> BathSpec:
        if self.scheme == "wilson":
            return BathSpec.of("wilson", Lambda=self.Lambda, M=self.M)
        if self.scheme == "uniform":
            return BathSpec.of("uniform", M=self.M, omega_max=self.omega_max)
        if self.scheme == "linear_finite":
            return BathSpec.of("linear_finite", M=self.M, omega_1=self.omega_1,
                               omega_M=self.omega_M)
        return BathSpec.of("single", omega_0=self.omega_0)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.grid_min, self.grid_max, self.grid_count)

    @property
    def stem(self) -> str:
        return self.name or self.preset or self.mode

    def as_dict(self) -> dict:
        out = asdict(self)
        out["variants"] = [dict(v) for v in self.variants]
        return out

    def expand(self) -> list["RunConfig"]:
        """One config per variant (a preset may bundle several runs)."""
        if not self.variants:
            return [self]
        return [validate(replace(self, variants=(), **dict(v))) for v in self.variants]


# ---------------------------------------------------------------------------
# schema

# section -> {key: field name}
SCHEMA = {
    "model": {"delta": "delta", "eps": "eps", "lambda": "lam", "bias_kind": "bias_kind",
              "s": "s", "omega_c": "omega_c"},
    "bath": {"scheme": "scheme", "Lambda": "Lambda", "M": "M", "omega_max": "omega_max",
             "omega_1": "omega_1", "omega_M": "omega_M", "omega_0": "omega_0"},
    "spectrum": {"axis": "axis", "grid_min": "grid_min", "grid_max": "grid_max",
                 "grid_count": "grid_count", "branches": "branches", "tol": "tol",
                 "delta_ep": "delta_ep", "ep_rel_width": "ep_rel_width"},
    "validate": {"n_max": "n_max", "check_step": "check_step", "check_every": "check_every",
                 "conv_tol": "conv_tol"},
    "dynamics": {"t_end": "t_end", "rtol": "rtol", "atol": "atol", "stride": "stride",
                 "r_floor": "r_floor"},
    "run": {"mode": "mode", "name": "name", "out_dir": "out_dir", "workers": "workers"},
}
KEY_OF = {f: f"{sec}.{key}" for sec, keys in SCHEMA.items() for key, f in keys.items()}
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw):
    kind = _TYPES[name]
    key = KEY_OF.get(name, name)
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(key, f"expected {kind}, got {raw!r}") from None
    return text


MODE_DEFAULTS = {
    "bath": {"delta": 0.3, "eps": 0.1, "lam": 0.1, "scheme": "wilson", "Lambda": 1.2, "M": 80},
    "spectrum": {"delta": 0.3, "eps": 0.1, "lam": 0.0, "scheme": "wilson", "Lambda": 1.2,
                 "M": 80, "axis": "lambda", "grid_min": 0.0, "grid_max": 1.0,
                 "grid_count": 51, "branches": 1},
    "dynamics": {"delta": 0.1, "eps": 0.05, "lam": 0.01, "scheme": "uniform", "M": 2000,
                 "omega_max": 4.0, "t_end": 200.0, "rtol": 1e-8, "atol": 1e-10},
    "validate": {"delta": 0.5, "eps": 0.1, "scheme": "single", "omega_0": 1.0,
                 "axis": "lambda", "grid_min": 0.0, "grid_max": 1.2, "grid_count": 50,
                 "branches": 2},
}


def _eps_sweep(delta, lam):
    return {"mode": "spectrum", "delta": delta, "lam": lam, "axis": "eps", "grid_min": 0.0,
            "grid_max": 2 * delta, "grid_count": 41}


def _dynamics_pair(delta, lam, eps_pair, **extra):
    return {"mode": "dynamics", "delta": delta, "lam": lam, **extra,
            "variants": tuple((("eps", e),) for e in eps_pair)}


# Parameter sets of every figure; multi-curve panels expand into variants.
PRESETS = {
    "fig1a": {"mode": "spectrum", "delta": 0.3, "eps": 0.1, "axis": "lambda"},
    "fig1b": {"mode": "validate", "delta": 0.3, "eps": 0.1, "scheme": "single",
              "omega_0": 1.0, "grid_max": 1.2},
    "fig2a": _eps_sweep(0.1, 0.01),
    "fig2b": _eps_sweep(0.1, 0.1),
    "fig2c": _eps_sweep(0.3, 0.1),
    "fig2d": _eps_sweep(0.3, 0.3),
    "fig3a": _dynamics_pair(0.1, 0.01, (0.05, 0.1)),
    "fig3b": _dynamics_pair(0.1, 0.1, (0.05, 0.1)),
    "fig3c": _dynamics_pair(0.3, 0.1, (0.1, 0.3)),
    "fig3d": _dynamics_pair(0.3, 0.3, (0.1, 0.3)),
    "fig4a": _dynamics_pair(0.1, 0.01, (0.05, 0.1)),
    "fig4b": _dynamics_pair(0.3, 0.1, (0.1, 0.3)),
    "fig5": {"mode": "validate", "delta": 0.5, "eps": 0.1, "scheme": "single",
             "omega_0": 1.0, "grid_max": 1.2},
    "fig6": {"mode": "validate", "delta": 0.3, "eps": 0.1, "scheme": "linear_finite",
             "omega_1": 1.0, "omega_M": 1.4, "grid_max": 0.8,
             "variants": ((("M", 3),), (("M", 5),))},
    "fig7a": {"mode": "spectrum", "delta": 0.3, "eps": 0.1, "bias_kind": "real",
              "axis": "lambda"},
    "fig7b": _dynamics_pair(0.1, 0.01, (0.05, 0.1), bias_kind="real"),
}


def _variant_names(preset, variants):
    named = []
    for v in variants:
        d = dict(v)
        tag = "_".join(f"{k}{d[k]:g}" for k in d if k != "name")
        d["name"] = f"{preset}_{tag}"
        named.append(tuple(sorted(d.items())))
    return tuple(named)


# ---------------------------------------------------------------------------
# validation

def validate(cfg: RunConfig) -> RunConfig:
    """Range and enum checks; returns ``cfg`` unchanged or raises ConfigError."""
    def need(cond, name, msg):
        if not cond:
            raise ConfigError(KEY_OF.get(name, name), f"{msg}, got {getattr(cfg, name)!r}")

    need(cfg.mode in MODES, "mode", f"must be one of {MODES}")
    for name in ("delta", "eps", "lam"):
        need(math.isfinite(getattr(cfg, name)) and getattr(cfg, name) >= 0, name,
             "must be finite and >= 0")
    need(cfg.bias_kind in ("imaginary", "real"), "bias_kind", "must be 'imaginary' or 'real'")
    need(cfg.s > 0, "s", "must be > 0")
    need(cfg.omega_c > 0, "omega_c", "must be > 0")
    need(cfg.scheme in SCHEMES, "scheme", f"must be one of {SCHEMES}")
    need(cfg.Lambda > 1, "Lambda", "must be > 1")
    need(cfg.M >= 1, "M", "must be >= 1")
    if cfg.scheme == "linear_finite":
        need(cfg.M >= 2, "M", "linear_finite needs M >= 2")
        need(0 < cfg.omega_1 < cfg.omega_M, "omega_M", "need 0 < omega_1 < omega_M")
    need(cfg.omega_max > 0, "omega_max", "must be > 0")
    need(cfg.omega_0 > 0, "omega_0", "must be > 0")
    need(cfg.axis in ("lambda", "eps"), "axis", "must be 'lambda' or 'eps'")
    need(cfg.grid_count >= 2, "grid_count", "must be >= 2")
    need(cfg.grid_min >= 0, "grid_min", "must be >= 0")
    need(cfg.grid_max > cfg.grid_min, "grid_max", "must exceed grid_min")
    need(cfg.branches in (1, 2), "branches", "must be 1 or 2")
    for name in ("tol", "delta_ep", "ep_rel_width", "conv_tol", "t_end", "rtol", "atol",
                 "stride", "r_floor"):
        need(getattr(cfg, name) > 0, name, "must be > 0")
    need(cfg.n_max >= 0, "n_max", "must be >= 0 (0 selects the default)")
    need(cfg.check_step >= 0, "check_step", "must be >= 0 (0 selects the default)")
    need(cfg.check_every >= 1, "check_every", "must be >= 1")
    need(cfg.workers >= 1, "workers", "must be >= 1")
    return cfg


# ---------------------------------------------------------------------------
# loading

def read_file(path) -> dict:
    """Parse an INI file into ``{field: value}``; unknown keys raise ConfigError."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except configparser.Error as exc:
        raise ConfigError("config", f"cannot parse {path}: {exc}") from None
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(section, f"unknown section; expected one of {sorted(SCHEMA)}")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
            values[SCHEMA[section][key]] = raw
    return values


def read_env(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    if environ.get(ENV_WORKERS):
        out["workers"] = environ[ENV_WORKERS]
    if environ.get(ENV_OUTPUT_DIR):
        out["out_dir"] = environ[ENV_OUTPUT_DIR]
    return out


def load_config(mode: str, path=None, preset: str | None = None, overrides: dict | None = None,
                environ=None) -> RunConfig:
    """Resolve a :class:`RunConfig` for ``mode``.

    ``overrides`` holds field-name keyed values from command-line flags.
    """
    if mode not in MODES:
        raise ConfigError("mode", f"must be one of {MODES}, got {mode!r}")
    values: dict = dict(MODE_DEFAULTS[mode])
    if preset:
        if preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r}; known: {sorted(PRESETS)}")
        spec = dict(PRESETS[preset])
        if spec.pop("mode") != mode:
            raise ConfigError("preset", f"preset {preset!r} is a {PRESETS[preset]['mode']} run")
        if "variants" in spec:
            spec["variants"] = _variant_names(preset, spec["variants"])
        values.update(spec, preset=preset)
    explicit: dict = {}
    if path is not None:
        from_file = read_file(path)
        if "mode" in from_file and from_file["mode"].strip() != mode:
            raise ConfigError("run.mode", f"file says {from_file['mode']!r} but command is {mode!r}")
        explicit.update(from_file)
    explicit.update(read_env(environ))
    explicit.update({k: v for k, v in (overrides or {}).items() if v is not None})
    # a value set explicitly for a key the preset varies collapses the variants
    varied = {k for v in values.get("variants", ()) for k, _ in v} - {"name"}
    if varied & set(explicit):
        values["variants"] = ()
    values.update(explicit)
    values["mode"] = mode
    unknown = set(values) - set(_TYPES)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    typed = {k: _coerce(k, v) for k, v in values.items()}
    return validate(RunConfig(**typed))
