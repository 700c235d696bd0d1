"""Run configuration: YAML schema, validation with key paths, canonical form.

Every field has an explicit default; the resolved configuration round-trips
losslessly through :func:`emit_config` and its canonical text is what gets
hashed into result manifests.  Unknown keys are rejected with the full key
path so typos fail loudly.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import yaml

from .bands import PeriodicGrid
from .model import ModelParams, PressureLaw
from .solver import InitialSpec, StepperConfig

__all__ = ["ConfigError", "RunConfig", "parse_config", "emit_config", "config_hash"]


class ConfigError(ValueError):
    """Invalid configuration; message carries the offending key path."""


def _is_power_of_two(n: int) -> bool:
    return n >= 4 and (n & (n - 1)) == 0


def _check_epsilon(path, value):
    if not (0.0 < value <= 1.0):
        raise ConfigError(f"{path}: {value!r} outside the valid range (0, 1]")


def _check_positive(path, value):
    if value <= 0:
        raise ConfigError(f"{path}: must be > 0, got {value!r}")


# (default, type, validator or None)
_SCHEMA = {
    "model": {
        "rho_bar": (1.0, float, _check_positive),
        "pressure_amplitude": (0.5, float, _check_positive),
        "gamma": (2.0, float, lambda p, v: None if v >= 1 else (_ for _ in ()).throw(
            ConfigError(f"{p}: adiabatic exponent must be >= 1, got {v!r}"))),
        "b_bar": ([0.0, 0.0, 1.0], list, None),
        "epsilon": (0.2, float, _check_epsilon),
    },
    "grid": {
        "dim": (1, int, lambda p, v: None if v in (1, 2, 3) else (_ for _ in ()).throw(
            ConfigError(f"{p}: dim must be 1, 2 or 3, got {v!r}"))),
        "n_points": (256, int, lambda p, v: None if _is_power_of_two(v) else (_ for _ in ()).throw(
            ConfigError(f"{p}: {v!r} is not a power of two >= 4"))),
        "length": (8.0, float, _check_positive),
    },
    "stepper": {
        "dt": (1e-3, float, _check_positive),
        "t_end": (1.0, float, lambda p, v: None if v >= 0 else (_ for _ in ()).throw(
            ConfigError(f"{p}: must be >= 0, got {v!r}"))),
        "dealias": (True, bool, None),
        "cfl_safety": (0.5, float, _check_positive),
    },
    "initial": {
        "bands": ([-1, 2], list, None),
        "amplitude": (1e-3, float, _check_positive),
        "seed": (1234, int, None),
        "prepared": ("ill", str, lambda p, v: None if v in ("ill", "well") else (_ for _ in ()).throw(
            ConfigError(f"{p}: must be 'ill' or 'well', got {v!r}"))),
        "transverse_scale": (0.5, float, lambda p, v: None if v >= 0 else (_ for _ in ()).throw(
            ConfigError(f"{p}: must be >= 0, got {v!r}"))),
        "velocity_scale": (1.0, float, _check_positive),
    },
    "study": {
        "eps": ([0.4, 0.2, 0.1, 0.05], list, None),
        "horizon": (2.0, float, _check_positive),
        "dt_base": (1e-3, float, _check_positive),
        "sample_every": (1, int, lambda p, v: None if v >= 1 else (_ for _ in ()).throw(
            ConfigError(f"{p}: must be >= 1, got {v!r}"))),
    },
    "output": {
        "dir": ("out", str, None),
        "diagnostics_every": (10, int, lambda p, v: None if v >= 1 else (_ for _ in ()).throw(
            ConfigError(f"{p}: must be >= 1, got {v!r}"))),
        "snapshots_every": (0, int, lambda p, v: None if v >= 0 else (_ for _ in ()).throw(
            ConfigError(f"{p}: must be >= 0, got {v!r}"))),
    },
}


def _coerce(path: str, value, target_type):
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if target_type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if target_type is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return list(value)
    raise AssertionError(target_type)


def _validate_special(data: dict):
    b_bar = data["model"]["b_bar"]
    if len(b_bar) != 3 or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in b_bar):
        raise ConfigError(f"model.b_bar: expected a 3-vector of numbers, got {b_bar!r}")
    data["model"]["b_bar"] = [float(v) for v in b_bar]
    bands = data["initial"]["bands"]
    if len(bands) != 2 or not all(isinstance(v, int) and not isinstance(v, bool) for v in bands):
        raise ConfigError(f"initial.bands: expected two integers [j_lo, j_hi], got {bands!r}")
    if bands[0] > bands[1]:
        raise ConfigError(f"initial.bands: j_lo must be <= j_hi, got {bands!r}")
    eps_list = data["study"]["eps"]
    if not eps_list or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in eps_list):
        raise ConfigError(f"study.eps: expected a nonempty list of numbers, got {eps_list!r}")
    for v in eps_list:
        _check_epsilon("study.eps", float(v))
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError(f"study.eps: values must be strictly descending, got {eps_list!r}")
    data["study"]["eps"] = [float(v) for v in eps_list]


@dataclass
class RunConfig:
    """Fully resolved configuration with typed object builders."""

    data: dict

    def model_params(self, epsilon: float | None = None) -> ModelParams:
        m = self.data["model"]
        return ModelParams(
            rho_bar=m["rho_bar"],
            b_bar=tuple(m["b_bar"]),
            epsilon=m["epsilon"] if epsilon is None else epsilon,
            law=PressureLaw(amplitude=m["pressure_amplitude"], gamma=m["gamma"]),
        )

    def grid(self) -> PeriodicGrid:
        g = self.data["grid"]
        return PeriodicGrid(dim=g["dim"], n_points=g["n_points"], length=g["length"])

    def stepper(self, dt: float | None = None, t_end: float | None = None) -> StepperConfig:
        s = self.data["stepper"]
        return StepperConfig(
            dt=s["dt"] if dt is None else dt,
            t_end=s["t_end"] if t_end is None else t_end,
            dealias=s["dealias"],
            cfl_safety=s["cfl_safety"],
        )

    def initial_spec(self) -> InitialSpec:
        i = self.data["initial"]
        return InitialSpec(
            bands=tuple(i["bands"]),
            amplitude=i["amplitude"],
            seed=i["seed"],
            prepared=i["prepared"],
            transverse_scale=i["transverse_scale"],
            velocity_scale=i["velocity_scale"],
        )


def parse_config(text: str) -> RunConfig:
    """Parse and validate YAML text into a fully resolved configuration."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"top level must be a mapping, got {type(raw).__name__}")
    resolved = {}
    for section, fields in _SCHEMA.items():
        given = raw.pop(section, {}) or {}
        if not isinstance(given, dict):
            raise ConfigError(f"{section}: expected a mapping, got {given!r}")
        out = {}
        for key, (default, typ, check) in fields.items():
            if key in given:
                value = _coerce(f"{section}.{key}", given.pop(key), typ)
            else:
                value = default if not isinstance(default, list) else list(default)
            if check is not None:
                check(f"{section}.{key}", value)
            out[key] = value
        if given:
            bad = sorted(given)[0]
            raise ConfigError(f"{section}.{bad}: unknown key")
        resolved[section] = out
    if raw:
        bad = sorted(raw)[0]
        raise ConfigError(f"{bad}: unknown section")
    _validate_special(resolved)
    return RunConfig(data=resolved)


def emit_config(cfg: RunConfig) -> str:
    """Canonical YAML text of the resolved configuration."""
    return yaml.safe_dump(cfg.data, sort_keys=True, default_flow_style=False)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(emit_config(cfg).encode()).hexdigest()
