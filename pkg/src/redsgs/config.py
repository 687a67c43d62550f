"""Run configuration: flat key = value files, presets, fail-fast validation.

The config file format is deliberately primitive: one ``key = value`` pair
per line, ``#`` starts a comment, blank lines ignored. Keys mirror the CLI
flags. Precedence, lowest to highest: built-in defaults, ``preset``,
config file, explicit CLI flags, then the ``RED_LWSGS_SEED`` environment
variable for the seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from typing import Any

__all__ = ["RunConfig", "PRESETS", "parse_config_file", "build_run_config", "SEED_ENV_VAR"]

SEED_ENV_VAR = "RED_LWSGS_SEED"

TASKS = ("deblur", "inpaint", "superres")
SAMPLERS = ("lwsgs", "red-ula", "pnp-ula", "sr-split")


class RunConfigError(ValueError):
    """Invalid run configuration (reported before any computation starts)."""


@dataclass
class RunConfig:
    """Everything one reproducible run needs."""

    task: str = "deblur"
    sampler: str = "lwsgs"
    input: str | None = None
    output: str | None = None
    # operator parameters
    kernel_size: int = 25
    kernel_std: float = 1.6
    mask_fraction: float = 0.8          # fraction of pixels REMOVED
    sr_factor: int = 4
    snr_db: float = 30.0
    # sampler parameters
    beta: float = 1.0
    rho2: float = 1.0
    rho1_2: float | None = None
    rho2_2: float | None = None
    gamma: float | None = None
    gamma_factor: float = 0.99          # gamma = factor * admissible bound when gamma unset
    n_mc: int = 1000
    n_bi: int = 200
    thin: int = 10
    seed: int = 0
    chains: int = 1
    store_samples: bool = False
    track_z: bool = False
    probe: str = "auto"
    # denoiser
    denoiser: str = "symconv:size=5,std=1.0,eps0=0.05"
    nu_start: float | None = None
    nu_end: float | None = None
    # PnP-ULA extras
    box_lo: float = -1.0
    box_hi: float = 2.0
    pnp_lambda: float | None = None

    def validate(self) -> None:
        if self.task not in TASKS:
            raise RunConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.sampler not in SAMPLERS:
            raise RunConfigError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        if (self.sampler == "sr-split") != (self.task == "superres"):
            raise RunConfigError("task 'superres' and sampler 'sr-split' must be used together")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise RunConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.kernel_std <= 0:
            raise RunConfigError(f"kernel_std must be positive, got {self.kernel_std}")
        if not 0.0 < self.mask_fraction < 1.0:
            raise RunConfigError(f"mask_fraction must lie in (0, 1), got {self.mask_fraction}")
        if self.sr_factor < 1:
            raise RunConfigError(f"sr_factor must be positive, got {self.sr_factor}")
        if self.beta <= 0 or self.rho2 <= 0:
            raise RunConfigError("beta and rho2 must be positive")
        for name in ("rho1_2", "rho2_2", "gamma", "pnp_lambda", "nu_start", "nu_end"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise RunConfigError(f"{name} must be positive when set, got {v}")
        if self.task == "superres" and (self.rho1_2 is None or self.rho2_2 is None):
            raise RunConfigError("superres needs rho1_2 and rho2_2")
        if not 0 < self.gamma_factor <= 1:
            raise RunConfigError(f"gamma_factor must lie in (0, 1], got {self.gamma_factor}")
        if self.n_mc < 1 or not 0 <= self.n_bi < self.n_mc:
            raise RunConfigError(f"need 0 <= n_bi < n_mc, got {self.n_bi}, {self.n_mc}")
        if self.thin < 1 or self.chains < 1:
            raise RunConfigError("thin and chains must be positive integers")
        if (self.nu_start is None) != (self.nu_end is None):
            raise RunConfigError("nu_start and nu_end must be set together")
        if self.nu_start is not None and self.nu_start < self.nu_end:
            raise RunConfigError("nu_start must be >= nu_end")
        if not self.box_lo < self.box_hi:
            raise RunConfigError(f"need box_lo < box_hi, got {self.box_lo}, {self.box_hi}")
        if not self.denoiser.split(":", 1)[0] in ("symconv", "dctshrink", "plugin"):
            raise RunConfigError(f"unknown denoiser spec {self.denoiser!r}")

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# Shipped hyperparameter presets. They were tuned against a large learned
# denoiser on 256x256 RGB inputs, so treat them as starting points, not
# optima, when running the built-in classical denoisers.
PRESETS: dict[str, dict[str, Any]] = {
    "ffhq-deblur": {
        "task": "deblur", "sampler": "lwsgs", "kernel_size": 25, "kernel_std": 1.6,
        "snr_db": 30.0, "beta": 8.0e-2, "rho2": 6e-8, "n_mc": 5000, "n_bi": 2000,
        "gamma_factor": 0.99,
    },
    "ffhq-inpaint": {
        "task": "inpaint", "sampler": "lwsgs", "mask_fraction": 0.8, "snr_db": 30.0,
        "beta": 1.25e-1, "rho2": 1.5, "n_mc": 10000, "n_bi": 4500, "gamma_factor": 0.99,
    },
    "ffhq-superres": {
        "task": "superres", "sampler": "sr-split", "kernel_size": 7, "kernel_std": 1.6,
        "sr_factor": 4, "snr_db": 30.0, "beta": 1.0, "rho1_2": 2e-1, "rho2_2": 1.0,
        "n_mc": 12500, "n_bi": 3500, "gamma_factor": 0.8,
    },
    "imagenet-deblur": {
        "task": "deblur", "sampler": "lwsgs", "kernel_size": 25, "kernel_std": 1.6,
        "snr_db": 30.0, "beta": 4.89e-3, "rho2": 6e-8, "n_mc": 5000, "n_bi": 2000,
        "gamma_factor": 0.99,
    },
    "imagenet-inpaint": {
        "task": "inpaint", "sampler": "lwsgs", "mask_fraction": 0.8, "snr_db": 30.0,
        "beta": 1.167e-1, "rho2": 1.5, "n_mc": 10000, "n_bi": 4500, "gamma_factor": 0.99,
    },
    "imagenet-superres": {
        "task": "superres", "sampler": "sr-split", "kernel_size": 7, "kernel_std": 1.6,
        "sr_factor": 4, "snr_db": 30.0, "beta": 4.966e-2, "rho1_2": 2e-1, "rho2_2": 1.0,
        "n_mc": 12500, "n_bi": 3500, "gamma_factor": 0.8,
    },
}


def parse_config_file(path) -> dict[str, str]:
    """Parse flat ``key = value`` lines; '#' comments, blank lines skipped."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise RunConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise RunConfigError(f"{path}:{lineno}: empty key")
            out[key] = value
    return out


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, value: Any, target_type) -> Any:
    if value is None or not isinstance(value, str):
        return value
    text = value.strip()
    if text.lower() in ("none", ""):
        return None
    try:
        if target_type is bool:
            low = text.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if target_type is int:
            return int(text)
        if target_type is float:
            return float(text)
    except ValueError as exc:
        raise RunConfigError(f"config key {name!r}: {exc}") from exc
    return text


_FIELD_TYPES = {
    "task": str, "sampler": str, "input": str, "output": str,
    "kernel_size": int, "kernel_std": float, "mask_fraction": float, "sr_factor": int,
    "snr_db": float, "beta": float, "rho2": float, "rho1_2": float, "rho2_2": float,
    "gamma": float, "gamma_factor": float, "n_mc": int, "n_bi": int, "thin": int,
    "seed": int, "chains": int, "store_samples": bool, "track_z": bool, "probe": str,
    "denoiser": str, "nu_start": float, "nu_end": float,
    "box_lo": float, "box_hi": float, "pnp_lambda": float,
}


def build_run_config(preset: str | None = None,
                     file_values: dict[str, str] | None = None,
                     overrides: dict[str, Any] | None = None,
                     env: dict[str, str] | None = None) -> RunConfig:
    """Merge defaults, preset, config file, flag overrides and the seed env var."""
    merged: dict[str, Any] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise RunConfigError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
        merged.update(PRESETS[preset])
    for source in (file_values or {}), (overrides or {}):
        for key, value in source.items():
            if key == "preset":
                continue
            if key not in _FIELD_TYPES:
                raise RunConfigError(f"unknown config key {key!r}")
            if value is not None:
                merged[key] = _coerce(key, value, _FIELD_TYPES[key])
    env = os.environ if env is None else env
    if SEED_ENV_VAR in env:
        merged["seed"] = _coerce("seed", env[SEED_ENV_VAR], int)
    cfg = RunConfig(**merged)
    cfg.validate()
    return cfg
