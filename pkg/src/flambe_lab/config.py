"""Experiment configuration: YAML files with defaults, dotted overrides and validation."""

from __future__ import annotations

import copy
import hashlib
import os
from pathlib import Path

import yaml

from .errors import ConfigurationError

OUTPUT_ROOT_ENV = "FLAMBE_LAB_OUTPUT_ROOT"

DEFAULTS = {
    "env": {
        "n_states": 3, "d": 2, "m": 1, "H": 3, "seed": 7, "alpha": 1.0, "L_target": 2.0,
        "feature_scale": 1.0, "bandwidth": 1, "family": "cosine", "per_step": False, "psi_concentration": 1.0,
    },
    "class": {"n_phi_decoys": 4, "n_psi_decoys": 4, "decoy_scale": 0.3},
    "hyper": {
        "mode": "practical", "n": 500, "j_max": 5, "beta": 0.5,
        "policy_mode": "restricted", "eps": 0.5, "delta": 0.1, "K": 4.0, "c": 1.0,
        "alpha_E": 1.0, "L_E": 1.0, "alpha_T": 1.0, "L_T": 1.0, "alpha_R": 1.0, "L_R": 1.0,
        "phi_class_size": None, "psi_class_size": None,
    },
    "planner": {"beta": 0.5, "G": 32, "optimizer": "grid", "certify": True},
    "eval": {
        "n_rewards": 10, "n_grid_policies": 6, "n_smoothed_policies": 6, "K_cap": 4.0, "K_smooth": 16.0,
        "G": 32, "env_path": None, "model_path": None,
    },
    "verify": {"K_values": [4, 16, 64], "n_envs": 4, "G": 64, "n_is_pairs": 50, "is_grids": [4, 8]},
    "seeds": {"base": 0, "repetitions": 1},
    "output": {"dir": "runs/default", "json_mirror": False},
}

CHOICES = {
    ("env", "family"): ("cosine", "affine"),
    ("hyper", "mode"): ("practical", "theoretical"),
    ("hyper", "policy_mode"): ("restricted", "unrestricted"),
    ("planner", "optimizer"): ("grid", "concave"),
}


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in (update or {}).items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigurationError(f"unknown config field '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"config field '{where}' must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def parse_override(text: str) -> dict:
    """Turn ``a.b=value`` into ``{"a": {"b": value}}`` with YAML-typed values."""
    if "=" not in text:
        raise ConfigurationError(f"override '{text}' is not of the form section.field=value")
    key, raw = text.split("=", 1)
    parts = key.strip().split(".")
    value = yaml.safe_load(raw)
    out: dict = {}
    node = out
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out


def _validate(cfg: dict) -> None:
    for (section, field), allowed in CHOICES.items():
        if cfg[section][field] not in allowed:
            raise ConfigurationError(f"'{section}.{field}' must be one of {allowed}, got {cfg[section][field]!r}")
    numeric = {
        ("env", "n_states"), ("env", "d"), ("env", "m"), ("env", "H"), ("hyper", "n"), ("hyper", "j_max"),
        ("planner", "G"), ("planner", "beta"), ("hyper", "beta"),
    }
    for section, field in numeric:
        v = cfg[section][field]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
            raise ConfigurationError(f"'{section}.{field}' must be a positive number, got {v!r}")


def load_config(path=None, overrides=()) -> dict:
    """Defaults, then the YAML file (if any), then ``section.field=value`` overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config file must hold a mapping")
        cfg = _merge(cfg, data)
    for text in overrides:
        cfg = _merge(cfg, parse_override(text))
    _validate(cfg)
    return cfg


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]


def output_dir(cfg: dict, subdir: str | None = None) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    out = root / cfg["output"]["dir"]
    if subdir:
        out = out / subdir
    out.mkdir(parents=True, exist_ok=True)
    return out
