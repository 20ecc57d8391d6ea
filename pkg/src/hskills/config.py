"""Layered run configuration: package defaults, then a YAML file, then
dotted-path command-line overrides. A master seed is split into named
streams so environments, parameter init, goal sampling and minibatch
draws are independently reproducible."""

from __future__ import annotations

import copy
import zlib
from pathlib import Path

import numpy as np
import yaml

DEFAULTS: dict = {
    "seed": 0,
    "output_dir": "runs/run",
    "task": "pretrain",
    "pretrain": {
        "horizon": 72,
        "goal_threshold": 0.1,
        "resample_prob": 0.0,
        "reset_interval": 100,
        "update_interval": 1000,
        "gradient_steps": 50,
        "warmup_steps": 10_000,
        "total_steps": 10_000_000,
        "ctrl_cost": 0.01,
        "buffer_capacity": 3_000_000,
        "metrics_interval": 1000,
    },
    "sac": {
        "lr_q": 0.001,
        "lr_pi": 0.001,
        "lr_alpha": 0.001,
        "init_alpha": 0.1,
        "tau": 0.005,
        "batch_size": 256,
        "hidden": 256,
        "n_layers": 4,
        "target_entropy": None,   # default: -action_dim
    },
    "hi": {
        "c": 5,
        "gamma": 0.99,
        "lr_q": 0.001,
        "lr_f": 0.003,
        "lr_g": 0.003,
        "lr_alpha": 0.001,
        "lr_beta": 0.001,
        "init_alpha": 1.0,
        "init_beta": 1.0,
        "tau": 0.005,
        "target_entropy_g": -1.0,
        "target_entropy_f_scale": 0.5,
        "hidden": 256,
        "n_layers": 4,
        "batch_size": 256,
        "warmup_steps": 1000,
    },
    "train": {
        "mode": "hsd3",
        "fixed_set": "",
        "total_steps": 200_000,
        "update_interval": 50,
        "gradient_steps": 50,
        "buffer_capacity": 200_000,
        "eval_interval": 50_000,
        "eval_trials": 50,
        "metrics_interval": 2000,
    },
}

SEED_STREAMS = ("env", "init", "goals", "batch", "eval")


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def merge_config(base: dict, override: dict) -> dict:
    """Recursive merge; override values win, nested dicts merge key-wise."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge_config(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_dotted(cfg: dict, dotted: str, value) -> None:
    """Apply one ``a.b.c=value`` override in place; the value is parsed as
    YAML (so numbers, booleans and lists work)."""
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise KeyError(f"unknown config section: {'.'.join(keys[:-1])}")
        node = node[k]
    if keys[-1] not in node:
        raise KeyError(f"unknown config key: {dotted}")
    node[keys[-1]] = value


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ValueError(f"override must be key=value, got {text!r}")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def load_config(path: str | Path | None = None, overrides: tuple[str, ...] = ()) -> dict:
    cfg = default_config()
    if path is not None:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ValueError(f"config file {path} must contain a mapping")
        cfg = merge_config(cfg, data)
    for text in overrides:
        key, value = parse_override(text)
        set_dotted(cfg, key, value)
    return cfg


def save_config(cfg: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(cfg, f, sort_keys=True)


def seed_stream(master: int, name: str) -> np.random.Generator:
    """Named, order-independent child stream of one master seed."""
    return np.random.default_rng(
        np.random.SeedSequence((int(master), zlib.crc32(name.encode())))
    )


def seed_streams(master: int) -> dict[str, np.random.Generator]:
    return {name: seed_stream(master, name) for name in SEED_STREAMS}
