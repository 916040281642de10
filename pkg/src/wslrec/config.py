"""Flat JSON run configuration and deterministic seed derivation.

Config files are a single flat JSON object; command-line flags override
file values, file values override defaults, and unknown keys are rejected.
All stage randomness derives from one root seed: the stage label is hashed
(SHA-256) together with the root seed and the first 8 digest bytes become
that stage's generator seed, so each stage is independently reproducible.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .trainer import TrainConfig

__all__ = ["derive_seed", "load_config_file", "resolve_config", "train_config_from", "TRAIN_KEYS"]

TRAIN_KEYS = {
    "batch_size",
    "negatives_per_instance",
    "learning_rate",
    "max_iterations",
    "patience",
    "eval_interval",
    "seed",
    "proposal",
    "eval_k",
    "max_history",
    "negatives_pooling",
}

MODEL_KEYS = {"encoder", "dim", "m"}
WEAK_KEYS = {"weak_sources", "k_ws", "mining_k", "itemcf_include_history"}
KNOWN_KEYS = TRAIN_KEYS | MODEL_KEYS | WEAK_KEYS | {"cutoffs", "prune_n", "threads"}


class ConfigError(ValueError):
    """Invalid run configuration (unknown key, bad file, bad value)."""


def derive_seed(root_seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{root_seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def load_config_file(path) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None
    if not isinstance(payload, dict):
        raise ConfigError(f"config file {path}: expected a flat JSON object")
    unknown = sorted(set(payload) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"config file {path}: unknown keys {unknown}")
    return payload


def resolve_config(defaults: dict, file_values: dict | None, flag_values: dict) -> dict:
    """defaults < config file < explicit flags; None flags don't override."""
    resolved = dict(defaults)
    if file_values:
        resolved.update(file_values)
    for key, value in flag_values.items():
        if value is not None:
            resolved[key] = value
    return resolved


def train_config_from(resolved: dict) -> TrainConfig:
    kwargs = {key: resolved[key] for key in TRAIN_KEYS if key in resolved}
    try:
        return TrainConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
