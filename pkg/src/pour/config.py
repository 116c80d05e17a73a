"""Experiment configuration: JSON loading, default resolution, validation, hashing.

A minimal file such as ``{"C": 4, "d": 3, "sigma": 0.05}`` is enough; every
other key takes the default shown in :data:`DEFAULTS`.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .toy_model import TrainConfig
from .unlearn import DEFAULT_BASELINE, DEFAULT_DISTILL, DIRECTION_SOURCES, VARIANTS

FORMATS = ("csv", "json")

DEFAULTS: dict[str, Any] = {
    "samples_per_class": 200,
    "test_samples_per_class": 100,
    "seed": 0,
    "hidden_dim": 64,
    "feature_dim": None,  # C - 1
    "train": {
        "steps": 2000,
        "step_size": 0.1,
        "batch_size": None,
        "optimizer": "momentum",
        "weight_decay": 5e-4,
        "update_clip": None,
    },
    "variant": "pour_d",
    "forget_class": 0,
    "direction_source": "head_column",
    "unlearn_train": None,  # variant default
    "snapshot_every": 25,
    "metrics": {
        "rus_o": True,
        "rus_r": False,
        "rmia": True,
        "bounds": False,
        "angles": True,
        "cka_after_projection": False,
    },
    "rmia_folds": 5,
    "bound_kernel": "gaussian",
    "runs": 1,
    "out": "runs/experiment",
    "format": "csv",
}
REQUIRED = ("C", "d", "sigma")
# Output location and format do not change results, so they stay out of the hash.
UNHASHED = ("out", "format")


def _train_dict(tc: TrainConfig) -> dict:
    return {k: getattr(tc, k) for k in DEFAULTS["train"]}


def _merge_section(name: str, given: Any, defaults: dict) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"{name} must be an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {sorted(unknown)}")
    return {**defaults, **given}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment configuration; build with :func:`resolve_config`."""

    values: dict

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def class_count(self) -> int:
        return self.values["C"]

    @property
    def ambient_dim(self) -> int:
        return self.values["d"]

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(seed=seed, **self.values["train"])

    def unlearn_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(seed=seed, **self.values["unlearn_train"])

    def canonical(self) -> dict:
        return copy.deepcopy(self.values)

    def canonical_json(self) -> str:
        return json.dumps(self.values, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        hashed = {k: v for k, v in self.values.items() if k not in UNHASHED}
        blob = json.dumps(hashed, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_overrides(self, **overrides: Any) -> ExperimentConfig:
        raw = self.canonical()
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return resolve_config(raw)


def resolve_config(raw: dict) -> ExperimentConfig:
    """Fill defaults and validate every cross-field constraint."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing required key(s): {missing}")
    unknown = set(raw) - set(DEFAULTS) - set(REQUIRED)
    if unknown:
        raise ConfigError(f"unknown key(s): {sorted(unknown)}")
    cfg = {**copy.deepcopy(DEFAULTS), **copy.deepcopy(raw)}
    cfg["train"] = _merge_section("train", raw.get("train", {}), DEFAULTS["train"])
    cfg["metrics"] = _merge_section("metrics", raw.get("metrics", {}), DEFAULTS["metrics"])

    c, d = cfg["C"], cfg["d"]
    for key in ("C", "d", "samples_per_class", "test_samples_per_class", "hidden_dim",
                "forget_class", "seed", "rmia_folds", "runs"):
        if not isinstance(cfg[key], int) or isinstance(cfg[key], bool):
            raise ConfigError(f"{key} must be an integer")
    if c < 2:
        raise ConfigError(f"C must be >= 2, got {c}")
    if d < c - 1:
        raise ConfigError(f"ambient_dim below C-1: d={d}, C={c}")
    if not isinstance(cfg["sigma"], (int, float)) or cfg["sigma"] < 0:
        raise ConfigError("sigma must be a nonnegative number")
    cfg["sigma"] = float(cfg["sigma"])
    if cfg["feature_dim"] is None:
        cfg["feature_dim"] = c - 1
    if cfg["feature_dim"] < c - 1:
        raise ConfigError(f"feature_dim below C-1: feature_dim={cfg['feature_dim']}, C={c}")
    if not 0 <= cfg["forget_class"] < c:
        raise ConfigError(f"forget_class must lie in [0, C): got {cfg['forget_class']}, C={c}")
    if cfg["variant"] not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}")
    if cfg["variant"] in ("pour_p", "pour_d") and c < 3:
        raise ConfigError("projection variants need C >= 3")
    if cfg["direction_source"] not in DIRECTION_SOURCES:
        raise ConfigError(f"direction_source must be one of {DIRECTION_SOURCES}")
    if cfg["format"] not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}")
    if cfg["bound_kernel"] not in ("linear", "gaussian"):
        raise ConfigError("bound_kernel must be 'linear' or 'gaussian'")
    if cfg["runs"] < 1 or cfg["rmia_folds"] < 2 or cfg["samples_per_class"] < 1:
        raise ConfigError("runs >= 1, rmia_folds >= 2 and samples_per_class >= 1 are required")
    if cfg["test_samples_per_class"] < cfg["rmia_folds"]:
        raise ConfigError("test_samples_per_class must be >= rmia_folds")
    if cfg["snapshot_every"] is not None and cfg["snapshot_every"] < 1:
        raise ConfigError("snapshot_every must be >= 1 or null")

    variant_default = DEFAULT_DISTILL if cfg["variant"] == "pour_d" else DEFAULT_BASELINE
    base = _train_dict(variant_default)
    given = raw.get("unlearn_train") or {}
    cfg["unlearn_train"] = _merge_section("unlearn_train", given, base)
    try:
        TrainConfig(**cfg["train"])
        TrainConfig(**cfg["unlearn_train"])
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg["variant"] == "gradient_ascent" and cfg["unlearn_train"]["update_clip"] is None:
        raise ConfigError("gradient_ascent requires unlearn_train.update_clip > 0")
    return ExperimentConfig(cfg)


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return resolve_config(raw)

