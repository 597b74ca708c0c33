"""Flat training configuration, named presets and layered overrides."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

ENV_PREFIX = "GRIP_"


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 40
    warmup: int = 10  # epochs 0..warmup-1 train on every sample
    ema_momentum: float = 0.5
    w: float = 0.5
    gamma: float = 1.0
    alpha_start: float = 1.0
    alpha_end: float = 0.2
    alpha_ramp: int = 5
    tau: float = 0.03
    batch_size: int = 128
    lr: float = 0.02
    lr_step: int = 0  # halve every lr_step epochs; 0 keeps lr constant
    lr_decay: float = 0.5
    sgd_momentum: float = 0.9
    weight_decay: float = 1e-5
    seed: int = 0
    architecture: str = "mlp1"
    hidden: int = 64
    eval_every: int = 1
    checkpoint_every: int = 10
    threads: int = 1
    preset: str = field(default="default", compare=False)

    def validate(self) -> "TrainConfig":
        errors = []
        if self.epochs < 1:
            errors.append("epochs must be >= 1")
        if self.warmup < 0:
            errors.append("warmup must be >= 0")
        if not 0.0 <= self.ema_momentum <= 1.0:
            errors.append("ema_momentum must lie in [0, 1]")
        if not 0.0 <= self.w <= 1.0:
            errors.append("w must lie in [0, 1]")
        if self.gamma < 0:
            errors.append("gamma must be >= 0")
        if self.alpha_ramp < 0:
            errors.append("alpha_ramp must be >= 0")
        if self.tau < 0:
            errors.append("tau must be >= 0")
        if self.batch_size < 1:
            errors.append("batch_size must be >= 1")
        if self.lr < 0 or self.lr_step < 0 or self.lr_decay <= 0:
            errors.append("lr >= 0, lr_step >= 0 and lr_decay > 0 are required")
        if not 0.0 <= self.sgd_momentum < 1.0:
            errors.append("sgd_momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            errors.append("weight_decay must be >= 0")
        if self.architecture not in ("linear", "mlp1"):
            errors.append("architecture must be 'linear' or 'mlp1'")
        if self.hidden < 1 or self.eval_every < 1 or self.checkpoint_every < 0 or self.threads < 1:
            errors.append("hidden >= 1, eval_every >= 1, checkpoint_every >= 0, threads >= 1 are required")
        if errors:
            raise ConfigError("; ".join(errors))
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes).validate()


# Regimes of the two experiment families: synthetic CIFAR-style noise and web-crawled fine-grained data.
PRESETS: dict[str, dict] = {
    "default": {},
    "cifar-like": dict(
        w=0.5, gamma=1.0, ema_momentum=0.5, warmup=10, tau=0.03,
        alpha_start=1.0, alpha_end=0.2, alpha_ramp=5,
    ),
    "webfg-like": dict(
        w=0.5, gamma=0.5, ema_momentum=0.5, warmup=5, tau=0.04,
        alpha_start=1.0, alpha_end=0.3, alpha_ramp=5, weight_decay=1e-5, sgd_momentum=0.9,
    ),
}

_FIELDS = {f.name: f for f in fields(TrainConfig)}


def _coerce(key: str, value):
    f = _FIELDS[key]
    kind = type(f.default)
    if isinstance(value, str):
        try:
            if kind is bool:
                return value.lower() in ("1", "true", "yes")
            return kind(float(value)) if kind is int and "." in value else kind(value)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {value!r} as {kind.__name__}") from None
    if kind is float and isinstance(value, int):
        return float(value)
    if kind is int and isinstance(value, float) and value.is_integer():
        return int(value)
    if not isinstance(value, kind):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def _apply(values: dict, overrides: dict, source: str) -> None:
    unknown = sorted(set(overrides) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys in {source}: {', '.join(unknown)}")
    for k, v in overrides.items():
        values[k] = _coerce(k, v)


def parse_set(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for k, v in environ.items():
        if k.startswith(ENV_PREFIX):
            key = k[len(ENV_PREFIX):].lower()
            if key in _FIELDS:
                out[key] = v
    return out


def resolve_config(
    preset: str = "default",
    config_file: str | Path | None = None,
    sets: dict | None = None,
    environ=None,
) -> TrainConfig:
    """Preset < config file < ``GRIP_*`` environment < explicit ``--set`` overrides."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    values = TrainConfig().to_dict()
    _apply(values, PRESETS[preset], f"preset {preset}")
    if config_file is not None:
        with open(config_file, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{config_file}: invalid JSON ({e})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{config_file}: expected a JSON object")
        _apply(values, data, str(config_file))
    _apply(values, env_overrides(environ), "environment")
    _apply(values, sets or {}, "--set")
    values.setdefault("preset", preset)
    if values.get("preset") == "default":
        values["preset"] = preset
    return TrainConfig(**values).validate()


def apply_overrides(config: TrainConfig, overrides: dict) -> TrainConfig:
    values = config.to_dict()
    _apply(values, overrides, "overrides")
    return TrainConfig(**values).validate()


def config_from_dict(d: dict) -> TrainConfig:
    values = TrainConfig().to_dict()
    _apply(values, d, "config")
    return TrainConfig(**values).validate()
