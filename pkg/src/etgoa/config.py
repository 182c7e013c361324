"""JSON configuration files.

A config file is a JSON object with up to three sections, each optional::

    {
      "env":        {...EnvConfig fields...},
      "training":   {...TrainingConfig fields...},
      "experiment": {...ExperimentConfig scalar fields...}
    }

Unknown keys are rejected. ``etgoa config`` prints the full default document.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Any

from .experiments.harness import ExperimentConfig
from .gridworld import Cell, EnvConfig
from .policy import TrainingConfig


class ConfigError(ValueError):
    pass


def _apply(cls, data: dict[str, Any], section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")
    return data


def _env(data: dict[str, Any]) -> EnvConfig:
    data = dict(_apply(EnvConfig, data, "env"))
    if "start" in data:
        data["start"] = Cell(*data["start"])
    if "goals" in data:
        data["goals"] = tuple(Cell(*g) for g in data["goals"])
    try:
        return EnvConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid env section: {exc}") from exc


def from_dict(doc: dict[str, Any]) -> ExperimentConfig:
    unknown = set(doc) - {"env", "training", "experiment"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    xdata = dict(_apply(ExperimentConfig, doc.get("experiment", {}), "experiment"))
    for nested in ("env", "training"):
        if nested in xdata:
            raise ConfigError(f"put {nested!r} at the top level, not under 'experiment'")
    if "exp2_change_times" in xdata:
        xdata["exp2_change_times"] = tuple(xdata["exp2_change_times"])
    training = TrainingConfig(**_apply(TrainingConfig, doc.get("training", {}), "training"))
    return ExperimentConfig(env=_env(doc.get("env", {})), training=training, **xdata)


def load(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return from_dict(doc)


def to_dict(xcfg: ExperimentConfig) -> dict[str, Any]:
    def plain(obj):
        return {k: [list(g) for g in v] if k == "goals" else list(v) if isinstance(v, tuple) else v
                for k, v in dataclasses.asdict(obj).items()}
    experiment = {f.name: getattr(xcfg, f.name) for f in dataclasses.fields(xcfg)
                  if f.name not in ("env", "training")}
    experiment["exp2_change_times"] = list(experiment["exp2_change_times"])
    return {"env": plain(xcfg.env), "training": plain(xcfg.training), "experiment": experiment}
