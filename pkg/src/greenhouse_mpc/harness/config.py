"""Experiment configuration: one YAML file, every key optional.

Keys and defaults::

    seed: 0
    scenario:
      x0: [0.0035, 0.001, 15.0, 0.008]   # initial state
      train_episodes: 6                  # synthetic episodes for the training corpus
      episode_days: 40
      eval_days: 10                      # held-out closed-loop scenario
      weather_csv: null                  # optional recorded weather instead of synthetic
      profile: {}                        # WeatherProfile overrides for training weather
      eval_profile: {}                   # WeatherProfile overrides for the held-out scenario
    data_generation:
      exploration: 0.05                  # dither on applied inputs, fraction of u_max
      mpc: {horizon: 6, iterations: 30, restarts: 1}
    training:
      cells: [gru, lstm]
      windows: [6, 12, 18, 24]
      batch_sizes: [8, 16, 32]
      epochs: 15
      learning_rate: 3.0e-5
      step_size: 5
      gamma: 0.5
      dropout: 0.2
      split_ratio: 0.8
    evaluation:
      horizons: [6, 12, 18, 24, 30]
      cells: [gru, lstm]
      baselines: [zero, oracle-mpc]
      mpc: {iterations: 20, restarts: 1}
    report:
      wall_clock: true                   # false writes proc_time_s as 0 for reproducible CSVs
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..dynamics import DEFAULT_X0
from ..mpc import MpcConfig
from ..weather import WeatherProfile

DEFAULTS: dict = {
    "seed": 0,
    "scenario": {
        "x0": list(DEFAULT_X0),
        "train_episodes": 6,
        "episode_days": 40,
        "eval_days": 10,
        "weather_csv": None,
        "profile": {},
        "eval_profile": {},
    },
    "data_generation": {
        "exploration": 0.05,
        "mpc": {"horizon": 6, "iterations": 30, "restarts": 1},
    },
    "training": {
        "cells": ["gru", "lstm"],
        "windows": [6, 12, 18, 24],
        "batch_sizes": [8, 16, 32],
        "epochs": 15,
        "learning_rate": 3.0e-5,
        "step_size": 5,
        "gamma": 0.5,
        "dropout": 0.2,
        "split_ratio": 0.8,
    },
    "evaluation": {
        "horizons": [6, 12, 18, 24, 30],
        "cells": ["gru", "lstm"],
        "baselines": ["zero", "oracle-mpc"],
        "mpc": {"iterations": 20, "restarts": 1},
    },
    "report": {"wall_clock": True},
}

SMOKE: dict = {
    "scenario": {"train_episodes": 5, "episode_days": 2, "eval_days": 1},
    "training": {"epochs": 2, "windows": [6, 24], "batch_sizes": [8, 16]},
    "evaluation": {"horizons": [6, 24]},
    "report": {"wall_clock": False},
}

BASELINES = ("zero", "oracle-mpc")


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in (over or {}).items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict) and key not in ("profile", "eval_profile", "mpc"):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        elif isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            out[key] = {**base[key], **value}
        else:
            out[key] = value
    return out


@dataclass
class ExperimentConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    source: str | None = None

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def scenario(self) -> dict:
        return self.raw["scenario"]

    @property
    def training(self) -> dict:
        return self.raw["training"]

    @property
    def evaluation(self) -> dict:
        return self.raw["evaluation"]

    def profile(self, **overrides) -> WeatherProfile:
        return WeatherProfile(**{**self.scenario["profile"], **overrides})

    def eval_profile(self) -> WeatherProfile:
        merged = {**self.scenario["profile"], **self.scenario["eval_profile"]}
        merged.setdefault("seed", self.seed + 10_000)
        return WeatherProfile(**merged)

    def datagen_mpc(self) -> MpcConfig:
        return MpcConfig.from_dict({"seed": self.seed, **self.raw["data_generation"]["mpc"]})

    def eval_mpc(self, horizon: int) -> MpcConfig:
        return MpcConfig.from_dict({"seed": self.seed, **self.evaluation["mpc"], "horizon": horizon})

    def hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def validate(self) -> "ExperimentConfig":
        t, e, s = self.training, self.evaluation, self.scenario
        for key in ("cells", "windows", "batch_sizes"):
            if not t[key]:
                raise ConfigError(f"training.{key} must not be empty")
        for cell in list(t["cells"]) + list(e["cells"]):
            if cell not in ("gru", "lstm"):
                raise ConfigError(f"unknown cell kind '{cell}'")
        if not e["horizons"] or any(int(h) < 1 for h in e["horizons"]):
            raise ConfigError("evaluation.horizons must be non-empty positive integers")
        for b in e["baselines"]:
            if b not in BASELINES:
                raise ConfigError(f"unknown baseline '{b}' (expected one of {BASELINES})")
        if int(s["train_episodes"]) < 2:
            raise ConfigError("scenario.train_episodes must be >= 2 to split train and test")
        if int(s["episode_days"]) < 1 or int(s["eval_days"]) < 1:
            raise ConfigError("scenario days must be >= 1")
        if len(s["x0"]) != 4:
            raise ConfigError("scenario.x0 needs 4 values")
        if s["weather_csv"] is not None and not Path(s["weather_csv"]).is_file():
            raise ConfigError(f"weather file not found: {s['weather_csv']}")
        try:
            self.profile()
            self.eval_profile()
            self.datagen_mpc()
            self.eval_mpc(1)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return self


def load_config(path=None, smoke: bool = False, seed: int | None = None) -> ExperimentConfig:
    """Defaults, then the YAML file, then the smoke overrides, then an explicit seed."""
    raw = copy.deepcopy(DEFAULTS)
    source = None
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            user = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        raw = _merge(raw, user)
        source = str(path)
    if smoke:
        raw = _merge(raw, SMOKE)
    if seed is not None:
        raw["seed"] = int(seed)
    return ExperimentConfig(raw, source).validate()
