"""Run configuration: one JSON document with data / arch / train / eval sections.

Loading fills every missing field with its default, so the resolved config
written next to each run's outputs is complete and reproduces the run.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .data import SyntheticConfig
from .evaluation import DEFAULT_RADII, DEFAULT_THRESHOLDS_SIGMA
from .model import ArchConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    train_fraction: float = 0.9
    split_seed: int = 0
    path: str | None = None


@dataclass
class EvalSection:
    thresholds_sigma: list[float] = field(default_factory=lambda: list(DEFAULT_THRESHOLDS_SIGMA))
    radii: list[float] = field(default_factory=lambda: list(DEFAULT_RADII))
    n_generate: int = 1000
    interp_pairs: list[list[int]] = field(default_factory=lambda: [[0, 1], [2, 3], [4, 5], [6, 7], [8, 9]])
    interp_steps: int = 8
    n_centers: int = 5
    n_per_center: int = 200
    local_variance: float = 1.0
    seed: int = 0
    grid_samples: int = 8


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    arch: ArchConfig = field(default_factory=ArchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSection = field(default_factory=EvalSection)
    output_dir: str = "runs/default"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def dump(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = d or {}
        cfg = _build(cls, d, "config")
        arch = d.get("arch", {})
        # an arch section that leaves the data shape unset inherits it from the data section
        if not isinstance(arch, dict) or not {"channels", "height", "width", "n_scalars"} & set(arch):
            cfg.sync_arch_to_data()
        return cfg

    def sync_arch_to_data(self) -> None:
        """Make the architecture's data shape follow the synthetic data section."""
        s = self.data.synthetic
        self.arch.channels, self.arch.height, self.arch.width, self.arch.n_scalars = s.channels, s.height, s.width, s.n_scalars


def _build(cls, d: Any, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(d) - set(fields)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in d.items():
        ftype = fields[name].type
        default = fields[name].default_factory() if fields[name].default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        elif isinstance(value, list) and "tuple" in str(ftype):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig.from_dict({})
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return RunConfig.from_dict(raw)
