"""Run configuration: JSON document with strict key checking.

Sections mirror the dataclasses they configure; any key that is not a
known field is rejected by name, so config typos fail loudly instead of
silently using defaults.
"""

import dataclasses
import json

from .degradation import DegradationSpec, default_spec, make_gaussian_kernel
from .errors import ArgumentError
from .model import ModelConfig
from .training import TrainConfig


@dataclasses.dataclass
class DataConfig:
    """Synthetic dataset parameters (cmd synth)."""

    n: int = 64
    size: int = 32
    noise_sigma: float = 0.0


@dataclasses.dataclass
class DegradationConfig:
    """Blur kernel override; null fields fall back to ratio-scaled defaults."""

    kernel_size: int | None = None
    kernel_sigma: float | None = None


@dataclasses.dataclass
class PathsConfig:
    dataset: str = "dataset.gisr"
    out_dir: str = "runs"


@dataclasses.dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    data: DataConfig
    degradation: DegradationConfig
    paths: PathsConfig

    def spec(self, noise_sigma=None):
        """DegradationSpec for this run (defaults scale with the ratio)."""
        sigma = self.data.noise_sigma if noise_sigma is None else noise_sigma
        dg = self.degradation
        if dg.kernel_size is None and dg.kernel_sigma is None:
            return default_spec(self.model.r, sigma)
        size = dg.kernel_size if dg.kernel_size is not None else \
            2 * -(-3 * self.model.r // 2) + 1
        ksigma = dg.kernel_sigma if dg.kernel_sigma is not None else self.model.r / 2.0
        return DegradationSpec(make_gaussian_kernel(size, ksigma), self.model.r, sigma)

    def echo(self):
        return {
            "model": dataclasses.asdict(self.model),
            "train": dataclasses.asdict(self.train),
            "data": dataclasses.asdict(self.data),
            "degradation": dataclasses.asdict(self.degradation),
            "paths": dataclasses.asdict(self.paths),
        }


_SECTIONS = {"model": ModelConfig, "train": TrainConfig, "data": DataConfig,
             "degradation": DegradationConfig, "paths": PathsConfig}


def _build_section(name, cls, values):
    if not isinstance(values, dict):
        raise ArgumentError(f"config section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    for key in values:
        if key not in known:
            raise ArgumentError(f"unknown config key {name}.{key!r}")
    fixed = dict(values)
    if "lr_decay_epochs" in fixed and isinstance(fixed["lr_decay_epochs"], list):
        fixed["lr_decay_epochs"] = tuple(fixed["lr_decay_epochs"])
    return cls(**fixed)


def parse_run_config(doc):
    if not isinstance(doc, dict):
        raise ArgumentError("config must be a JSON object")
    for key in doc:
        if key not in _SECTIONS:
            raise ArgumentError(f"unknown config key {key!r}")
    sections = {name: _build_section(name, cls, doc.get(name, {}))
                for name, cls in _SECTIONS.items()}
    return RunConfig(**sections)


def load_run_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ArgumentError(f"config {path}: invalid JSON ({exc})") from None
    return parse_run_config(doc)


def default_run_config():
    return parse_run_config({})
