"""Run configuration: strict JSON in, fully-defaulted JSON back out.

A run file holds up to four sections (corpus, features, model, training),
each mapped onto a dataclass. Unknown keys anywhere are rejected with their
full path so typos fail loudly instead of silently using a default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .backbone import ModelVariant
from .errors import ConfigError, InputError
from .features import FbankConfig
from .training import TrainConfig

__all__ = ["CorpusSpec", "ModelSpec", "RunConfig", "load_run_config", "dump_run_config"]


@dataclass
class CorpusSpec:
    n_speakers: int = 10
    utts_per_speaker: int = 8
    duration_range_s: tuple[float, float] = (2.5, 5.0)
    sample_rate: int = 16000
    seed: int = 0


@dataclass
class ModelSpec:
    variant: str = ModelVariant.MFA_STANDARD.value
    # width and seed for the trained model live in the training section;
    # this section only picks the architecture.

    def __post_init__(self):
        ModelVariant.parse(self.variant)


@dataclass
class RunConfig:
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    features: FbankConfig = field(default_factory=FbankConfig)
    model: ModelSpec = field(default_factory=ModelSpec)
    training: TrainConfig = field(default_factory=TrainConfig)


_TUPLE_FIELDS = {"duration_range_s"}


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path}: unknown key {unknown[0]!r} (valid: {', '.join(sorted(names))})")
    kwargs = {}
    for key, value in data.items():
        if key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


_SECTIONS = {
    "corpus": CorpusSpec,
    "features": FbankConfig,
    "model": ModelSpec,
    "training": TrainConfig,
}


def run_config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"run config must be a JSON object, got {type(data).__name__}")
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError(
            f"unknown section {unknown[0]!r} (valid: {', '.join(sorted(_SECTIONS))})")
    built = {name: _build(cls, data.get(name, {}), name) for name, cls in _SECTIONS.items()}
    return RunConfig(**built)


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise InputError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return run_config_from_dict(data)


def dump_run_config(cfg: RunConfig) -> str:
    """Every field spelled out, defaults included, ready to reload."""
    out = {}
    for name in _SECTIONS:
        section = dataclasses.asdict(getattr(cfg, name))
        for key, value in section.items():
            if isinstance(value, tuple):
                section[key] = list(value)
        out[name] = section
    return json.dumps(out, indent=2, sort_keys=True) + "\n"
