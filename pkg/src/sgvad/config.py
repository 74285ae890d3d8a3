"""Run configuration shared by the command-line subcommands."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .distances import DEFAULT_NORM_SAMPLE_SIZE
from .exemplars import DEFAULT_EXEMPLAR_THRESHOLD
from .scenegraph import DEFAULT_TRAJECTORY_LENGTH, REFERENCE_FRAME_HEIGHT, default_edge_threshold
from .scoring import DEFAULT_ANOMALY_THRESHOLD
from .validation import check_positive


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Pipeline parameters.

    ``edge_threshold_px`` of ``None`` means the default scaled to
    ``frame_height``. Path fields are optional defaults for the matching
    command-line arguments.
    """

    edge_threshold_px: float | None = None
    frame_height: int = REFERENCE_FRAME_HEIGHT
    exemplar_threshold: float = DEFAULT_EXEMPLAR_THRESHOLD
    trajectory_length: int = DEFAULT_TRAJECTORY_LENGTH
    anomaly_threshold: float = DEFAULT_ANOMALY_THRESHOLD
    norm_sample_size: int = DEFAULT_NORM_SAMPLE_SIZE
    norm_seed: int = 0
    class_map: str | None = None
    model: str | None = None
    scores: str | None = None
    annotations: str | None = None
    results: str | None = None

    def __post_init__(self):
        try:
            if self.edge_threshold_px is not None:
                check_positive(self.edge_threshold_px, "edge_threshold_px")
            check_positive(self.frame_height, "frame_height", integer=True)
            check_positive(self.exemplar_threshold, "exemplar_threshold")
            check_positive(self.trajectory_length, "trajectory_length", integer=True, minimum=2)
            check_positive(self.anomaly_threshold, "anomaly_threshold")
            check_positive(self.norm_sample_size, "norm_sample_size", integer=True)
            if isinstance(self.norm_seed, bool) or not isinstance(self.norm_seed, int):
                raise TypeError(f"norm_seed must be an integer, got {self.norm_seed!r}")
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def edge_threshold(self) -> float:
        if self.edge_threshold_px is not None:
            return float(self.edge_threshold_px)
        return default_edge_threshold(self.frame_height)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        """Build from a dict; keys may use hyphens or underscores."""
        if not isinstance(data, dict):
            raise ConfigError("config document must be a mapping")
        known = set(cls.field_names())
        values = {}
        for key, value in data.items():
            name = str(key).replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            values[name] = value
        return cls(**values)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})


def read_config_document(path: str | os.PathLike) -> dict:
    """Raw mapping from a YAML (or JSON) config file, keys normalized to underscores."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def load_config(path: str | os.PathLike | None) -> RunConfig:
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    return RunConfig.from_mapping(read_config_document(path))
