"""Configuration schema, validation, and derived shape arithmetic.

A run is described by a single JSON file with three sections::

    {"model": {...}, "train": {...}, "data": {...}}

Unknown keys in any section are rejected so that typos fail fast instead
of silently falling back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration."""


OPTIMIZERS = ("adam", "sgd")
PERCEPTUAL_MODES = ("pretrained", "fixed_random", "off")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters. Immutable; safe to share across threads."""

    base_channels: int = 32        # channels of the shallow feature map
    num_blocks: int = 4            # dual-branch blocks in the U-shape (even)
    attn_layers: int = 3           # transformer layers per attention branch block
    window_size: int = 8           # attention window side, pixels
    num_heads: int = 4
    glyph_depth: int = 2           # conv layers per glyph branch block
    channel_reduction: int = 8     # squeeze ratio of the channel gate
    glyph_loss_weight: float = 1.0
    input_channels: int = 3
    skeleton_channels: int = 1

    def __post_init__(self):
        for name in ("base_channels", "num_blocks", "attn_layers", "window_size",
                     "num_heads", "glyph_depth", "channel_reduction"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
                raise ConfigError(f"model.{name} must be a positive integer, got {v!r}")
        if self.glyph_loss_weight < 0:
            raise ConfigError(f"model.glyph_loss_weight must be >= 0, got {self.glyph_loss_weight!r}")
        if self.input_channels != 3:
            raise ConfigError("model.input_channels must be 3")
        if self.skeleton_channels != 1:
            raise ConfigError("model.skeleton_channels must be 1")

    @property
    def half_depth(self) -> int:
        return self.num_blocks // 2

    @property
    def tile(self) -> int:
        """Spatial granule every input dimension must be a multiple of."""
        return self.window_size * (2 ** self.half_depth)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    iterations: int = 5000
    batch_size: int = 4
    crop_size: int = 64
    seed: int = 0
    optimizer_name: str = "adam"
    perceptual_mode: str = "fixed_random"
    perceptual_weights: str | None = None   # state-dict path, pretrained mode only

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"train.learning_rate must be > 0, got {self.learning_rate!r}")
        for name in ("iterations", "batch_size", "crop_size"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"train.{name} must be a non-negative integer, got {v!r}")
        if self.batch_size == 0 or self.crop_size == 0:
            raise ConfigError("train.batch_size and train.crop_size must be positive")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"train.seed must be an integer, got {self.seed!r}")
        if self.optimizer_name not in OPTIMIZERS:
            raise ConfigError(f"train.optimizer_name must be one of {OPTIMIZERS}, got {self.optimizer_name!r}")
        if self.perceptual_mode not in PERCEPTUAL_MODES:
            raise ConfigError(f"train.perceptual_mode must be one of {PERCEPTUAL_MODES}, got {self.perceptual_mode!r}")
        if self.perceptual_mode == "pretrained" and not self.perceptual_weights:
            raise ConfigError("train.perceptual_weights is required when perceptual_mode='pretrained'")


@dataclass(frozen=True)
class DataConfig:
    val_fraction: float = 0.1
    flip: bool = True              # random horizontal flip during training
    polarity: str = "dark_on_light"  # stroke polarity when skeletons are derived on the fly

    def __post_init__(self):
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"data.val_fraction must be in [0, 1), got {self.val_fraction!r}")
        if self.polarity not in ("dark_on_light", "light_on_dark"):
            raise ConfigError(f"data.polarity must be 'dark_on_light' or 'light_on_dark', got {self.polarity!r}")


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)


@dataclass
class ValidationReport:
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def __str__(self) -> str:
        return "ok" if self.ok else "; ".join(self.problems)


def validate(config: ModelConfig, input_shape: tuple[int, int] | None = None) -> ValidationReport:
    """Report every violated architecture constraint (empty report = valid).

    With an input shape, also checks that the window grid tiles every scale
    of the U-shape, i.e. H and W are multiples of window_size * 2^(T/2).
    """
    report = ValidationReport()
    if config.num_blocks % 2 != 0:
        report.problems.append(f"num_blocks must be even, got {config.num_blocks}")
    if config.base_channels % config.num_heads != 0:
        report.problems.append(
            f"base_channels ({config.base_channels}) not divisible by num_heads ({config.num_heads})")
    if input_shape is not None and config.num_blocks % 2 == 0:
        h, w = input_shape
        for name, v in (("height", h), ("width", w)):
            if v <= 0:
                report.problems.append(f"{name} must be positive, got {v}")
            elif v % config.tile != 0:
                report.problems.append(
                    f"{name} {v} not divisible by window_size*2^(num_blocks/2) = {config.tile}")
    return report


def validate_run(config: RunConfig) -> ValidationReport:
    """Architecture checks plus the train/data constraints that cross sections."""
    report = validate(config.model)
    if config.model.num_blocks % 2 == 0 and config.train.crop_size % config.model.tile != 0:
        report.problems.append(
            f"crop_size {config.train.crop_size} not divisible by window_size*2^(num_blocks/2) = {config.model.tile}")
    return report


def scale_at(config: ModelConfig, input_shape: tuple[int, int], index: int) -> tuple[int, int, int]:
    """Feature-map shape (h, w, c) after block ``index`` of the U-shape.

    Index 0 is the shallow feature map; the encoder halves the spatial side
    and doubles channels per block, the decoder mirrors it back, so
    scale_at(i) == scale_at(T - i).
    """
    t = config.num_blocks
    if not 0 <= index <= t:
        raise IndexError(f"block index {index} out of range [0, {t}]")
    depth = index if index <= t // 2 else t - index
    h, w = input_shape
    return h // 2**depth, w // 2**depth, config.base_channels * 2**depth


def _coerce_section(cls, section: str, raw: dict):
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{section}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown keys in section '{section}': {', '.join(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad section '{section}': {exc}") from exc


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    unknown = sorted(set(raw) - {"model", "train", "data"})
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    cfg = RunConfig(
        model=_coerce_section(ModelConfig, "model", raw.get("model", {})),
        train=_coerce_section(TrainConfig, "train", raw.get("train", {})),
        data=_coerce_section(DataConfig, "data", raw.get("data", {})),
    )
    report = validate_run(cfg)
    if not report.ok:
        raise ConfigError(str(report))
    return cfg


def load_config(path: str | Path) -> RunConfig:
    """Load and validate a run configuration file (JSON)."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def config_to_dict(config: RunConfig) -> dict:
    """Fully materialized config (every default resolved), for logging."""
    return {
        "model": {f.name: getattr(config.model, f.name) for f in fields(ModelConfig)},
        "train": {f.name: getattr(config.train, f.name) for f in fields(TrainConfig)},
        "data": {f.name: getattr(config.data, f.name) for f in fields(DataConfig)},
    }
