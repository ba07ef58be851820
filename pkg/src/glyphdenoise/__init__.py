"""Glyph-aware character image denoising.

A dual-branch windowed-attention U-net that restores noisy character
images while a parallel convolutional branch, supervised by morphological
stroke skeletons, keeps the glyph structure intact.
"""

from .config import (ConfigError, DataConfig, ModelConfig, RunConfig,
                     TrainConfig, load_config, scale_at, validate)
from .network import ForwardResult, GlyphDenoiser
from .synth import GlyphSpec, NoiseSpec, SamplePair, make_dataset
from .training import fit, infer, load_checkpoint, restore_model, train_step

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataConfig", "ModelConfig", "RunConfig", "TrainConfig",
    "load_config", "scale_at", "validate",
    "ForwardResult", "GlyphDenoiser",
    "GlyphSpec", "NoiseSpec", "SamplePair", "make_dataset",
    "fit", "infer", "load_checkpoint", "restore_model", "train_step",
    "__version__",
]
