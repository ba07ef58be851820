import numpy as np
import pytest
import torch

from glyphdenoise.config import DataConfig, ModelConfig, RunConfig, TrainConfig
from glyphdenoise.synth import GlyphSpec, NoiseSpec, make_dataset


@pytest.fixture
def micro_config():
    # smallest U exercising both directions; tile = 8 * 2 = 16
    return ModelConfig(base_channels=4, num_blocks=2, attn_layers=1,
                       window_size=8, num_heads=2)


@pytest.fixture
def micro_run_config(micro_config):
    return RunConfig(
        model=micro_config,
        train=TrainConfig(iterations=4, batch_size=2, crop_size=16, seed=11,
                          perceptual_mode="off"),
        data=DataConfig(val_fraction=0.0),
    )


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Six 32x32 mixed-noise pairs shared by training/CLI tests (read-only)."""
    root = tmp_path_factory.mktemp("tiny_data")
    make_dataset(6, GlyphSpec(num_strokes=2, stroke_width=3, canvas=32),
                 NoiseSpec(kind="mixed", sigma=25.0), root, master_seed=5)
    return root


@pytest.fixture
def rand_image():
    def make(shape, seed):
        return np.random.default_rng(seed).random(shape).astype(np.float32)
    return make


@pytest.fixture
def rand_tensor():
    def make(*shape, seed=0, dtype=torch.float32):
        rng = np.random.default_rng(seed)
        return torch.from_numpy(rng.random(shape).astype(np.float64)).to(dtype)
    return make
