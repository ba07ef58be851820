"""Pixel loss, perceptual loss, and the combined objective.

total = l1(restored, clean) + perc(restored, clean)
        + glyph_weight * (l1(skeleton, skeleton_gt) + perc(skeleton, skeleton_gt))

The perceptual extractor is a frozen 16-layer-style conv stack truncated
after its third stage; features are compared at the ends of stages 2 and
3. Weights come from a file (pretrained mode) or a seeded random init
(fixed_random mode) so desk runs never need a download.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .network import ForwardResult

# ImageNet channel statistics used by the reference pretrained weights
_FEAT_MEAN = (0.485, 0.456, 0.406)
_FEAT_STD = (0.229, 0.224, 0.225)

# conv layout through the third stage; "P" = 2x2 max pool
_FEAT_CFG = (64, 64, "P", 128, 128, "P", 256, 256, 256)
_STAGE_ENDS = (8, 15)  # ReLU indices closing stages 2 and 3

FEATURE_MODES = ("pretrained", "fixed_random", "off")


class FeatureExtractor(nn.Module):
    """Frozen truncated conv stack; returns the two stage features."""

    def __init__(self, mode="fixed_random", weights_path=None, seed=0):
        super().__init__()
        if mode not in ("pretrained", "fixed_random"):
            raise ValueError(f"unknown feature extractor mode {mode!r}")
        # construct and init inside a forked RNG scope: building conv layers
        # draws from the global stream, and callers must stay unaffected
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            layers = []
            in_ch = 3
            for item in _FEAT_CFG:
                if item == "P":
                    layers.append(nn.MaxPool2d(2, 2))
                else:
                    layers.append(nn.Conv2d(in_ch, item, 3, padding=1))
                    layers.append(nn.ReLU(inplace=True))
                    in_ch = item
            self.layers = nn.Sequential(*layers)
            if mode == "fixed_random":
                for m in self.layers:
                    if isinstance(m, nn.Conv2d):
                        nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                        nn.init.zeros_(m.bias)
        self.register_buffer("mean", torch.tensor(_FEAT_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(_FEAT_STD).view(1, 3, 1, 1))
        if mode == "pretrained":
            if weights_path is None:
                raise ValueError("pretrained mode needs a weights file path")
            self._load_pretrained(weights_path)
        self.requires_grad_(False)
        self.eval()

    def _load_pretrained(self, path):
        state = torch.load(path, map_location="cpu")
        if isinstance(state, dict) and "state_dict" in state:
            state = state["state_dict"]
        remapped = {}
        for key, value in state.items():
            key = key.removeprefix("features.")
            if key.split(".")[0].isdigit():
                idx = int(key.split(".")[0])
                if idx < len(self.layers):
                    remapped[f"layers.{key}"] = value
        missing, _ = self.load_state_dict(remapped, strict=False)
        missing = [k for k in missing if k.startswith("layers.")]
        if missing:
            raise ValueError(f"{path}: missing weights for {missing}")

    def train(self, mode=True):
        return super().train(False)  # permanently frozen

    def forward(self, x):
        # x: (B, 1 or 3, H, W) in [0, 1]
        if x.shape[1] == 1:
            x = x.repeat(1, 3, 1, 1)
        x = (x - self.mean) / self.std
        feats = []
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i in _STAGE_ENDS:
                feats.append(x)
        return feats


def l1_loss(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def perceptual_loss(a, b, extractor: FeatureExtractor):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    total = a.new_zeros(())
    for fa, fb in zip(extractor(a), extractor(b)):
        total = total + (fa - fb).abs().mean()
    return total


@dataclass(frozen=True)
class LossBreakdown:
    l1_rec: torch.Tensor
    lp_rec: torch.Tensor
    l1_gly: torch.Tensor
    lp_gly: torch.Tensor
    total: torch.Tensor

    def detached(self) -> dict:
        return {k: float(getattr(self, k).detach()) for k in
                ("l1_rec", "lp_rec", "l1_gly", "lp_gly", "total")}


def total_loss(result: ForwardResult, clean, skeleton_gt, glyph_weight,
               extractor: FeatureExtractor | None = None) -> LossBreakdown:
    """Combined objective; glyph terms scaled by glyph_weight."""
    if glyph_weight < 0:
        raise ValueError(f"glyph_weight must be >= 0, got {glyph_weight}")
    zero = result.restored.new_zeros(())
    l1_rec = l1_loss(result.restored, clean)
    lp_rec = perceptual_loss(result.restored, clean, extractor) if extractor else zero
    l1_gly = l1_loss(result.skeleton, skeleton_gt)
    lp_gly = (perceptual_loss(result.skeleton, skeleton_gt, extractor)
              if extractor is not None and glyph_weight != 0 else zero)
    total = l1_rec + lp_rec + glyph_weight * (l1_gly + lp_gly)
    return LossBreakdown(l1_rec, lp_rec, l1_gly, lp_gly, total)
