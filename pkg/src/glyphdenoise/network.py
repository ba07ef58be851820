"""Dual-branch U-shaped denoiser with glyph supervision.

An input projector lifts the image to C channels; T dual-branch blocks
(windowed-attention branch + conv branch, joined by a fused-attention
gate) run as a U: the first T/2 downsample, the rest upsample, with
per-branch concat + 1x1 conv skip merges. An output projector restores
the image and a glyph head predicts the stroke skeleton.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import torch
import torch.nn as nn

from .attention import TransformerLayer
from .config import ConfigError, ModelConfig, validate
from .fusion import FusedAttentionGate, fuse_branches

FUSION_SCHEMES = ("con_a", "con_b", "con_c", "con_d", "none")
ATTN_KINDS = ("transformer", "conv")
LEAKY_SLOPE = 0.2
PAGE_PRIOR_LOGIT = 2.0  # sigmoid(2) ~ 0.88: restored images start near paper-white
SKELETON_PRIOR_LOGIT = -1.0  # sigmoid(-1) ~ 0.27: skeletons lean empty but stay live
# The skeleton target is ~97% zeros and its loss is L1, whose gradient dies
# with the sigmoid's slope: if the head starts flat, the background mass
# drags the whole map into the low rail before stroke pixels ever see a
# usable gradient. A wide initial logit spread keeps per-pixel
# discrimination alive through that squeeze.
GLYPH_HEAD_GAIN = 4.0


def init_weights(module):
    """trunc-normal linears, He convs, zero biases; LN left at defaults."""
    if isinstance(module, nn.Linear):
        nn.init.trunc_normal_(module.weight, std=0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.kaiming_normal_(module.weight, a=LEAKY_SLOPE,
                                nonlinearity="leaky_relu")
        if module.bias is not None:
            nn.init.zeros_(module.bias)


def _init_linear_conv(conv, scale=1.0):
    # gain 1: nothing nonlinear follows, so preserve feature variance
    if not isinstance(conv, nn.Identity):
        nn.init.kaiming_normal_(conv.weight, nonlinearity="linear")
        with torch.no_grad():
            conv.weight.mul_(scale)


# A block's initial map is dominated by its branch resample and skip convs
# fed through the gate: rec = FA(r + g) + r with both CBAM gates at
# sigmoid(0), which multiplies feature scale by ~4.5 per gated block
# (~1.5 ungated). Damping the two convs that close each branch (they add,
# hence the sqrt(2)) divides that back out, so blocks start
# variance-preserving and the output logits stay in the sigmoid's linear
# range at any depth while every path still carries signal from step one.
_GATED_PATH_SCALE = 1 / (4.5 * math.sqrt(2))
_PLAIN_PATH_SCALE = 1 / (1.5 * math.sqrt(2))


def init_linear_paths(module):
    """Variance-preserving init for convs that no activation follows.

    The He gain in init_weights assumes a LeakyReLU after the conv; on the
    purely linear layers (residual skips, decoder merges, the two heads'
    final convs) that gain compounds across the depth of the U and the
    output logits start railed against both sigmoid extremes. Re-drawing
    those layers at gain 1 (and folding the gate's init-time gain into the
    convs closing each branch) keeps the initial feature scale flat.
    """
    if isinstance(module, DualBranchBlock):
        scale = _PLAIN_PATH_SCALE if module.gate is None else _GATED_PATH_SCALE
        for branch in (module.attn_branch, module.conv_branch):
            _init_linear_conv(branch.resample, scale)
            _init_linear_conv(branch.skip, scale)
    elif isinstance(module, DeepFeatureExtractor):
        for merge in list(module.rec_merge) + list(module.gly_merge):
            _init_linear_conv(merge)
    elif isinstance(module, OutputProjector):
        _init_linear_conv(module.body[4])


def _resample(dim, direction):
    # trailing conv of a branch block: carries the scale change
    if direction == "down":
        return nn.Conv2d(dim, dim * 2, 3, stride=2, padding=1)
    if direction == "up":
        return nn.ConvTranspose2d(dim, dim // 2, 2, stride=2)
    if direction == "flat":
        return nn.Conv2d(dim, dim, 3, padding=1)
    raise ValueError(f"unknown direction {direction!r}")


def _skip(dim, direction):
    # 1x1 (transposed) projection so the residual addition is shape-consistent
    if direction == "down":
        return nn.Conv2d(dim, dim * 2, 1, stride=2, bias=False)
    if direction == "up":
        return nn.ConvTranspose2d(dim, dim // 2, 1, stride=2,
                                  output_padding=1, bias=False)
    if direction == "flat":
        return nn.Identity()
    raise ValueError(f"unknown direction {direction!r}")


def out_dim(dim, direction):
    return {"down": dim * 2, "up": dim // 2, "flat": dim}[direction]


class ConvTokenLayer(nn.Module):
    """3x3 conv + LeakyReLU stand-in for a transformer layer (ablation)."""

    def __init__(self, dim):
        super().__init__()
        self.conv = nn.Conv2d(dim, dim, 3, padding=1)
        self.act = nn.LeakyReLU(LEAKY_SLOPE, inplace=True)

    def forward(self, x):
        return self.act(self.conv(x))


class ResidualAttentionBlock(nn.Module):
    """K transformer layers, a resampling conv, and a projected residual."""

    def __init__(self, dim, direction, layers, window, heads,
                 kind="transformer"):
        super().__init__()
        if kind not in ATTN_KINDS:
            raise ValueError(f"unknown attention kind {kind!r}")
        if kind == "transformer":
            self.layers = nn.ModuleList(
                TransformerLayer(dim, window, heads) for _ in range(layers))
        else:
            self.layers = nn.ModuleList(
                ConvTokenLayer(dim) for _ in range(layers))
        self.resample = _resample(dim, direction)
        self.skip = _skip(dim, direction)

    def forward(self, x):
        y = x
        for layer in self.layers:
            y = layer(y)
        return self.resample(y) + self.skip(x)


class ResidualConvBlock(nn.Module):
    """Stacked 3x3 conv+LeakyReLU body with the same resample/skip scheme."""

    def __init__(self, dim, direction, depth):
        super().__init__()
        body = []
        for _ in range(depth):
            body += [nn.Conv2d(dim, dim, 3, padding=1),
                     nn.LeakyReLU(LEAKY_SLOPE, inplace=True)]
        self.body = nn.Sequential(*body)
        self.resample = _resample(dim, direction)
        self.skip = _skip(dim, direction)

    def forward(self, x):
        return self.resample(self.body(x)) + self.skip(x)


class DualBranchBlock(nn.Module):
    """One U-stage: both branches, then gated combination per scheme.

    Schemes over r (attention branch), g (conv branch), a = FA(r + g):
      con_a: rec = a + r, gly = a + g   (default)
      con_b: rec = a + r + g, gly = a + g
      con_c: rec = a, gly = a + g
      con_d: rec = a + r, gly = g
      none:  rec = r + g, gly = g       (no gate parameters)
    """

    def __init__(self, dim, direction, config: ModelConfig,
                 scheme="con_a", kind="transformer"):
        super().__init__()
        if scheme not in FUSION_SCHEMES:
            raise ValueError(f"unknown fusion scheme {scheme!r}")
        self.scheme = scheme
        self.attn_branch = ResidualAttentionBlock(
            dim, direction, config.attn_layers, config.window_size,
            config.num_heads, kind)
        self.conv_branch = ResidualConvBlock(dim, direction, config.glyph_depth)
        if scheme == "none":
            self.gate = None
        else:
            self.gate = FusedAttentionGate(out_dim(dim, direction),
                                           config.channel_reduction)

    def forward(self, f_rec, f_gly):
        r = self.attn_branch(f_rec)
        g = self.conv_branch(f_gly)
        if self.scheme == "none":
            return r + g, g
        if self.scheme == "con_a":
            return fuse_branches(self.gate, r, g)
        a = self.gate(r + g)
        if self.scheme == "con_b":
            return a + r + g, a + g
        if self.scheme == "con_c":
            return a, a + g
        return a + r, g  # con_d


class DeepFeatureExtractor(nn.Module):
    """T dual-branch blocks in a U, with per-branch concat+1x1 skip merges.

    Block i consumes the features of block i-1; decoder blocks past the
    first one merge in the mirrored encoder features (same scale) before
    running, separately for each branch.
    """

    def __init__(self, config: ModelConfig, scheme="con_a", kind="transformer"):
        super().__init__()
        t = config.num_blocks
        half = config.half_depth
        dims = [config.base_channels * 2 ** min(i, t - i) for i in range(t + 1)]
        self.num_blocks = t
        self.blocks = nn.ModuleList(
            DualBranchBlock(dims[i - 1], "down" if i <= half else "up",
                            config, scheme, kind)
            for i in range(1, t + 1))
        # blocks half+2 .. t merge with the encoder output at their scale
        self.rec_merge = nn.ModuleList(
            nn.Conv2d(2 * dims[i - 1], dims[i - 1], 1)
            for i in range(half + 2, t + 1))
        self.gly_merge = nn.ModuleList(
            nn.Conv2d(2 * dims[i - 1], dims[i - 1], 1)
            for i in range(half + 2, t + 1))

    def forward(self, f_sf):
        rec = gly = f_sf
        rec_hist, gly_hist = [rec], [gly]
        half = self.num_blocks // 2
        for i in range(1, self.num_blocks + 1):
            if i > half + 1:
                j = self.num_blocks - (i - 1)  # encoder stage at this scale
                m = i - half - 2
                rec = self.rec_merge[m](torch.cat([rec, rec_hist[j]], dim=1))
                gly = self.gly_merge[m](torch.cat([gly, gly_hist[j]], dim=1))
            rec, gly = self.blocks[i - 1](rec, gly)
            rec_hist.append(rec)
            gly_hist.append(gly)
        return rec, gly


class InputProjector(nn.Module):
    """3x3 conv + LeakyReLU lifting the image to C channels."""

    def __init__(self, in_channels, dim):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, dim, 3, padding=1)
        self.act = nn.LeakyReLU(LEAKY_SLOPE, inplace=True)

    def forward(self, x):
        return self.act(self.conv(x))


class OutputProjector(nn.Module):
    """Three 3x3 convs over (shallow + reconstructed), sigmoid to [0, 1]."""

    def __init__(self, dim, out_channels=3):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(dim, dim, 3, padding=1),
            nn.LeakyReLU(LEAKY_SLOPE, inplace=True),
            nn.Conv2d(dim, dim, 3, padding=1),
            nn.LeakyReLU(LEAKY_SLOPE, inplace=True),
            nn.Conv2d(dim, out_channels, 3, padding=1),
        )

    def forward(self, f_sf, f_rec):
        return torch.sigmoid(self.body(f_sf + f_rec))


class GlyphHead(nn.Module):
    """3x3 conv to one channel + sigmoid: the predicted stroke skeleton."""

    def __init__(self, dim, out_channels=1):
        super().__init__()
        self.conv = nn.Conv2d(dim, out_channels, 3, padding=1)

    def forward(self, f_gly):
        return torch.sigmoid(self.conv(f_gly))


class ForwardResult(NamedTuple):
    restored: torch.Tensor   # B, 3, H, W in [0, 1]
    skeleton: torch.Tensor   # B, 1, H, W in (0, 1)


class GlyphDenoiser(nn.Module):
    """Full model: projector, U of dual-branch blocks, image + skeleton heads."""

    def __init__(self, config: ModelConfig, fusion_scheme="con_a",
                 attn_kind="transformer"):
        super().__init__()
        report = validate(config)
        if not report.ok:
            raise ConfigError(str(report))
        self.config = config
        self.fusion_scheme = fusion_scheme
        self.attn_kind = attn_kind
        self.input_proj = InputProjector(config.input_channels,
                                         config.base_channels)
        self.extractor = DeepFeatureExtractor(config, fusion_scheme, attn_kind)
        self.output_proj = OutputProjector(config.base_channels,
                                           config.input_channels)
        self.glyph_head = GlyphHead(config.base_channels,
                                    config.skeleton_channels)
        self.apply(init_weights)
        self.apply(init_linear_paths)
        # bias each head toward its target's base rate so early iterations
        # don't spend momentum climbing there and overshoot the output
        # sigmoids into saturation: restored images are mostly light page,
        # skeletons are mostly empty
        nn.init.constant_(self.output_proj.body[4].bias, PAGE_PRIOR_LOGIT)
        nn.init.constant_(self.glyph_head.conv.bias, SKELETON_PRIOR_LOGIT)
        with torch.no_grad():
            self.glyph_head.conv.weight.mul_(GLYPH_HEAD_GAIN)

    def forward(self, x) -> ForwardResult:
        b, c, h, w = x.shape
        if c != self.config.input_channels:
            raise ValueError(f"expected {self.config.input_channels} input "
                             f"channels, got {c}")
        tile = self.config.tile
        if h % tile or w % tile:
            raise ValueError(f"input {h}x{w} not divisible by tile {tile}; "
                             f"pad first")
        f_sf = self.input_proj(x)
        rec, gly = self.extractor(f_sf)
        return ForwardResult(self.output_proj(f_sf, rec), self.glyph_head(gly))
