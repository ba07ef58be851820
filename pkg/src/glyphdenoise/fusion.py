"""Channel and spatial gating and the fused combination of the two branches.

The gate layer computes FA(f) = Ms(Mc(f) + f) + Mc(f) + f where Mc is a
channel-gated copy of f and Ms a spatially gated copy of its argument.
fuse_branches shares one FA evaluation between both branch outputs:
a = FA(r + g); rec = a + r; gly = a + g, so rec - gly == r - g.
"""

from __future__ import annotations

import torch
import torch.nn as nn

MIN_GATE_HIDDEN = 4


class ChannelGate(nn.Module):
    """f * sigmoid(MLP(avgpool f) + MLP(maxpool f)), MLP shared, bias-free."""

    def __init__(self, channels, reduction=8):
        super().__init__()
        hidden = max(channels // reduction, MIN_GATE_HIDDEN)
        self.mlp = nn.Sequential(
            nn.Linear(channels, hidden, bias=False),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, channels, bias=False),
        )

    def forward(self, x):
        # x: (B, C, H, W)
        gate = torch.sigmoid(self.mlp(x.mean(dim=(2, 3))) + self.mlp(x.amax(dim=(2, 3))))
        return x * gate[:, :, None, None]


class SpatialGate(nn.Module):
    """f * sigmoid(conv7x7([channel-mean f; channel-max f])), bias-free."""

    def __init__(self):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, 7, padding=3, bias=False)

    def forward(self, x):
        pooled = torch.cat(
            [x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)
        return x * torch.sigmoid(self.conv(pooled))


class FusedAttentionGate(nn.Module):
    """FA(f) = Ms(Mc(f) + f) + Mc(f) + f; maps zero to zero, shape-preserving."""

    def __init__(self, channels, reduction=8):
        super().__init__()
        self.channel = ChannelGate(channels, reduction)
        self.spatial = SpatialGate()

    def forward(self, x):
        c = self.channel(x)
        return self.spatial(c + x) + c + x


def fuse_branches(gate: FusedAttentionGate, f_attn, f_conv):
    """a = gate(f_attn + f_conv); returns (a + f_attn, a + f_conv)."""
    if f_attn.shape != f_conv.shape:
        raise ValueError(
            f"branch shapes differ: {tuple(f_attn.shape)} vs {tuple(f_conv.shape)}")
    a = gate(f_attn + f_conv)
    return a + f_attn, a + f_conv
