"""Windowed multi-head self-attention and the pre-norm transformer layer.

Features are split into non-overlapping M x M windows; attention runs
per window with a learnable relative position bias shared across
windows. No window shifting between layers.
"""

from __future__ import annotations

import torch
import torch.nn as nn


def window_partition(x, window):
    """(B, H, W, C) -> (B*nWin, window*window, C).

    Windows ordered row-major over the window grid (batch-major first),
    pixels row-major within each window.
    """
    b, h, w, c = x.shape
    if h % window or w % window:
        raise ValueError(f"spatial size {h}x{w} not divisible by window {window}")
    x = x.view(b, h // window, window, w // window, window, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window * window, c)


def window_merge(windows, window, h, w):
    """Inverse of window_partition; bit-exact round trip."""
    if h % window or w % window:
        raise ValueError(f"spatial size {h}x{w} not divisible by window {window}")
    n_win = (h // window) * (w // window)
    if windows.shape[0] % n_win or windows.shape[1] != window * window:
        raise ValueError(
            f"window batch {tuple(windows.shape)} does not tile {h}x{w} "
            f"with window {window}")
    b = windows.shape[0] // n_win
    x = windows.view(b, h // window, w // window, window, window, -1)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(b, h, w, -1)


def attention_weights(q, k, bias=None):
    """Softmax(q k^T / sqrt(d) + bias) rows; inputs (..., N, d)."""
    if not torch.isfinite(q).all() or not torch.isfinite(k).all():
        raise ValueError("non-finite attention input")
    if bias is not None and not torch.isfinite(bias).all():
        raise ValueError("non-finite attention bias")
    logits = q @ k.transpose(-2, -1) * q.shape[-1] ** -0.5
    if bias is not None:
        logits = logits + bias
    return torch.softmax(logits, dim=-1)


def scaled_attention(q, k, v, bias=None):
    if not torch.isfinite(v).all():
        raise ValueError("non-finite attention input")
    return attention_weights(q, k, bias) @ v


def relative_position_index(window):
    """(M^2, M^2) lookup into the (2M-1)^2 relative bias table."""
    coords = torch.stack(torch.meshgrid(
        torch.arange(window), torch.arange(window), indexing="ij"))
    coords = coords.flatten(1)                              # 2, M^2
    rel = coords[:, :, None] - coords[:, None, :]           # 2, M^2, M^2
    rel = rel.permute(1, 2, 0) + (window - 1)               # shift to >= 0
    return rel[:, :, 0] * (2 * window - 1) + rel[:, :, 1]


class WindowAttention(nn.Module):
    """Multi-head self-attention over token windows with relative bias."""

    def __init__(self, dim, window, heads):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.window = window
        self.heads = heads
        self.qkv = nn.Linear(dim, dim * 3, bias=True)
        self.proj = nn.Linear(dim, dim)
        self.bias_table = nn.Parameter(
            torch.empty((2 * window - 1) ** 2, heads))
        nn.init.trunc_normal_(self.bias_table, std=0.02)
        self.register_buffer(
            "bias_index", relative_position_index(window), persistent=False)

    def forward(self, x):
        # x: (B_, N, C) token windows, N = window^2
        b, n, c = x.shape
        qkv = (self.qkv(x)
               .reshape(b, n, 3, self.heads, c // self.heads)
               .permute(2, 0, 3, 1, 4))
        q, k, v = qkv[0], qkv[1], qkv[2]                    # B_, heads, N, d
        bias = (self.bias_table[self.bias_index.reshape(-1)]
                .reshape(n, n, self.heads)
                .permute(2, 0, 1))                          # heads, N, N
        out = scaled_attention(q, k, v, bias)
        out = out.transpose(1, 2).reshape(b, n, c)
        return self.proj(out)


class TransformerLayer(nn.Module):
    """Pre-norm layer: x + MSA(LN(x)), then x + MLP(LN(x)). Acts on (B, C, H, W)."""

    def __init__(self, dim, window, heads, mlp_ratio=4):
        super().__init__()
        self.window = window
        self.norm1 = nn.LayerNorm(dim, eps=1e-5)
        self.attn = WindowAttention(dim, window, heads)
        self.norm2 = nn.LayerNorm(dim, eps=1e-5)
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim * mlp_ratio),
            nn.GELU(),
            nn.Linear(dim * mlp_ratio, dim),
        )

    def forward(self, x):
        b, c, h, w = x.shape
        t = x.permute(0, 2, 3, 1)                           # B, H, W, C
        attended = self.attn(window_partition(self.norm1(t), self.window))
        t = t + window_merge(attended, self.window, h, w)
        t = t + self.mlp(self.norm2(t))
        return t.permute(0, 3, 1, 2)
