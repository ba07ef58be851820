"""PSNR and SSIM on [0, 1] images (numpy, framework-free)."""

from __future__ import annotations

import math

import numpy as np

from .morphology import to_grayscale

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a, b, peak=1.0):
    """10 log10(peak^2 / MSE) in dB; +inf when the images are identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_kernel(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-0.5 * (ax / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a, b):
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), valid positions only.

    3-channel inputs are converted to luminance first; dynamic range 1.0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    x = to_grayscale(a)
    y = to_grayscale(b)
    h, w = x.shape
    if min(h, w) < SSIM_WINDOW:
        raise ValueError(f"image {h}x{w} smaller than SSIM window {SSIM_WINDOW}")

    kernel = _gaussian_kernel()
    win = (SSIM_WINDOW, SSIM_WINDOW)

    def filt(img):
        views = np.lib.stride_tricks.sliding_window_view(img, win)
        return np.tensordot(views, kernel, axes=([2, 3], [0, 1]))

    mu_x = filt(x)
    mu_y = filt(y)
    var_x = filt(x * x) - mu_x * mu_x
    var_y = filt(y * y) - mu_y * mu_y
    cov = filt(x * y) - mu_x * mu_y

    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))
