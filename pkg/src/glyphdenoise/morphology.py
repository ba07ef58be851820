"""Binarization and morphological skeletonization.

Skeleton ground truth for the glyph supervision branch is produced by Otsu
binarization followed by iterative two-subpass morphological thinning
(Zhang-Suen). Images are treated as zero-padded by one pixel, so strokes
touching the border need no special casing.
"""

from __future__ import annotations

import numpy as np

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
HIST_BINS = 256


class ConstantImageError(ValueError):
    """Otsu thresholding is undefined when all mass falls in one histogram bin."""


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """H x W x {1,3} (or H x W) float image -> H x W luminance."""
    if img.ndim == 2:
        return img
    if img.shape[-1] == 1:
        return img[..., 0]
    if img.shape[-1] == 3:
        r, g, b = LUMA_WEIGHTS
        return r * img[..., 0] + g * img[..., 1] + b * img[..., 2]
    raise ValueError(f"expected 1 or 3 channels, got shape {img.shape}")


def otsu_threshold(img: np.ndarray) -> float:
    """Threshold in [0, 1] maximizing inter-class variance over a 256-bin histogram.

    Returns the upper edge (t + 1) / 256 of the chosen bin t, so the dark
    class is exactly the pixels strictly below the returned value. Ties are
    broken toward the lowest bin.
    """
    gray = to_grayscale(np.asarray(img, dtype=np.float64))
    hist, _ = np.histogram(gray, bins=HIST_BINS, range=(0.0, 1.0))
    if np.count_nonzero(hist) < 2:
        raise ConstantImageError("image has no two separable gray levels")

    # Cumulative class weights/means for thresholds t = 0..254 (dark class = bins <= t).
    levels = np.arange(HIST_BINS)
    w_dark = np.cumsum(hist)[:-1]
    w_light = hist.sum() - w_dark
    m_dark = np.cumsum(hist * levels)[:-1]
    m_total = (hist * levels).sum()
    valid = (w_dark > 0) & (w_light > 0)
    between = np.zeros(HIST_BINS - 1)
    mu_d = np.divide(m_dark, w_dark, out=np.zeros_like(between), where=valid)
    mu_l = np.divide(m_total - m_dark, w_light, out=np.zeros_like(between), where=valid)
    between[valid] = w_dark[valid] * w_light[valid] * (mu_d[valid] - mu_l[valid]) ** 2
    t = int(np.argmax(between))
    return (t + 1) / HIST_BINS


def binarize(img: np.ndarray, polarity: str = "dark_on_light") -> np.ndarray:
    """Foreground mask (uint8 {0,1}) of the stroke side of the Otsu threshold."""
    gray = to_grayscale(np.asarray(img, dtype=np.float64))
    thr = otsu_threshold(gray)
    if polarity == "dark_on_light":
        fg = gray < thr
    elif polarity == "light_on_dark":
        fg = gray >= thr
    else:
        raise ValueError(f"unknown polarity {polarity!r}")
    return fg.astype(np.uint8)


def _neighborhood(img: np.ndarray):
    """The 8 neighbor planes of every pixel, clockwise from north, zero-padded."""
    p = np.pad(img, 1)
    n = p[:-2, 1:-1]
    ne = p[:-2, 2:]
    e = p[1:-1, 2:]
    se = p[2:, 2:]
    s = p[2:, 1:-1]
    sw = p[2:, :-2]
    w = p[1:-1, :-2]
    nw = p[:-2, :-2]
    return n, ne, e, se, s, sw, w, nw


def _thin_subpass(img: np.ndarray, first: bool) -> np.ndarray:
    n, ne, e, se, s, sw, w, nw = _neighborhood(img)
    ring = [n, ne, e, se, s, sw, w, nw]
    count = sum(ring)
    transitions = sum((a == 0) & (b == 1) for a, b in zip(ring, ring[1:] + ring[:1]))
    cond = (img == 1) & (count >= 2) & (count <= 6) & (transitions == 1)
    if first:
        cond &= (n * e * s == 0) & (e * s * w == 0)
    else:
        cond &= (n * e * w == 0) & (n * s * w == 0)
    out = img.copy()
    out[cond] = 0
    return out


# Ring offsets clockwise from north, matching _neighborhood.
_RING = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def _ring_values(img: np.ndarray, y: int, x: int) -> list:
    h, w = img.shape
    return [
        int(img[y + dy, x + dx]) if 0 <= y + dy < h and 0 <= x + dx < w else 0
        for dy, dx in _RING
    ]


def _ring_components(values: list, want: int, four_connected: bool) -> list:
    """Connected components (as index sets) of ring cells equal to `want`."""
    cells = [i for i, v in enumerate(values) if v == want]
    seen = set()
    comps = []
    for start in cells:
        if start in seen:
            continue
        comp, stack = set(), [start]
        while stack:
            i = stack.pop()
            if i in comp:
                continue
            comp.add(i)
            for j in cells:
                if j in comp:
                    continue
                dy = abs(_RING[i][0] - _RING[j][0])
                dx = abs(_RING[i][1] - _RING[j][1])
                near = (dy + dx == 1) if four_connected else (max(dy, dx) == 1)
                if near:
                    stack.append(j)
        seen |= comp
        comps.append(comp)
    return comps


def _is_simple(img: np.ndarray, y: int, x: int) -> bool:
    """Deleting (y, x) keeps its neighborhood topology: the ring foreground
    stays one 8-connected piece and exactly one background 4-neighbor side
    exists (so no hole opens)."""
    ring = _ring_values(img, y, x)
    if len(_ring_components(ring, 1, four_connected=False)) != 1:
        return False
    edges = {0, 2, 4, 6}  # ring indices of the 4-neighbors (n, e, s, w)
    bg_comps = _ring_components(ring, 0, four_connected=True)
    return sum(1 for c in bg_comps if c & edges) == 1


def _dissolve_blocks(img: np.ndarray) -> np.ndarray:
    """Delete one topology-preserving pixel from each 2x2 foreground block.

    The two subpasses never remove a pixel whose ring has two 0-1
    transitions, so blocks at diagonal stroke junctions survive them; they
    are dissolved here one deletion at a time, in raster order.
    """
    out = img.copy()
    blocks = out[:-1, :-1] & out[1:, :-1] & out[:-1, 1:] & out[1:, 1:]
    for y, x in np.argwhere(blocks == 1):
        corners = [(y, x), (y, x + 1), (y + 1, x), (y + 1, x + 1)]
        if not all(out[c] for c in corners):
            continue  # an earlier deletion already broke this block
        for cy, cx in corners:
            if _is_simple(out, cy, cx):
                out[cy, cx] = 0
                break
    return out


def skeletonize(binary: np.ndarray) -> np.ndarray:
    """Iterative two-subpass thinning plus 2x2-block dissolution.

    Each round runs both deletion subpasses and then removes one
    connectivity-preserving pixel from any remaining 2x2 foreground block;
    rounds repeat until nothing changes. The result is a subset of the
    input foreground, and re-running the function on its own output is a
    no-op.
    """
    img = np.ascontiguousarray(np.asarray(binary, dtype=np.uint8))
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D binary image, got shape {img.shape}")
    if not np.isin(img, (0, 1)).all():
        raise ValueError("binary image must contain only {0, 1}")
    while True:
        step1 = _thin_subpass(img, first=True)
        step2 = _thin_subpass(step1, first=False)
        step3 = _dissolve_blocks(step2)
        if np.array_equal(step3, img):
            return step3
        img = step3
