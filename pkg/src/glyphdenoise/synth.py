"""Synthetic glyph rendering and degradation models.

Produces paired (noisy, clean, skeleton) datasets: procedural stroke
glyphs, per-image seeded noise (gaussian / speckle / mixed / uneven
background / blind mixed), and a JSON manifest that makes every sample
regenerable from its recorded seeds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .image_io import quantize, save_image
from .morphology import binarize, skeletonize
from .seeding import derive_seed

MARGIN = 4  # px of guaranteed background on every border
NOISE_KINDS = ("gaussian", "speckle", "mixed", "background", "blind_mixed")

# stroke geometry, relative to the drawable span (canvas minus margins)
_SEG_FRAC = (0.15, 0.35)   # per-segment length
_SEGMENTS = (2, 3)         # segments per stroke, inclusive
_MAX_TURN = 1.3            # radians between consecutive segments
_INK_MAX = 0.08
_BG_MIN = 0.93


@dataclass(frozen=True)
class GlyphSpec:
    num_strokes: int = 4
    stroke_width: int = 3
    canvas: int = 64
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.num_strokes <= 8:
            raise ValueError(f"num_strokes must be in [2, 8], got {self.num_strokes}")
        if not 2 <= self.stroke_width <= 6:
            raise ValueError(f"stroke_width must be in [2, 6], got {self.stroke_width}")
        if self.canvas <= 0:
            raise ValueError(f"canvas must be positive, got {self.canvas}")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "mixed"
    sigma: float = 25.0                       # std-dev on the 0..255 scale
    sigma_range: tuple[float, float] = (10.0, 50.0)  # blind_mixed only
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}, expected one of {NOISE_KINDS}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        lo, hi = self.sigma_range
        if lo > hi or lo < 0:
            raise ValueError(f"need 0 <= low <= high in sigma_range, got {self.sigma_range}")


@dataclass(frozen=True)
class SamplePair:
    noisy: np.ndarray     # H x W x 3
    clean: np.ndarray     # H x W x 3
    skeleton: np.ndarray  # H x W x 1, values {0, 1}
    id: str
    seed: int

    def __post_init__(self):
        if not (self.noisy.shape[:2] == self.clean.shape[:2] == self.skeleton.shape[:2]):
            raise ValueError("noisy/clean/skeleton spatial sizes differ")


def _segment_coverage(alpha, ys, xs, p0, p1, radius):
    # distance from each pixel center to segment p0-p1, soft 1 px edge
    d = p1 - p0
    seg_len2 = float(d @ d)
    if seg_len2 == 0.0:
        t = np.zeros_like(alpha)
    else:
        t = np.clip(((xs - p0[0]) * d[0] + (ys - p0[1]) * d[1]) / seg_len2, 0.0, 1.0)
    dx = xs - (p0[0] + t * d[0])
    dy = ys - (p0[1] + t * d[1])
    dist = np.sqrt(dx * dx + dy * dy)
    np.maximum(alpha, np.clip(radius + 0.5 - dist, 0.0, 1.0), out=alpha)


def render_glyph(spec: GlyphSpec) -> np.ndarray:
    """Procedural stroke glyph: dark polyline strokes on a light background.

    Deterministic per spec.seed. Stroke centerlines stay inside an inset
    box so no ink lands within MARGIN px of the border.
    """
    inset = MARGIN + spec.stroke_width / 2.0 + 1.0
    lo, hi = inset, spec.canvas - 1 - inset
    span = hi - lo
    if span < 8.0:
        raise ValueError(
            f"canvas {spec.canvas} too small for margin {MARGIN} "
            f"and stroke width {spec.stroke_width}")

    rng = np.random.default_rng(spec.seed)
    bg = rng.uniform(_BG_MIN, 1.0)
    ink = rng.uniform(0.0, _INK_MAX)

    # start each stroke in a distinct cell of a 3x3 grid to limit overlap
    cells = rng.permutation(9)[: spec.num_strokes]
    center = np.array([(lo + hi) / 2.0, (lo + hi) / 2.0])

    ys, xs = np.mgrid[0 : spec.canvas, 0 : spec.canvas].astype(np.float64)
    alpha = np.zeros((spec.canvas, spec.canvas), dtype=np.float64)
    radius = spec.stroke_width / 2.0

    for cell in cells:
        cy, cx = divmod(int(cell), 3)
        p = np.array([
            lo + (cx + rng.uniform(0.1, 0.9)) * span / 3.0,
            lo + (cy + rng.uniform(0.1, 0.9)) * span / 3.0,
        ])
        n_seg = int(rng.integers(_SEGMENTS[0], _SEGMENTS[1] + 1))
        angle = rng.uniform(0.0, 2.0 * math.pi)
        for k in range(n_seg):
            if k > 0:
                angle += rng.uniform(-_MAX_TURN, _MAX_TURN)
            r = rng.uniform(_SEG_FRAC[0], _SEG_FRAC[1]) * span
            q = None
            for _ in range(32):
                cand = p + r * np.array([math.cos(angle), math.sin(angle)])
                if lo <= cand[0] <= hi and lo <= cand[1] <= hi:
                    q = cand
                    break
                angle = rng.uniform(0.0, 2.0 * math.pi)
            if q is None:
                # aim at the box center; r < half-span so this stays inside
                to_c = center - p
                q = p + r * to_c / max(float(np.hypot(*to_c)), 1e-9)
            _segment_coverage(alpha, ys, xs, p, q, radius)
            p = q

    img = bg * (1.0 - alpha) + ink * alpha
    return np.repeat(img[:, :, None], 3, axis=2).astype(np.float32)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def add_gaussian(img: np.ndarray, sigma: float, seed) -> np.ndarray:
    """out = clip(img + n), n ~ Normal(0, (sigma/255)^2) per pixel-channel."""
    rng = _as_rng(seed)
    n = rng.normal(0.0, sigma / 255.0, size=img.shape)
    return np.clip(img + n, 0.0, 1.0).astype(np.float32)


def add_speckle(img: np.ndarray, sigma: float, seed) -> np.ndarray:
    """out = clip(img * (1 + m)), m ~ Normal(0, (sigma/255)^2)."""
    rng = _as_rng(seed)
    m = rng.normal(0.0, sigma / 255.0, size=img.shape)
    return np.clip(img * (1.0 + m), 0.0, 1.0).astype(np.float32)


def _background_field(shape, rng) -> np.ndarray:
    # smooth stain: 1 - a * G, G = max-normalized sum of 2..4 gaussian blobs
    h, w = shape
    n_blobs = int(rng.integers(2, 5))
    a = rng.uniform(0.2, 0.5)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    g = np.zeros((h, w), dtype=np.float64)
    for _ in range(n_blobs):
        cy = rng.uniform(0, h - 1)
        cx = rng.uniform(0, w - 1)
        sy = rng.uniform(0.15, 0.45) * h
        sx = rng.uniform(0.15, 0.45) * w
        g += np.exp(-0.5 * (((ys - cy) / sy) ** 2 + ((xs - cx) / sx) ** 2))
    g /= g.max()
    return 1.0 - a * g


def degrade(img: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Apply the degradation named by spec; deterministic per spec.seed.

    mixed applies speckle first, then gaussian, both at spec.sigma.
    blind_mixed draws sigma ~ Uniform(sigma_range) once per image.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "gaussian":
        return add_gaussian(img, spec.sigma, rng)
    if spec.kind == "speckle":
        return add_speckle(img, spec.sigma, rng)
    if spec.kind == "mixed":
        return add_gaussian(add_speckle(img, spec.sigma, rng), spec.sigma, rng)
    if spec.kind == "blind_mixed":
        sigma = rng.uniform(*spec.sigma_range)
        return add_gaussian(add_speckle(img, sigma, rng), sigma, rng)
    if spec.kind == "background":
        field = _background_field(img.shape[:2], rng)
        return np.clip(img * field[:, :, None], 0.0, 1.0).astype(np.float32)
    raise ValueError(f"unknown noise kind {spec.kind!r}")


def make_skeleton(clean: np.ndarray, polarity: str = "dark_on_light") -> np.ndarray:
    """Skeleton ground truth: thinned binarized clean image, H x W x 1 in {0, 1}."""
    sk = skeletonize(binarize(clean, polarity))
    return sk[:, :, None].astype(np.float32)


def make_sample(sample_id: str, glyph: GlyphSpec, noise: NoiseSpec,
                master_seed: int) -> SamplePair:
    """Render, degrade, and skeletonize one sample from derived seeds.

    The skeleton comes from the quantized clean image so recomputing it
    from the saved PNG reproduces the stored skeleton bit-exactly.
    """
    gseed = derive_seed(master_seed, "glyph", sample_id)
    nseed = derive_seed(master_seed, "noise", sample_id)
    clean = quantize(render_glyph(replace(glyph, seed=gseed)))
    noisy = quantize(degrade(clean, replace(noise, seed=nseed)))
    return SamplePair(noisy=noisy, clean=clean, skeleton=make_skeleton(clean),
                      id=sample_id, seed=gseed)


def make_dataset(n: int, glyph: GlyphSpec, noise: NoiseSpec, out_dir,
                 master_seed: int = 0, val_fraction: float = 0.0) -> dict:
    """Write clean/, noisy/, skeleton/ PNG triplets plus manifest.json.

    Fully deterministic: reruns with the same arguments produce a
    bit-identical directory tree.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in [0, 1), got {val_fraction}")
    out_dir = Path(out_dir)
    ids = [f"{i:06d}" for i in range(n)]

    samples = []
    for sample_id in ids:
        pair = make_sample(sample_id, glyph, noise, master_seed)
        try:
            save_image(pair.clean, out_dir / "clean" / f"{sample_id}.png")
            save_image(pair.noisy, out_dir / "noisy" / f"{sample_id}.png")
            save_image(pair.skeleton, out_dir / "skeleton" / f"{sample_id}.png")
        except OSError as exc:
            raise OSError(f"failed writing sample {sample_id} under {out_dir}: {exc}") from exc
        samples.append({
            "id": sample_id,
            "glyph_seed": derive_seed(master_seed, "glyph", sample_id),
            "noise_seed": derive_seed(master_seed, "noise", sample_id),
        })

    n_val = int(round(n * val_fraction))
    # deterministic split: shuffle ids with a named sub-stream
    order = np.random.default_rng(derive_seed(master_seed, "split")).permutation(n)
    val_ids = sorted(ids[i] for i in order[:n_val])
    train_ids = sorted(ids[i] for i in order[n_val:])

    manifest = {
        "version": 1,
        "master_seed": int(master_seed),
        "glyph": {"num_strokes": glyph.num_strokes,
                  "stroke_width": glyph.stroke_width,
                  "canvas": glyph.canvas},
        "noise": {"kind": noise.kind, "sigma": noise.sigma,
                  "sigma_range": list(noise.sigma_range),
                  "order": "speckle_then_gaussian"},
        "ids": ids,
        "samples": samples,
        "split": {"train": train_ids, "val": val_ids},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest
