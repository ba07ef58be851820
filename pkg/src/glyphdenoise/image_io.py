"""PNG codec and padding helpers.

Images travel through the library as H x W x C float32 arrays in [0, 1]
(C = 1 or 3). Quantization to 8 bits happens only at the file boundary,
with round-half-to-even, so load(save(x)) == quantize(x) exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .config import ModelConfig


class ImageFormatError(ValueError):
    """Unreadable or unsupported image file."""


def quantize(img: np.ndarray) -> np.ndarray:
    """The value grid images land on after a save/load round trip."""
    return (np.rint(np.asarray(img, dtype=np.float32) * 255.0).astype(np.uint8)
            .astype(np.float32) / 255.0)


def load_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit grayscale or RGB PNG as H x W x {1,3} float32 in [0, 1]."""
    try:
        with Image.open(path) as im:
            mode = im.mode
            if mode not in ("L", "RGB"):
                raise ImageFormatError(
                    f"{path}: unsupported image mode {mode!r} (need 8-bit L or RGB)")
            arr = np.asarray(im, dtype=np.uint8)
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageFormatError(f"{path}: cannot read image ({exc})") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.astype(np.float32) / 255.0


def save_image(img: np.ndarray, path: str | Path) -> None:
    """Write H x W x {1,3} float in [0, 1] as an 8-bit PNG (half-to-even rounding)."""
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[-1] not in (1, 3):
        raise ValueError(f"expected H x W x {{1,3}} image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    data = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    if data.shape[-1] == 1:
        im = Image.fromarray(data[:, :, 0], mode="L")
    else:
        im = Image.fromarray(data, mode="RGB")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    im.save(path, format="PNG")


@dataclass(frozen=True)
class CropRecord:
    height: int
    width: int


def pad_to_valid(img: np.ndarray, config: ModelConfig) -> tuple[np.ndarray, CropRecord]:
    """Reflect-pad so both sides are multiples of window_size * 2^(T/2)."""
    h, w = img.shape[:2]
    tile = config.tile
    pad_h = (-h) % tile
    pad_w = (-w) % tile
    padded = np.pad(img, ((0, pad_h), (0, pad_w), (0, 0)), mode="reflect")
    return padded, CropRecord(h, w)


def unpad(img: np.ndarray, record: CropRecord) -> np.ndarray:
    return img[: record.height, : record.width]
