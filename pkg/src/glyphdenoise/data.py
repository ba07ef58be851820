"""Paired dataset access, splits, and deterministic batch sampling.

Directory convention: clean/, noisy/, and optionally skeleton/ holding
PNGs with identical filenames, plus an optional manifest.json (required
for synthetic sets, optional for externally supplied pairs). Missing
skeletons are recomputed from the clean images.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .image_io import load_image
from .seeding import derive_seed
from .synth import make_skeleton


class DatasetError(ValueError):
    """Missing files, mismatched ids, or a broken manifest."""


def load_manifest(root) -> dict | None:
    path = Path(root) / "manifest.json"
    if not path.exists():
        return None
    try:
        with open(path) as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"{path}: cannot read manifest ({exc})") from exc
    if "ids" not in manifest:
        raise DatasetError(f"{path}: manifest lacks 'ids'")
    return manifest


def _ids_from_dirs(root: Path) -> list[str]:
    noisy = {p.stem for p in (root / "noisy").glob("*.png")}
    clean = {p.stem for p in (root / "clean").glob("*.png")}
    if noisy != clean:
        odd = sorted(noisy.symmetric_difference(clean))
        raise DatasetError(f"{root}: clean/ and noisy/ ids differ, e.g. {odd[:5]}")
    if not noisy:
        raise DatasetError(f"{root}: no paired PNGs found")
    return sorted(noisy)


@dataclass
class PairedDataset:
    root: Path
    ids: list[str]
    noisy: list[np.ndarray]     # H x W x 3 float32
    clean: list[np.ndarray]     # H x W x 3 float32
    skeleton: list[np.ndarray]  # H x W x 1 float32 in {0, 1}
    manifest: dict | None

    @classmethod
    def load(cls, root, polarity="dark_on_light") -> "PairedDataset":
        root = Path(root)
        manifest = load_manifest(root)
        ids = list(manifest["ids"]) if manifest else _ids_from_dirs(root)
        noisy, clean, skeleton = [], [], []
        for sample_id in ids:
            for kind, dest in (("noisy", noisy), ("clean", clean)):
                path = root / kind / f"{sample_id}.png"
                if not path.exists():
                    raise DatasetError(f"{root}: sample {sample_id} lacks {kind}/")
                img = load_image(path)
                if img.shape[-1] == 1:
                    img = np.repeat(img, 3, axis=2)
                dest.append(img)
            sk_path = root / "skeleton" / f"{sample_id}.png"
            if sk_path.exists():
                sk = load_image(sk_path)
                skeleton.append((sk > 0.5).astype(np.float32))
            else:
                skeleton.append(make_skeleton(clean[-1], polarity))
        return cls(root, ids, noisy, clean, skeleton, manifest)

    def __len__(self):
        return len(self.ids)

    def split(self, val_fraction: float, seed: int) -> tuple[list[int], list[int]]:
        """Manifest split when present, else a seeded deterministic shuffle."""
        if self.manifest and self.manifest.get("split"):
            pos = {sample_id: i for i, sample_id in enumerate(self.ids)}
            split = self.manifest["split"]
            train = [pos[i] for i in split.get("train", []) if i in pos]
            val = [pos[i] for i in split.get("val", []) if i in pos]
            if set(train) & set(val):
                raise DatasetError(f"{self.root}: manifest splits overlap")
            if train or val:
                return train, val
        n_val = int(round(len(self) * val_fraction))
        order = np.random.default_rng(derive_seed(seed, "split")).permutation(len(self))
        return sorted(int(i) for i in order[n_val:]), sorted(int(i) for i in order[:n_val])


def _to_tensor(stack: list[np.ndarray]) -> torch.Tensor:
    # list of H x W x C -> (B, C, H, W)
    arr = np.stack(stack)
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()


class BatchSampler:
    """Random crops + horizontal flips from a dedicated RNG stream.

    Sampling order, crop offsets, and flips are all driven by the one
    generator, so a saved generator state reproduces the batch sequence.
    """

    def __init__(self, dataset: PairedDataset, indices, batch_size,
                 crop_size, flip, rng: np.random.Generator):
        if not indices:
            raise DatasetError("empty training split")
        for i in indices:
            h, w = dataset.clean[i].shape[:2]
            if h < crop_size or w < crop_size:
                raise DatasetError(
                    f"sample {dataset.ids[i]} is {h}x{w}, smaller than "
                    f"crop_size {crop_size}")
        self.dataset = dataset
        self.indices = list(indices)
        self.batch_size = batch_size
        self.crop_size = crop_size
        self.flip = flip
        self.rng = rng

    def state(self) -> dict:
        return self.rng.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.rng.bit_generator.state = state

    def next_batch(self) -> dict:
        noisy, clean, skeleton = [], [], []
        picks = self.rng.integers(len(self.indices), size=self.batch_size)
        for pick in picks:
            i = self.indices[int(pick)]
            h, w = self.dataset.clean[i].shape[:2]
            cs = self.crop_size
            y0 = int(self.rng.integers(0, h - cs + 1))
            x0 = int(self.rng.integers(0, w - cs + 1))
            triple = [m[y0:y0 + cs, x0:x0 + cs]
                      for m in (self.dataset.noisy[i], self.dataset.clean[i],
                                self.dataset.skeleton[i])]
            if self.flip and self.rng.random() < 0.5:
                triple = [np.ascontiguousarray(m[:, ::-1]) for m in triple]
            noisy.append(triple[0])
            clean.append(triple[1])
            skeleton.append(triple[2])
        return {"noisy": _to_tensor(noisy), "clean": _to_tensor(clean),
                "skeleton": _to_tensor(skeleton)}
