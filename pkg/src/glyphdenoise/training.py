"""Deterministic training loop: optimization, evaluation, checkpoints.

All randomness derives from the run seed through named sub-streams
(init, data, perceptual), the learning rate follows a closed-form cosine
decay, and checkpoints carry optimizer moments plus both RNG states, so
a resumed run reproduces the uninterrupted loss sequence exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import pickle
import zipfile
from pathlib import Path

import numpy as np
import torch

from .ablation import build_variant
from .config import ConfigError, RunConfig, config_from_dict, config_to_dict, validate_run
from .data import BatchSampler, PairedDataset
from .image_io import pad_to_valid, save_image, unpad
from .losses import FeatureExtractor, LossBreakdown, total_loss
from .metrics import psnr, ssim
from .network import GlyphDenoiser
from .seeding import derive_seed, make_rng

MIN_LR = 1e-6
EVAL_SAMPLE_COUNT = 4
LOSS_FIELDS = ("l1_rec", "lp_rec", "l1_gly", "lp_gly", "total")


class TrainingDiverged(RuntimeError):
    """Non-finite loss; carries the iteration and the loss terms."""

    def __init__(self, iteration, terms):
        self.iteration = iteration
        self.terms = terms
        super().__init__(f"non-finite loss at iteration {iteration}: {terms}")


def build_optimizer(model, train_cfg):
    if train_cfg.optimizer_name == "adam":
        return torch.optim.Adam(model.parameters(), lr=train_cfg.learning_rate,
                                betas=(0.9, 0.999))
    return torch.optim.SGD(model.parameters(), lr=train_cfg.learning_rate,
                           momentum=0.9)


def build_extractor(train_cfg, master_seed):
    if train_cfg.perceptual_mode == "off":
        return None
    return FeatureExtractor(train_cfg.perceptual_mode,
                            train_cfg.perceptual_weights,
                            seed=derive_seed(master_seed, "perceptual"))


def lr_at(train_cfg, iteration):
    """Cosine decay from the base rate to MIN_LR over the run (closed form)."""
    total = train_cfg.iterations
    if total <= 1:
        return train_cfg.learning_rate
    t = (iteration - 1) / (total - 1)
    return MIN_LR + 0.5 * (train_cfg.learning_rate - MIN_LR) * (1 + math.cos(math.pi * t))


def eval_cadence(iterations):
    return max(50, iterations // 20)


def config_hash(run_config: RunConfig) -> str:
    blob = json.dumps(config_to_dict(run_config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def train_step(model, optimizer, batch, glyph_weight, extractor=None,
               iteration=0) -> LossBreakdown:
    """One optimizer update on the combined objective."""
    model.train()
    optimizer.zero_grad(set_to_none=True)
    result = model(batch["noisy"])
    breakdown = total_loss(result, batch["clean"], batch["skeleton"],
                           glyph_weight, extractor)
    if not torch.isfinite(breakdown.total):
        raise TrainingDiverged(iteration, breakdown.detached())
    breakdown.total.backward()
    optimizer.step()
    return breakdown


def infer(model: GlyphDenoiser, img: np.ndarray):
    """Full-image inference with reflective padding; returns (restored, skeleton)."""
    model.eval()
    padded, record = pad_to_valid(img.astype(np.float32), model.config)
    with torch.no_grad():
        x = torch.from_numpy(padded).permute(2, 0, 1)[None]
        out = model(x)
    restored = out.restored[0].permute(1, 2, 0).numpy()
    skeleton = out.skeleton[0].permute(1, 2, 0).numpy()
    return unpad(restored, record), unpad(skeleton, record)


def evaluate(model, dataset: PairedDataset, indices) -> dict:
    """Full-image PSNR/SSIM of the denoised output against clean."""
    rows = []
    for i in indices:
        restored, _ = infer(model, dataset.noisy[i])
        rows.append({"id": dataset.ids[i],
                     "psnr": psnr(restored, dataset.clean[i]),
                     "ssim": ssim(restored, dataset.clean[i])})
    mean_psnr = float(np.mean([r["psnr"] for r in rows])) if rows else math.nan
    mean_ssim = float(np.mean([r["ssim"] for r in rows])) if rows else math.nan
    return {"psnr": mean_psnr, "ssim": mean_ssim, "rows": rows}


def save_checkpoint(path, model, optimizer, iteration, run_config, variant,
                    sampler_state, metrics_snapshot):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "iteration": int(iteration),
        "config": config_to_dict(run_config),
        "variant": variant,
        "numpy_rng": sampler_state,
        "torch_rng": torch.get_rng_state(),
        "metrics": metrics_snapshot,
    }
    torch.save(payload, path)
    sidecar = {
        "config_sha256": config_hash(run_config),
        "iteration": int(iteration),
        "seed": run_config.train.seed,
        "variant": variant,
        "metrics": metrics_snapshot,
    }
    with open(path.with_suffix(".json"), "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def load_checkpoint(path):
    try:
        return torch.load(path, map_location="cpu", weights_only=False)
    except (OSError, RuntimeError, EOFError, pickle.UnpicklingError,
            zipfile.BadZipFile) as exc:
        raise ValueError(f"{path}: cannot load checkpoint ({exc})") from exc


def restore_model(payload) -> GlyphDenoiser:
    run_config = config_from_dict(payload["config"])
    model = build_variant(payload["variant"], run_config.model)
    model.load_state_dict(payload["model"])
    model.eval()
    return model


def _save_eval_samples(model, dataset, indices, out_dir):
    out_dir = Path(out_dir)
    for i in indices[:EVAL_SAMPLE_COUNT]:
        restored, skeleton = infer(model, dataset.noisy[i])
        stem = dataset.ids[i]
        save_image(dataset.noisy[i], out_dir / f"{stem}_noisy.png")
        save_image(np.clip(restored, 0.0, 1.0), out_dir / f"{stem}_denoised.png")
        save_image(np.clip(skeleton, 0.0, 1.0), out_dir / f"{stem}_skeleton.png")


def visualize_glyphs(model, dataset: PairedDataset, indices, out_dir) -> int:
    """Write (noisy, clean, thresholded predicted skeleton) triptychs.

    Returns the number of PNGs written (3 per sample).
    """
    out_dir = Path(out_dir)
    written = 0
    for i in indices:
        _, skeleton = infer(model, dataset.noisy[i])
        binary = (skeleton >= 0.5).astype(np.float32)
        stem = dataset.ids[i]
        save_image(dataset.noisy[i], out_dir / f"{stem}_noisy.png")
        save_image(dataset.clean[i], out_dir / f"{stem}_clean.png")
        save_image(binary, out_dir / f"{stem}_skeleton.png")
        written += 3
    return written


def fit(run_config: RunConfig, data_dir, out_dir, variant="full_con_a",
        resume=None) -> dict:
    """Train a model; write checkpoints, CSV logs, and sample images.

    Returns a report dict with final metrics and the eval history.
    """
    report = validate_run(run_config)
    if not report.ok:
        raise ConfigError(str(report))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_cfg = run_config.train
    master = train_cfg.seed

    torch.manual_seed(derive_seed(master, "init"))
    model = build_variant(variant, run_config.model)
    optimizer = build_optimizer(model, train_cfg)
    extractor = build_extractor(train_cfg, master)

    dataset = PairedDataset.load(data_dir, run_config.data.polarity)
    train_idx, val_idx = dataset.split(run_config.data.val_fraction, master)
    eval_on_train = not val_idx
    eval_idx = train_idx if eval_on_train else val_idx
    sampler = BatchSampler(dataset, train_idx, train_cfg.batch_size,
                           train_cfg.crop_size, run_config.data.flip,
                           make_rng(master, "data"))

    start = 0
    if resume is not None:
        payload = load_checkpoint(resume)
        if payload["variant"] != variant:
            raise ConfigError(f"checkpoint variant {payload['variant']!r} "
                              f"does not match requested {variant!r}")
        model.load_state_dict(payload["model"])
        optimizer.load_state_dict(payload["optimizer"])
        sampler.set_state(payload["numpy_rng"])
        torch.set_rng_state(payload["torch_rng"])
        start = payload["iteration"]

    iterations = train_cfg.iterations
    cadence = eval_cadence(iterations)
    glyph_weight = run_config.model.glyph_loss_weight

    losses_path = out_dir / "losses.csv"
    metrics_path = out_dir / "metrics.csv"
    fresh_losses = not losses_path.exists()
    fresh_metrics = not metrics_path.exists()
    history = []
    best_psnr = -math.inf

    with open(losses_path, "a", newline="") as loss_file, \
         open(metrics_path, "a", newline="") as metric_file:
        loss_csv = csv.writer(loss_file)
        metric_csv = csv.writer(metric_file)
        if fresh_losses:
            loss_csv.writerow(("iteration",) + LOSS_FIELDS + ("lr",))
        if fresh_metrics:
            metric_csv.writerow(("iteration", "psnr", "ssim"))

        if start >= iterations:
            snapshot = {"psnr": None, "ssim": None}
            save_checkpoint(out_dir / "last.pt", model, optimizer, start,
                            run_config, variant, sampler.state(), snapshot)
        for it in range(start + 1, iterations + 1):
            lr = lr_at(train_cfg, it)
            for group in optimizer.param_groups:
                group["lr"] = lr
            batch = sampler.next_batch()
            try:
                breakdown = train_step(model, optimizer, batch, glyph_weight,
                                       extractor, iteration=it)
            except TrainingDiverged as exc:
                with open(out_dir / "diverged.json", "w") as f:
                    json.dump({"iteration": exc.iteration, "terms": exc.terms},
                              f, indent=2)
                raise
            terms = breakdown.detached()
            loss_csv.writerow([it] + [f"{terms[k]:.8f}" for k in LOSS_FIELDS]
                              + [f"{lr:.3e}"])

            if it % cadence == 0 or it == iterations:
                ev = evaluate(model, dataset, eval_idx)
                metric_csv.writerow([it, f"{ev['psnr']:.6f}", f"{ev['ssim']:.6f}"])
                loss_file.flush()
                metric_file.flush()
                history.append({"iteration": it, "psnr": ev["psnr"],
                                "ssim": ev["ssim"], **terms})
                snapshot = {"psnr": ev["psnr"], "ssim": ev["ssim"]}
                save_checkpoint(out_dir / "last.pt", model, optimizer, it,
                                run_config, variant, sampler.state(), snapshot)
                if ev["psnr"] > best_psnr:
                    best_psnr = ev["psnr"]
                    save_checkpoint(out_dir / "best.pt", model, optimizer, it,
                                    run_config, variant, sampler.state(), snapshot)
                _save_eval_samples(model, dataset, eval_idx,
                                   out_dir / "samples" / f"iter_{it:06d}")

    final = history[-1] if history else {"psnr": math.nan, "ssim": math.nan}
    result = {
        "iterations": iterations,
        "variant": variant,
        "eval_on_train": eval_on_train,
        "final_psnr": final["psnr"],
        "final_ssim": final["ssim"],
        "best_psnr": best_psnr if history else math.nan,
        "history": history,
        "out_dir": str(out_dir),
        "config_sha256": config_hash(run_config),
    }
    with open(out_dir / "report.json", "w") as f:
        json.dump(result, f, indent=2, sort_keys=True)
        f.write("\n")
    return result
