"""Model variant registry for the ablation harness.

Variants cover the four gate connection schemes, gate removal, the
conv-for-attention swap, and attention depth K = 1 or 3. Each entry maps
a variant id onto constructor arguments for the full model.
"""

from __future__ import annotations

import csv
from dataclasses import replace
from pathlib import Path

from .config import ModelConfig, RunConfig
from .network import GlyphDenoiser

VARIANTS: dict[str, dict] = {
    "full_con_a": {"fusion_scheme": "con_a"},
    "con_b": {"fusion_scheme": "con_b"},
    "con_c": {"fusion_scheme": "con_c"},
    "con_d": {"fusion_scheme": "con_d"},
    "backbone_no_fa": {"fusion_scheme": "none"},
    "rsab_conv_only": {"attn_kind": "conv"},
    "rsab_1tl": {"attn_layers": 1},
    "rsab_3tl": {"attn_layers": 3},
}


def build_variant(variant: str, config: ModelConfig) -> GlyphDenoiser:
    if variant not in VARIANTS:
        raise ValueError(
            f"unknown variant {variant!r}, expected one of {sorted(VARIANTS)}")
    spec = VARIANTS[variant]
    if "attn_layers" in spec:
        config = replace(config, attn_layers=spec["attn_layers"])
    return GlyphDenoiser(config,
                         fusion_scheme=spec.get("fusion_scheme", "con_a"),
                         attn_kind=spec.get("attn_kind", "transformer"))


def ablate(data_dir, variants, out_csv, run_config: RunConfig,
           work_dir=None) -> list[dict]:
    """Train every variant with the same seed and budget; write a CSV table."""
    from .training import fit  # deferred: training imports build_variant

    out_csv = Path(out_csv)
    work_dir = Path(work_dir) if work_dir else out_csv.parent / "ablation_runs"
    rows = []
    for variant in variants:
        report = fit(run_config, data_dir, work_dir / variant, variant=variant)
        rows.append({"variant": variant,
                     "psnr": report["final_psnr"],
                     "ssim": report["final_ssim"]})
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    with open(out_csv, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["variant", "psnr", "ssim"])
        writer.writeheader()
        writer.writerows(rows)
    return rows
