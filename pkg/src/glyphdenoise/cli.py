"""Command line interface.

Subcommands: synth, skeletonize, train, denoise, eval, ablate,
visualize-glyphs. Exit codes: 0 success, 1 validation/usage error,
2 runtime failure. Every run prints its resolved configuration so logs
are sufficient to reconstruct it.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .ablation import VARIANTS, ablate
from .config import ConfigError, RunConfig, config_to_dict, load_config
from .data import DatasetError, PairedDataset
from .image_io import ImageFormatError, load_image, save_image
from .metrics import psnr, ssim
from .morphology import binarize, skeletonize
from .synth import NOISE_KINDS, GlyphSpec, NoiseSpec, make_dataset
from .training import fit, infer, load_checkpoint, restore_model, visualize_glyphs

VALIDATION_ERRORS = (ConfigError, DatasetError, ImageFormatError,
                     FileNotFoundError, ValueError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage problems are validation errors: exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _announce(command: str, resolved: dict) -> None:
    print(f"[{command}] config: {json.dumps(resolved, sort_keys=True)}")


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    train = config.train
    if getattr(args, "seed", None) is not None:
        train = replace(train, seed=args.seed)
    if getattr(args, "iterations", None) is not None:
        train = replace(train, iterations=args.iterations)
    return replace(config, train=train)


def cmd_synth(args) -> int:
    glyph = GlyphSpec(num_strokes=args.strokes, stroke_width=args.width,
                      canvas=args.canvas)
    noise = NoiseSpec(kind=args.noise, sigma=args.sigma,
                      sigma_range=(args.sigma_lo, args.sigma_hi))
    resolved = {"out": str(args.out), "count": args.count, "seed": args.seed,
                "val_fraction": args.val_fraction,
                "glyph": {"num_strokes": glyph.num_strokes,
                          "stroke_width": glyph.stroke_width,
                          "canvas": glyph.canvas},
                "noise": {"kind": noise.kind, "sigma": noise.sigma,
                          "sigma_range": list(noise.sigma_range)}}
    _announce("synth", resolved)
    manifest = make_dataset(args.count, glyph, noise, args.out,
                            master_seed=args.seed,
                            val_fraction=args.val_fraction)
    print(f"wrote {len(manifest['ids'])} samples to {args.out}")
    return 0


def cmd_skeletonize(args) -> int:
    _announce("skeletonize", {"in": args.in_path, "out": args.out,
                              "polarity": args.polarity})
    img = load_image(args.in_path)
    sk = skeletonize(binarize(img, args.polarity))
    save_image(sk[:, :, None].astype(np.float32), args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_train(args) -> int:
    config = _load_run_config(args)
    _announce("train", {"data": str(args.data), "out": str(args.out),
                        "variant": args.variant, "resume": args.resume,
                        **config_to_dict(config)})
    report = fit(config, args.data, args.out, variant=args.variant,
                 resume=args.resume)
    print(f"final psnr {report['final_psnr']:.4f} dB, "
          f"ssim {report['final_ssim']:.4f} ({report['iterations']} iterations)")
    return 0


def cmd_denoise(args) -> int:
    _announce("denoise", {"ckpt": str(args.ckpt), "in": str(args.in_path),
                          "out": str(args.out)})
    payload = load_checkpoint(args.ckpt)
    model = restore_model(payload)
    in_dir = Path(args.in_path)
    paths = sorted(in_dir.glob("*.png"))
    if not paths:
        raise DatasetError(f"{in_dir}: no PNG files to denoise")
    out_dir = Path(args.out)
    for path in paths:
        img = load_image(path)
        if img.shape[-1] == 1:
            img = np.repeat(img, 3, axis=2)
        restored, _ = infer(model, img)
        save_image(np.clip(restored, 0.0, 1.0), out_dir / path.name)
    print(f"denoised {len(paths)} images into {out_dir}")
    return 0


def cmd_eval(args) -> int:
    _announce("eval", {"pred": str(args.pred), "gt": str(args.gt),
                       "csv": str(args.csv)})
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    pred_ids = {p.stem for p in pred_dir.glob("*.png")}
    gt_ids = {p.stem for p in gt_dir.glob("*.png")}
    if pred_ids != gt_ids:
        odd = sorted(pred_ids.symmetric_difference(gt_ids))
        raise DatasetError(
            f"prediction/ground-truth ids differ, e.g. {odd[:5]}")
    if not pred_ids:
        raise DatasetError(f"{pred_dir}: no PNG files to evaluate")
    rows = []
    for stem in sorted(pred_ids):
        a = load_image(pred_dir / f"{stem}.png")
        b = load_image(gt_dir / f"{stem}.png")
        if a.shape[-1] != b.shape[-1]:
            three, one = (a, b) if a.shape[-1] == 3 else (b, a)
            one = np.repeat(one, 3, axis=2)
            a, b = three, one
        rows.append({"id": stem, "psnr": psnr(a, b), "ssim": ssim(a, b)})
    mean_row = {"id": "mean",
                "psnr": float(np.mean([r["psnr"] for r in rows])),
                "ssim": float(np.mean([r["ssim"] for r in rows]))}
    csv_path = Path(args.csv)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["id", "psnr", "ssim"])
        writer.writeheader()
        writer.writerows(rows + [mean_row])
    print(f"evaluated {len(rows)} pairs: mean psnr {mean_row['psnr']:.4f} dB, "
          f"ssim {mean_row['ssim']:.4f}")
    return 0


def cmd_ablate(args) -> int:
    config = _load_run_config(args)
    if args.variants.strip() == "all":
        variants = list(VARIANTS)
    else:
        variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ConfigError(f"unknown variants {unknown}, "
                          f"expected subset of {sorted(VARIANTS)}")
    _announce("ablate", {"data": str(args.data), "csv": str(args.csv),
                         "variants": variants, "out": args.out,
                         **config_to_dict(config)})
    rows = ablate(args.data, variants, args.csv, config, work_dir=args.out)
    for row in rows:
        print(f"{row['variant']}: psnr {row['psnr']:.4f} dB, "
              f"ssim {row['ssim']:.4f}")
    return 0


def cmd_visualize_glyphs(args) -> int:
    _announce("visualize-glyphs", {"ckpt": str(args.ckpt),
                                   "data": str(args.data),
                                   "out": str(args.out),
                                   "count": args.count})
    model = restore_model(load_checkpoint(args.ckpt))
    dataset = PairedDataset.load(args.data)
    indices = list(range(min(args.count, len(dataset))))
    written = visualize_glyphs(model, dataset, indices, args.out)
    print(f"wrote {written} images to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glyphdenoise",
                     description="Glyph-aware character image denoising.")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="master seed override")
    common.add_argument("--config", default=None,
                        help="JSON config file (model/train/data sections)")

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic paired dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--noise", choices=NOISE_KINDS, default="mixed")
    p.add_argument("--sigma", type=float, default=25.0)
    p.add_argument("--sigma-lo", type=float, default=10.0)
    p.add_argument("--sigma-hi", type=float, default=50.0)
    p.add_argument("--canvas", type=int, default=64)
    p.add_argument("--strokes", type=int, default=4)
    p.add_argument("--width", type=int, default=3)
    p.add_argument("--val-fraction", type=float, default=0.0)
    p.set_defaults(func=cmd_synth, seed=0)

    p = sub.add_parser("skeletonize", parents=[common],
                       help="binarize and thin one image")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--polarity", choices=("dark_on_light", "light_on_dark"),
                   default="dark_on_light")
    p.set_defaults(func=cmd_skeletonize)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=sorted(VARIANTS), default="full_con_a")
    p.add_argument("--iterations", type=int, default=None,
                   help="override train.iterations")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", parents=[common],
                       help="run a checkpoint over a directory of PNGs")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("eval", parents=[common],
                       help="PSNR/SSIM of predictions vs ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--csv", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common],
                       help="train model variants and tabulate metrics")
    p.add_argument("--data", required=True)
    p.add_argument("--csv", required=True)
    p.add_argument("--variants", default="all",
                   help="comma-separated variant ids, or 'all'")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--out", default=None, help="work dir for variant runs")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("visualize-glyphs", parents=[common],
                       help="write noisy/clean/predicted-skeleton triptychs")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=8)
    p.set_defaults(func=cmd_visualize_glyphs)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0, usage errors exit 1
        return int(exc.code or 0)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def run() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    run()
