import json
from dataclasses import replace

import numpy as np
import pytest

from glyphdenoise.image_io import load_image
from glyphdenoise.morphology import binarize, skeletonize
from glyphdenoise.seeding import derive_seed
from glyphdenoise.synth import (MARGIN, GlyphSpec, NoiseSpec, add_gaussian,
                                add_speckle, degrade, make_dataset,
                                make_sample, render_glyph)

from oracles import psnr_reference, sigma_estimate


def test_render_deterministic_and_in_range():
    spec = GlyphSpec(num_strokes=4, stroke_width=3, canvas=64, seed=7)
    a = render_glyph(spec)
    b = render_glyph(spec)
    assert a.shape == (64, 64, 3) and a.dtype == np.float32
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0
    assert (a[..., 0] == a[..., 1]).all() and (a[..., 0] == a[..., 2]).all()


def test_render_seed_sensitivity():
    imgs = [render_glyph(GlyphSpec(seed=s)) for s in range(30)]
    for i in range(len(imgs) - 1):
        assert not np.array_equal(imgs[i], imgs[i + 1])


def test_render_margin_is_clean_background():
    for seed in range(20):
        img = render_glyph(GlyphSpec(num_strokes=8, stroke_width=6, canvas=64, seed=seed))
        border = np.concatenate([
            img[:MARGIN].ravel(), img[-MARGIN:].ravel(),
            img[:, :MARGIN].ravel(), img[:, -MARGIN:].ravel()])
        assert (border == img[0, 0, 0]).all()
        assert border.min() >= 0.93


def test_render_area_bounds():
    # two strokes of 2..3 segments, each 0.15..0.35 of the span, width 2..6:
    # binarized ink area stays within [2*2*10, 2*6*90] px on a 64 canvas
    areas = []
    for seed in range(100):
        width = 2 + seed % 5
        img = render_glyph(GlyphSpec(num_strokes=2, stroke_width=width, canvas=64, seed=seed))
        areas.append(int(binarize(img).sum()))
    assert min(areas) >= 2 * 2 * 10
    assert max(areas) <= 2 * 6 * 90


def test_render_validates_spec():
    with pytest.raises(ValueError):
        GlyphSpec(num_strokes=1)
    with pytest.raises(ValueError):
        GlyphSpec(num_strokes=9)
    with pytest.raises(ValueError):
        GlyphSpec(stroke_width=1)
    with pytest.raises(ValueError):
        GlyphSpec(canvas=0)
    with pytest.raises(ValueError):  # margins leave no room to draw
        render_glyph(GlyphSpec(stroke_width=6, canvas=16))


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(kind="saltpepper")
    with pytest.raises(ValueError):
        NoiseSpec(sigma=-1.0)
    with pytest.raises(ValueError):
        NoiseSpec(sigma_range=(50.0, 10.0))


def test_gaussian_moments():
    img = np.full((64, 64, 3), 0.5, dtype=np.float32)
    out = add_gaussian(img, 25.0, seed=3)
    resid = (out.astype(np.float64) - 0.5).ravel()
    assert abs(resid.std() - 25 / 255) <= 0.1 * 25 / 255
    assert abs(resid.mean()) <= 3 * (25 / 255) / np.sqrt(resid.size)


def test_gaussian_zero_sigma_and_clipping():
    img = np.full((16, 16, 3), 0.5, dtype=np.float32)
    assert np.array_equal(add_gaussian(img, 0.0, seed=1), img)
    out = add_gaussian(img, 500.0, seed=1)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_speckle_fixes_black_and_sigma_recoverable():
    zeros = np.zeros((16, 16, 3), dtype=np.float32)
    assert np.array_equal(add_speckle(zeros, 25.0, seed=1), zeros)

    ones = np.ones((64, 64, 3), dtype=np.float32)
    out = add_speckle(ones, 25.0, seed=2)
    assert out.max() <= 1.0
    # upper tail clips at 1.0; the negative-side one-sigma quantile does not
    resid = (out.astype(np.float64) - 1.0).ravel()
    est = -np.quantile(resid, 0.1587) * 255.0
    assert abs(est - 25.0) <= 2.5


def test_degrade_deterministic_and_dispatch():
    img = render_glyph(GlyphSpec(seed=1))
    for kind in ("gaussian", "speckle", "mixed", "background", "blind_mixed"):
        spec = NoiseSpec(kind=kind, sigma=25.0, seed=9)
        a = degrade(img, spec)
        b = degrade(img, spec)
        assert np.array_equal(a, b), kind
        assert a.min() >= 0.0 and a.max() <= 1.0, kind
        assert not np.array_equal(a, img), kind

    # gaussian reduces to add_gaussian on the same stream
    assert np.array_equal(degrade(img, NoiseSpec(kind="gaussian", sigma=25, seed=9)),
                          add_gaussian(img, 25.0, np.random.default_rng(9)))
    # mixed is speckle then gaussian sharing one stream at the same sigma
    rng = np.random.default_rng(9)
    expected = add_gaussian(add_speckle(img, 25.0, rng), 25.0, rng)
    assert np.array_equal(degrade(img, NoiseSpec(kind="mixed", sigma=25, seed=9)), expected)


def test_background_darkens_multiplicatively():
    img = render_glyph(GlyphSpec(seed=4))
    out = degrade(img, NoiseSpec(kind="background", seed=5))
    assert (out <= img + 1e-6).all()          # field is <= 1 everywhere
    assert (out >= 0.5 * img - 1e-6).all()    # stain strength capped at 0.5
    assert out.min() >= 0.0


def test_blind_mixed_sigma_spread():
    clean = render_glyph(GlyphSpec(seed=0))
    estimates = [
        sigma_estimate(degrade(clean, NoiseSpec(kind="blind_mixed", seed=s)), clean)
        for s in range(1000)
    ]
    assert min(estimates) <= 15.0
    assert max(estimates) >= 45.0


def test_mixed_sigma5_psnr_golden():
    # frozen from an oracle run over this 24-image corpus
    vals = []
    for i in range(24):
        clean = render_glyph(GlyphSpec(num_strokes=4, stroke_width=3, canvas=64, seed=i))
        noisy = degrade(clean, NoiseSpec(kind="mixed", sigma=5.0, seed=1000 + i))
        vals.append(psnr_reference(noisy, clean))
    assert abs(float(np.mean(vals)) - 32.6854) <= 0.5


def test_make_sample_seed_derivation():
    pair = make_sample("000003", GlyphSpec(), NoiseSpec(), master_seed=5)
    assert pair.id == "000003"
    assert pair.seed == derive_seed(5, "glyph", "000003")
    assert pair.skeleton.shape == pair.clean.shape[:2] + (1,)
    assert set(np.unique(pair.skeleton)) <= {0.0, 1.0}


def test_make_dataset_layout_and_manifest(tmp_path):
    out = tmp_path / "ds"
    manifest = make_dataset(6, GlyphSpec(canvas=32), NoiseSpec(sigma=25.0, seed=0),
                            out, master_seed=5, val_fraction=0.34)
    assert manifest == json.loads((out / "manifest.json").read_text())
    ids = manifest["ids"]
    assert ids == [f"{i:06d}" for i in range(6)]
    for sub in ("clean", "noisy", "skeleton"):
        assert sorted(p.name for p in (out / sub).glob("*.png")) == [f"{i}.png" for i in ids]
    assert manifest["noise"]["kind"] == "mixed"
    assert sorted(manifest["split"]["train"] + manifest["split"]["val"]) == ids
    assert not set(manifest["split"]["train"]) & set(manifest["split"]["val"])
    assert len(manifest["split"]["val"]) == 2
    for entry in manifest["samples"]:
        assert entry["glyph_seed"] == derive_seed(5, "glyph", entry["id"])
        assert entry["noise_seed"] == derive_seed(5, "noise", entry["id"])


def test_make_dataset_rerun_bit_identical(tmp_path):
    kw = dict(glyph=GlyphSpec(canvas=32), noise=NoiseSpec(seed=0), master_seed=8)
    make_dataset(4, out_dir=tmp_path / "a", **kw)
    make_dataset(4, out_dir=tmp_path / "b", **kw)
    files_a = sorted((tmp_path / "a").rglob("*.*"))
    files_b = sorted((tmp_path / "b").rglob("*.*"))
    assert [p.name for p in files_a] == [p.name for p in files_b]
    for pa, pb in zip(files_a, files_b):
        assert pa.read_bytes() == pb.read_bytes(), pa.name


def test_dataset_skeleton_recomputable_from_disk(tmp_path):
    make_dataset(4, GlyphSpec(canvas=32), NoiseSpec(seed=1), tmp_path, master_seed=3)
    for i in range(4):
        clean = load_image(tmp_path / "clean" / f"{i:06d}.png")
        stored = load_image(tmp_path / "skeleton" / f"{i:06d}.png")
        recomputed = skeletonize(binarize(clean))
        assert np.array_equal(stored[..., 0] > 0.5, recomputed.astype(bool))


def test_dataset_regeneration_from_manifest(tmp_path):
    glyph = GlyphSpec(canvas=32)
    noise = NoiseSpec(sigma=25.0, seed=0)
    manifest = make_dataset(5, glyph, noise, tmp_path, master_seed=11)
    for entry in manifest["samples"][:5]:
        clean = load_image(tmp_path / "clean" / f"{entry['id']}.png")
        regen = render_glyph(replace(glyph, seed=entry["glyph_seed"]))
        # saved PNG is the quantized render
        assert np.array_equal(np.rint(clean * 255), np.rint(regen.astype(np.float64) * 255))


def test_make_dataset_empty_and_invalid(tmp_path):
    manifest = make_dataset(0, GlyphSpec(), NoiseSpec(), tmp_path / "e")
    assert manifest["ids"] == [] and manifest["samples"] == []
    with pytest.raises(ValueError):
        make_dataset(-1, GlyphSpec(), NoiseSpec(), tmp_path)
    with pytest.raises(ValueError):
        make_dataset(2, GlyphSpec(), NoiseSpec(), tmp_path, val_fraction=1.0)
