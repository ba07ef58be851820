import numpy as np
import pytest
from PIL import Image

from glyphdenoise.config import ModelConfig
from glyphdenoise.image_io import (CropRecord, ImageFormatError, load_image,
                                   pad_to_valid, quantize, save_image, unpad)


def test_roundtrip_is_quantize(tmp_path, rand_image):
    img = rand_image((13, 17, 3), seed=0)
    save_image(img, tmp_path / "x.png")
    back = load_image(tmp_path / "x.png")
    assert back.shape == (13, 17, 3) and back.dtype == np.float32
    assert np.array_equal(back, quantize(img))


def test_roundtrip_grayscale(tmp_path, rand_image):
    img = rand_image((9, 9, 1), seed=1)
    save_image(img, tmp_path / "g.png")
    back = load_image(tmp_path / "g.png")
    assert back.shape == (9, 9, 1)
    assert np.array_equal(back, quantize(img))


def test_quantize_fixes_grid_points():
    grid = np.arange(256, dtype=np.float32).reshape(16, 16, 1) / 255.0
    assert np.array_equal(quantize(grid), grid)


def test_quantize_rounds_half_to_even():
    # exact .5 steps on the 255 scale round to the even integer
    x = np.array([0.5, 1.5, 2.5, 3.5], dtype=np.float32) / 255.0
    assert np.array_equal(quantize(x) * 255.0, [0.0, 2.0, 2.0, 4.0])


def test_checkerboard_exact(tmp_path):
    board = np.indices((8, 8)).sum(axis=0) % 2
    img = board.astype(np.float32)[:, :, None]
    save_image(img, tmp_path / "b.png")
    assert np.array_equal(load_image(tmp_path / "b.png"), img)


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "absent.png")


def test_load_rejects_16bit(tmp_path):
    Image.fromarray(np.zeros((4, 4), dtype=np.uint16)).save(tmp_path / "deep.png")
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "deep.png")


def test_load_rejects_palette(tmp_path):
    im = Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).convert("P")
    im.save(tmp_path / "pal.png")
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "pal.png")


def test_load_rejects_rgba(tmp_path):
    Image.fromarray(np.zeros((4, 4, 4), dtype=np.uint8)).save(tmp_path / "a.png")
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "a.png")


def test_load_rejects_garbage(tmp_path):
    (tmp_path / "junk.png").write_bytes(b"not a png at all")
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "junk.png")


def test_save_validations(tmp_path):
    with pytest.raises(ValueError):
        save_image(np.zeros((4, 4, 2)), tmp_path / "c2.png")
    with pytest.raises(ValueError):
        save_image(np.full((4, 4, 3), np.nan), tmp_path / "nan.png")


def test_save_clips_out_of_range(tmp_path):
    img = np.array([[[-0.5], [1.5]]], dtype=np.float32)
    save_image(img, tmp_path / "clip.png")
    assert np.array_equal(load_image(tmp_path / "clip.png")[..., 0], [[0.0, 1.0]])


def test_pad_to_valid_shapes():
    cfg = ModelConfig(base_channels=32, num_blocks=4, window_size=8)
    assert cfg.tile == 32
    img = np.zeros((60, 70, 3), dtype=np.float32)
    padded, rec = pad_to_valid(img, cfg)
    assert padded.shape == (64, 96, 3)
    assert rec == CropRecord(60, 70)
    assert unpad(padded, rec).shape == (60, 70, 3)


def test_pad_noop_when_aligned(rand_image):
    cfg = ModelConfig(window_size=8, num_blocks=2)  # tile 16
    img = rand_image((32, 48, 3), seed=2)
    padded, rec = pad_to_valid(img, cfg)
    assert padded.shape == img.shape
    assert np.array_equal(unpad(padded, rec), img)


def test_pad_reflects_without_repeating_edge(rand_image):
    cfg = ModelConfig(window_size=8, num_blocks=2)  # tile 16
    img = rand_image((14, 15, 1), seed=3)
    padded, rec = pad_to_valid(img, cfg)
    assert padded.shape == (16, 16, 1)
    h, w = 14, 15
    for y in range(padded.shape[0]):
        for x in range(padded.shape[1]):
            # mirror index: edge pixel not duplicated
            sy = y if y < h else 2 * (h - 1) - y
            sx = x if x < w else 2 * (w - 1) - x
            assert padded[y, x] == img[sy, sx], (y, x)
    assert np.array_equal(unpad(padded, rec), img)
