import numpy as np
import pytest
from PIL import Image

from follicount.raster import (
    BitMask,
    GrayImage,
    Histogram,
    ImageFormatError,
    RasterImage,
    histogram,
    load_image,
    save_image,
    to_gray,
)


def test_gray_weights_round_half_up():
    px = np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 255], [255, 255, 255], [10, 20, 30]]], dtype=np.uint8)
    g = to_gray(RasterImage(px)).pixels[0].tolist()
    # 0.299*255 = 76.245, 0.587*255 = 149.685, 0.114*255 = 29.07
    assert g == [76, 150, 29, 255, 18]


def test_histogram_counts_every_pixel():
    g = GrayImage(np.array([[0, 0, 255], [7, 7, 7]], dtype=np.uint8))
    h = histogram(g)
    assert h.total == 6
    assert h.bins[0] == 2 and h.bins[7] == 3 and h.bins[255] == 1
    assert h.nonempty().tolist() == [0, 7, 255]


def test_types_validate_shape():
    with pytest.raises(ValueError):
        RasterImage(np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(ValueError):
        Histogram(np.zeros(10, dtype=np.int64))
    assert BitMask(np.eye(3, dtype=bool)).count() == 3


def test_png_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    img = RasterImage(rng.integers(0, 256, (9, 13, 3), dtype=np.uint8))
    save_image(img, tmp_path / "a.png")
    back = load_image(tmp_path / "a.png")
    assert back == img and back.width == 13 and back.height == 9


def test_tiff_lzw_and_raw_load(tmp_path):
    arr = np.arange(4 * 5 * 3, dtype=np.uint8).reshape(4, 5, 3)
    for comp in ("raw", "tiff_lzw"):
        path = tmp_path / f"{comp}.tif"
        Image.fromarray(arr).save(path, compression=comp)
        assert np.array_equal(load_image(path).pixels, arr)


def test_grayscale_png_is_expanded(tmp_path):
    Image.fromarray(np.full((3, 3), 90, dtype=np.uint8), mode="L").save(tmp_path / "g.png")
    assert load_image(tmp_path / "g.png").pixels[0, 0].tolist() == [90, 90, 90]


def test_bad_inputs(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "missing.png")
    (tmp_path / "junk.png").write_bytes(b"not an image")
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "junk.png")
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(tmp_path / "x.jpg")
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "x.jpg")
