"""Pixel planes: RGB rasters, gray planes, bit masks and 256-bin histograms.

Decoding goes through Pillow. TIFF is accepted on input only; every output
is written as 8-bit RGB PNG.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

# Rec.601 luma weights.
LUMA = (0.299, 0.587, 0.114)

_ACCEPTED_FORMATS = {"TIFF", "PNG"}
_ACCEPTED_MODES = {"RGB", "RGBA", "RGBX", "L", "LA", "P"}


class ImageFormatError(ValueError):
    """Raised when a file decodes but is not an acceptable 8-bit RGB raster."""


def _check_plane(pixels, ndim, name):
    if pixels.dtype != np.uint8:
        raise TypeError(f"{name} pixels must be uint8, got {pixels.dtype}")
    if pixels.ndim != ndim:
        raise ValueError(f"{name} pixels must have {ndim} dimensions, got {pixels.ndim}")
    if pixels.shape[0] < 1 or pixels.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1, got {pixels.shape[1]}x{pixels.shape[0]}")


@dataclass(frozen=True, eq=False)
class RasterImage:
    """RGB image stored as an (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        _check_plane(self.pixels, 3, "RasterImage")
        if self.pixels.shape[2] != 3:
            raise ValueError("RasterImage needs exactly 3 channels")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def copy(self) -> "RasterImage":
        return RasterImage(self.pixels.copy())

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class GrayImage:
    pixels: np.ndarray

    def __post_init__(self):
        _check_plane(self.pixels, 2, "GrayImage")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class BitMask:
    bits: np.ndarray

    def __post_init__(self):
        if self.bits.dtype != bool or self.bits.ndim != 2:
            raise TypeError("BitMask bits must be a 2-D boolean array")

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True, eq=False)
class Histogram:
    bins: np.ndarray  # 256 int64 counts

    def __post_init__(self):
        if self.bins.shape != (256,):
            raise ValueError("Histogram must have exactly 256 bins")
        if (self.bins < 0).any():
            raise ValueError("Histogram counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.bins.sum())

    def nonempty(self) -> np.ndarray:
        return np.flatnonzero(self.bins)


def load_image(path) -> RasterImage:
    """Decode a TIFF or PNG file into an RGB raster, discarding any alpha."""
    path = os.fspath(path)
    try:
        with Image.open(path) as im:
            if im.format not in _ACCEPTED_FORMATS:
                raise ImageFormatError(f"{path}: unsupported container format {im.format!r}")
            if im.mode not in _ACCEPTED_MODES:
                raise ImageFormatError(f"{path}: unsupported pixel mode {im.mode!r} (need 8 bits per channel)")
            if im.format == "TIFF":
                compression = im.info.get("compression", "raw")
                if compression not in ("raw", "tiff_lzw"):
                    raise ImageFormatError(f"{path}: unsupported TIFF compression {compression!r}")
            rgb = im.convert("RGB")
            pixels = np.asarray(rgb, dtype=np.uint8).copy()
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a decodable TIFF or PNG") from exc
    except (FileNotFoundError, PermissionError, IsADirectoryError):
        raise
    except OSError as exc:
        raise ImageFormatError(f"{path}: corrupt image data ({exc})") from exc
    return RasterImage(pixels)


def save_image(img: RasterImage, path) -> None:
    Image.fromarray(img.pixels, mode="RGB").save(os.fspath(path), format="PNG")


def to_gray(img: RasterImage) -> GrayImage:
    rgb = img.pixels.astype(np.float64)
    y = LUMA[0] * rgb[..., 0] + LUMA[1] * rgb[..., 1] + LUMA[2] * rgb[..., 2]
    # floor(y + 0.5): half-up rounding, no banker's rounding at .5
    gray = np.floor(y + 0.5)
    return GrayImage(np.clip(gray, 0, 255).astype(np.uint8))


def histogram(img: GrayImage) -> Histogram:
    return Histogram(np.bincount(img.pixels.ravel(), minlength=256).astype(np.int64))
