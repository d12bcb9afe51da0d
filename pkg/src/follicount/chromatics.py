"""Per-region colour statistics and the colour gates of the detectors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from follicount.raster import RasterImage
from follicount.regions import Region

CHANNELS = ("R", "G", "B")
# Median limits giving a very dark brown.
DARK_BROWN_LIMITS = (70, 60, 55)


class BoundsError(IndexError):
    pass


@dataclass(frozen=True)
class ChannelStats:
    mean: tuple[float, float, float]
    median: tuple[int, int, int]
    # excess kurtosis per channel; None where the channel has zero variance
    excessKurtosis: tuple[Optional[float], Optional[float], Optional[float]]
    count: int


def region_values(img: RasterImage, r: Region) -> np.ndarray:
    """``(n, 3)`` uint8 array of the region's pixel colours in raster order."""
    x0, y0, x1, y1 = r.bbox
    if x0 < 0 or y0 < 0 or x1 >= img.width or y1 >= img.height:
        raise BoundsError(f"region {r.label} bbox {r.bbox} outside {img.width}x{img.height} image")
    px = img.pixels
    return np.concatenate([px[y, s : e + 1] for y, s, e in zip(r.rows, r.starts, r.ends)])


def excess_kurtosis(values: np.ndarray) -> Optional[float]:
    """Population (Fisher) excess kurtosis ``m4 / m2**2 - 3``."""
    v = np.asarray(values, dtype=np.float64)
    d = v - v.mean()
    m2 = np.mean(d * d)
    if m2 == 0.0:
        return None
    m4 = np.mean(d**4)
    return float(m4 / (m2 * m2) - 3.0)


def stats_from_values(values: np.ndarray) -> ChannelStats:
    values = np.asarray(values)
    n = values.shape[0]
    srt = np.sort(values, axis=0)
    lower_median = srt[(n - 1) // 2]
    return ChannelStats(
        mean=tuple(float(m) for m in values.astype(np.float64).mean(axis=0)),
        median=tuple(int(m) for m in lower_median),
        excessKurtosis=tuple(excess_kurtosis(values[:, c]) for c in range(3)),
        count=n,
    )


def channel_stats(img: RasterImage, r: Region) -> ChannelStats:
    return stats_from_values(region_values(img, r))


def is_dark_brown(s: ChannelStats, limits=DARK_BROWN_LIMITS) -> bool:
    return all(m < lim for m, lim in zip(s.median, limits))


def is_background(s: ChannelStats) -> bool:
    kr, kg, _ = s.excessKurtosis
    positive = kr is not None and kr > 0 and kg is not None and kg > 0
    return not positive


def blue_fraction_ok(s: ChannelStats, max_blue_mean: float) -> bool:
    return s.mean[2] <= max_blue_mean


def blue_average_not_low(s: ChannelStats, min_blue_mean: float) -> bool:
    return s.mean[2] >= min_blue_mean
