"""Global histogram thresholds: maximum entropy and triangle."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from follicount.raster import BitMask, GrayImage, Histogram


class Method(enum.Enum):
    MAX_ENTROPY = "MaxEntropy"
    TRIANGLE = "Triangle"


class Polarity(enum.Enum):
    DARK_FOREGROUND = "dark"
    LIGHT_FOREGROUND = "light"


class DegenerateHistogram(ValueError):
    """The histogram has fewer than two non-empty bins (constant image)."""


@dataclass(frozen=True)
class ThresholdLevel:
    level: int
    method: Method

    def __post_init__(self):
        if not 0 <= self.level <= 254:
            raise ValueError(f"threshold level {self.level} outside [0, 254]")


# Fast-path scores within this distance of the best are re-evaluated exactly.
_REFINE_WINDOW = 1e-6


def _require_two_levels(h: Histogram) -> np.ndarray:
    nz = h.nonempty()
    if nz.size < 2:
        raise DegenerateHistogram(f"histogram has {nz.size} non-empty bin(s); need at least 2")
    return nz


def _side_entropy(counts, total):
    # Counts are exact integers, so c/total is one correctly rounded division
    # and fsum is order independent: the result is reproducible bit for bit.
    terms = []
    for c in counts:
        if c:
            r = c / total
            terms.append(r * math.log(r))
    return -math.fsum(terms)


def split_entropy(bins, t: int) -> float:
    """Background plus foreground entropy for the split ``<= t | > t``."""
    below = [int(c) for c in bins[: t + 1]]
    above = [int(c) for c in bins[t + 1 :]]
    return _side_entropy(below, sum(below)) + _side_entropy(above, sum(above))


def max_entropy_threshold(h: Histogram) -> ThresholdLevel:
    """Maximum-entropy (Kapur) threshold.

    Candidate splits are those leaving mass on both sides. A vectorised
    cumulative form ranks all 255 splits; every split scoring within a small
    window of the best is then rescored with :func:`split_entropy`, so the
    answer is exactly the argmax of the direct per-split formula, smallest
    ``t`` on ties.
    """
    _require_two_levels(h)
    c = h.bins.astype(np.float64)
    n = c.sum()
    clnc = np.zeros_like(c)
    pos = c > 0
    clnc[pos] = c[pos] * np.log(c[pos])
    cum = np.cumsum(c)[:255]
    cum_s = np.cumsum(clnc)[:255]
    valid = (cum > 0) & (cum < n)
    rest = n - cum
    rest_s = clnc.sum() - cum_s
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.log(cum) - cum_s / cum + np.log(rest) - rest_s / rest
    score = np.where(valid, score, -np.inf)
    best = score.max()
    near = np.flatnonzero(score >= best - _REFINE_WINDOW)
    top_t, top_h = None, -math.inf
    for t in near:
        value = split_entropy(h.bins, int(t))
        if value > top_h:
            top_t, top_h = int(t), value
    return ThresholdLevel(top_t, Method.MAX_ENTROPY)


def triangle_threshold(h: Histogram) -> ThresholdLevel:
    """Triangle threshold on the peak-normalised histogram.

    The tail is the farthest non-empty bin on the longer side of the peak
    (the dark side when both spans are equal). The returned level ``t`` marks
    the split ``<= t | > t``; candidates keep both sides non-empty. The gap
    between the peak-to-tail line and the curve is evaluated in integer
    arithmetic; it is proportional to the perpendicular distance, so the
    argmax is exact. Ties go to the candidate nearest the peak.
    """
    nz = _require_two_levels(h)
    bins = h.bins.astype(np.int64)
    peak = int(np.argmax(bins))
    cp = int(bins[peak])
    lo, hi = int(nz[0]), int(nz[-1])
    if peak - lo >= hi - peak:
        tail = lo
        idx = np.arange(tail, peak)
        gap = (idx - tail) * cp - bins[tail:peak] * (peak - tail)
        # nearest the peak = largest index among maxima
        t = int(idx[len(idx) - 1 - int(np.argmax(gap[::-1]))])
    else:
        tail = hi
        idx = np.arange(peak, tail)
        gap = (tail - idx) * cp - bins[peak:tail] * (tail - peak)
        t = int(idx[int(np.argmax(gap))])
    return ThresholdLevel(t, Method.TRIANGLE)


def binarize(img: GrayImage, t: ThresholdLevel, polarity: Polarity = Polarity.DARK_FOREGROUND) -> BitMask:
    if polarity is Polarity.DARK_FOREGROUND:
        return BitMask(img.pixels <= t.level)
    return BitMask(img.pixels > t.level)
