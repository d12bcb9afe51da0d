"""Overlay rendering of pipeline stages onto the source image.

Palette (RGB):

=============  ===============  =========================================
stage          colour           what is painted
=============  ===============  =========================================
threshold      (255, 0, 255)    foreground of the dark mask, 50% blend
nuclei         (0, 255, 255)    outer contours of nucleus candidates
zp             (255, 255, 0)    outer contours of ZP candidates
final          (0, 255, 0)      one plus-shaped marker per detection,
                                drawn over the contours of its regions
=============  ===============  =========================================

A legend strip of the four swatches occupies the top-left
``LEGEND_SIZE`` pixels of every overlay.
"""

from __future__ import annotations

import enum

import numpy as np

from follicount.raster import RasterImage

MASK_COLOR = (255, 0, 255)
NUCLEUS_COLOR = (0, 255, 255)
ZP_COLOR = (255, 255, 0)
MARKER_COLOR = (0, 255, 0)
MARKER_ARM = 5
_SWATCH = 8
LEGEND_SIZE = (4 * _SWATCH + 2, _SWATCH + 2)  # (width, height)


class Stage(enum.Enum):
    THRESHOLD = "threshold"
    NUCLEI = "nuclei"
    ZP = "zp"
    FINAL = "final"


def _paint_points(px, pts, color):
    h, w = px.shape[:2]
    pts = np.asarray(pts)
    if pts.size == 0:
        return
    keep = (pts[:, 0] >= 0) & (pts[:, 0] < w) & (pts[:, 1] >= 0) & (pts[:, 1] < h)
    pts = pts[keep]
    px[pts[:, 1], pts[:, 0]] = color


def _marker_points(center):
    cx, cy = int(np.floor(center[0] + 0.5)), int(np.floor(center[1] + 0.5))
    arm = np.arange(-MARKER_ARM, MARKER_ARM + 1)
    horiz = np.column_stack([cx + arm, np.full_like(arm, cy)])
    vert = np.column_stack([np.full_like(arm, cx), cy + arm])
    return np.vstack([horiz, vert])


def _legend(px):
    w, h = LEGEND_SIZE
    px[: min(h, px.shape[0]), : min(w, px.shape[1])] = 0
    for i, color in enumerate((MASK_COLOR, NUCLEUS_COLOR, ZP_COLOR, MARKER_COLOR)):
        x0 = 1 + i * _SWATCH
        px[1 : 1 + _SWATCH, x0 : x0 + _SWATCH - 1] = color


def render_overlay(img: RasterImage, dets, stage=Stage.FINAL, trace=None) -> RasterImage:
    """Copy of ``img`` with one pipeline stage painted in.

    ``threshold``, ``nuclei`` and ``zp`` need the :class:`~follicount.detector.Trace`
    of the run; ``final`` only needs the detections.
    """
    stage = Stage(stage)
    px = img.pixels.copy()
    if stage is Stage.THRESHOLD:
        if trace is None:
            raise ValueError("threshold overlay needs the pipeline trace")
        ev = trace.evidence
        if ev.dark is not None:
            m = ev.dark.bits
            blended = (px[m].astype(np.uint16) + np.array(MASK_COLOR, dtype=np.uint16)) // 2
            px[m] = blended.astype(np.uint8)
    elif stage is Stage.NUCLEI:
        if trace is None:
            raise ValueError("nuclei overlay needs the pipeline trace")
        for c in trace.nuclei:
            _paint_points(px, c.region.boundary, NUCLEUS_COLOR)
    elif stage is Stage.ZP:
        if trace is None:
            raise ValueError("zp overlay needs the pipeline trace")
        for c in trace.zps:
            _paint_points(px, c.region.boundary, ZP_COLOR)
    else:
        for d in dets:
            if d.zp is not None:
                _paint_points(px, d.zp.region.boundary, ZP_COLOR)
            if d.nucleus is not None:
                _paint_points(px, d.nucleus.region.boundary, NUCLEUS_COLOR)
        for d in dets:
            _paint_points(px, _marker_points(d.center), MARKER_COLOR)
    _legend(px)
    return RasterImage(px)
