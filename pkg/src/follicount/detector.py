"""The 200x and 100x follicle pipelines and the nucleus/ZP classification.

Each pipeline splits into two halves. ``gather_*`` does the parameter-free
work on an image (gray plane, global threshold, component labelling) and
returns an :class:`Evidence`; ``classify_*`` applies one
:class:`DetectionSettings` to it. Running the conservative and liberal
profiles therefore thresholds and labels the image only once, and both
profiles see identical regions.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from follicount import chromatics
from follicount.census import ImageCount
from follicount.chromatics import ChannelStats
from follicount.raster import BitMask, RasterImage, histogram, to_gray
from follicount.regions import Region, ShapeDescriptors, convex_hull, label_components
from follicount.settings import DetectionSettings, Magnification, SettingsError, check_pair
from follicount.threshold import (
    DegenerateHistogram,
    Polarity,
    ThresholdLevel,
    binarize,
    max_entropy_threshold,
    triangle_threshold,
)

log = logging.getLogger(__name__)


class CandidateKind(enum.Enum):
    NUCLEUS = "nucleus"
    ZONA_PELLUCIDA = "zp"


class DetectionKind(enum.Enum):
    NUCLEUS_WITH_ZP = "nucleus+zp"
    ZP_ONLY = "zp-only"


@dataclass(frozen=True, eq=False)
class Candidate:
    kind: CandidateKind
    region: Region
    stats: ChannelStats
    shape: ShapeDescriptors


@dataclass(frozen=True, eq=False)
class FollicleDetection:
    kind: DetectionKind
    center: tuple[float, float]
    nucleus: Optional[Candidate] = None
    zp: Optional[Candidate] = None

    def __post_init__(self):
        if self.nucleus is None and self.zp is None:
            raise ValueError("a detection needs a nucleus or a ZP")
        if self.kind is DetectionKind.ZP_ONLY and (self.zp is None or self.nucleus is not None):
            raise ValueError("ZP-only detection must carry exactly a ZP")
        # 100x detections have a nucleus and no ZP evidence
        if self.kind is DetectionKind.NUCLEUS_WITH_ZP and self.nucleus is None:
            raise ValueError("nucleus-with-ZP detection must carry a nucleus")


@dataclass(eq=False)
class Evidence:
    """Parameter-free intermediate products of one image."""

    image: RasterImage
    magnification: Magnification
    threshold: Optional[ThresholdLevel]
    dark: Optional[BitMask] = None
    light: Optional[BitMask] = None
    dark_regions: list = field(default_factory=list)
    light_regions: list = field(default_factory=list)
    _stats: dict = field(default_factory=dict, repr=False)
    _hulls: dict = field(default_factory=dict, repr=False)

    @property
    def degenerate(self) -> bool:
        return self.threshold is None

    def stats(self, r: Region) -> ChannelStats:
        key = id(r)
        if key not in self._stats:
            self._stats[key] = chromatics.channel_stats(self.image, r)
        return self._stats[key]

    def hull(self, r: Region) -> np.ndarray:
        key = id(r)
        if key not in self._hulls:
            self._hulls[key] = np.array(convex_hull(r.boundary), dtype=np.float64)
        return self._hulls[key]


@dataclass(eq=False)
class Trace:
    """Everything one profile produced on one image, for overlays and audits."""

    evidence: Evidence
    settings: DetectionSettings
    nuclei: list
    zps: list
    detections: list
    # regions surviving each successive filter, keyed by filter name
    stages: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.detections)


# -- predicates, shared by the pipelines and by post hoc audits --------------


def _in_range(value, bounds):
    return bounds[0] <= value <= bounds[1]


def nucleus_shape_ok(d: ShapeDescriptors, s: DetectionSettings) -> bool:
    return d.aspectRatio <= s.max_aspect_ratio and d.modRatio >= s.min_mod_ratio and d.sphericity >= s.min_sphericity


def zp_shape_ok(d: ShapeDescriptors, s: DetectionSettings) -> bool:
    return d.circularity >= s.min_circularity_zp


def zp_color_ok(st: ChannelStats, s: DetectionSettings) -> bool:
    return chromatics.blue_average_not_low(st, s.min_blue_mean_zp) and not chromatics.is_background(st)


def particle_shape_ok_100(d: ShapeDescriptors, s: DetectionSettings) -> bool:
    return (
        d.compactness >= s.min_compactness_100
        and d.circularity >= s.min_circularity_100
        and d.aspectRatio <= s.max_aspect_ratio_100
    )


def candidate_ok(c: Candidate, s: DetectionSettings) -> bool:
    """Re-check a stored candidate against every filter of its kind."""
    if c.kind is CandidateKind.ZONA_PELLUCIDA:
        return _in_range(c.region.pixelCount, s.zp_area) and zp_shape_ok(c.shape, s) and zp_color_ok(c.stats, s)
    if s.magnification is Magnification.X200:
        return (
            _in_range(c.region.pixelCount, s.nucleus_area)
            and nucleus_shape_ok(c.shape, s)
            and chromatics.blue_fraction_ok(c.stats, s.max_blue_mean)
        )
    return (
        _in_range(c.region.pixelCount, s.nucleus_area)
        and particle_shape_ok_100(c.shape, s)
        and chromatics.is_dark_brown(c.stats, s.brown_median_limits)
    )


# -- evidence ----------------------------------------------------------------


def _gather(img: RasterImage, mag: Magnification, method, light: bool) -> Evidence:
    gray = to_gray(img)
    try:
        t = method(histogram(gray))
    except DegenerateHistogram:
        log.warning("constant image: no threshold, reporting zero regions")
        return Evidence(img, mag, None)
    dark = binarize(gray, t, Polarity.DARK_FOREGROUND)
    ev = Evidence(img, mag, t, dark=dark, dark_regions=label_components(dark))
    if light:
        ev.light = binarize(gray, t, Polarity.LIGHT_FOREGROUND)
        ev.light_regions = label_components(ev.light)
    return ev


def gather_200(img: RasterImage) -> Evidence:
    return _gather(img, Magnification.X200, max_entropy_threshold, light=True)


def gather_100(img: RasterImage) -> Evidence:
    return _gather(img, Magnification.X100, triangle_threshold, light=False)


def gather(img: RasterImage, mag) -> Evidence:
    return gather_200(img) if Magnification(mag) is Magnification.X200 else gather_100(img)


# -- classification ----------------------------------------------------------


def _require_mag(s: DetectionSettings, mag: Magnification):
    if s.magnification is not mag:
        raise SettingsError(f"{s.key} profile used on a {int(mag)}x pipeline")


def _nucleus_candidates_200(ev: Evidence, s: DetectionSettings) -> list:
    out = []
    for r in ev.dark_regions:
        if not _in_range(r.pixelCount, s.nucleus_area):
            continue
        d = r.descriptors
        if not nucleus_shape_ok(d, s):
            continue
        st = ev.stats(r)
        if chromatics.blue_fraction_ok(st, s.max_blue_mean):
            out.append(Candidate(CandidateKind.NUCLEUS, r, st, d))
    return out


def _zp_candidates(ev: Evidence, s: DetectionSettings) -> list:
    out = []
    for r in ev.light_regions:
        if not _in_range(r.pixelCount, s.zp_area):
            continue
        d = r.descriptors
        if not zp_shape_ok(d, s):
            continue
        st = ev.stats(r)
        if zp_color_ok(st, s):
            out.append(Candidate(CandidateKind.ZONA_PELLUCIDA, r, st, d))
    return out


def _inside_convex(hull: np.ndarray, p) -> bool:
    if len(hull) < 3:
        return False
    a = hull
    b = np.roll(hull, -1, axis=0)
    cross = (b[:, 0] - a[:, 0]) * (p[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (p[0] - a[:, 0])
    return bool((cross >= 0).all() or (cross <= 0).all())


def _pairs_with(nucleus: Candidate, zp: Candidate, hull: np.ndarray, radius: float) -> bool:
    p = nucleus.region.centroid
    if _inside_convex(hull, p):
        return True
    b = zp.region.boundary
    d2 = (b[:, 0] - p[0]) ** 2 + (b[:, 1] - p[1]) ** 2
    return bool(d2.min() <= radius * radius)


def associate_nuclei_zp(nuclei, zps, radius: float, hull_of=None) -> list:
    """One detection per ZP; paired nuclei upgrade it, unpaired nuclei vanish."""
    dets = []
    for zp in zps:
        hull = hull_of(zp.region) if hull_of else np.array(convex_hull(zp.region.boundary), dtype=np.float64)
        zx, zy = zp.region.centroid
        paired = [n for n in nuclei if _pairs_with(n, zp, hull, radius)]
        if paired:
            best = min(paired, key=lambda n: (math.dist(n.region.centroid, (zx, zy)), n.region.label))
            dets.append(FollicleDetection(DetectionKind.NUCLEUS_WITH_ZP, best.region.centroid, nucleus=best, zp=zp))
        else:
            dets.append(FollicleDetection(DetectionKind.ZP_ONLY, (zx, zy), zp=zp))
    return dets


def classify_200(ev: Evidence, s: DetectionSettings) -> Trace:
    _require_mag(s, Magnification.X200)
    if ev.degenerate:
        return Trace(ev, s, [], [], [])
    nuclei = _nucleus_candidates_200(ev, s)
    zps = _zp_candidates(ev, s)
    dets = associate_nuclei_zp(nuclei, zps, s.association_radius, hull_of=ev.hull)
    stages = {"nuclei": [c.region for c in nuclei], "zp": [c.region for c in zps]}
    return Trace(ev, s, nuclei, zps, dets, stages)


def classify_100(ev: Evidence, s: DetectionSettings) -> Trace:
    _require_mag(s, Magnification.X100)
    if ev.degenerate:
        return Trace(ev, s, [], [], [])
    sized = [r for r in ev.dark_regions if _in_range(r.pixelCount, s.nucleus_area)]
    shaped = [r for r in sized if particle_shape_ok_100(r.descriptors, s)]
    nuclei = []
    for r in shaped:
        st = ev.stats(r)
        if chromatics.is_dark_brown(st, s.brown_median_limits):
            nuclei.append(Candidate(CandidateKind.NUCLEUS, r, st, r.descriptors))
    # no ZP branch at 100x: every surviving nucleus is one follicle
    dets = [FollicleDetection(DetectionKind.NUCLEUS_WITH_ZP, n.region.centroid, nucleus=n) for n in nuclei]
    stages = {"size": sized, "shape": shaped, "color": [n.region for n in nuclei]}
    return Trace(ev, s, nuclei, [], dets, stages)


def classify(ev: Evidence, s: DetectionSettings) -> Trace:
    return classify_200(ev, s) if ev.magnification is Magnification.X200 else classify_100(ev, s)


def detect_200(img: RasterImage, s: DetectionSettings) -> list:
    _require_mag(s, Magnification.X200)
    return classify_200(gather_200(img), s).detections


def detect_100(img: RasterImage, s: DetectionSettings) -> list:
    _require_mag(s, Magnification.X100)
    return classify_100(gather_100(img), s).detections


def run_profiles(img: RasterImage, mag, profiles) -> tuple[Trace, Trace]:
    con, lib = profiles
    check_pair(con, lib, mag)
    ev = gather(img, mag)
    return classify(ev, con), classify(ev, lib)


def count_image(img: RasterImage, mag, profiles, image_id: str = "") -> ImageCount:
    """Conservative and liberal counts of one image, and their mean."""
    con, lib = run_profiles(img, mag, profiles)
    return ImageCount(image_id, con.count, lib.count)
