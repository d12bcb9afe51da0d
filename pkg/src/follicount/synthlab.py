"""Seeded synthetic PCNA-look micrographs with exact ground truth.

Appearance model: blue-grey extracellular matrix, lighter-brown stroma
nuclei, very dark brown follicle nuclei inside an almost unstained zona
pellucida, and pale elongated vessel lumens. Follicles and vessels are
rimmed by a thin layer of stroma-coloured cells, which is what separates
their pale interiors from the matrix after thresholding.

Object placement draws from ``numpy.random.default_rng(seed)``; pixel noise
comes from a counter-based integer hash of ``(seed, x, y, channel)``, so the
image does not depend on evaluation order or thread count.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from follicount.raster import RasterImage, save_image
from follicount.settings import Magnification


class PlacementError(RuntimeError):
    pass


class ObjectKind(enum.Enum):
    NGF = "NGF"
    ZP_ONLY = "ZPOnly"
    ISOLATED_NUCLEUS = "IsolatedNucleus"
    VESSEL = "Vessel"
    STROMA_NUCLEUS = "StromaNucleus"


FOLLICLE_KINDS = (ObjectKind.NGF, ObjectKind.ZP_ONLY)

DEFAULT_PALETTE = {
    "background": ((178, 178, 214), 8),
    "stroma": ((124, 94, 74), 10),
    "ngf": ((58, 44, 40), 6),
    "zp": ((232, 228, 222), 6),
    "vessel": ((226, 224, 230), 6),
}


@dataclass(frozen=True)
class Geometry:
    nucleus_radius: tuple[float, float]
    zp_radius: tuple[float, float]
    rim_width: float
    stroma_axes: tuple[tuple[float, float], tuple[float, float]]  # (semi-major range, semi-minor range)
    vessel_minor: tuple[float, float]
    vessel_aspect: tuple[float, float]
    spacing: float  # clearance kept between distinct objects


GEOMETRY = {
    Magnification.X200: Geometry(
        nucleus_radius=(8.0, 14.0),
        zp_radius=(22.0, 34.0),
        rim_width=5.0,
        stroma_axes=((5.0, 9.0), (2.0, 3.5)),
        vessel_minor=(6.0, 10.0),
        vessel_aspect=(4.0, 6.0),
        spacing=10.0,
    ),
    Magnification.X100: Geometry(
        nucleus_radius=(4.0, 7.0),
        zp_radius=(11.0, 17.0),
        rim_width=2.5,
        stroma_axes=((2.5, 4.5), (1.0, 1.75)),
        vessel_minor=(3.0, 5.0),
        vessel_aspect=(4.0, 6.0),
        spacing=5.0,
    ),
}


@dataclass(frozen=True)
class SynthParams:
    width: int = 640
    height: int = 512
    magnification: Magnification = Magnification.X200
    ngf: tuple[int, int] = (2, 6)
    zp_only: tuple[int, int] = (0, 2)
    isolated_nuclei: tuple[int, int] = (1, 3)
    vessels: tuple[int, int] = (0, 2)
    stroma_per_mpx: tuple[int, int] = (300, 600)
    palette: dict = field(default_factory=lambda: dict(DEFAULT_PALETTE))
    noise: float = 4.0
    seed: int = 0
    retries: int = 200

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("canvas must be at least 1x1")
        for name in ("ngf", "zp_only", "isolated_nuclei", "vessels", "stroma_per_mpx"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name}: need 0 <= min <= max")
        for key, (rgb, jitter) in self.palette.items():
            if any(not 0 <= v <= 255 for v in rgb) or jitter < 0:
                raise ValueError(f"palette entry {key!r} out of range")
        if self.noise < 0:
            raise ValueError("noise amplitude must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def geometry(self) -> Geometry:
        return GEOMETRY[Magnification(self.magnification)]

    def replace(self, **changes) -> "SynthParams":
        return dataclasses.replace(self, **changes)

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["magnification"] = int(self.magnification)
        d["palette"] = {k: {"rgb": list(rgb), "jitter": j} for k, (rgb, j) in self.palette.items()}
        for k in ("ngf", "zp_only", "isolated_nuclei", "vessels", "stroma_per_mpx"):
            d[k] = list(d[k])
        return d


def default_params(mag=Magnification.X200, **changes) -> SynthParams:
    mag = Magnification(mag)
    if mag is Magnification.X100:
        # no ZP branch at 100x: ZP-only profiles and lone nuclei are not
        # distinguishable there, so the default scene omits them
        base = SynthParams(magnification=mag, ngf=(5, 17), zp_only=(0, 0), isolated_nuclei=(0, 0), vessels=(0, 3),
                           stroma_per_mpx=(1200, 2400))
    else:
        base = SynthParams(magnification=mag)
    return base.replace(**changes)


@dataclass(frozen=True)
class SynthObject:
    kind: ObjectKind
    center: tuple[float, float]
    nucleusRadius: float = 0.0
    zpOuterRadius: float = 0.0
    orientation: float = 0.0
    # outer semi-axes for ellipses (vessels including their rim, stroma nuclei)
    axes: tuple[float, float] = (0.0, 0.0)
    # width of the stroma-coloured rim around a ZP or vessel lumen
    rim: float = 0.0

    @property
    def extent(self) -> float:
        if self.kind in (ObjectKind.VESSEL, ObjectKind.STROMA_NUCLEUS):
            return self.axes[0]
        if self.zpOuterRadius:
            return self.zpOuterRadius + self.rim
        return self.nucleusRadius

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "center": [round(self.center[0], 6), round(self.center[1], 6)],
            "nucleusRadius": round(self.nucleusRadius, 6),
            "zpOuterRadius": round(self.zpOuterRadius, 6),
            "orientation": round(self.orientation, 6),
            "axes": [round(self.axes[0], 6), round(self.axes[1], 6)],
            "rim": round(self.rim, 6),
        }


@dataclass(frozen=True)
class SynthScene:
    width: int
    height: int
    magnification: Magnification
    seed: int
    objects: tuple

    def of_kind(self, *kinds) -> list:
        return [o for o in self.objects if o.kind in kinds]

    @property
    def follicles(self) -> list:
        return self.of_kind(*FOLLICLE_KINDS)

    def truth_counts(self) -> dict:
        return {
            "ngf": len(self.of_kind(ObjectKind.NGF)),
            "zpOnly": len(self.of_kind(ObjectKind.ZP_ONLY)),
            "isolatedNuclei": len(self.of_kind(ObjectKind.ISOLATED_NUCLEUS)),
            "vessels": len(self.of_kind(ObjectKind.VESSEL)),
        }

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "magnification": int(self.magnification),
            "seed": self.seed,
            "objects": [o.to_json() for o in self.objects],
        }


# -- counter-based noise -----------------------------------------------------

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


# standard deviation of a sum of four independent uniform 16-bit integers
_IH_SD = 37837


def pixel_noise(seed: int, width: int, height: int, amplitude: float) -> np.ndarray:
    """Integer, approximately Gaussian noise of the given standard deviation.

    Each value is a pure function of ``(seed, x, y, channel)``: four 16-bit
    lanes of one splitmix64 hash are summed (Irwin-Hall) and rescaled with
    integer arithmetic only.
    """
    ys, xs = np.mgrid[0:height, 0:width]
    ch = np.arange(3, dtype=np.uint64)
    key = ((ys.astype(np.uint64) << np.uint64(32)) | xs.astype(np.uint64))[..., None] * np.uint64(4) + ch
    with np.errstate(over="ignore"):
        h = _splitmix64(key ^ _splitmix64(np.full(1, seed, dtype=np.uint64)))
    mask = np.uint64(0xFFFF)
    s = sum(((h >> np.uint64(16 * k)) & mask).astype(np.int64) for k in range(4)) - 2 * 65535
    amp_q = int(round(amplitude * 1024))
    # floor division of exact integers, then symmetric about zero
    scaled = s * amp_q
    return np.sign(scaled) * ((np.abs(scaled) + _IH_SD * 512) // (_IH_SD * 1024))


# -- painting ----------------------------------------------------------------


def _window(canvas, cx, cy, reach):
    h, w = canvas.shape[:2]
    x0, x1 = max(int(math.floor(cx - reach)), 0), min(int(math.ceil(cx + reach)) + 1, w)
    y0, y1 = max(int(math.floor(cy - reach)), 0), min(int(math.ceil(cy + reach)) + 1, h)
    if x0 >= x1 or y0 >= y1:
        return None
    ys, xs = np.mgrid[y0:y1, x0:x1]
    return (slice(y0, y1), slice(x0, x1)), xs - cx, ys - cy


def _blend(canvas, sl, alpha, rgb):
    a = alpha[..., None]
    canvas[sl] = canvas[sl] * (1.0 - a) + np.asarray(rgb, dtype=np.float64) * a


def paint_disc(canvas, cx, cy, radius, rgb):
    win = _window(canvas, cx, cy, radius + 1)
    if win is None:
        return
    sl, dx, dy = win
    alpha = np.clip(radius + 0.5 - np.hypot(dx, dy), 0.0, 1.0)
    _blend(canvas, sl, alpha, rgb)


def paint_ellipse(canvas, cx, cy, a, b, theta, rgb):
    win = _window(canvas, cx, cy, a + 1)
    if win is None:
        return
    sl, dx, dy = win
    c, s = math.cos(theta), math.sin(theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    q = np.sqrt((u / a) ** 2 + (v / b) ** 2)
    # (1 - q) * b approximates the signed distance to the rim, in pixels
    alpha = np.clip((1.0 - q) * b + 0.5, 0.0, 1.0)
    _blend(canvas, sl, alpha, rgb)


def _jittered(rng, entry):
    rgb, jitter = entry
    j = int(round(jitter))
    off = rng.integers(-j, j + 1, size=3) if j else np.zeros(3, dtype=np.int64)
    return tuple(int(np.clip(v + o, 0, 255)) for v, o in zip(rgb, off))


def _paint(canvas, obj, rng, p: SynthParams):
    pal = p.palette
    cx, cy = obj.center
    if obj.kind in (ObjectKind.NGF, ObjectKind.ZP_ONLY):
        paint_disc(canvas, cx, cy, obj.zpOuterRadius + obj.rim, _jittered(rng, pal["stroma"]))
        paint_disc(canvas, cx, cy, obj.zpOuterRadius, _jittered(rng, pal["zp"]))
        if obj.kind is ObjectKind.NGF:
            paint_disc(canvas, cx, cy, obj.nucleusRadius, _jittered(rng, pal["ngf"]))
    elif obj.kind is ObjectKind.ISOLATED_NUCLEUS:
        paint_disc(canvas, cx, cy, obj.nucleusRadius, _jittered(rng, pal["ngf"]))
    elif obj.kind is ObjectKind.VESSEL:
        a, b = obj.axes
        paint_ellipse(canvas, cx, cy, a, b, obj.orientation, _jittered(rng, pal["stroma"]))
        paint_ellipse(canvas, cx, cy, a - obj.rim, b - obj.rim, obj.orientation, _jittered(rng, pal["vessel"]))
    else:
        a, b = obj.axes
        paint_ellipse(canvas, cx, cy, a, b, obj.orientation, _jittered(rng, pal["stroma"]))


# -- placement ---------------------------------------------------------------


def _sample_object(kind, rng, g: Geometry) -> SynthObject:
    if kind is ObjectKind.NGF:
        rn = rng.uniform(*g.nucleus_radius)
        # keep the pale ring at least as wide as the nucleus radius
        rz = rng.uniform(max(g.zp_radius[0], 2 * rn), max(g.zp_radius[1], 2 * rn))
        return SynthObject(kind, (0.0, 0.0), nucleusRadius=rn, zpOuterRadius=rz, rim=g.rim_width)
    if kind is ObjectKind.ZP_ONLY:
        rz = rng.uniform(*g.zp_radius)
        return SynthObject(kind, (0.0, 0.0), zpOuterRadius=rz, rim=g.rim_width)
    if kind is ObjectKind.ISOLATED_NUCLEUS:
        return SynthObject(kind, (0.0, 0.0), nucleusRadius=rng.uniform(*g.nucleus_radius))
    if kind is ObjectKind.VESSEL:
        b = rng.uniform(*g.vessel_minor) + g.rim_width
        a = b * rng.uniform(*g.vessel_aspect)
        return SynthObject(kind, (0.0, 0.0), orientation=rng.uniform(0, math.pi), axes=(a, b), rim=g.rim_width)
    (amaj, amin) = g.stroma_axes
    return SynthObject(kind, (0.0, 0.0), orientation=rng.uniform(0, math.pi), axes=(rng.uniform(*amaj), rng.uniform(*amin)))


def _clear(obj, cx, cy, placed, spacing):
    for o in placed:
        if math.hypot(cx - o.center[0], cy - o.center[1]) < obj.extent + o.extent + spacing:
            return False
    return True


def _place(obj, rng, p, placed, spacing, strict):
    margin = obj.extent + 2
    lo_x, hi_x = margin, p.width - 1 - margin
    lo_y, hi_y = margin, p.height - 1 - margin
    if lo_x <= hi_x and lo_y <= hi_y:
        for _ in range(p.retries):
            cx, cy = rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)
            if _clear(obj, cx, cy, placed, spacing):
                return dataclasses.replace(obj, center=(float(cx), float(cy)))
    if strict:
        raise PlacementError(
            f"could not place {obj.kind.value} (extent {obj.extent:.1f}px) on "
            f"{p.width}x{p.height} canvas after {p.retries} tries"
        )
    return None


def generate_scene(p: SynthParams) -> tuple[RasterImage, SynthScene]:
    rng = np.random.default_rng(p.seed)
    g = p.geometry
    counts = {
        ObjectKind.NGF: int(rng.integers(p.ngf[0], p.ngf[1] + 1)),
        ObjectKind.ZP_ONLY: int(rng.integers(p.zp_only[0], p.zp_only[1] + 1)),
        ObjectKind.ISOLATED_NUCLEUS: int(rng.integers(p.isolated_nuclei[0], p.isolated_nuclei[1] + 1)),
        ObjectKind.VESSEL: int(rng.integers(p.vessels[0], p.vessels[1] + 1)),
    }
    density = int(rng.integers(p.stroma_per_mpx[0], p.stroma_per_mpx[1] + 1))
    n_stroma = int(round(density * p.width * p.height / 1e6))

    placed = []
    # largest first: packs better under the retry budget
    for kind in (ObjectKind.NGF, ObjectKind.ZP_ONLY, ObjectKind.VESSEL, ObjectKind.ISOLATED_NUCLEUS):
        for _ in range(counts[kind]):
            placed.append(_place(_sample_object(kind, rng, g), rng, p, placed, g.spacing, strict=True))
    stroma = []
    for _ in range(n_stroma):
        o = _place(_sample_object(ObjectKind.STROMA_NUCLEUS, rng, g), rng, p, placed, g.spacing, strict=False)
        if o is not None:
            stroma.append(o)

    canvas = np.empty((p.height, p.width, 3), dtype=np.float64)
    canvas[:] = _jittered(rng, p.palette["background"])
    for obj in stroma + placed:
        _paint(canvas, obj, rng, p)
    ints = np.floor(canvas + 0.5).astype(np.int64)
    ints += pixel_noise(p.seed, p.width, p.height, p.noise)
    img = RasterImage(np.clip(ints, 0, 255).astype(np.uint8))
    scene = SynthScene(p.width, p.height, Magnification(p.magnification), p.seed, tuple(placed + stroma))
    return img, scene


# -- corpora -----------------------------------------------------------------

MANIFEST = "manifest.json"


def corpus_name(index: int, mag) -> str:
    return f"synth_{int(mag)}x_{index:04d}.png"


def generate_corpus(p, n: int, directory) -> dict:
    """Write ``n`` scenes with seeds ``seed + i`` and a manifest.

    ``p`` is one :class:`SynthParams` or a sequence of them, used in turn
    (image ``i`` takes ``p[i % len(p)]`` with the first entry's seed as base).
    """
    plist = [p] if isinstance(p, SynthParams) else list(p)
    base = plist[0].seed
    os.makedirs(directory, exist_ok=True)
    images = []
    for i in range(n):
        q = plist[i % len(plist)].replace(seed=(base + i) % 2**64)
        img, scene = generate_scene(q)
        name = corpus_name(i, q.magnification)
        save_image(img, os.path.join(directory, name))
        with open(os.path.join(directory, name[:-4] + ".scene.json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(scene.to_json(), fh, indent=1)
            fh.write("\n")
        images.append({"file": name, "seed": q.seed, "magnification": int(q.magnification), "truth": scene.truth_counts()})
    manifest = {
        "images": images,
        "params": [q.to_json() for q in plist],
        "totals": {k: sum(im["truth"][k] for im in images) for k in ("ngf", "zpOnly", "isolatedNuclei", "vessels")},
    }
    with open(os.path.join(directory, MANIFEST), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return manifest


def load_manifest(directory) -> dict:
    with open(os.path.join(directory, MANIFEST), encoding="utf-8") as fh:
        return json.load(fh)


def load_scene(path) -> SynthScene:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    objs = tuple(
        SynthObject(
            ObjectKind(o["kind"]),
            tuple(o["center"]),
            o["nucleusRadius"],
            o["zpOuterRadius"],
            o["orientation"],
            tuple(o.get("axes", (0.0, 0.0))),
            o.get("rim", 0.0),
        )
        for o in d["objects"]
    )
    return SynthScene(d["width"], d["height"], Magnification(d["magnification"]), d["seed"], objs)


def default_corpus_params(seed: int = 0) -> list:
    """Alternating 200x / 100x scenes."""
    return [default_params(Magnification.X200, seed=seed), default_params(Magnification.X100, seed=seed)]


# -- scoring -----------------------------------------------------------------


def score_detections(dets, truth: SynthScene, match_radius: float):
    """Greedy nearest-first one-to-one matching of detections to follicles.

    Returns ``(precision, recall, pairs)`` with pairs as ``(det_index,
    truth_index)`` into ``dets`` and ``truth.follicles``. Empty denominators
    score 1.
    """
    if match_radius <= 0:
        raise ValueError("match_radius must be positive")
    truths = truth.follicles
    cand = []
    for i, d in enumerate(dets):
        for j, t in enumerate(truths):
            dist = math.dist(d.center, t.center)
            if dist <= match_radius:
                cand.append((dist, t.center, d.center, j, i))
    # break distance ties on coordinates, not input order
    cand.sort(key=lambda c: (c[0], c[1], c[2], c[3]))
    used_d, used_t, pairs = set(), set(), []
    for dist, _, _, j, i in cand:
        if i in used_d or j in used_t:
            continue
        used_d.add(i)
        used_t.add(j)
        pairs.append((i, j))
    precision = len(pairs) / len(dets) if dets else 1.0
    recall = len(pairs) / len(truths) if truths else 1.0
    return precision, recall, sorted(pairs, key=lambda p: p[1])
