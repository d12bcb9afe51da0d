"""Connected components and particle shape descriptors.

Components are stored run-length encoded: one ``(row, start, end)`` triple
per horizontal run, ``end`` inclusive. Geometry is computed in a frame local
to each region's bounding box, so every descriptor is exactly invariant
under integer translation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from follicount.raster import BitMask


class Connectivity(enum.Enum):
    FOUR = 4
    EIGHT = 8


class InvalidBounds(ValueError):
    pass


# Moore neighbourhood, clockwise on screen (y grows downwards), from west.
_DIRS = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))
_DIR_INDEX = {d: i for i, d in enumerate(_DIRS)}
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ShapeDescriptors:
    area: float
    perimeter: float
    feret: float
    breadth: float
    aspectRatio: float
    circularity: float
    compactness: float
    minR: float
    maxR: float
    sphericity: float
    modRatio: float


@dataclass(frozen=True, eq=False)
class Region:
    label: int
    rows: np.ndarray
    starts: np.ndarray
    ends: np.ndarray

    @cached_property
    def pixelCount(self) -> int:
        return int((self.ends - self.starts + 1).sum())

    @cached_property
    def bbox(self) -> tuple[int, int, int, int]:
        return (int(self.starts.min()), int(self.rows.min()), int(self.ends.max()), int(self.rows.max()))

    @property
    def origin(self) -> tuple[int, int]:
        return self.bbox[0], self.bbox[1]

    @cached_property
    def _local_centroid(self) -> tuple[float, float]:
        x0, y0 = self.origin
        s = (self.starts - x0).astype(np.float64)
        e = (self.ends - x0).astype(np.float64)
        n = e - s + 1
        sx = ((s + e) * n / 2.0).sum()
        sy = ((self.rows - y0) * n).sum()
        return sx / self.pixelCount, sy / self.pixelCount

    @property
    def centroid(self) -> tuple[float, float]:
        x0, y0 = self.origin
        cx, cy = self._local_centroid
        return cx + x0, cy + y0

    @property
    def pixels(self) -> np.ndarray:
        """All member coordinates as an ``(n, 2)`` array of ``(x, y)``."""
        xs = [np.arange(s, e + 1) for s, e in zip(self.starts, self.ends)]
        ys = [np.full(e - s + 1, r) for r, s, e in zip(self.rows, self.starts, self.ends)]
        return np.column_stack([np.concatenate(xs), np.concatenate(ys)])

    def local_mask(self, pad: int = 0) -> np.ndarray:
        x0, y0, x1, y1 = self.bbox
        m = np.zeros((y1 - y0 + 1 + 2 * pad, x1 - x0 + 1 + 2 * pad), dtype=bool)
        for r, s, e in zip(self.rows - y0 + pad, self.starts - x0 + pad, self.ends - x0 + pad):
            m[r, s : e + 1] = True
        return m

    @cached_property
    def _contour(self) -> tuple[np.ndarray, float]:
        return _trace_outer(self.local_mask(pad=1))

    @property
    def boundary(self) -> np.ndarray:
        """Ordered outer contour as ``(x, y)`` image coordinates."""
        x0, y0 = self.origin
        pts, _ = self._contour
        return pts + np.array([x0, y0])

    @cached_property
    def descriptors(self) -> ShapeDescriptors:
        return shape_descriptors(self)

    def translated(self, dx: int, dy: int) -> "Region":
        return Region(self.label, self.rows + dy, self.starts + dx, self.ends + dx)


def _runs(bits: np.ndarray):
    h, w = bits.shape
    padded = np.zeros((h, w + 2), dtype=np.int8)
    padded[:, 1:-1] = bits
    d = np.diff(padded, axis=1)
    rows, starts = np.nonzero(d == 1)
    _, stops = np.nonzero(d == -1)
    return rows, starts, stops - 1


class _DisjointSet:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        parent = self.parent
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller index wins: roots stay the earliest run in raster order
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


def _run_adjacency(rows, starts, ends, width, reach):
    """Pairs (current run, run in the row above) that touch.

    ``reach`` is 0 for 4-connectivity, 1 for 8-connectivity.
    """
    stride = width + 4
    key_s = rows * stride + starts
    key_e = rows * stride + ends
    cur = np.flatnonzero(rows > 0)
    above = rows[cur] - 1
    lo = np.searchsorted(key_e, above * stride + starts[cur] - reach, side="left")
    hi = np.searchsorted(key_s, above * stride + ends[cur] + reach, side="right")
    counts = np.maximum(hi - lo, 0)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    src = np.repeat(cur, counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    dst = np.repeat(lo, counts) + offsets
    return src, dst


def label_components(mask: BitMask, connectivity: Connectivity = Connectivity.EIGHT) -> list[Region]:
    """Run-length union-find labelling.

    Labels are ``1..N`` in raster order of each component's first pixel.
    """
    rows, starts, ends = _runs(mask.bits)
    n = rows.size
    if n == 0:
        return []
    reach = 1 if connectivity is Connectivity.EIGHT else 0
    src, dst = _run_adjacency(rows, starts, ends, mask.width, reach)
    ds = _DisjointSet(n)
    for a, b in zip(src.tolist(), dst.tolist()):
        ds.union(a, b)
    roots = np.fromiter((ds.find(i) for i in range(n)), dtype=np.int64, count=n)
    # roots are the earliest run of each component, so sorting them gives
    # raster order of first pixels
    uniq, inverse = np.unique(roots, return_inverse=True)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(uniq.size + 1))
    regions = []
    for k in range(uniq.size):
        sel = order[bounds[k] : bounds[k + 1]]
        regions.append(Region(k + 1, rows[sel], starts[sel], ends[sel]))
    return regions


def _trace_outer(m: np.ndarray):
    """Moore-neighbour tracing of the outer contour of a padded local mask.

    Returns contour points in unpadded local coordinates and the chain-code
    length (orthogonal steps 1, diagonal steps sqrt 2).
    """
    ys, xs = np.nonzero(m)
    # np.nonzero is row-major: first hit is the top-most, left-most pixel
    start = (int(xs[0]), int(ys[0]))
    pts = [start]
    length = 0.0
    cur = start
    back = 0  # came in from the west
    first_move = None
    while True:
        nxt = None
        for k in range(1, 9):
            d = (back + k) % 8
            dx, dy = _DIRS[d]
            if m[cur[1] + dy, cur[0] + dx]:
                nxt = (cur[0] + dx, cur[1] + dy)
                pdx, pdy = _DIRS[(back + k - 1) % 8]
                back = _DIR_INDEX[(cur[0] + pdx - nxt[0], cur[1] + pdy - nxt[1])]
                step = _SQRT2 if dx and dy else 1.0
                break
        if nxt is None:
            break  # isolated pixel
        if first_move is None:
            first_move = (cur, nxt)
        elif (cur, nxt) == first_move:
            break
        length += step
        pts.append(nxt)
        cur = nxt
    if len(pts) > 1 and pts[-1] == start:
        pts.pop()
    return np.array(pts, dtype=np.int64) - 1, length


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> list[tuple[int, int]]:
    """Monotone chain; returns hull vertices counter-clockwise (math axes)."""
    pts = sorted(set(map(tuple, np.asarray(points).tolist())))
    if len(pts) <= 2:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def rotating_calipers(hull) -> tuple[float, float]:
    """Maximum and minimum caliper extents of a convex polygon.

    Walks antipodal vertex pairs once around the hull. The minimum width is
    attained with one caliper flush against an edge; the maximum at an
    antipodal vertex pair.
    """
    h = len(hull)
    if h == 1:
        return 0.0, 0.0
    if h == 2:
        return math.dist(hull[0], hull[1]), 0.0
    best_d2 = 0
    min_w = math.inf
    j = 1
    for i in range(h):
        a, b = hull[i], hull[(i + 1) % h]
        while abs(_cross(a, b, hull[(j + 1) % h])) > abs(_cross(a, b, hull[j])):
            j = (j + 1) % h
        edge = math.dist(a, b)
        min_w = min(min_w, abs(_cross(a, b, hull[j])) / edge)
        for p in (a, b):
            q = hull[j]
            best_d2 = max(best_d2, (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2)
    return math.sqrt(best_d2), min_w


def shape_descriptors(r: Region) -> ShapeDescriptors:
    area = float(r.pixelCount)
    if r.pixelCount == 1:
        perimeter, feret, breadth, min_r, max_r = 4.0, 1.0, 1.0, 0.5, 0.5
    else:
        pts, perimeter = r._contour
        hull = convex_hull(pts)
        feret, breadth = rotating_calipers(hull)
        # a digital region is at least one pixel thick in every direction
        breadth = max(breadth, 1.0)
        feret = max(feret, breadth)
        cx, cy = r._local_centroid
        dist = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
        min_r = max(float(dist.min()), 0.5)
        max_r = max(float(dist.max()), min_r)
    return ShapeDescriptors(
        area=area,
        perimeter=perimeter,
        feret=feret,
        breadth=breadth,
        aspectRatio=feret / breadth,
        circularity=4.0 * math.pi * area / perimeter**2,
        compactness=math.sqrt(4.0 * area / math.pi) / feret,
        minR=min_r,
        maxR=max_r,
        sphericity=min_r / max_r,
        modRatio=2.0 * min_r / feret,
    )


def filter_by_size(regions, min_area, max_area=math.inf) -> list[Region]:
    if not 0 < min_area <= max_area:
        raise InvalidBounds(f"need 0 < min_area <= max_area, got [{min_area}, {max_area}]")
    return [r for r in regions if min_area <= r.pixelCount <= max_area]
