"""Per-image processing and the parallel batch driver."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path

from follicount.census import CountRow, ImageCount, natural_key
from follicount.detector import run_profiles
from follicount.overlay import Stage, render_overlay
from follicount.raster import ImageFormatError, load_image, save_image

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".tif", ".tiff")


@dataclass(frozen=True)
class ImageResult:
    row: CountRow
    seconds: float


def image_id(path) -> str:
    return Path(path).stem


def list_images(directory) -> list[Path]:
    paths = [p for p in Path(directory).iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    return sorted(paths, key=lambda p: natural_key(p.stem))


def write_overlays(traces, img, out_dir, stem, panels=False):
    con, lib = traces
    os.makedirs(out_dir, exist_ok=True)
    for stage in Stage:
        save_image(render_overlay(img, lib.detections, stage, lib), os.path.join(out_dir, f"{stem}.liberal.{stage.value}.png"))
    save_image(render_overlay(img, con.detections, Stage.FINAL, con), os.path.join(out_dir, f"{stem}.conservative.final.png"))
    if panels:
        from follicount.plotting import panel_figure

        panel_figure(lib, os.path.join(out_dir, f"{stem}.liberal.panels.png"), title=f"{stem} (liberal)")
        panel_figure(con, os.path.join(out_dir, f"{stem}.conservative.panels.png"), title=f"{stem} (conservative)")


def process_image(path, mag, profiles, overlay_dir=None, panels=False) -> ImageResult:
    """Count one image under both profiles; decoding failures become error rows."""
    t0 = time.perf_counter()
    iid = image_id(path)
    try:
        img = load_image(path)
    except (ImageFormatError, OSError) as exc:
        log.error("%s: %s", path, exc)
        return ImageResult(CountRow(iid, error=f"{type(exc).__name__}: {exc}"), time.perf_counter() - t0)
    traces = run_profiles(img, mag, profiles)
    if overlay_dir is not None:
        write_overlays(traces, img, overlay_dir, iid, panels=panels)
    count = ImageCount(iid, traces[0].count, traces[1].count)
    return ImageResult(CountRow(iid, count), time.perf_counter() - t0)


def _job(args):
    return process_image(*args)


def run_batch(jobs, workers: int = 1) -> tuple[list, dict]:
    """Run ``(path, mag, profiles, overlay_dir, panels)`` jobs.

    Results come back sorted by image id whatever the completion order. At
    most ``2 * workers`` jobs are in flight at once.
    """
    jobs = list(jobs)
    t0 = time.perf_counter()
    results = []
    if workers <= 1 or len(jobs) <= 1:
        results = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            pending = set()
            it = iter(jobs)
            for j in it:
                pending.add(pool.submit(_job, j))
                if len(pending) >= 2 * workers:
                    done, pending = wait(pending, return_when=FIRST_COMPLETED)
                    results.extend(f.result() for f in done)
            results.extend(f.result() for f in pending)
    results.sort(key=lambda r: natural_key(r.row.imageId))
    wall = time.perf_counter() - t0
    timing = {
        "workers": workers,
        "images": len(results),
        "wall_seconds": round(wall, 6),
        "per_image_seconds": {r.row.imageId: round(r.seconds, 6) for r in results},
        "mean_image_seconds": round(sum(r.seconds for r in results) / len(results), 6) if results else 0.0,
    }
    return results, timing
