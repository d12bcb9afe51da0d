import math

import numpy as np
import pytest

from follicount.raster import BitMask, RasterImage
from follicount.settings import load_profiles, profile_pair
from follicount.synthlab import default_params, generate_scene

NO_OBJECTS = dict(ngf=(0, 0), zp_only=(0, 0), isolated_nuclei=(0, 0), vessels=(0, 0))


def directed_scene(mag=200, seed=0, size=200, **counts):
    """A small scene holding exactly the requested objects (plus stroma)."""
    p = default_params(mag, width=size, height=size, seed=seed, **{**NO_OBJECTS, **counts})
    return generate_scene(p)


def disc_mask(r, size=None, cx=None, cy=None):
    size = size or 2 * int(r) + 5
    cx = size // 2 if cx is None else cx
    cy = size // 2 if cy is None else cy
    yy, xx = np.mgrid[:size, :size]
    return BitMask((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r)


def ellipse_mask(a, b, theta, size=160):
    yy, xx = np.mgrid[:size, :size].astype(float)
    c = (size - 1) / 2
    x, y = xx - c, yy - c
    u = x * math.cos(theta) + y * math.sin(theta)
    v = -x * math.sin(theta) + y * math.cos(theta)
    return BitMask((u / a) ** 2 + (v / b) ** 2 <= 1)


def solid(h, w, rgb):
    px = np.empty((h, w, 3), dtype=np.uint8)
    px[:] = rgb
    return RasterImage(px)


@pytest.fixture(scope="session")
def profiles():
    return load_profiles()


@pytest.fixture(scope="session")
def pair200(profiles):
    return profile_pair(profiles, 200)


@pytest.fixture(scope="session")
def pair100(profiles):
    return profile_pair(profiles, 100)


# -- acceptance summary ---------------------------------------------------------

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
