"""Detection profiles: one parameter set per (magnification, strictness).

Profiles live in an INI file, one section per profile named
``<mag>x.<strictness>`` (e.g. ``200x.liberal``) plus a ``[profiles]``
section carrying ``profile_version``. Pairs are written ``min, max``.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import io
import math
import os
from dataclasses import dataclass
from importlib import resources

PROFILE_VERSION = 1
BUILTIN_PROFILES = "default"


class SettingsError(ValueError):
    pass


class Magnification(enum.IntEnum):
    X100 = 100
    X200 = 200


class Strictness(enum.Enum):
    CONSERVATIVE = "conservative"
    LIBERAL = "liberal"


@dataclass(frozen=True)
class DetectionSettings:
    magnification: Magnification
    strictness: Strictness
    nucleus_area: tuple[float, float]
    zp_area: tuple[float, float]
    max_aspect_ratio: float
    min_mod_ratio: float
    min_sphericity: float
    max_blue_mean: float
    min_blue_mean_zp: float
    min_circularity_zp: float
    min_compactness_100: float
    min_circularity_100: float
    max_aspect_ratio_100: float
    brown_median_limits: tuple[int, int, int] = (70, 60, 55)
    association_radius: float = 5.0

    def __post_init__(self):
        for name in ("nucleus_area", "zp_area"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise SettingsError(f"{name}: need 0 < min <= max, got ({lo}, {hi})")
        for name in _DIMENSIONLESS:
            if not getattr(self, name) > 0:
                raise SettingsError(f"{name} must be positive")
        if any(not 0 < v <= 256 for v in self.brown_median_limits):
            raise SettingsError("brown_median_limits must lie in (0, 256]")
        if self.association_radius < 0:
            raise SettingsError("association_radius must be non-negative")

    @property
    def key(self) -> str:
        return profile_key(self.magnification, self.strictness)

    def replace(self, **changes) -> "DetectionSettings":
        return dataclasses.replace(self, **changes)


_DIMENSIONLESS = (
    "max_aspect_ratio",
    "min_mod_ratio",
    "min_sphericity",
    "min_circularity_zp",
    "min_compactness_100",
    "min_circularity_100",
    "max_aspect_ratio_100",
)
# bounds where a larger value admits more regions
_UPPER = ("max_aspect_ratio", "max_blue_mean", "max_aspect_ratio_100", "association_radius")
# bounds where a smaller value admits more regions
_LOWER = (
    "min_mod_ratio",
    "min_sphericity",
    "min_blue_mean_zp",
    "min_circularity_zp",
    "min_compactness_100",
    "min_circularity_100",
)


def profile_key(mag, strictness) -> str:
    return f"{int(mag)}x.{Strictness(strictness).value}"


def nesting_violations(con: DetectionSettings, lib: DetectionSettings) -> list[str]:
    """Bounds where the conservative profile admits something the liberal one rejects."""
    bad = []
    for name in ("nucleus_area", "zp_area"):
        (clo, chi), (llo, lhi) = getattr(con, name), getattr(lib, name)
        if clo < llo or chi > lhi:
            bad.append(name)
    bad += [n for n in _UPPER if getattr(con, n) > getattr(lib, n)]
    bad += [n for n in _LOWER if getattr(con, n) < getattr(lib, n)]
    if any(c > l for c, l in zip(con.brown_median_limits, lib.brown_median_limits)):
        bad.append("brown_median_limits")
    return bad


def check_pair(con: DetectionSettings, lib: DetectionSettings, mag=None) -> None:
    if con.strictness is not Strictness.CONSERVATIVE or lib.strictness is not Strictness.LIBERAL:
        raise SettingsError("profile pair must be (conservative, liberal)")
    if con.magnification != lib.magnification:
        raise SettingsError("profile pair mixes magnifications")
    if mag is not None and Magnification(mag) != con.magnification:
        raise SettingsError(f"profiles are for {int(con.magnification)}x, image is {int(mag)}x")
    bad = nesting_violations(con, lib)
    if bad:
        raise SettingsError("conservative profile is looser than liberal for: " + ", ".join(bad))


def _fmt(v):
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, float):
        return repr(round(v, 6))
    return str(v)


def _parse_pair(text, cast=float):
    parts = [p.strip() for p in text.split(",")]
    return tuple(cast(p) for p in parts)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(DetectionSettings)}


def settings_from_section(name: str, section) -> DetectionSettings:
    mag_text, _, strict_text = name.partition(".")
    try:
        mag = Magnification(int(mag_text.rstrip("x")))
        strictness = Strictness(strict_text)
    except ValueError as exc:
        raise SettingsError(f"bad profile section name {name!r}") from exc
    kwargs = {"magnification": mag, "strictness": strictness}
    for key, raw in section.items():
        if key not in _FIELD_TYPES or key in kwargs:
            raise SettingsError(f"[{name}] unknown key {key!r}")
        try:
            if key == "brown_median_limits":
                kwargs[key] = _parse_pair(raw, int)
            elif key in ("nucleus_area", "zp_area"):
                kwargs[key] = _parse_pair(raw)
            else:
                kwargs[key] = float(raw)
        except ValueError as exc:
            raise SettingsError(f"[{name}] {key}: cannot parse {raw!r}") from exc
    missing = [k for k in _FIELD_TYPES if k not in kwargs and k not in ("brown_median_limits", "association_radius")]
    if missing:
        raise SettingsError(f"[{name}] missing keys: {', '.join(missing)}")
    try:
        return DetectionSettings(**kwargs)
    except TypeError as exc:
        raise SettingsError(f"[{name}] {exc}") from exc


def parse_profiles(text: str) -> dict[str, DetectionSettings]:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SettingsError(f"unreadable profile file: {exc}") from exc
    if not cp.has_section("profiles"):
        raise SettingsError("profile file lacks a [profiles] section")
    version = cp.getint("profiles", "profile_version", fallback=None)
    if version != PROFILE_VERSION:
        raise SettingsError(f"profile_version {version} unsupported (expected {PROFILE_VERSION})")
    out = {}
    for name in cp.sections():
        if name == "profiles":
            continue
        s = settings_from_section(name, cp[name])
        out[s.key] = s
    return out


def load_profiles(source=BUILTIN_PROFILES) -> dict[str, DetectionSettings]:
    """Read a profile file, or the packaged defaults when ``source`` is ``"default"``."""
    if source in (None, BUILTIN_PROFILES, f"builtin:{BUILTIN_PROFILES}"):
        text = resources.files("follicount").joinpath("data/profiles.ini").read_text(encoding="utf-8")
    else:
        with open(os.fspath(source), encoding="utf-8") as fh:
            text = fh.read()
    return parse_profiles(text)


def profile_pair(profiles: dict[str, DetectionSettings], mag) -> tuple[DetectionSettings, DetectionSettings]:
    try:
        con = profiles[profile_key(mag, Strictness.CONSERVATIVE)]
        lib = profiles[profile_key(mag, Strictness.LIBERAL)]
    except KeyError as exc:
        raise SettingsError(f"no {int(mag)}x profiles in file (have {sorted(profiles)})") from exc
    check_pair(con, lib, mag)
    return con, lib


def dump_profiles(profiles, header_lines=()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    buf.write(f"\n[profiles]\nprofile_version = {PROFILE_VERSION}\n")
    for key in sorted(profiles, key=lambda k: (int(k.split("x")[0]), k)):
        s = profiles[key]
        buf.write(f"\n[{key}]\n")
        for f in dataclasses.fields(s):
            if f.name in ("magnification", "strictness"):
                continue
            buf.write(f"{f.name} = {_fmt(getattr(s, f.name))}\n")
    return buf.getvalue()
