"""Grid calibration of the four detection profiles on a synthetic corpus.

Each magnification's bounds are grouped into families (nucleus size,
nucleus shape, ...). Every family has an ordered list of levels, strictest
first, and every bound moves monotonically with the level, so a profile is
nested inside another exactly when each of its levels is at most the
other's.

The liberal profile is found by coordinate ascent on corpus F1, preferring
the looser level on ties. The conservative profile then starts from the
liberal levels and tightens one family at a time, one level at a time,
while F1 stays within ``CONSERVATIVE_F1_SLACK`` of the liberal score.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from follicount.detector import classify, gather
from follicount.raster import load_image
from follicount.settings import DetectionSettings, Magnification, Strictness, dump_profiles
from follicount.synthlab import load_manifest, load_scene, score_detections

CONSERVATIVE_F1_SLACK = 0.02

# Match radius between a detection and a true follicle centre.
MATCH_RADIUS = {Magnification.X200: 10.0, Magnification.X100: 5.0}

FAMILIES_200 = {
    "nucleus_area": [{"nucleus_area": v} for v in ((200.0, 650.0), (180.0, 680.0), (150.0, 700.0), (120.0, 760.0))],
    "nucleus_shape": [
        {"max_aspect_ratio": a, "min_mod_ratio": m, "min_sphericity": m}
        for a, m in ((1.1, 0.9), (1.15, 0.88), (1.2, 0.85), (1.3, 0.8), (1.5, 0.7))
    ],
    "nucleus_blue": [{"max_blue_mean": v} for v in (55.0, 65.0, 75.0, 85.0)],
    "zp_area": [{"zp_area": v} for v in ((1200.0, 3800.0), (1000.0, 4200.0), (900.0, 4500.0), (700.0, 5500.0))],
    "zp_shape": [{"min_circularity_zp": v} for v in (0.75, 0.65, 0.55, 0.45)],
    "zp_blue": [{"min_blue_mean_zp": v} for v in (190.0, 170.0, 150.0, 130.0)],
    "association": [{"association_radius": v} for v in (1.0, 3.0, 5.0, 8.0)],
}

FAMILIES_100 = {
    "nucleus_area": [{"nucleus_area": v} for v in ((50.0, 162.5), (45.0, 170.0), (37.5, 175.0), (30.0, 190.0))],
    "particle_compactness": [{"min_compactness_100": v} for v in (0.9, 0.8, 0.7, 0.6)],
    "particle_circularity": [{"min_circularity_100": v} for v in (0.85, 0.75, 0.6, 0.5)],
    "particle_aspect": [{"max_aspect_ratio_100": v} for v in (1.3, 1.5, 1.8, 2.2)],
}

# Fields the 100x pipeline never reads still need valid values.
_BASE = {
    Magnification.X200: dict(
        min_compactness_100=0.7, min_circularity_100=0.6, max_aspect_ratio_100=1.8,
    ),
    Magnification.X100: dict(
        zp_area=(225.0, 1125.0), max_aspect_ratio=1.3, min_mod_ratio=0.8, min_sphericity=0.8,
        max_blue_mean=80.0, min_blue_mean_zp=150.0, min_circularity_zp=0.5, association_radius=2.5,
    ),
}


class CalibrationError(RuntimeError):
    pass


def families(mag) -> dict:
    return FAMILIES_200 if Magnification(mag) is Magnification.X200 else FAMILIES_100


def settings_at(mag, levels: dict, strictness: Strictness) -> DetectionSettings:
    mag = Magnification(mag)
    kwargs = dict(_BASE[mag])
    for fam, grid in families(mag).items():
        kwargs.update(grid[levels[fam]])
    return DetectionSettings(magnification=mag, strictness=strictness, **kwargs)


@dataclass
class Sample:
    evidence: object
    scene: object


def load_samples(directory, indices=None) -> list:
    manifest = load_manifest(directory)
    out = []
    for i, entry in enumerate(manifest["images"]):
        if indices is not None and i not in indices:
            continue
        path = os.path.join(directory, entry["file"])
        scene = load_scene(path[:-4] + ".scene.json")
        out.append(Sample(gather(load_image(path), entry["magnification"]), scene))
    return out


def f1_score(samples, s: DetectionSettings) -> tuple[float, float, float]:
    tp = nd = nt = 0
    radius = MATCH_RADIUS[s.magnification]
    for smp in samples:
        dets = classify(smp.evidence, s).detections
        _, _, pairs = score_detections(dets, smp.scene, radius)
        tp += len(pairs)
        nd += len(dets)
        nt += len(smp.scene.follicles)
    precision = tp / nd if nd else 1.0
    recall = tp / nt if nt else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return f1, precision, recall


def _search_liberal(mag, samples):
    fams = families(mag)
    # start at the second-loosest level of every family
    levels = {f: len(g) - 2 for f, g in fams.items()}
    best = f1_score(samples, settings_at(mag, levels, Strictness.LIBERAL))
    for _ in range(10):
        changed = False
        for fam, grid in fams.items():
            for lv in range(len(grid)):
                if lv == levels[fam]:
                    continue
                trial = dict(levels, **{fam: lv})
                score = f1_score(samples, settings_at(mag, trial, Strictness.LIBERAL))
                # equal F1 moves only towards the looser level, so this terminates
                if score[0] > best[0] or (score[0] == best[0] and lv > levels[fam]):
                    levels, best, changed = trial, score, True
        if not changed:
            break
    return levels, best


def _search_conservative(mag, samples, lib_levels, lib_f1):
    levels = dict(lib_levels)
    score = f1_score(samples, settings_at(mag, levels, Strictness.CONSERVATIVE))
    for fam in families(mag):
        while levels[fam] > 0:
            trial = dict(levels, **{fam: levels[fam] - 1})
            s = f1_score(samples, settings_at(mag, trial, Strictness.CONSERVATIVE))
            if s[0] < lib_f1 - CONSERVATIVE_F1_SLACK:
                break
            levels, score = trial, s
    return levels, score


@dataclass
class CalibrationResult:
    profiles: dict
    scores: dict  # profile key -> (f1, precision, recall) on the training images
    holdout: dict  # profile key -> (f1, precision, recall) on held-out images
    corpus_seed: int
    train_images: int
    holdout_images: int

    def header(self) -> list[str]:
        lines = [
            "Detection profiles for follicount.",
            "Calibrated on a synthetic corpus by `follicount calibrate`; these bounds are",
            "configuration, not measurements of real tissue.",
            f"corpus seed: {self.corpus_seed}; training images: {self.train_images}; held-out images: {self.holdout_images}",
        ]
        for key in sorted(self.scores):
            f1, p, r = self.scores[key]
            line = f"{key}: train F1 {f1:.4f} (precision {p:.4f}, recall {r:.4f})"
            if key in self.holdout:
                hf, hp, hr = self.holdout[key]
                line += f"; held-out F1 {hf:.4f} (precision {hp:.4f}, recall {hr:.4f})"
            lines.append(line)
        return lines

    def to_ini(self) -> str:
        return dump_profiles(self.profiles, self.header())


def calibrate(directory, holdout: bool = False) -> CalibrationResult:
    """Calibrate all four profiles on a corpus directory with a manifest.

    With ``holdout`` the images alternate in pairs between training and a
    held-out half, so both halves keep the corpus' magnification mix.
    """
    manifest = load_manifest(directory)
    entries = manifest["images"]
    if not entries:
        raise CalibrationError("corpus has no images")
    if sum(e["truth"]["ngf"] + e["truth"]["zpOnly"] for e in entries) == 0:
        raise CalibrationError("corpus contains no follicles: nothing to calibrate against")
    n = len(entries)
    if holdout:
        train_idx = {i for i in range(n) if (i // 2) % 2 == 0}
    else:
        train_idx = set(range(n))
    samples = load_samples(directory)
    train = [s for i, s in enumerate(samples) if i in train_idx]
    held = [s for i, s in enumerate(samples) if i not in train_idx]

    profiles, scores, hscores = {}, {}, {}
    for mag in Magnification:
        tr = [s for s in train if s.evidence.magnification is mag]
        if not tr or not any(s.scene.follicles for s in tr):
            raise CalibrationError(f"no {int(mag)}x training images with follicles in corpus")
        lib_levels, lib_score = _search_liberal(mag, tr)
        con_levels, con_score = _search_conservative(mag, tr, lib_levels, lib_score[0])
        ho = [s for s in held if s.evidence.magnification is mag]
        for strictness, levels, score in (
            (Strictness.LIBERAL, lib_levels, lib_score),
            (Strictness.CONSERVATIVE, con_levels, con_score),
        ):
            st = settings_at(mag, levels, strictness)
            profiles[st.key] = st
            scores[st.key] = score
            if ho:
                hscores[st.key] = f1_score(ho, st)
    seed = entries[0]["seed"]
    return CalibrationResult(profiles, scores, hscores, seed, len(train), len(held))
