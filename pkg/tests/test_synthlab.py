import json
import math

import numpy as np
import pytest

from conftest import NO_OBJECTS, directed_scene
from follicount.chromatics import DARK_BROWN_LIMITS, stats_from_values
from follicount.detector import DetectionKind, FollicleDetection, Candidate, CandidateKind
from follicount.synthlab import (
    ObjectKind,
    PlacementError,
    SynthParams,
    default_corpus_params,
    default_params,
    generate_corpus,
    generate_scene,
    load_manifest,
    load_scene,
    pixel_noise,
    score_detections,
)


def disc_values(img, cx, cy, r):
    yy, xx = np.mgrid[: img.height, : img.width]
    m = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    return img.pixels[m]


def test_deterministic():
    p = default_params(200, seed=77)
    a, sa = generate_scene(p)
    b, sb = generate_scene(p)
    assert a == b and sa == sb
    c, _ = generate_scene(p.replace(seed=78))
    assert a != c


def test_noise_is_counter_based():
    full = pixel_noise(5, 40, 30, 4.0)
    assert full.shape == (30, 40, 3)
    assert np.array_equal(pixel_noise(5, 40, 30, 4.0), full)
    # Irwin-Hall of four lanes is bounded by 2*sqrt(3) standard deviations
    assert np.abs(full).max() <= 14 and abs(full.mean()) < 0.5
    assert 3.5 < full.std() < 4.5
    assert not pixel_noise(0, 4, 4, 0.0).any()


def test_empty_scene_is_background(pair200):
    img, sc = generate_scene(default_params(200, seed=1, stroma_per_mpx=(0, 0), **NO_OBJECTS))
    assert sc.objects == ()
    assert img.pixels.std(axis=(0, 1)).max() < 6
    from follicount.detector import run_profiles

    assert [t.count for t in run_profiles(img, 200, pair200)] == [0, 0]


def test_ngf_nuclei_are_dark_brown_and_stroma_is_not():
    for seed in range(50):
        img, sc = generate_scene(default_params(200, seed=seed))
        for o in sc.of_kind(ObjectKind.NGF, ObjectKind.ISOLATED_NUCLEUS):
            s = stats_from_values(disc_values(img, *o.center, o.nucleusRadius - 0.5))
            assert all(m < lim for m, lim in zip(s.median, DARK_BROWN_LIMITS))
        for o in sc.of_kind(ObjectKind.STROMA_NUCLEUS)[:5]:
            s = stats_from_values(disc_values(img, *o.center, max(1.0, o.axes[1] - 1)))
            assert any(m >= lim for m, lim in zip(s.median, DARK_BROWN_LIMITS))


def test_layout_invariants():
    for mag in (200, 100):
        for seed in range(10):
            _, sc = generate_scene(default_params(mag, seed=seed))
            main = [o for o in sc.objects if o.kind is not ObjectKind.STROMA_NUCLEUS]
            for o in sc.objects:
                x, y = o.center
                assert o.extent <= x <= sc.width - 1 - o.extent and o.extent <= y <= sc.height - 1 - o.extent
                if o.kind is ObjectKind.NGF:
                    assert o.nucleusRadius < o.zpOuterRadius
            for i, a in enumerate(main):
                for b in main[i + 1 :]:
                    assert math.dist(a.center, b.center) > a.extent + b.extent


def test_vessels_are_elongated():
    for seed in range(10):
        _, sc = directed_scene(200, seed, size=300, vessels=(1, 1))
        for v in sc.of_kind(ObjectKind.VESSEL):
            a, b = v.axes
            assert (a - v.rim) / (b - v.rim) >= 3


def test_placement_error():
    p = default_params(200, width=60, height=60, ngf=(3, 3), retries=20)
    with pytest.raises(PlacementError):
        generate_scene(p)


def test_params_validated():
    with pytest.raises(ValueError):
        SynthParams(ngf=(3, 1))
    with pytest.raises(ValueError):
        SynthParams(seed=-1)
    with pytest.raises(ValueError):
        SynthParams(noise=-1)


def test_corpus_and_manifest(tmp_path):
    params = default_corpus_params(seed=40)
    m = generate_corpus(params, 5, tmp_path / "c")
    files = sorted(p.name for p in (tmp_path / "c").iterdir())
    assert files.count("manifest.json") == 1 and len(files) == 1 + 5 * 2
    assert [e["file"] for e in m["images"]] == [
        "synth_200x_0000.png", "synth_100x_0001.png", "synth_200x_0002.png", "synth_100x_0003.png", "synth_200x_0004.png"
    ]
    assert [e["seed"] for e in m["images"]] == [40, 41, 42, 43, 44]
    assert load_manifest(tmp_path / "c") == json.loads(json.dumps(m))
    for k, v in m["totals"].items():
        assert v == sum(e["truth"][k] for e in m["images"])
    sc = load_scene(tmp_path / "c" / "synth_100x_0001.scene.json")
    _, again = generate_scene(params[1].replace(seed=41))
    assert sc.to_json() == again.to_json()
    generate_corpus(params, 5, tmp_path / "d")
    for name in files:
        assert (tmp_path / "c" / name).read_bytes() == (tmp_path / "d" / name).read_bytes()


def test_empty_corpus(tmp_path):
    m = generate_corpus(default_params(200), 0, tmp_path)
    assert m["images"] == [] and m["totals"] == {"ngf": 0, "zpOnly": 0, "isolatedNuclei": 0, "vessels": 0}


def test_counts_within_ranges():
    for mag in (200, 100):
        p = default_params(mag)
        for seed in range(20):
            _, sc = generate_scene(p.replace(seed=seed))
            t = sc.truth_counts()
            for key, rng in (("ngf", p.ngf), ("zpOnly", p.zp_only), ("isolatedNuclei", p.isolated_nuclei), ("vessels", p.vessels)):
                assert rng[0] <= t[key] <= rng[1]


def fake_det(center):
    return FollicleDetection(DetectionKind.NUCLEUS_WITH_ZP, center, nucleus=Candidate(CandidateKind.NUCLEUS, None, None, None))


def test_scoring_conventions():
    _, sc = directed_scene(200, 0, size=300, ngf=(2, 2), zp_only=(1, 1))
    truth = sc.follicles
    assert score_detections([fake_det(o.center) for o in truth], sc, 5)[:2] == (1.0, 1.0)
    assert score_detections([], sc, 5)[:2] == (1.0, 0.0)
    _, empty = directed_scene(200, 0, size=100)
    assert score_detections([], empty, 5)[:2] == (1.0, 1.0)
    assert score_detections([fake_det((1.0, 1.0))], empty, 5)[:2] == (0.0, 1.0)
    with pytest.raises(ValueError):
        score_detections([], sc, 0)


def test_scoring_one_to_one_and_order_free():
    _, sc = directed_scene(200, 3, size=300, ngf=(3, 3))
    rng = np.random.default_rng(0)
    dets = []
    for o in sc.follicles:
        dets += [fake_det((o.center[0] + dx, o.center[1] + dy)) for dx, dy in rng.uniform(-3, 3, (2, 2))]
    p, r, pairs = score_detections(dets, sc, 10)
    assert r == 1.0 and p == 0.5 and len(pairs) == 3
    for _ in range(10):
        perm = rng.permutation(len(dets))
        p2, r2, _ = score_detections([dets[i] for i in perm], sc, 10)
        assert (p2, r2) == (p, r)
