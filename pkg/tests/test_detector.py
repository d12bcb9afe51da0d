import math

import numpy as np
import pytest

from conftest import directed_scene, solid
from follicount.census import ImageCount
from follicount.detector import (
    Candidate,
    CandidateKind,
    DetectionKind,
    FollicleDetection,
    associate_nuclei_zp,
    candidate_ok,
    classify,
    count_image,
    detect_100,
    detect_200,
    gather,
    run_profiles,
    zp_shape_ok,
)
from follicount.raster import BitMask, RasterImage
from follicount.regions import label_components
from follicount.settings import SettingsError
from follicount.synthlab import DEFAULT_PALETTE, default_params, generate_scene, paint_disc


def kinds(dets):
    return sorted(d.kind.name for d in dets)


# -- association ---------------------------------------------------------------


def region_of(bits):
    (r,) = label_components(BitMask(bits))
    return r


def ring(cx, cy, r_out, r_in, size=120):
    yy, xx = np.mgrid[:size, :size]
    d2 = (xx - cx) ** 2 + (yy - cy) ** 2
    return Candidate(CandidateKind.ZONA_PELLUCIDA, region_of((d2 <= r_out**2) & (d2 > r_in**2)), None, None)


def nucleus(cx, cy, r=4, size=120):
    yy, xx = np.mgrid[:size, :size]
    return Candidate(CandidateKind.NUCLEUS, region_of((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r), None, None)


def test_nucleus_inside_ring_pairs():
    (d,) = associate_nuclei_zp([nucleus(60, 60)], [ring(60, 60, 30, 12)], radius=0)
    assert d.kind is DetectionKind.NUCLEUS_WITH_ZP
    assert d.center == pytest.approx((60, 60))


def test_ring_alone_is_zp_only():
    (d,) = associate_nuclei_zp([], [ring(60, 60, 30, 12)], radius=5)
    assert d.kind is DetectionKind.ZP_ONLY and d.nucleus is None


def test_isolated_nuclei_dropped():
    assert associate_nuclei_zp([nucleus(20, 20), nucleus(60, 60), nucleus(90, 90)], [], radius=5) == []


def test_two_nuclei_in_one_zp_count_once():
    dets = associate_nuclei_zp([nucleus(55, 60, 3), nucleus(66, 60, 3)], [ring(60, 60, 30, 14)], radius=5)
    assert len(dets) == 1 and dets[0].kind is DetectionKind.NUCLEUS_WITH_ZP


def test_radius_slack_outside_hull():
    z = ring(40, 60, 20, 10)
    n = nucleus(64, 60, 2)  # centroid 4 px beyond the ring's edge
    assert associate_nuclei_zp([n], [z], radius=3)[0].kind is DetectionKind.ZP_ONLY
    assert associate_nuclei_zp([n], [z], radius=5)[0].kind is DetectionKind.NUCLEUS_WITH_ZP


def test_detection_kind_consistency():
    with pytest.raises(ValueError):
        FollicleDetection(DetectionKind.ZP_ONLY, (0, 0))
    with pytest.raises(ValueError):
        FollicleDetection(DetectionKind.NUCLEUS_WITH_ZP, (0, 0), zp=ring(60, 60, 30, 12))


# -- directed 200x scenes -------------------------------------------------------


@pytest.mark.parametrize("seed", range(3))
def test_ngf_counted(pair200, seed):
    img, _ = directed_scene(200, seed, ngf=(1, 1))
    for s in pair200:
        assert kinds(detect_200(img, s)) == ["NUCLEUS_WITH_ZP"]


@pytest.mark.parametrize("seed", range(3))
def test_zp_only_counted(pair200, seed):
    img, _ = directed_scene(200, seed, zp_only=(1, 1))
    for s in pair200:
        assert kinds(detect_200(img, s)) == ["ZP_ONLY"]


@pytest.mark.parametrize("seed", range(3))
def test_isolated_nucleus_discarded(pair200, seed):
    img, sc = directed_scene(200, seed, isolated_nuclei=(1, 1))
    con, lib = run_profiles(img, 200, pair200)
    # the nucleus itself passes the nucleus filters; it is dropped for lack of a ZP
    assert len(lib.nuclei) == 1 and lib.count == con.count == 0


@pytest.mark.parametrize("seed", range(3))
def test_vessel_not_counted(pair200, seed):
    img, sc = directed_scene(200, seed, vessels=(1, 1))
    (v,) = sc.objects[:1]
    con, lib = run_profiles(img, 200, pair200)
    assert lib.count == con.count == 0
    # the lumen is segmented as a light region and rejected on shape
    ev = lib.evidence
    lumen = min(ev.light_regions, key=lambda r: math.dist(r.centroid, v.center))
    assert math.dist(lumen.centroid, v.center) < 3
    assert lumen.descriptors.aspectRatio >= 3
    assert not zp_shape_ok(lumen.descriptors, lib.settings)


def test_mixed_200_scene(pair200):
    img, sc = directed_scene(200, 5, size=400, ngf=(3, 3), isolated_nuclei=(2, 2), vessels=(1, 1))
    con, lib = run_profiles(img, 200, pair200)
    assert lib.count == 3 and con.count <= 3
    assert kinds(lib.detections) == ["NUCLEUS_WITH_ZP"] * 3


def _far_spot(scene, r, margin=20):
    for y in range(margin, scene.height - margin, 4):
        for x in range(margin, scene.width - margin, 4):
            if all(math.dist((x, y), o.center) > o.extent + r + 12 for o in scene.objects):
                return x, y
    raise AssertionError("no free spot")


def _paint_on(img, x, y, layers):
    canvas = img.pixels.astype(np.float64)
    for radius, rgb in layers:
        paint_disc(canvas, x, y, radius, rgb)
    return RasterImage(np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8))


@pytest.mark.parametrize("seed", range(3))
def test_adding_isolated_nucleus_keeps_count(pair200, seed):
    img, sc = generate_scene(default_params(200, seed=seed))
    base = run_profiles(img, 200, pair200)
    x, y = _far_spot(sc, 12)
    more = run_profiles(_paint_on(img, x, y, [(11, DEFAULT_PALETTE["ngf"][0])]), 200, pair200)
    assert [t.count for t in more] == [t.count for t in base]


@pytest.mark.parametrize("seed", range(3))
def test_adding_zp_ring_adds_one(pair200, seed):
    img, sc = generate_scene(default_params(200, seed=seed))
    base = run_profiles(img, 200, pair200)
    x, y = _far_spot(sc, 33)
    layers = [(33, DEFAULT_PALETTE["stroma"][0]), (28, DEFAULT_PALETTE["zp"][0])]
    more = run_profiles(_paint_on(img, x, y, layers), 200, pair200)
    assert [t.count for t in more] == [t.count + 1 for t in base]


# -- 100x --------------------------------------------------------------------


def test_seventeen_nuclei_at_100x(pair100):
    img, sc = generate_scene(default_params(100, ngf=(17, 17), seed=3))
    assert sc.truth_counts()["ngf"] == 17
    con, lib = run_profiles(img, 100, pair100)
    assert lib.count == 17 and con.count <= 17
    assert all(d.zp is None and d.kind is DetectionKind.NUCLEUS_WITH_ZP for d in lib.detections)


def test_100x_stages_shrink(pair100):
    img, _ = generate_scene(default_params(100, seed=1))
    _, lib = run_profiles(img, 100, pair100)
    sizes = [len(lib.stages[k]) for k in ("size", "shape", "color")]
    assert sizes == sorted(sizes, reverse=True) and sizes[-1] == lib.count


# -- general -------------------------------------------------------------------


def test_blank_images_give_nothing(pair200, pair100):
    white = solid(64, 64, (255, 255, 255))
    assert detect_200(white, pair200[1]) == []
    assert detect_100(white, pair100[1]) == []
    assert count_image(white, 200, pair200, "w") == ImageCount("w", 0, 0)


def test_magnification_mismatch(pair200, pair100):
    white = solid(8, 8, (255, 255, 255))
    with pytest.raises(SettingsError):
        detect_100(white, pair200[0])
    with pytest.raises(SettingsError):
        count_image(white, 100, pair200)


def test_profiles_share_evidence_and_nest(pair200, pair100):
    for mag, pair in ((200, pair200), (100, pair100)):
        for seed in range(4):
            img, _ = generate_scene(default_params(mag, seed=seed))
            con, lib = run_profiles(img, mag, pair)
            assert con.evidence is lib.evidence
            assert con.count <= lib.count


def test_candidates_pass_their_filters(pair200, pair100):
    for mag, pair in ((200, pair200), (100, pair100)):
        img, _ = generate_scene(default_params(mag, seed=9))
        for t in run_profiles(img, mag, pair):
            for c in t.nuclei + t.zps:
                assert candidate_ok(c, t.settings)
            for d in t.detections:
                for c in (d.nucleus, d.zp):
                    assert c is None or candidate_ok(c, t.settings)


def test_deterministic(pair200):
    img, _ = generate_scene(default_params(200, seed=4))
    a = [d.center for d in detect_200(img, pair200[1])]
    b = [d.center for d in detect_200(img.copy(), pair200[1])]
    assert a == b


def test_count_mean():
    assert ImageCount("6", 0, 1).mean == 0.5
    assert ImageCount("10", 5, 9).mean == 7
