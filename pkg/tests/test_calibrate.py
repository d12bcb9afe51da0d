import pytest

from conftest import NO_OBJECTS
from follicount.calibrate import CalibrationError, calibrate, families, settings_at
from follicount.settings import Magnification, Strictness, nesting_violations, parse_profiles, profile_pair
from follicount.synthlab import default_corpus_params, default_params, generate_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("cal")
    generate_corpus(default_corpus_params(seed=500), 12, d)
    return d


def test_grids_are_monotone():
    # each successive level must loosen (or keep) every bound
    for mag in Magnification:
        fams = families(mag)
        for fam, grid in fams.items():
            for lv in range(len(grid) - 1):
                lo = {f: 0 for f in fams}
                tight = settings_at(mag, dict(lo, **{fam: lv}), Strictness.CONSERVATIVE)
                loose = settings_at(mag, dict(lo, **{fam: lv + 1}), Strictness.LIBERAL)
                assert nesting_violations(tight, loose) == [], (fam, lv)


def test_calibration_nested_deterministic_and_generalises(corpus):
    a = calibrate(corpus, holdout=True)
    b = calibrate(corpus, holdout=True)
    assert a.to_ini() == b.to_ini()
    profiles = parse_profiles(a.to_ini())
    assert sorted(profiles) == ["100x.conservative", "100x.liberal", "200x.conservative", "200x.liberal"]
    for mag in Magnification:
        profile_pair(profiles, mag)  # raises if not nested
        assert a.holdout[f"{int(mag)}x.liberal"][0] >= 0.9
    assert a.train_images == 6 and a.holdout_images == 6
    assert "corpus seed: 500" in a.to_ini()


def test_degenerate_corpus_refused(tmp_path):
    generate_corpus(default_params(200, width=200, height=200, **NO_OBJECTS), 3, tmp_path)
    with pytest.raises(CalibrationError, match="no follicles"):
        calibrate(tmp_path)


def test_single_magnification_corpus_refused(tmp_path):
    generate_corpus(default_params(200, width=300, height=300, vessels=(0, 0)), 2, tmp_path)
    with pytest.raises(CalibrationError, match="100x"):
        calibrate(tmp_path)
