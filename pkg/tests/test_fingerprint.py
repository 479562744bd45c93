import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from safaudit import rng as rngmod
from safaudit.classifier import template_match_score
from safaudit.config import ExperimentConfig
from safaudit.data import Dataset
from safaudit.errors import ConfigError
from safaudit.experiment import load_saf, make_data, make_saf, save_saf
from safaudit.fingerprint import (Disc, FingerprintSpec, Interval, all_placements, build_saf_dataset, inject,
                                  make_fingerprint, make_mask, saf_present)


def test_degenerate_disc_single_pixel():
    mask, placed = make_mask(64, Disc(0, (8, 8), (3, 5)), None)
    assert mask.sum() == 1 and mask.reshape(8, 8)[3, 5] == 1
    assert placed.center == (3, 5)


@pytest.mark.parametrize("geom", [Interval(64, 0), Interval(32, 0), Interval(65), Interval(0)])
def test_interval_coverage_rejected(geom):
    with pytest.raises(ConfigError):
        make_mask(64, geom, rngmod.stream(0, "m"))


def test_disc_radius_two_has_thirteen_pixels():
    brute = sum(1 for dy in range(-3, 4) for dx in range(-3, 4) if dy * dy + dx * dx <= 4)
    mask, _ = make_mask(64, Disc(2, (8, 8)), rngmod.stream(0, "m"))
    assert brute == 13 and mask.sum() == 13


@pytest.mark.parametrize("geom", [Disc(4, (8, 8)), Disc(1, (8, 8), (0, 3)), Disc(1, (4, 4)),
                                  Interval(3, 6)])
def test_geometry_must_fit(geom):
    with pytest.raises(ConfigError):
        make_mask(8 if isinstance(geom, Interval) else 64, geom, rngmod.stream(0, "m"))


def test_disc_placement_uniform_over_valid_positions():
    r = rngmod.stream(0, "m")
    centers = [make_mask(64, Disc(2, (8, 8)), r)[1].center for _ in range(4000)]
    counts = {}
    for c in centers:
        counts[c] = counts.get(c, 0) + 1
    assert set(counts) == {(y, x) for y in range(2, 6) for x in range(2, 6)}
    assert min(counts.values()) > 4000 / 16 * 0.7


def test_masks_stay_in_bounds():
    for m in all_placements(64, Disc(2, (8, 8))):
        assert m.sum() == 13
    assert all_placements(10, Interval(3)).shape == (8, 10)


def test_inject_identity_and_full_replacement(rng):
    x, s = rng.random(6), rng.random(6)
    assert np.array_equal(inject(x, s, np.zeros(6)), x)
    assert np.array_equal(inject(x, s, np.ones(6)), s)


def test_inject_matches_elementwise_loop(rng):
    x, s = rng.random(20), rng.random(20)
    m = (rng.random(20) < 0.4).astype(float)
    ref = np.array([s[j] if m[j] else x[j] for j in range(20)])
    assert np.array_equal(inject(x, s, m), ref)


def test_inject_shape_mismatch():
    with pytest.raises(ConfigError):
        inject(np.zeros(3), np.zeros(4), np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(x=arrays(np.float64, 12, elements=st.floats(0, 1)), s=arrays(np.float64, 12, elements=st.floats(0, 1)),
       m=arrays(np.bool_, 12))
def test_inject_idempotent(x, s, m):
    m = m.astype(float)
    once = inject(x, s, m)
    assert np.array_equal(inject(once, s, m), once)


def _two_row_base():
    return Dataset(np.array([[0.1] * 8, [0.9] * 8]), None)


def test_two_row_saf_dataset():
    spec = make_fingerprint(8, Interval(2), rngmod.stream(0, "s"), 2)
    saf = build_saf_dataset(_two_row_base(), spec)
    assert saf.data.n == 2
    assert saf_present(saf.data.values, spec).sum() == 1
    assert np.all(saf.data.values[saf.saf_row][spec.mask == 1] == 0.5)
    assert not any(np.array_equal(r, saf.original_x_i) for r in saf.data.values)


def test_invalid_host_index():
    spec = FingerprintSpec(np.full(8, 0.5), make_mask(8, Interval(2, 0), None)[0], 5, Interval(2, 0))
    with pytest.raises(ConfigError):
        build_saf_dataset(_two_row_base(), spec)
    with pytest.raises(ConfigError):
        build_saf_dataset(Dataset(np.zeros((1, 8))), spec)


def test_default_toy_data_exactly_one_saf_row():
    cfg = ExperimentConfig()
    saf = make_saf(cfg, make_data(cfg))
    assert saf_present(saf.data.values, saf.spec).sum() == 1
    score = template_match_score(saf.data.values, saf.spec)
    assert score[saf.saf_row] == 1.0
    others = np.delete(score, saf.saf_row)
    assert np.all(others < 0.9)


def test_same_seed_same_hash():
    cfg = ExperimentConfig()
    a = make_saf(cfg, make_data(cfg))
    b = make_saf(cfg, make_data(cfg))
    assert a.content_hash() == b.content_hash()
    cfg.seed = 1
    assert make_saf(cfg, make_data(cfg)).content_hash() != a.content_hash()


def test_saf_file_roundtrip(tmp_path):
    cfg = ExperimentConfig()
    saf = make_saf(cfg, make_data(cfg))
    save_saf(saf, tmp_path / "saf.csv")
    back = load_saf(tmp_path / "saf.csv")
    assert back.content_hash() == saf.content_hash()
    assert np.array_equal(back.x_p, saf.x_p)
    assert back.spec.geometry == saf.spec.geometry
