import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvmagnon.core import FieldConfig, FilmStack, PhysicalConstants
from nvmagnon.spectrum import (DispersionSample, dispersion_samples, group_velocity,
                               kittel_freq, mode_profile, mssw_freq, plateau_freq,
                               volume_band, volume_mode_freqs)

C = PhysicalConstants()
MS = FilmStack(exchange_lambda=0.0)  # magnetostatic limit of the examples
H82 = FieldConfig(82.0)


def test_kittel_limit_at_zero_k():
    assert mssw_freq(0.0, H82, MS, C) == pytest.approx(math.sqrt(229.6 * 5034.4), rel=1e-12)
    assert mssw_freq(0.0, H82, MS, C) == pytest.approx(1075.1, abs=0.05)


def test_large_k_limit_is_plateau():
    k = 20.0 / MS.thickness_d
    assert mssw_freq(k, H82, MS, C) == pytest.approx(2632.0, abs=1e-4)


def test_large_k_limit_equals_plateau_on_grid():
    for h in np.linspace(0.0, 500.0, 10):
        fld = FieldConfig(h)
        assert mssw_freq(40.0, fld, MS, C) == pytest.approx(plateau_freq(fld, MS, C), rel=1e-12)


@pytest.mark.parametrize("h, expected", [(82.0, 2632.0), (150.0, 2822.4), (0.0, 2402.4)])
def test_plateau_examples(h, expected):
    assert plateau_freq(FieldConfig(h), MS, C) == pytest.approx(expected, abs=1e-9)


def test_volume_band_examples():
    lo, hi = volume_band(np.array([1.0]), H82, MS, C)
    assert lo[0] == pytest.approx(229.6)
    assert hi[0] == pytest.approx(1075.1, abs=0.05)
    lo600, _ = volume_band(np.array([0.0]), FieldConfig(600.0), MS, C)
    assert lo600[0] == pytest.approx(1680.0)
    assert lo600[0] > 2870.0 - 2.8 * 600.0


def test_exchange_leaves_k0_lower_edge():
    lo0, _ = volume_band(np.array([0.0]), H82, MS, C)
    lo1, _ = volume_band(np.array([0.0]), H82, FilmStack(exchange_lambda=1e-3), C)
    assert lo0[0] == lo1[0]


def test_volume_upper_edge_is_mssw_at_zero_k():
    for h in (10.0, 82.0, 300.0):
        _, hi = volume_band(np.array([0.0]), FieldConfig(h), MS, C)
        assert hi[0] == mssw_freq(0.0, FieldConfig(h), MS, C)


def test_volume_modes_fill_band():
    k = np.array([0.5, 2.0])
    f = volume_mode_freqs(k, H82, MS, C)
    lo, hi = volume_band(k, H82, MS, C)
    assert f.shape == (MS.n_volume_modes + 1, 2)
    assert np.all(f > lo) and np.all(f < hi)
    assert np.all(np.diff(f, axis=0) > 0)


def test_group_velocity_vanishes_deep_in_plateau():
    d = MS.thickness_d
    v30 = group_velocity(30.0 / d, H82, MS, C)
    v1 = group_velocity(1.0 / d, H82, MS, C)
    assert abs(v30) < 1e-4 * v1


@pytest.mark.parametrize("film", [MS, FilmStack()])
def test_group_velocity_matches_central_difference(film):
    k, dk = 1.0, 1e-5
    fd = (mssw_freq(k + dk, H82, film, C) - mssw_freq(k - dk, H82, film, C)) / (2 * dk)
    assert group_velocity(k, H82, film, C) == pytest.approx(fd, rel=1e-6)


ks = st.floats(min_value=1e-4, max_value=100.0)


@given(ks)
def test_group_velocity_nonnegative(k):
    assert group_velocity(k, H82, MS, C) >= 0


@settings(max_examples=60)
@given(st.floats(min_value=0.1, max_value=1000.0), st.floats(min_value=1.0, max_value=5000.0),
       st.floats(min_value=0.01, max_value=10.0))
def test_surface_branch_bounded_and_increasing(h, ms, d):
    film = FilmStack(thickness_d=d, M_s=ms, exchange_lambda=0.0)
    fld = FieldConfig(h)
    k = np.geomspace(1e-3, 5.0 / d, 50)
    f = mssw_freq(k, fld, film, C)
    assert np.all(np.diff(f) > 0)
    assert np.all(f >= kittel_freq(fld, film, C) * (1 - 1e-12))
    assert np.all(f <= plateau_freq(fld, film, C) * (1 + 1e-12))
    assert plateau_freq(fld, film, C) > kittel_freq(fld, film, C)


def test_surface_profile_decays_by_kd():
    s = DispersionSample(10.0 / 3.0, math.pi / 2, "surface", 2600.0, 0.26)
    prof = mode_profile(s, MS)
    assert prof.surface_side == "top"
    assert prof.amplitude[-1] / prof.amplitude[0] == pytest.approx(math.exp(-10.0), rel=1e-12)
    assert prof.amplitude.max() == 1.0
    assert np.all(np.diff(prof.amplitude) < 0)


def test_reversed_k_flips_surface_side():
    s = DispersionSample(2.0, math.pi / 2, "surface", 2600.0, 0.26)
    r = DispersionSample(-2.0, math.pi / 2, "surface", 2600.0, 0.26)
    assert mode_profile(s, MS).surface_side == "top"
    prof = mode_profile(r, MS)
    assert prof.surface_side == "bottom"
    assert np.all(np.diff(prof.amplitude) > 0)


def _zero_crossings(a):
    a = a[np.abs(a) > 1e-12]
    return int(np.sum(np.signbit(a[1:]) != np.signbit(a[:-1])))


@given(st.integers(min_value=0, max_value=20))
def test_volume_profile_has_n_crossings(n):
    s = DispersionSample(1.0, 0.0, f"volume{n}", 1000.0, 0.1)
    prof = mode_profile(s, MS, n_depth=2001)
    assert prof.surface_side is None
    assert np.max(np.abs(prof.amplitude)) == pytest.approx(1.0)
    assert _zero_crossings(prof.amplitude) == n


def test_volume_one_has_one_interior_crossing():
    s = DispersionSample(1.0, 0.0, "volume1", 1000.0, 0.1)
    assert _zero_crossings(mode_profile(s, MS).amplitude) == 1


def test_dispersion_samples_linewidth_and_order():
    k = np.linspace(0.0, 5.0, 11)
    rows = dispersion_samples(k, H82, FilmStack(), C)
    assert rows[0].branch == "surface"
    for s in rows:
        assert s.freq > 0
        assert s.linewidth_hwhm == pytest.approx(1e-4 * s.freq, rel=1e-12)
    surf_k = [s.k for s in rows if s.branch == "surface"]
    assert surf_k == sorted(surf_k)


def test_sample_rejects_nonpositive_frequency():
    with pytest.raises(ValueError):
        DispersionSample(1.0, 0.0, "surface", 0.0, 0.0)
