import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvmagnon.core import FieldConfig, FilmStack, NVConfig, PhysicalConstants
from nvmagnon.entangler import (GeometrySpec, exceeds_dipolar, g_dip, g_eff, g_eff_film,
                                g_eff_nanobar, g_eff_waveguide, standing_mode_field)
from nvmagnon.nv import critical_field, nv_frequency
from nvmagnon.response import self_energy_theory
from nvmagnon.spectrum import mssw_freq

C = PhysicalConstants()
NV = NVConfig()
FILM = FilmStack()
HC = critical_field(NV, FILM, C)
TWO_PI = 2 * math.pi
R = np.linspace(0.0, 2.0, 21)


def test_geometry_validation():
    with pytest.raises(ValueError):
        GeometrySpec("sphere")
    with pytest.raises(ValueError):
        GeometrySpec("waveguide")
    with pytest.raises(ValueError):
        GeometrySpec("nanobar", width=1.0)
    with pytest.raises(ValueError):
        GeometrySpec.nanobar(boundary="clamped")


# --- film -------------------------------------------------------------------

@pytest.mark.parametrize("h", [70.0, 83.25, 90.0])
def test_film_zero_separation_equals_self_energy(h):
    curve = g_eff_film([0.0], NV, FILM, FieldConfig(h), C)
    chi = self_energy_theory(NV, FILM, [h], C)
    assert curve.g_eff[0] == pytest.approx(chi.chi_real[0], rel=1e-6)


def test_film_just_below_critical_field_magnitude():
    curve = g_eff_film([0.0], NV, FILM, FieldConfig(HC - 0.25), C)
    g0 = abs(curve.g_eff[0]) / TWO_PI
    assert 1.0 <= g0 <= 4.0
    assert "on-resonance" not in curve.flags


def test_film_on_resonance_is_flagged():
    curve = g_eff_film([0.0, 0.5], NV, FILM, FieldConfig(HC), C)
    assert "on-resonance" in curve.flags
    assert "imag_part_rad_s" in curve.metadata


@pytest.mark.parametrize("h", [60.0, 65.0, 70.0, 75.0])
def test_film_normalized_coupling_bounded(h):
    curve = g_eff_film(R, NV, FILM, FieldConfig(h), C)
    assert np.max(np.abs(curve.normalized)) <= 1.05


def test_film_detuning_sign_flip():
    below = g_eff_film([0.0], NV, FILM, FieldConfig(75.0), C).g_eff[0]
    above = g_eff_film([0.0], NV, FILM, FieldConfig(90.0), C).g_eff[0]
    assert below < 0 < above


def test_film_coupling_finite():
    curve = g_eff(np.linspace(0.0, 5.0, 51), NV, GeometrySpec(), FieldConfig(80.0), FILM, C)
    assert np.all(np.isfinite(curve.g_eff)) and np.all(np.isfinite(curve.g_eff_imag))


def test_normalization_needs_origin():
    curve = g_eff_film([0.5, 1.0], NV, FILM, FieldConfig(70.0), C)
    with pytest.raises(ValueError):
        curve.normalized


# --- waveguide --------------------------------------------------------------

WG_FIELD = FieldConfig(80.8)


def test_waveguide_normalized_origin():
    wg = g_eff_waveguide(R, NV, GeometrySpec.waveguide(1.0), WG_FIELD, FILM, C)
    assert wg.normalized[0] == 1.0
    assert np.all(np.isfinite(wg.g_eff))


@settings(max_examples=5, deadline=None)
@given(st.sampled_from([2.0, 0.5]))
def test_waveguide_scale_invariance(s):
    # doubling width, thickness and height with exchange x s^2 maps g_norm(r) to g_norm(s r)
    base = g_eff_waveguide(R, NV, GeometrySpec.waveguide(1.0, thickness=3.0, n_kx=1000),
                           WG_FIELD, FILM, C)
    scaled = g_eff_waveguide(s * R, replace(NV, h_NV=s * NV.h_NV),
                             GeometrySpec.waveguide(s, thickness=3.0 * s, n_kx=1000), WG_FIELD,
                             replace(FILM, exchange_lambda=FILM.exchange_lambda * s**2), C)
    assert np.allclose(scaled.normalized, base.normalized, rtol=1e-9, atol=1e-9)


def test_waveguide_rejects_other_kinds():
    with pytest.raises(ValueError):
        g_eff_waveguide(R, NV, GeometrySpec.nanobar(), WG_FIELD, FILM, C)


# --- nanobar ----------------------------------------------------------------

def test_single_mode_nanobar_is_cosine_squared():
    geom = GeometrySpec.nanobar(6.0, 1.0, n_longitudinal=1, n_transverse=1)
    fld = FieldConfig(standing_mode_field(NV, geom, FILM, C))
    curve = g_eff_nanobar(R, NV, geom, fld, FILM, C)
    assert curve.metadata["n_modes"] == 1
    assert np.allclose(curve.normalized, np.cos(math.pi * R / 12.0) ** 2, rtol=0, atol=1e-12)


def test_standing_mode_field_detuning():
    geom = GeometrySpec.nanobar()
    h = standing_mode_field(NV, geom, FILM, C, detuning=-2.0)
    kabs = math.hypot(math.pi / geom.length, math.pi / geom.width)
    f_mode = float(mssw_freq(kabs, FieldConfig(h), FILM, C))
    f_nv = nv_frequency(NV, FieldConfig(h), C).transition_0_to_minus1
    assert (f_nv - f_mode) / (FILM.gilbert_alpha * f_mode) == pytest.approx(-2.0, abs=1e-6)


@pytest.fixture(scope="module")
def confined_pair():
    geom = GeometrySpec.nanobar()
    fld = FieldConfig(standing_mode_field(NV, geom, FILM, C))
    bar = g_eff_nanobar(R, NV, geom, fld, FILM, C)
    wg = g_eff_waveguide(R, NV, GeometrySpec.waveguide(geom.width), fld, FILM, C)
    return bar, wg


def test_nanobar_keeps_range(confined_pair):
    bar, _ = confined_pair
    assert abs(bar.normalized[-1]) >= 0.3


def test_nanobar_outranges_waveguide(confined_pair):
    bar, wg = confined_pair
    assert abs(bar.normalized[-1]) > abs(wg.normalized[-1])


def test_nanobar_far_from_modes_is_flagged():
    curve = g_eff_nanobar(R, NV, GeometrySpec.nanobar(), FieldConfig(30.0), FILM, C)
    assert "no-mode-within-10-linewidths" in curve.flags


def test_unpinned_nanobar_runs():
    geom = GeometrySpec.nanobar(boundary="unpinned")
    curve = g_eff(R, NV, geom, FieldConfig(80.0), FILM, C)
    assert np.all(np.isfinite(curve.g_eff))


# --- dipolar reference ------------------------------------------------------

def test_dipolar_constant():
    assert C.dipolar_constant == pytest.approx(52.0, rel=1e-2)


def test_dipolar_example():
    assert g_dip(0.5, c=C) / TWO_PI == pytest.approx(0.4, rel=0.2)


@given(st.floats(min_value=0.01, max_value=100.0), st.floats(min_value=0.1, max_value=10.0))
def test_dipolar_inverse_cube(r, s):
    assert g_dip(s * r, c=C) == pytest.approx(g_dip(r, c=C) / s**3, rel=1e-12)


def test_dipolar_singular_at_zero():
    with pytest.raises(ValueError):
        g_dip(0.0)


def test_exceeds_dipolar_predicate():
    curve = g_eff_film(np.array([0.0, 0.05, 1.0, 2.0]), NV, FILM, FieldConfig(HC - 0.25), C)
    flags = exceeds_dipolar(curve, C)
    assert not flags[0]
    expected = np.abs(curve.g_eff[1:]) > g_dip(curve.r[1:], c=C)
    assert list(flags[1:]) == list(expected)
    assert flags[2] and flags[3]
