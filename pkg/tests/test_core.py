import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from nvmagnon.core import (Config, ConfigError, FieldConfig, FilmStack, NVConfig,
                           PhysicalConstants, ValidationError, load_config, omega_H,
                           save_config, units_self_test)


def test_omega_h_examples():
    c = PhysicalConstants()
    assert omega_H(FieldConfig(82.0), c) == pytest.approx(229.6, abs=1e-9)
    assert omega_H(FieldConfig(0.0), c) == 0.0
    assert c.gamma_bar * 1716.0 == pytest.approx(4804.8, abs=1e-9)


def test_omega_h_uses_total_in_plane_field():
    c = PhysicalConstants()
    assert omega_H(FieldConfig(30.0, 40.0), c) == pytest.approx(2.8 * 50.0)


def test_defaults():
    c = PhysicalConstants()
    assert c.gamma_bar == 2.8
    assert c.h_over_kB == 4.7992e-5
    assert c.dipolar_constant > 0
    assert c.normalization == "calibrated"
    assert PhysicalConstants(coupling_calibration=None).normalization == "physical"


def test_only_ms_gives_default_film():
    cfg = load_config('{"film": {"M_s": 1716}}')
    assert cfg.film.thickness_d == 3.0
    assert cfg.film.gilbert_alpha == 1e-4
    assert cfg.film.M_s == 1716.0


def test_negative_thickness_names_invariant():
    with pytest.raises(ValidationError, match="thickness_d > 0"):
        load_config('{"film": {"thickness_d": -1}}')


def test_empty_document_is_apparatus_default():
    assert load_config("") == Config()
    assert load_config("{}") == Config()
    cfg = load_config("")
    assert cfg.film.thickness_d == 3.0
    assert cfg.nv.h_NV == 0.4
    assert cfg.sweep.reference_field == 600.0


@pytest.mark.parametrize("doc, path", [
    ('{"filmm": {}}', "$.filmm"),
    ('{"film": {"Ms": 1}}', "$.film.Ms"),
    ('{"film": {"M_s": "big"}}', "$.film.M_s"),
    ('{"sweep": {"H_par": {"start": 1, "stop": 2}}}', "$.sweep.H_par.num"),
    ('[1, 2]', "$"),
    ('{not json', "$"),
])
def test_schema_errors_carry_field_path(doc, path):
    with pytest.raises(ConfigError) as err:
        load_config(doc)
    assert err.value.path == path


def test_reference_field_must_be_nonresonant():
    with pytest.raises(ValidationError, match="reference_field"):
        load_config('{"sweep": {"reference_field": 400}}')


def test_sweep_range_form():
    cfg = load_config('{"sweep": {"H_par": {"start": 60, "stop": 100, "num": 5}}}')
    assert cfg.sweep.H_par == [60.0, 70.0, 80.0, 90.0, 100.0]


def test_sweep_must_increase():
    with pytest.raises(ValidationError, match="strictly increasing"):
        load_config('{"sweep": {"H_par": [80, 70]}}')


def test_units_self_test():
    assert units_self_test() < 1e-9


pos = st.floats(min_value=1e-3, max_value=1e4, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(d=pos, ms=pos, alpha=st.floats(min_value=1e-6, max_value=0.5),
       lam=st.floats(min_value=0.0, max_value=1.0), h=pos, T=pos,
       hs=st.lists(st.floats(min_value=0.0, max_value=700.0), min_size=1, max_size=8,
                   unique=True),
       perp=st.floats(min_value=-100.0, max_value=100.0),
       calib=st.one_of(st.none(), pos))
def test_save_load_round_trip_is_bit_exact(d, ms, alpha, lam, h, T, hs, perp, calib):
    doc = {"film": {"thickness_d": d, "M_s": ms, "gilbert_alpha": alpha,
                    "exchange_lambda": lam},
           "nv": {"h_NV": h, "temperature_T": T},
           "constants": {"coupling_calibration": calib},
           "sweep": {"H_par": sorted(hs), "H_perp": perp}}
    cfg = load_config(json.dumps(doc))
    again = load_config(save_config(cfg))
    assert again == cfg
    assert save_config(again) == save_config(cfg)


@given(st.floats(min_value=-10.0, max_value=0.0))
def test_nonpositive_thickness_rejected(d):
    with pytest.raises(ValidationError):
        FilmStack(thickness_d=d)


@given(st.floats(min_value=-100.0, max_value=-1e-9))
def test_negative_h_par_rejected(h):
    with pytest.raises(ValidationError):
        FieldConfig(h)


def test_nv_invariants():
    with pytest.raises(ValidationError, match="h_NV > 0"):
        NVConfig(h_NV=0.0)
    with pytest.raises(ValidationError, match="temperature_T > 0"):
        NVConfig(temperature_T=0.0)


def test_field_angle():
    assert FieldConfig(10.0, 10.0).angle == pytest.approx(math.pi / 4)
    assert FieldConfig(0.0, 0.0).angle == 0.0
