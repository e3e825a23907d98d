import json
import re

import numpy as np
import pytest

from nvmagnon.cli import UNITS, build_parser, main
from nvmagnon.core import FieldConfig
from nvmagnon.csvio import read_csv
from nvmagnon.relaxometry import NoiseModel, synth_traces, write_dataset

SMALL = '{"sweep": {"H_par": [70, 82, 600]}}'


def write_config(tmp_path, text, name="cfg.json"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_help_lists_units_and_flags(capsys):
    for sub in ("dispersion", "t1-theory", "analyze", "geff", "synth"):
        with pytest.raises(SystemExit):
            main([sub, "--help"])
        text = capsys.readouterr().out
        assert "field G" in text and "rate us^-1" in text
        for flag in ("--config", "--out", "--seed", "--threads"):
            assert flag in text
    assert "MHz" in UNITS
    assert build_parser().prog == "nvmagnon"


def test_dispersion_plateau_in_magnetostatic_limit(tmp_path):
    cfg = write_config(tmp_path, '{"film": {"exchange_lambda": 0}}')
    assert main(["dispersion", "--config", cfg, "--out", str(tmp_path), "--field", "82"]) == 0
    edges = read_csv(tmp_path / "band_edges.csv")
    assert np.allclose(edges.column("plateau_MHz"), 2632.0, rtol=0, atol=1e-9)
    disp = read_csv(tmp_path / "dispersion.csv")
    assert disp.metadata["H_par_G"] == 82.0
    assert "surface" in disp.column("branch", str)


def test_band_edges_lower_edge_vanishes_at_zero_field(tmp_path):
    assert main(["dispersion", "--out", str(tmp_path), "--field", "0", "--n-k", "11"]) == 0
    edges = read_csv(tmp_path / "band_edges.csv")
    assert edges.column("volume_lower_MHz")[0] == 0.0


def test_t1_theory_threads_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["t1-theory", "--config", cfg, "--out", str(a), "--threads", "1"]) == 0
    assert main(["t1-theory", "--config", cfg, "--out", str(b), "--threads", "3"]) == 0
    assert (a / "rates.csv").read_bytes() == (b / "rates.csv").read_bytes()
    tab = read_csv(a / "rates.csv")
    assert list(tab.column("H_par_G")) == [70.0, 82.0, 600.0]
    assert np.all(tab.column("delta_rate_per_us") >= 0)
    run = json.loads((a / "run_manifest.json").read_text())
    assert run["subcommand"] == "t1-theory" and run["outputs"] == ["rates.csv"]


def test_t1_theory_height_list(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    assert main(["t1-theory", "--config", cfg, "--out", str(tmp_path),
                 "--h-nv", "0.4", "0.8"]) == 0
    tab = read_csv(tmp_path / "rates.csv")
    assert len(tab.rows) == 6
    r = tab.column("delta_rate_per_us")
    assert r[1] > r[4]  # 82 G rate falls with depth


@pytest.fixture(scope="module")
def theory_dataset(theory_curve, tmp_path_factory):
    d = tmp_path_factory.mktemp("theory_traces")
    preds = [(FieldConfig(h), r) for h, r in zip(theory_curve.H, theory_curve.metadata["delta_rate"])]
    traces = synth_traces(preds, 0.01, NoiseModel("none", sigma=0.01))
    return write_dataset(d, traces)


def test_analyze_reproduces_theory(theory_curve, theory_dataset, tmp_path, capsys):
    assert main(["analyze", str(theory_dataset), "--out", str(tmp_path), "--at", "72"]) == 0
    out = capsys.readouterr().out
    se = read_csv(tmp_path / "self_energy.csv")
    H = se.column("H_G")
    sel = (H >= 60) & (H <= 130)
    ref = theory_curve.chi_real / (2 * np.pi)
    err = np.abs(se.column("chi_real_2piHz") - ref)[sel] / np.max(np.abs(ref))
    assert np.max(err) < 5e-2
    m = re.search(r"at 72 G: C = \S+, GDR = (\S+),", out)
    assert m and 2.0 <= float(m.group(1)) <= 4.0
    assert "chi'' peak" in out
    run = json.loads((tmp_path / "run_manifest.json").read_text())
    assert run["inputs"] == [str(theory_dataset.resolve())]


def test_analyze_empty_manifest_fails(tmp_path, capsys):
    p = tmp_path / "manifest.json"
    p.write_text('{"traces": []}')
    assert main(["analyze", str(p), "--out", str(tmp_path)]) == 1
    assert "no traces" in capsys.readouterr().err


def test_geff_film_and_nanobar(tmp_path):
    film, bar = tmp_path / "film", tmp_path / "bar"
    assert main(["geff", "--out", str(film), "--n-r", "11"]) == 0
    tab = read_csv(film / "geff.csv")
    assert tab.columns[:2] == ["r_um", "geff_2piHz"]
    assert np.isnan(tab.column("gdip_2piHz")[0])
    assert main(["geff", "--geometry", "nanobar", "--out", str(bar), "--n-r", "11"]) == 0
    tab = read_csv(bar / "geff.csv")
    assert tab.column("normalized")[0] == 1.0
    assert abs(tab.column("normalized")[-1]) >= 0.3
    assert tab.metadata["geometry"]["length"] == 6.0


def test_rerun_is_byte_identical(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["synth", "--out", str(first), "--seed", "4", "--config",
                 write_config(tmp_path, SMALL)]) == 0
    assert main(["rerun", str(first / "run_manifest.json"), "--out", str(second)]) == 0
    for name in ("manifest.json", "trace_0000.csv", "trace_0002.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_config_errors_exit_two(tmp_path, capsys):
    bad = write_config(tmp_path, '{"film": {"thickness_d": -1}}')
    assert main(["dispersion", "--config", bad, "--out", str(tmp_path)]) == 2
    assert "thickness_d > 0" in capsys.readouterr().err
    typo = write_config(tmp_path, '{"flim": {}}', "typo.json")
    assert main(["dispersion", "--config", typo, "--out", str(tmp_path)]) == 2
