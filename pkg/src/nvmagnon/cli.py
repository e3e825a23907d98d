"""Command-line entry point ``nvmagnon``.

Every subcommand writes CSV tables with '#' metadata headers into ``--out``
and a ``run_manifest.json`` sidecar holding the resolved configuration, so
``nvmagnon rerun <manifest>`` reproduces the tables byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import (Config, ConfigError, FieldConfig, ValidationError, config_to_dict,
                   load_config)
from .csvio import read_csv, write_csv, write_json
from .entangler import (GeometrySpec, exceeds_dipolar, g_dip, g_eff, standing_mode_field)
from .noise import predict_sweep
from .nv import critical_field
from .relaxometry import (NoiseModel, T1FitError, build_rate_curve, fit_t1, load_dataset,
                          invert_to_self_energy, synth_traces, write_dataset)
from .response import figures_of_merit, ratio_profile
from .spectrum import dispersion_samples, plateau_freq, volume_band

UNITS = ("units: field G, frequency MHz, wavenumber rad/um, length um, time us, "
         "rate us^-1, temperature K; self-energies and couplings in 2pi*Hz")
MANIFEST = "run_manifest.json"
TWO_PI = 2.0 * math.pi


def _threads(n: int) -> int:
    if n == 0:
        return os.cpu_count() or 1
    return max(1, n)


def _config(path: str | None) -> Config:
    return load_config(Path(path).read_text() if path else "")


def _base_meta(cfg: Config, command: str) -> dict:
    return {"command": command, "version": __version__,
            "normalization": cfg.constants.normalization,
            "coupling_calibration": cfg.constants.coupling_calibration,
            "config": config_to_dict(cfg)}


def _validate(path: Path, n_rows: int) -> None:
    tab = read_csv(path)
    if len(tab.rows) != n_rows:
        raise RuntimeError(f"{path}: wrote {n_rows} rows, read back {len(tab.rows)}")


def _emit(out: Path, name: str, columns, rows, meta) -> Path:
    rows = list(rows)
    path = write_csv(out / name, columns, rows, meta)
    _validate(path, len(rows))
    return path


# --- subcommands ------------------------------------------------------------

def cmd_dispersion(args, cfg: Config, out: Path) -> list[Path]:
    c, film, nv, _ = cfg
    fld = FieldConfig(args.field, args.h_perp)
    k_max = args.k_max if args.k_max is not None else 20.0 / nv.h_NV
    k = np.linspace(0.0, k_max, args.n_k)
    rows = [(s.k, s.phi, s.branch, s.freq, s.linewidth_hwhm)
            for s in dispersion_samples(k, fld, film, c)]
    meta = _base_meta(cfg, "dispersion") | {"H_par_G": fld.H_par, "H_perp_G": fld.H_perp}
    lower, upper = volume_band(k, fld, film, c)
    fp = plateau_freq(fld, film, c)
    edges = [(kv, lo, hi, fp) for kv, lo, hi in zip(k, lower, upper)]
    return [_emit(out, "dispersion.csv", ("k", "phi", "branch", "freq_MHz", "linewidth_MHz"),
                  rows, meta),
            _emit(out, "band_edges.csv",
                  ("k", "volume_lower_MHz", "volume_upper_MHz", "plateau_MHz"), edges, meta)]


def cmd_t1_theory(args, cfg: Config, out: Path) -> list[Path]:
    c, film, nv, sweep = cfg
    h_list = args.h_nv or [nv.h_NV]
    perp_list = args.h_perp if args.h_perp is not None else [sweep.fields[0].H_perp]
    rows = []
    for h in h_list:
        nvh = replace(nv, h_NV=h)
        for hp in perp_list:
            fields = [FieldConfig(f.H_par, hp) for f in sweep.fields]
            for p in predict_sweep(nvh, film, fields, c, threads=_threads(args.threads)):
                rows.append((h, p.field.H_par, p.field.H_perp, p.f_NV, p.delta_rate, p.surface,
                             p.volume, p.chi_real * 1e6 / TWO_PI, p.chi_imag * 1e6 / TWO_PI))
    cols = ("h_NV_um", "H_par_G", "H_perp_G", "f_NV_MHz", "delta_rate_per_us",
            "surface_per_us", "volume_per_us", "chi_real_2piHz", "chi_imag_2piHz")
    meta = _base_meta(cfg, "t1-theory") | {"temperature_K": nv.temperature_T}
    return [_emit(out, "rates.csv", cols, rows, meta)]


def _nearest(H, h):
    return int(np.argmin(np.abs(np.asarray(H) - h)))


def cmd_analyze(args, cfg: Config, out: Path) -> list[Path]:
    c, _, nv, _ = cfg
    traces = load_dataset(args.manifest)
    fits = []
    for tr in traces:
        try:
            fits.append((tr.field, fit_t1(tr)))
        except T1FitError as exc:
            raise RuntimeError(f"trace at {tr.field.H_par:g} G: {exc}") from None
    curve = build_rate_curve(fits, args.reference)
    h_nv = {tr.h_NV for tr in traces}
    if len(h_nv) != 1:
        raise ValueError("all traces in one analysis must share h_NV")
    nvd = replace(nv, h_NV=h_nv.pop())
    se = invert_to_self_energy(curve, nvd, c)
    meta = _base_meta(cfg, "analyze") | {"reference_field_G": curve.reference_field,
                                         "tail_policy": se.metadata["tail_policy"],
                                         "temperature_K": nvd.temperature_T}
    p1 = _emit(out, "rate_curve.csv", ("H_G", "delta_rate_per_us", "sigma_per_us"),
               zip(curve.H, curve.delta_rate, curve.sigma), meta)
    p2 = _emit(out, "self_energy.csv",
               ("H_G", "chi_real_2piHz", "chi_imag_2piHz", "sigma_real", "sigma_imag",
                "reduced_accuracy"),
               zip(se.H, se.chi_real / TWO_PI, se.chi_imag / TWO_PI, se.sigma_real / TWO_PI,
                   se.sigma_imag / TWO_PI, se.metadata["reduced_accuracy"]), meta)
    _summary(se, nvd, args.at)
    return [p1, p2]


def _summary(se, nv, at: float | None) -> None:
    interior = ~np.asarray(se.metadata["reduced_accuracy"])
    peak = int(np.argmax(np.where(interior, se.chi_imag, -np.inf)))
    ext = int(np.argmax(np.where(interior, np.abs(se.chi_real), -np.inf)))
    prof = ratio_profile(se)
    # resolved points on the resonance; the far tail makes the ratio meaningless
    ok = (interior & ~prof.masked & (se.chi_imag > 3 * se.sigma_imag)
          & (se.chi_imag >= 0.05 * se.chi_imag[peak]))
    print(f"chi'' peak  {se.chi_imag[peak] / TWO_PI:.4g} 2piHz at {se.H[peak]:.6g} G")
    print(f"|chi'| max  {abs(se.chi_real[ext]) / TWO_PI:.4g} 2piHz at {se.H[ext]:.6g} G")
    fom = figures_of_merit(se.chi_real[peak], se.chi_imag[peak], nv.T2_star)
    print(f"C = {fom.cooperativity:.3g} (T2* = {nv.T2_star:g} us, at chi'' peak)")
    if np.any(ok):
        j = int(np.argmax(np.where(ok, prof.ratio, -np.inf)))
        f2 = figures_of_merit(se.chi_real[j], se.chi_imag[j], nv.T2_star)
        print(f"max |chi'/chi''| (chi'' >= 5% of peak) = {prof.ratio[j]:.3g} "
              f"at {se.H[j]:.6g} G -> GDR = {f2.gdr:.3g}, tau_sqrt_iSWAP = {f2.tau_gate_us:.4g} us")
    if at is not None:
        j = _nearest(se.H, at)
        if se.chi_imag[j] > 0:
            f3 = figures_of_merit(se.chi_real[j], se.chi_imag[j], nv.T2_star)
            print(f"at {se.H[j]:.6g} G: C = {f3.cooperativity:.3g}, GDR = {f3.gdr:.3g}, "
                  f"tau_sqrt_iSWAP = {f3.tau_gate_us:.4g} us")
        else:
            print(f"at {se.H[j]:.6g} G: chi'' <= 0, figures of merit undefined")


def _geometry(args) -> GeometrySpec:
    if args.geometry == "film":
        return GeometrySpec("film")
    if args.geometry == "waveguide":
        return GeometrySpec.waveguide(args.width, thickness=args.thickness)
    return GeometrySpec.nanobar(args.length, args.width, thickness=args.thickness)


def cmd_geff(args, cfg: Config, out: Path) -> list[Path]:
    c, film, nv, _ = cfg
    geom = _geometry(args)
    if args.field is not None:
        H = args.field
    elif geom.kind == "film":
        H = critical_field(nv, film, c) - 10.0
    else:
        # same field for both confined kinds: the bar of this cross-section
        H = standing_mode_field(nv, GeometrySpec.nanobar(args.length, args.width,
                                                         thickness=args.thickness),
                                film, c, detuning=args.detuning)
    fld = FieldConfig(H, args.h_perp)
    r = np.linspace(0.0, args.r_max, args.n_r)
    curve = g_eff(r, nv, geom, fld, film, c)
    gd = np.full(r.size, np.nan)
    gd[r > 0] = g_dip(r[r > 0], 1.0, c)
    useful = exceeds_dipolar(curve, c)
    cols = ["r_um", "geff_2piHz"]
    data = [curve.r, curve.g_eff / TWO_PI]
    if geom.kind != "film":
        cols.append("normalized")
        data.append(curve.normalized)
    cols += ["gdip_2piHz", "exceeds_dipolar"]
    data += [gd / TWO_PI, useful]
    meta = _base_meta(cfg, "geff") | {"geometry": geom.describe(), "H_par_G": fld.H_par,
                                      "H_perp_G": fld.H_perp, "flags": list(curve.flags)}
    return [_emit(out, "geff.csv", cols, zip(*data), meta)]


def cmd_synth(args, cfg: Config, out: Path) -> list[Path]:
    c, film, nv, sweep = cfg
    preds = predict_sweep(nv, film, sweep.fields, c, threads=_threads(args.threads))
    noise = NoiseModel(args.noise, args.sigma)
    traces = synth_traces(preds, args.background, noise, args.seed, nv.h_NV,
                          n_points=args.n_points, init_rate=nv.init_rate)
    manifest = write_dataset(out, traces, {"background_rate_per_us": args.background,
                                           "noise": args.noise, "seed": args.seed})
    n_lim = sum("readout-limited" in t.tags for t in traces)
    if n_lim:
        print(f"{n_lim} trace(s) exceed the initialization rate and are tagged readout-limited")
    return [manifest] + [out / f"trace_{i:04d}.csv" for i in range(len(traces))]


COMMANDS = {"dispersion": cmd_dispersion, "t1-theory": cmd_t1_theory, "analyze": cmd_analyze,
            "geff": cmd_geff, "synth": cmd_synth}


# --- parser -----------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON configuration (default: built-in)")
    p.add_argument("--out", metavar="DIR", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0, help="random seed (integer)")
    p.add_argument("--threads", type=int, default=1, help="worker threads, 0 = auto")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nvmagnon",
        description="NV-center / magnon relaxometry and self-energy toolkit. " + UNITS,
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("dispersion", help="surface and volume spin-wave branches",
                       description="Dispersion table. " + UNITS, formatter_class=fmt)
    _common(p)
    p.add_argument("--field", type=float, default=82.0, help="H_par in G")
    p.add_argument("--h-perp", type=float, default=0.0, help="H_perp in G")
    p.add_argument("--k-max", type=float, default=None,
                   help="largest wavenumber in rad/um (default 20/h_NV)")
    p.add_argument("--n-k", type=int, default=201, help="number of wavenumbers")

    p = sub.add_parser("t1-theory", help="predicted magnon-induced relaxation rates",
                       description="Rate sweep over the configured H_par grid. " + UNITS,
                       formatter_class=fmt)
    _common(p)
    p.add_argument("--h-nv", type=float, nargs="+", help="NV depths in um (default: config)")
    p.add_argument("--h-perp", type=float, nargs="+", help="H_perp values in G (default: config)")

    p = sub.add_parser("analyze", help="traces -> rate curve -> self-energy",
                       description="Fit T1 traces, reference and invert. " + UNITS,
                       formatter_class=fmt)
    _common(p)
    p.add_argument("manifest", help="trace manifest JSON (see 'synth')")
    p.add_argument("--reference", type=float, default=600.0, help="reference field in G")
    p.add_argument("--at", type=float, default=None,
                   help="also report figures of merit at this field in G")

    p = sub.add_parser("geff", help="magnon-mediated NV-NV coupling versus separation",
                       description="g_eff(r) with the dipolar reference. " + UNITS,
                       formatter_class=fmt)
    _common(p)
    p.add_argument("--geometry", choices=("film", "waveguide", "nanobar"), default="film")
    p.add_argument("--r-max", type=float, default=2.0, help="largest separation in um")
    p.add_argument("--n-r", type=int, default=41, help="number of separations")
    p.add_argument("--field", type=float, default=None,
                   help="H_par in G (default: 10 G below H_c for film, a standing-mode "
                        "detuning for confined geometries)")
    p.add_argument("--h-perp", type=float, default=0.0, help="H_perp in G")
    p.add_argument("--width", type=float, default=1.0, help="waveguide/nanobar width in um")
    p.add_argument("--length", type=float, default=6.0, help="nanobar length in um")
    p.add_argument("--thickness", type=float, default=None,
                   help="confined thickness in um (default: film thickness)")
    p.add_argument("--detuning", type=float, default=-2.0,
                   help="NV detuning from the lowest coupled bar mode, in linewidths")

    p = sub.add_parser("synth", help="synthetic T1 traces from the theory curve",
                       description="Write a trace dataset and its manifest. " + UNITS,
                       formatter_class=fmt)
    _common(p)
    p.add_argument("--background", type=float, default=0.01,
                   help="field-independent background rate in us^-1")
    p.add_argument("--noise", choices=("gaussian", "shot", "none"), default="gaussian")
    p.add_argument("--sigma", type=float, default=0.01,
                   help="Gaussian noise per point, fraction of the initial signal")
    p.add_argument("--n-points", type=int, default=20, help="samples per trace over 3 T1")

    p = sub.add_parser("rerun", help="re-execute a run from its run_manifest.json",
                       formatter_class=fmt)
    p.add_argument("run_manifest", help="path to run_manifest.json")
    p.add_argument("--out", metavar="DIR", default=None,
                   help="output directory (default: the recorded one)")
    return ap


def _run(command: str, args, cfg: Config, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    written = COMMANDS[command](args, cfg, out)
    elapsed = time.perf_counter() - t0
    recorded = {k: v for k, v in vars(args).items() if k not in ("command", "config", "out")}
    if "manifest" in recorded:
        recorded["manifest"] = str(Path(recorded["manifest"]).resolve())
    write_json(out / MANIFEST, {
        "subcommand": command,
        "arguments": recorded,
        "config": config_to_dict(cfg),
        "inputs": [recorded["manifest"]] if "manifest" in recorded else [],
        "outputs": sorted(str(p.relative_to(out)) for p in written),
        "out_dir": str(out.resolve()),
        "seed": args.seed,
        "version": __version__,
        "wall_clock_s": elapsed,
    })
    return 0


def _rerun(args) -> int:
    doc = json.loads(Path(args.run_manifest).read_text())
    cfg = load_config(json.dumps(doc["config"]))
    ns = argparse.Namespace(**doc["arguments"], command=doc["subcommand"], config=None)
    out = Path(args.out) if args.out else Path(doc["out_dir"])
    return _run(doc["subcommand"], ns, cfg, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "rerun":
            return _rerun(args)
        return _run(args.command, args, _config(args.config), Path(args.out))
    except (ConfigError, ValidationError) as exc:
        print(f"nvmagnon: configuration error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"nvmagnon: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
