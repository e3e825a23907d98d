"""Relaxometry data pipeline: T1 fits, referenced rate curves, synthetic data.

Traces are differential PL signals (pi-pulse minus no-pulse) in arbitrary
units against elapsed time in us.  Rates are in us^-1 and fields in G.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .core import FieldConfig, NVConfig, PhysicalConstants, ValidationError
from .csvio import parse_csv, format_csv, atomic_write_text, write_json
from .nv import nv_frequency
from .response import SelfEnergyCurve, TailPolicy, fdt_chi_imag, kk_chi_real

READOUT_LIMITED = "readout-limited"
REFERENCE_TOLERANCE_G = 5.0


@dataclass(frozen=True)
class RelaxTrace:
    t: np.ndarray  # us
    signal: np.ndarray
    sigma: np.ndarray
    field: FieldConfig
    h_NV: float  # um
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        s = np.asarray(self.signal, dtype=float)
        e = np.broadcast_to(np.asarray(self.sigma, dtype=float), t.shape).copy()
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "signal", s)
        object.__setattr__(self, "sigma", e)
        if t.ndim != 1 or t.size < 5:
            raise ValidationError("trace has at least 5 points", t.size)
        if s.shape != t.shape:
            raise ValidationError("signal matches time samples")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("times strictly increasing")
        if np.any(e <= 0):
            raise ValidationError("sigma > 0")
        if not self.h_NV > 0:
            raise ValidationError("h_NV > 0", self.h_NV)


@dataclass(frozen=True)
class T1Fit:
    T1: float  # us
    amplitude: float
    sigma_T1: float
    sigma_amplitude: float
    reduced_chi2: float
    converged: bool = True

    @property
    def rate(self) -> float:
        return 1.0 / self.T1

    @property
    def sigma_rate(self) -> float:
        return self.sigma_T1 / self.T1**2


class T1FitError(RuntimeError):
    """Fit failed; ``best_cost`` is half the weighted residual sum of squares."""

    def __init__(self, message: str, best_cost: float, best_params=None):
        self.best_cost = best_cost
        self.best_params = best_params
        super().__init__(f"{message} (best weighted residual cost {best_cost:.6g})")


def _initial_guess(t, y, s):
    """Weighted log-linear regression on the positive samples."""
    pos = y > 0
    if pos.sum() >= 2:
        w = (y[pos] / s[pos]) ** 2
        slope, icpt = np.polyfit(t[pos], np.log(y[pos]), 1, w=np.sqrt(w))
        if slope < 0:
            return math.exp(icpt), -1.0 / slope
    span = t[-1] - t[0]
    return float(np.max(np.abs(y))) or 1.0, span / 2.0 if span > 0 else 1.0


def fit_t1(trace: RelaxTrace, max_nfev: int = 200) -> T1Fit:
    """Weighted least-squares fit of ``A exp(-t/T1)``.

    Uncertainties come from the curvature of the weighted residual surface at
    the optimum, scaled as absolute sigma (the per-point sigmas are taken as
    true standard deviations).

    Raises
    ------
    T1FitError
        If the optimizer does not converge within ``max_nfev`` evaluations or
        the fitted T1 is not positive.
    """
    t, y, s = trace.t, trace.signal, trace.sigma
    a0, tau0 = _initial_guess(t, y, s)

    def resid(p):
        a, rate = p
        return (a * np.exp(-rate * t) - y) / s

    def jac(p):
        a, rate = p
        e = np.exp(-rate * t)
        return np.column_stack([e / s, -a * t * e / s])

    # the decay rate is the better-conditioned parameter
    res = least_squares(resid, [a0, 1.0 / tau0], jac=jac, method="lm", max_nfev=max_nfev,
                        xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if res.status <= 0:
        raise T1FitError("T1 fit did not converge", float(res.cost), res.x)
    a, rate = res.x
    if not rate > 0:
        raise T1FitError(f"fitted T1 not positive (rate {rate:.4g} us^-1)",
                         float(res.cost), res.x)
    J = res.jac
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        raise T1FitError("singular curvature at optimum", float(res.cost), res.x) from None
    T1 = 1.0 / float(rate)
    sig_rate = math.sqrt(cov[1, 1])
    dof = max(t.size - 2, 1)
    return T1Fit(T1, float(a), sig_rate * T1**2, math.sqrt(cov[0, 0]),
                 float(2.0 * res.cost / dof), True)


@dataclass(frozen=True)
class RateCurve:
    H: np.ndarray  # G, H_par
    delta_rate: np.ndarray  # us^-1
    sigma: np.ndarray  # us^-1
    reference_field: float  # G, the field actually used
    H_perp: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.H_perp is None:
            object.__setattr__(self, "H_perp", np.zeros_like(np.asarray(self.H, float)))


def build_rate_curve(fits: Sequence[tuple[FieldConfig, T1Fit]], reference: float = 600.0,
                     tolerance: float = REFERENCE_TOLERANCE_G) -> RateCurve:
    """Rates referenced to the fit nearest ``reference`` (within ``tolerance`` G).

    The reference point itself is zero with zero uncertainty; elsewhere the
    two uncertainties add in quadrature.
    """
    if not fits:
        raise ValueError("no fits given")
    order = sorted(range(len(fits)), key=lambda i: fits[i][0].H_par)
    H = np.array([fits[i][0].H_par for i in order])
    Hp = np.array([fits[i][0].H_perp for i in order])
    rate = np.array([fits[i][1].rate for i in order])
    srate = np.array([fits[i][1].sigma_rate for i in order])
    if np.any(np.diff(H) <= 0):
        raise ValueError("duplicate H_par values in fits")
    dist = np.abs(H - reference)
    j = int(np.argmin(dist))
    if dist[j] > tolerance:
        avail = ", ".join(f"{h:.6g}" for h in H)
        raise ValueError(f"no fit within {tolerance:g} G of the {reference:g} G reference; "
                         f"available fields: {avail}")
    delta = rate - rate[j]
    sigma = np.hypot(srate, srate[j])
    delta[j] = 0.0
    sigma[j] = 0.0
    return RateCurve(H, delta, sigma, float(H[j]), Hp)


# --- synthetic data ---------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """``gaussian``: additive noise of ``sigma`` (times the amplitude);
    ``shot``: difference of two Poisson counts with ``counts`` mean photons
    and PL ``contrast``; ``none``: exact samples with nominal ``sigma``.
    """

    kind: str = "gaussian"
    sigma: float = 0.01
    counts: float = 1e5
    contrast: float = 0.1

    def __post_init__(self):
        if self.kind not in ("gaussian", "shot", "none"):
            raise ValueError(f"unknown noise model {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError("sigma > 0")


def synth_trace(rate: float, field: FieldConfig, h_NV: float, rng: np.random.Generator,
                noise: NoiseModel = NoiseModel(), n_points: int = 20, span: float = 3.0,
                amplitude: float = 1.0, init_rate: float = 0.2) -> RelaxTrace:
    """One single-exponential trace with total relaxation rate ``rate`` (us^-1)."""
    if not rate > 0:
        raise ValueError("total rate must be positive")
    t = np.linspace(0.0, span / rate, n_points)
    clean = amplitude * np.exp(-rate * t)
    if noise.kind == "none":
        y, s = clean, np.full(n_points, noise.sigma * amplitude)
    elif noise.kind == "gaussian":
        s = np.full(n_points, noise.sigma * amplitude)
        y = clean + rng.normal(0.0, 1.0, n_points) * s
    else:
        n0, cst = noise.counts, noise.contrast
        a = rng.poisson(n0, n_points)
        b = rng.poisson(n0 * (1.0 - cst * clean / amplitude), n_points)
        scale = amplitude / (n0 * cst)
        y = (a - b) * scale
        s = np.sqrt(np.maximum(a + b, 1)) * scale
    tags = (READOUT_LIMITED,) if rate > init_rate else ()
    return RelaxTrace(t, y, s, field, h_NV, tags)


def synth_traces(predictions, background: float, noise: NoiseModel = NoiseModel(),
                 seed: int = 0, h_NV: float = 0.4, n_points: int = 20, span: float = 3.0,
                 init_rate: float = 0.2) -> list[RelaxTrace]:
    """Traces for each prediction at total rate ``delta_rate + background``.

    ``predictions`` holds :class:`~nvmagnon.noise.RatePrediction` objects or
    ``(FieldConfig, delta_rate)`` pairs.  Each trace draws from its own child
    of ``SeedSequence(seed)``, so output is independent of evaluation order.
    """
    items = [(p.field, p.delta_rate) if hasattr(p, "delta_rate") else (p[0], float(p[1]))
             for p in predictions]
    children = np.random.SeedSequence(seed).spawn(len(items))
    out = []
    for (fld, dr), ss in zip(items, children):
        total = dr + background
        if not total > 0:
            raise ValueError(f"rate + background must be positive at {fld.H_par:g} G")
        out.append(synth_trace(total, fld, h_NV, np.random.default_rng(ss), noise,
                               n_points, span, 1.0, init_rate))
    return out


# --- inversion --------------------------------------------------------------

def invert_to_self_energy(curve: RateCurve, nv: NVConfig, c: PhysicalConstants | None = None,
                          policy: TailPolicy | None = None) -> SelfEnergyCurve:
    """Rate curve -> chi'' by fluctuation-dissipation -> chi' by field-domain KK.

    Without an explicit ``policy`` the default tail policy is used and the
    curve must span [60, 600] G.
    """
    c = c or PhysicalConstants()
    H = np.asarray(curve.H, dtype=float)
    if policy is None:
        if H[0] > 60.0 or H[-1] < 600.0:
            raise ValueError("rate curve must span [60, 600] G unless a tail policy is given")
        policy = TailPolicy.default(nv, c)
    f_nv = np.array([nv_frequency(nv, FieldConfig(h, hp), c).transition_0_to_minus1
                     for h, hp in zip(H, curve.H_perp)])
    chi_imag = np.asarray(fdt_chi_imag(curve.delta_rate, f_nv, nv.temperature_T, c))
    sig_imag = np.asarray(fdt_chi_imag(curve.sigma, f_nv, nv.temperature_T, c))
    kk = kk_chi_real(H, chi_imag, sig_imag, policy)
    meta = {"tail_policy": policy.describe(), "temperature_K": nv.temperature_T,
            "reference_field_G": curve.reference_field,
            "reduced_accuracy": kk.endpoint_flag}
    return SelfEnergyCurve(H, kk.chi_real, chi_imag, kk.sigma_real, sig_imag, "data", meta)


# --- files ------------------------------------------------------------------

TRACE_COLUMNS = ("t_us", "signal", "sigma")


def format_trace(trace: RelaxTrace) -> str:
    meta = {"H_par_G": trace.field.H_par, "H_perp_G": trace.field.H_perp,
            "h_NV_um": trace.h_NV, "tags": list(trace.tags)}
    return format_csv(TRACE_COLUMNS, zip(trace.t, trace.signal, trace.sigma), meta)


def parse_trace(text: str, field: FieldConfig, h_NV: float) -> RelaxTrace:
    tab = parse_csv(text)
    missing = [c for c in TRACE_COLUMNS if c not in tab.columns]
    if missing:
        raise ValueError(f"trace is missing columns {missing}")
    tags = tuple(tab.metadata.get("tags", ()))
    return RelaxTrace(tab.column("t_us"), tab.column("signal"), tab.column("sigma"),
                      field, h_NV, tags)


def write_dataset(directory, traces: Sequence[RelaxTrace], extra: dict | None = None) -> Path:
    """Write one CSV per trace plus ``manifest.json`` listing them."""
    directory = Path(directory)
    entries = []
    for i, tr in enumerate(traces):
        name = f"trace_{i:04d}.csv"
        atomic_write_text(directory / name, format_trace(tr))
        entries.append({"file": name, "H_par": tr.field.H_par, "H_perp": tr.field.H_perp,
                        "h_NV": tr.h_NV})
    doc = {"traces": entries}
    if extra:
        doc.update(extra)
    return write_json(directory / "manifest.json", doc)


def load_dataset(manifest_path) -> list[RelaxTrace]:
    """Read a trace manifest; paths are relative to the manifest's directory."""
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    entries = doc.get("traces") if isinstance(doc, dict) else None
    if not entries:
        raise ValueError(f"{manifest_path}: manifest lists no traces")
    out = []
    for i, e in enumerate(entries):
        try:
            fld = FieldConfig(float(e["H_par"]), float(e.get("H_perp", 0.0)))
            text = (manifest_path.parent / e["file"]).read_text()
            out.append(parse_trace(text, fld, float(e["h_NV"])))
        except KeyError as exc:
            raise ValueError(f"{manifest_path}: traces[{i}] missing {exc.args[0]!r}") from None
    return out
