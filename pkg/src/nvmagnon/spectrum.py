"""Spin-wave dispersion of an in-plane magnetized film.

Wavenumbers in rad/um, frequencies in MHz.  The surface branch uses the
magnetostatic surface-wave closed form with the exchange stiffening folded
into the effective field term, ``F = f_H + f_M*lambda*k^2``; for
``exchange_lambda = 0`` it is the pure magnetostatic result.  Volume modes
fill the band between ``f_H + f_M*lambda*k^2`` and the Kittel frequency
uniformly in mode index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FieldConfig, FilmStack, PhysicalConstants

SURFACE = "surface"


def volume_label(n: int) -> str:
    return f"volume{n}"


def _fH_fM(field: FieldConfig, film: FilmStack, c: PhysicalConstants):
    return c.gamma_bar * field.magnitude, c.gamma_bar * film.M_s


def mssw_freq(k, field: FieldConfig, film: FilmStack,
              c: PhysicalConstants | None = None):
    """Surface-wave frequency (MHz) for k perpendicular to M."""
    c = c or PhysicalConstants()
    k = np.asarray(k, dtype=float)
    fH, fM = _fH_fM(field, film, c)
    F = fH + fM * film.exchange_lambda * k**2
    f2 = F * (F + fM) + 0.25 * fM**2 * (-np.expm1(-2.0 * k * film.thickness_d))
    return np.sqrt(f2)


def plateau_freq(field: FieldConfig, film: FilmStack,
                 c: PhysicalConstants | None = None) -> float:
    """Large-k limit of the magnetostatic surface branch, f_H + f_M/2 (MHz)."""
    c = c or PhysicalConstants()
    fH, fM = _fH_fM(field, film, c)
    return fH + 0.5 * fM


def kittel_freq(field: FieldConfig, film: FilmStack,
                c: PhysicalConstants | None = None) -> float:
    c = c or PhysicalConstants()
    fH, fM = _fH_fM(field, film, c)
    return math.sqrt(fH * (fH + fM))


def volume_band(k, field: FieldConfig, film: FilmStack,
                c: PhysicalConstants | None = None):
    """Lower and upper volume-band edges (MHz)."""
    c = c or PhysicalConstants()
    k = np.asarray(k, dtype=float)
    fH, fM = _fH_fM(field, film, c)
    lower = fH + fM * film.exchange_lambda * k**2
    upper = np.full_like(lower, math.sqrt(fH * (fH + fM)))
    return lower, upper


def volume_mode_freqs(k, field: FieldConfig, film: FilmStack,
                      c: PhysicalConstants | None = None) -> np.ndarray:
    """Frequencies of thickness modes n = 0..N, shape (N+1, len(k)).

    Mode n sits at fraction (n + 1/2)/(N + 1) of the band; where exchange has
    pushed the lower edge past the upper one the band collapses onto the lower
    edge.
    """
    lower, upper = volume_band(k, field, film, c)
    width = np.maximum(upper - lower, 0.0)
    n = np.arange(film.n_volume_modes + 1)[:, None]
    frac = (n + 0.5) / (film.n_volume_modes + 1)
    return lower[None, :] + width[None, :] * frac


def group_velocity(k, field: FieldConfig, film: FilmStack,
                   c: PhysicalConstants | None = None):
    """Analytic df/dk of the surface branch in MHz um."""
    c = c or PhysicalConstants()
    k = np.asarray(k, dtype=float)
    fH, fM = _fH_fM(field, film, c)
    lam, d = film.exchange_lambda, film.thickness_d
    F = fH + fM * lam * k**2
    dF = 2.0 * fM * lam * k
    f = mssw_freq(k, field, film, c)
    df2 = dF * (2.0 * F + fM) + 0.5 * fM**2 * d * np.exp(-2.0 * k * d)
    return df2 / (2.0 * f)


@dataclass(frozen=True)
class DispersionSample:
    k: float
    phi: float
    branch: str
    freq: float
    linewidth_hwhm: float

    def __post_init__(self):
        if not self.freq > 0:
            raise ValueError("freq > 0")

    @property
    def volume_index(self) -> int | None:
        if self.branch.startswith("volume"):
            return int(self.branch[len("volume"):])
        return None


@dataclass(frozen=True)
class ModeProfile:
    depth: np.ndarray
    amplitude: np.ndarray
    surface_side: str | None  # "top", "bottom" or None for volume modes


def linewidth(freq, film: FilmStack):
    """Lorentzian HWHM (MHz) of a mode at ``freq``."""
    return film.gilbert_alpha * np.asarray(freq, dtype=float)


def dispersion_samples(k, field: FieldConfig, film: FilmStack,
                       c: PhysicalConstants | None = None) -> list[DispersionSample]:
    """Surface (phi = pi/2) and volume-mode samples on a k grid.

    Ordered by branch (surface, then ascending n) and ascending k; points with
    non-positive frequency (possible only at zero field) are skipped.
    """
    c = c or PhysicalConstants()
    k = np.asarray(k, dtype=float)
    rows: list[DispersionSample] = []
    fs = mssw_freq(k, field, film, c)
    for kv, f in zip(k, fs):
        if f > 0:
            rows.append(DispersionSample(float(kv), math.pi / 2, SURFACE, float(f),
                                         float(film.gilbert_alpha * f)))
    fv = volume_mode_freqs(k, field, film, c)
    for n, row in enumerate(fv):
        for kv, f in zip(k, row):
            if f > 0:
                rows.append(DispersionSample(float(kv), 0.0, volume_label(n), float(f),
                                             float(film.gilbert_alpha * f)))
    return rows


def mode_profile(sample: DispersionSample, film: FilmStack,
                 n_depth: int = 201) -> ModeProfile:
    """Depth profile across the film, depth measured from the top surface.

    Surface modes are localized on the top surface when k points along
    M x n (``k*sin(phi) > 0``) and on the bottom surface otherwise.
    """
    d = film.thickness_d
    z = np.linspace(0.0, d, n_depth)
    n = sample.volume_index
    if n is not None:
        return ModeProfile(z, np.cos(n * math.pi * z / d), None)
    kabs = abs(sample.k)
    top = sample.k * math.sin(sample.phi) > 0
    amp = np.exp(-kabs * z) if top else np.exp(-kabs * (d - z))
    return ModeProfile(z, amp, "top" if top else "bottom")
