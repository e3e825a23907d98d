"""Magnon-mediated NV-NV coupling in a film, a waveguide and a nanobar.

The effective coupling between two NVs at equal height, separated by ``r``
(um) along the NV axis, is

    g_eff(r) = Re sum_modes g(x1) g*(x2) / (omega_k - omega_NV - i eta)

with the same sign convention as the self-energy, so ``g_eff(0) = chi'``.
Couplings are returned in rad/s.

Confined geometries keep the long axis along the NV axis and the
magnetization.  Their standing modes are superpositions of plane waves, each
component radiating as it would above an infinite film of the same
thickness; only components inside the surface-wave cone couple.  These
geometries are shape-level models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace

import numpy as np
from scipy.optimize import brentq

from .core import FieldConfig, FilmStack, NVConfig, PhysicalConstants
from .noise import (BOTTOM, TOP, Quadrature, chirality, coupling_kernel, polarization_weight,
                    segment_means, surface_overlap, zero_point_prefactor)
from .nv import nv_frequency
from .spectrum import mssw_freq, plateau_freq

PER_US_TO_RAD_S = 1e6


@dataclass(frozen=True)
class GeometrySpec:
    """Film, waveguide (finite width) or nanobar (finite width and length).

    Dimensions in um; ``thickness=None`` takes the film thickness.  Mode
    cutoffs default to wavenumbers up to ``20/h_NV``.
    """

    kind: str = "film"
    width: float | None = None
    length: float | None = None
    thickness: float | None = None
    n_transverse: int | None = None
    n_longitudinal: int | None = None
    boundary: str = "pinned"  # longitudinal ends of a nanobar
    n_kx: int = 4000  # longitudinal cells of a waveguide

    def __post_init__(self):
        if self.kind not in ("film", "waveguide", "nanobar"):
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        if self.kind in ("waveguide", "nanobar") and not (self.width and self.width > 0):
            raise ValueError("width > 0")
        if self.kind == "nanobar" and not (self.length and self.length > 0):
            raise ValueError("length > 0")
        if self.thickness is not None and self.thickness <= 0:
            raise ValueError("thickness > 0")
        if self.n_longitudinal is not None and self.n_longitudinal < 1:
            raise ValueError("nanobar mode count >= 1")
        if self.boundary not in ("pinned", "unpinned"):
            raise ValueError("boundary must be 'pinned' or 'unpinned'")

    @classmethod
    def waveguide(cls, width: float = 1.0, **kw) -> "GeometrySpec":
        return cls("waveguide", width=width, **kw)

    @classmethod
    def nanobar(cls, length: float = 6.0, width: float = 1.0, **kw) -> "GeometrySpec":
        return cls("nanobar", width=width, length=length, **kw)

    def describe(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class CouplingCurve:
    r: np.ndarray  # um
    g_eff: np.ndarray  # rad/s
    g_eff_imag: np.ndarray  # rad/s, reported, not used
    geometry: GeometrySpec
    field: FieldConfig
    flags: tuple[str, ...] = ()
    metadata: dict = dc_field(default_factory=dict)

    @property
    def normalized(self) -> np.ndarray:
        """g_eff(r) / g_eff(0); requires r[0] == 0."""
        if self.r[0] != 0:
            raise ValueError("normalization needs r = 0 as the first grid point")
        return self.g_eff / self.g_eff[0]


def g_dip(r, angular_factor: float = 1.0, c: PhysicalConstants | None = None):
    """Bare electron-electron dipolar coupling in rad/s at separation r (um)."""
    c = c or PhysicalConstants()
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r > 0 required (dipolar coupling is singular at r = 0)")
    out = 2.0 * math.pi * c.dipolar_constant * 1e6 * angular_factor / (r * 1e3) ** 3
    return float(out) if out.ndim == 0 else out


def exceeds_dipolar(curve: CouplingCurve, c: PhysicalConstants | None = None) -> np.ndarray:
    """Per-r predicate |g_eff(r)| > |g_dip(r)|; False at r = 0."""
    out = np.zeros(curve.r.size, dtype=bool)
    pos = curve.r > 0
    out[pos] = np.abs(curve.g_eff[pos]) > np.abs(g_dip(curve.r[pos], 1.0, c))
    return out


def _detuning_flags(nv, film, field, c):
    f_nv = nv_frequency(nv, field, c).transition_0_to_minus1
    fp = plateau_freq(field, film, c)
    eta = film.gilbert_alpha * fp
    return f_nv, (("on-resonance",) if abs(f_nv - fp) <= eta else ())


def g_eff_film(r, nv: NVConfig, film: FilmStack, field: FieldConfig,
               c: PhysicalConstants | None = None, quad: Quadrature | None = None) -> CouplingCurve:
    """Film coupling over the same kernel and quadrature as the self-energy."""
    c = c or PhysicalConstants()
    r = np.atleast_1d(np.asarray(r, dtype=float))
    f_nv, flags = _detuning_flags(nv, film, field, c)
    kern = coupling_kernel(nv, film, field, c, quad)
    re, im = kern.separation_response(f_nv, r)
    meta = dict(kern.metadata)
    if flags:
        meta["imag_part_rad_s"] = float(np.max(np.abs(im)) * PER_US_TO_RAD_S)
    return CouplingCurve(r, re * PER_US_TO_RAD_S, im * PER_US_TO_RAD_S,
                         GeometrySpec("film"), field, flags, meta)


# --- confined geometries ----------------------------------------------------

def _confined_film(geom: GeometrySpec, film: FilmStack) -> FilmStack:
    if geom.thickness is None:
        return film
    return replace(film, thickness_d=geom.thickness)


def _component_amplitude(kx, ky, film: FilmStack, h: float, psi: float = 0.0):
    """Stray-field coupling amplitude of a plane-wave component (no prefactor)."""
    kx, ky = np.broadcast_arrays(np.asarray(kx, float), np.asarray(ky, float))
    kabs = np.hypot(kx, ky)
    phi = np.arctan2(ky, kx)
    in_cone = np.abs(np.abs(phi) - math.pi / 2) <= film.surface_cone
    top = np.sin(phi) > 0
    q = np.where(top, surface_overlap(kabs, film.thickness_d, TOP),
                 surface_overlap(np.maximum(kabs, 1e-300), film.thickness_d, BOTTOM))
    amp = chirality(phi) * np.sqrt(2.0 * polarization_weight(phi - psi)) * np.sqrt(0.5 * q)
    amp = amp * np.exp(-kabs * h)
    return np.where(in_cone & (kabs > 0), amp, 0.0), kabs


def _transverse_components(m: int, width: float):
    """(ky, coefficient) pairs of the unpinned width mode m, evaluated at y = 0."""
    if m == 0:
        return [(0.0, 1.0 + 0j)]
    ky = m * math.pi / width
    ph = np.exp(1j * m * math.pi / 2)
    return [(ky, ph / math.sqrt(2)), (-ky, np.conj(ph) / math.sqrt(2))]


def _longitudinal_components(p: int, length: float, boundary: str):
    """(kx, coefficient) pairs of the length mode p, origin at the bar centre."""
    kx = p * math.pi / length
    ph = np.exp(1j * p * math.pi / 2)
    if boundary == "pinned":  # sqrt(2) sin(p pi (x + L/2) / L)
        return [(kx, ph / (math.sqrt(2) * 1j)), (-kx, -np.conj(ph) / (math.sqrt(2) * 1j))]
    if p == 0:
        return [(0.0, 1.0 + 0j)]
    return [(kx, ph / math.sqrt(2)), (-kx, np.conj(ph) / math.sqrt(2))]


def _default_cutoff(extent: float, h: float) -> int:
    return max(1, int(math.floor(20.0 / h * extent / math.pi)))


def g_eff_waveguide(r, nv: NVConfig, geometry: GeometrySpec, field: FieldConfig,
                    film: FilmStack | None = None,
                    c: PhysicalConstants | None = None) -> CouplingCurve:
    """Infinite strip: continuum along its axis, discrete width modes."""
    if geometry.kind != "waveguide":
        raise ValueError("waveguide geometry required")
    c = c or PhysicalConstants()
    film = _confined_film(geometry, film or FilmStack())
    r = np.atleast_1d(np.asarray(r, dtype=float))
    h, W = nv.h_NV, geometry.width
    f_nv, flags = _detuning_flags(nv, film, field, c)
    M = geometry.n_transverse if geometry.n_transverse is not None else _default_cutoff(W, h)
    kmax = 20.0 / h
    kx = np.linspace(0.0, kmax, geometry.n_kx + 1)
    kxm = 0.5 * (kx[1:] + kx[:-1])
    dkx = np.diff(kx)
    pref = zero_point_prefactor(film, c) / W
    re = np.zeros(r.size)
    im = np.zeros(r.size)
    phase_c = np.cos(np.outer(r, kxm))
    for m in range(M + 1):
        comps = _transverse_components(m, W)
        ky_abs = abs(comps[0][0])
        f_nodes = mssw_freq(np.hypot(kx, ky_abs), field, film, c)
        G = np.zeros(kxm.size, dtype=complex)
        for ky, coef in comps:
            amp, _ = _component_amplitude(kxm, ky, film, h, field.angle)
            G = G + coef * amp
        weight = pref * np.abs(G) ** 2 * dkx / (2 * math.pi)
        if not np.any(weight):
            continue
        f0, f1 = f_nodes[:-1], f_nodes[1:]
        eta = film.gilbert_alpha * 0.5 * (f0 + f1)
        lor, real = segment_means(f0, f1, f_nv, eta)
        # kx and -kx contribute equally; e^{-i kx r} pairs into 2 cos(kx r)
        re += 2.0 * phase_c @ (weight * real) / (2 * math.pi)
        im += 2.0 * phase_c @ (weight * lor) * 0.5
    meta = {"normalization": c.normalization, "n_transverse": M, "n_kx": geometry.n_kx}
    return CouplingCurve(r, re * PER_US_TO_RAD_S, im * PER_US_TO_RAD_S, geometry, field,
                         flags, meta)


def nanobar_modes(nv: NVConfig, geometry: GeometrySpec, field: FieldConfig,
                  film: FilmStack, c: PhysicalConstants):
    """Enumerate coupled nanobar modes as (p, m, freq, components)."""
    h, L, W = nv.h_NV, geometry.length, geometry.width
    P = geometry.n_longitudinal if geometry.n_longitudinal is not None else _default_cutoff(L, h)
    M = geometry.n_transverse if geometry.n_transverse is not None else _default_cutoff(W, h)
    p_start = 1 if geometry.boundary == "pinned" else 0
    modes = []
    for p in range(p_start, P + 1):
        for m in range(M + 1):
            comps = []
            for kxv, cx in _longitudinal_components(p, L, geometry.boundary):
                for kyv, cy in _transverse_components(m, W):
                    amp, kabs = _component_amplitude(kxv, kyv, film, h, field.angle)
                    if amp > 0:
                        comps.append((kxv, cx * cy * float(amp)))
            if comps:
                kabs = math.hypot(p * math.pi / L, m * math.pi / W)
                f = float(mssw_freq(kabs, field, film, c))
                modes.append((p, m, f, comps))
    return modes


def g_eff_nanobar(r, nv: NVConfig, geometry: GeometrySpec, field: FieldConfig,
                  film: FilmStack | None = None,
                  c: PhysicalConstants | None = None) -> CouplingCurve:
    """Discrete standing-wave sum; NVs sit at x = -r/2 and +r/2 about the centre."""
    if geometry.kind != "nanobar":
        raise ValueError("nanobar geometry required")
    c = c or PhysicalConstants()
    film = _confined_film(geometry, film or FilmStack())
    r = np.atleast_1d(np.asarray(r, dtype=float))
    f_nv, flags = _detuning_flags(nv, film, field, c)
    pref = zero_point_prefactor(film, c) / (geometry.length * geometry.width)
    modes = nanobar_modes(nv, geometry, field, film, c)
    total = np.zeros(r.size, dtype=complex)
    nearest = math.inf
    for _, _, f, comps in modes:
        eta = film.gilbert_alpha * f
        nearest = min(nearest, abs(f - f_nv) / eta)
        g1 = sum(coef * np.exp(-0.5j * kxv * r) for kxv, coef in comps)
        g2 = sum(coef * np.exp(0.5j * kxv * r) for kxv, coef in comps)
        total += pref * g1 * np.conj(g2) / (2 * math.pi * (f - f_nv - 1j * eta))
    if nearest > 10.0:
        flags = flags + ("no-mode-within-10-linewidths",)
    meta = {"normalization": c.normalization, "n_modes": len(modes)}
    return CouplingCurve(r, total.real * PER_US_TO_RAD_S, total.imag * PER_US_TO_RAD_S,
                         geometry, field, flags, meta)


def standing_mode_field(nv: NVConfig, geometry: GeometrySpec, film: FilmStack | None = None,
                        c: PhysicalConstants | None = None, p: int = 1, m: int = 1,
                        detuning: float = -2.0) -> float:
    """H_par (G) placing the NV ``detuning`` linewidths from nanobar mode (p, m).

    Negative detuning puts the NV transition below the mode.
    """
    c = c or PhysicalConstants()
    film = _confined_film(geometry, film or FilmStack())
    kabs = math.hypot(p * math.pi / geometry.length, m * math.pi / geometry.width)

    def offset(h_par: float) -> float:
        fld = FieldConfig(h_par)
        f_mode = float(mssw_freq(kabs, fld, film, c))
        f_nv = nv_frequency(nv, fld, c).transition_0_to_minus1
        return f_nv - f_mode - detuning * film.gilbert_alpha * f_mode

    upper = nv.D_NV / (2 * c.gamma_bar)
    return brentq(offset, 0.0, upper, xtol=1e-12)


def g_eff(r, nv: NVConfig, geometry: GeometrySpec, field: FieldConfig,
          film: FilmStack | None = None, c: PhysicalConstants | None = None,
          quad: Quadrature | None = None) -> CouplingCurve:
    film = film or FilmStack()
    if geometry.kind == "film":
        return g_eff_film(r, nv, film, field, c, quad)
    if geometry.kind == "waveguide":
        return g_eff_waveguide(r, nv, geometry, field, film, c)
    return g_eff_nanobar(r, nv, geometry, field, film, c)
