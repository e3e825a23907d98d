"""Self-energy of the NV transition: fluctuation-dissipation inversion,
field-domain Kramers-Kronig transform, theory curve and figures of merit.

Self-energies are carried in rad/s ("angular Hz"); ``x / (2 pi)`` is the value
in units of 2 pi Hz used in exported tables.  The sign convention is
``chi = sum |g|^2 / (omega_k - omega_NV - i eta)`` so that the NV frequency is
renormalized as ``omega_NV -> omega_NV - chi`` and ``chi'' >= 0`` is the
induced decay rate.  Under this convention the field-domain transform

    chi'(H) = (1/pi) P int chi''(H') / (H - H') dH'

holds, since the mode detuning grows with H.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .core import FieldConfig, FilmStack, NVConfig, PhysicalConstants
from .noise import Quadrature, coupling_kernel, thermal_factor
from .nv import min_nonresonant_field, nv_frequency

PER_US_TO_RAD_S = 1e6


def bose_occupation(freq, temperature: float, c: PhysicalConstants | None = None):
    c = c or PhysicalConstants()
    x = c.h_over_kB * np.asarray(freq, dtype=float) / temperature
    return 1.0 / np.expm1(x)


def fdt_chi_imag(delta_rate, f_NV, T: float, c: PhysicalConstants | None = None):
    """chi'' in rad/s from a magnon-induced rate in us^-1.

    ``chi'' = rate / (2 coth(h f / 2 k_B T))``.
    """
    c = c or PhysicalConstants()
    if T <= 0:
        raise ValueError("T > 0")
    if np.any(np.asarray(f_NV) <= 0):
        raise ValueError("f_NV > 0")
    rate = np.asarray(delta_rate, dtype=float)
    out = rate / (2.0 * thermal_factor(f_NV, T, c)) * PER_US_TO_RAD_S
    return float(out) if out.ndim == 0 else out


def rate_from_chi_imag(chi_imag, f_NV, T: float, c: PhysicalConstants | None = None):
    """Inverse of :func:`fdt_chi_imag` written with the Bose occupation."""
    c = c or PhysicalConstants()
    n = bose_occupation(f_NV, T, c)
    out = 2.0 * np.asarray(chi_imag, dtype=float) / PER_US_TO_RAD_S * (2.0 * n + 1.0)
    return float(out) if out.ndim == 0 else out


# --- Kramers-Kronig ---------------------------------------------------------

@dataclass(frozen=True)
class TailPolicy:
    """How chi'' is continued outside (and above) the sampled field range.

    ``upper_cutoff`` (G) forces chi'' to zero above it; ``None`` keeps the
    data as given.  ``lower_taper`` (G) adds a linear ramp from the first
    sample down to zero; 0 disables it.  Beyond both, chi'' is zero.
    """

    upper_cutoff: float | None = None
    lower_taper: float = 20.0
    name: str = "custom"

    @classmethod
    def default(cls, nv: NVConfig | None = None, c: PhysicalConstants | None = None):
        cutoff = min_nonresonant_field(nv or NVConfig(), c)
        return cls(cutoff, 20.0, "nonresonant-cutoff+taper")

    @classmethod
    def zero(cls):
        return cls(None, 0.0, "zero")

    def describe(self) -> str:
        up = "none" if self.upper_cutoff is None else f"{self.upper_cutoff:.6g} G"
        return f"{self.name}: zero above {up}, linear taper {self.lower_taper:.6g} G below data"


def _plogx(t):
    """t * log|t| with the t = 0 limit."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    nz = t != 0
    out[nz] = t[nz] * np.log(np.abs(t[nz]))
    return out


def _safe_log(t):
    t = np.abs(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    nz = t != 0
    out[nz] = np.log(t[nz])
    return out


def kk_weights(H, nodes=None) -> np.ndarray:
    """Matrix ``W`` with ``chi'(H) = W @ chi''(nodes)`` for piecewise-linear chi''.

    The principal-value integral over each linear segment is done in closed
    form: for y linear on [x0, x1], ``int y/(H - x) dx`` splits into the
    value extrapolated to H times a log term, minus the slope times the
    segment length.  The divergent logs from the two segments meeting at a
    node cancel and are dropped; at a lone endpoint that drop is the
    principal-value convention (and the point is flagged by the caller).
    """
    H = np.atleast_1d(np.asarray(H, dtype=float))
    x = np.asarray(H if nodes is None else nodes, dtype=float)
    x0, x1 = x[:-1], x[1:]
    dx = x1 - x0
    u0 = H[:, None] - x0[None, :]
    u1 = H[:, None] - x1[None, :]
    # int_{x0}^{x1} y(x)/(H-x) dx = c0*y0 + c1*y1 with
    # c0 = 1 - u1*L/dx, c1 = u0*L/dx - 1, L = log|u0| - log|u1|,
    # expanded so that t*log|t| -> 0 at a node
    c0 = (_plogx(u1) - u1 * _safe_log(u0)) / dx + 1.0
    c1 = (_plogx(u0) - u0 * _safe_log(u1)) / dx - 1.0
    W = np.zeros((H.size, x.size))
    W[:, :-1] += c0
    W[:, 1:] += c1
    return W / math.pi


@dataclass(frozen=True)
class KKResult:
    H: np.ndarray
    chi_real: np.ndarray
    sigma_real: np.ndarray
    endpoint_flag: np.ndarray
    policy: TailPolicy
    weights: np.ndarray = dc_field(repr=False)


def kk_chi_real(H, chi_imag, sigma_imag=None, policy: TailPolicy | None = None) -> KKResult:
    """chi' from chi'' on a strictly increasing field grid (same units in and out).

    Uncertainties are propagated exactly through the linear weights assuming
    independent input errors.  Points within two grid steps of either end are
    flagged as reduced accuracy.
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(chi_imag, dtype=float)
    if H.ndim != 1 or H.size < 16:
        raise ValueError("need a one-dimensional grid of at least 16 points")
    if np.any(np.diff(H) <= 0):
        raise ValueError("field grid must be strictly increasing")
    if y.shape != H.shape:
        raise ValueError("chi_imag must match the field grid")
    policy = policy or TailPolicy.zero()
    mask = np.ones(H.size)
    if policy.upper_cutoff is not None:
        mask = (H <= policy.upper_cutoff).astype(float)
    nodes = H
    # each node value is mask*y; an optional taper node of value 0 sits below
    if policy.lower_taper > 0:
        nodes = np.concatenate([[H[0] - policy.lower_taper], H])
        W = kk_weights(H, nodes)[:, 1:]
    else:
        W = kk_weights(H, nodes)
    W = W * mask[None, :]
    chi_real = W @ y
    if sigma_imag is None:
        sigma_real = np.zeros_like(chi_real)
    else:
        s = np.broadcast_to(np.asarray(sigma_imag, dtype=float), H.shape)
        sigma_real = np.sqrt((W**2) @ (s**2))
    flag = np.zeros(H.size, dtype=bool)
    flag[:2] = flag[-2:] = True
    return KKResult(H, chi_real, sigma_real, flag, policy, W)


# --- self-energy curves -----------------------------------------------------

@dataclass(frozen=True)
class SelfEnergyCurve:
    """chi' and chi'' (rad/s) with 1-sigma uncertainties on a field grid (G)."""

    H: np.ndarray
    chi_real: np.ndarray
    chi_imag: np.ndarray
    sigma_real: np.ndarray
    sigma_imag: np.ndarray
    provenance: str  # "theory" or "data"
    metadata: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.H) <= 0):
            raise ValueError("field grid must be strictly increasing")
        if self.provenance not in ("theory", "data"):
            raise ValueError("provenance must be 'theory' or 'data'")


def _theory_point(nv, film, fld, c, quad):
    f_nv = nv_frequency(nv, fld, c).transition_0_to_minus1
    res = coupling_kernel(nv, film, fld, c, quad).response([f_nv], nv.temperature_T, c)
    return (res["chi_real"][0] * PER_US_TO_RAD_S, res["chi_imag"][0] * PER_US_TO_RAD_S,
            res["rate"][0])


def self_energy_theory(nv: NVConfig, film: FilmStack, H_grid, c: PhysicalConstants | None = None,
                      H_perp: float = 0.0, quad: Quadrature | None = None,
                      threads: int = 1) -> SelfEnergyCurve:
    """Mode-sum self-energy over a field grid.

    ``metadata['delta_rate']`` holds the thermally weighted rate from the same
    sums for consistency checks.
    """
    c = c or PhysicalConstants()
    H = np.asarray(H_grid, dtype=float)
    fields = [FieldConfig(float(h), H_perp) for h in H]
    work = lambda f: _theory_point(nv, film, f, c, quad)  # noqa: E731
    if threads <= 1:
        rows = [work(f) for f in fields]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(work, fields))
    arr = np.array(rows)
    zeros = np.zeros(H.size)
    meta = {"delta_rate": arr[:, 2], "normalization": c.normalization,
            "coupling_calibration": c.coupling_calibration,
            "temperature_K": nv.temperature_T}
    return SelfEnergyCurve(H, arr[:, 0], arr[:, 1], zeros, zeros.copy(), "theory", meta)


@dataclass(frozen=True)
class RatioProfile:
    H: np.ndarray
    ratio: np.ndarray  # NaN where masked
    sigma: np.ndarray
    masked: np.ndarray


def ratio_profile(curve: SelfEnergyCurve) -> RatioProfile:
    """|chi'/chi''| with first-order error propagation.

    Points where chi'' is not positive, or is within one sigma of zero, are
    masked rather than divided.
    """
    cr, ci = curve.chi_real, curve.chi_imag
    sr, si = curve.sigma_real, curve.sigma_imag
    masked = (ci <= 0) | (ci <= si)
    ratio = np.full(ci.shape, np.nan)
    sigma = np.full(ci.shape, np.nan)
    ok = ~masked
    ratio[ok] = np.abs(cr[ok] / ci[ok])
    sigma[ok] = ratio[ok] * np.hypot(np.divide(sr[ok], cr[ok], out=np.zeros(ok.sum()),
                                               where=cr[ok] != 0), si[ok] / ci[ok])
    return RatioProfile(curve.H, ratio, sigma, masked)


@dataclass(frozen=True)
class FiguresOfMerit:
    cooperativity: float  # chi'' T2*
    gdr: float  # (4/pi)|chi'/chi''|
    tau_gate_us: float  # sqrt(iSWAP) time with |g_eff| = |chi'|


def figures_of_merit(chi_real: float, chi_imag: float, T2_star: float) -> FiguresOfMerit:
    """Cooperativity, gate-to-decoherence ratio and gate time.

    Parameters
    ----------
    chi_real, chi_imag : float
        Self-energy parts in rad/s.
    T2_star : float
        Dephasing time in us.
    """
    if chi_imag <= 0 or T2_star <= 0:
        raise ValueError("chi_imag > 0 and T2_star > 0 required")
    coop = chi_imag / PER_US_TO_RAD_S * T2_star
    gdr = 4.0 / math.pi * abs(chi_real / chi_imag)
    tau = math.inf if chi_real == 0 else 0.125 * 2.0 * math.pi / abs(chi_real) * 1e6
    return FiguresOfMerit(coop, gdr, tau)
