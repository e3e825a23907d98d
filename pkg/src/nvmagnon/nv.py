"""NV spin-1 ground-state levels under an in-plane static field.

Frequencies in MHz, fields in gauss.  The NV axis lies in the film plane along
``H_par``; the transverse component enters as ``gamma_bar * H_perp * S_x``
(an assumption about the axis sign that is echoed in ``NVLevels.assumptions``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .core import FieldConfig, FilmStack, NVConfig, PhysicalConstants

DEGENERACY_TOL_MHZ = 1.0
TRANSVERSE_ASSUMPTION = "transverse field enters as +gamma_bar*H_perp*S_x"

_SQ2 = math.sqrt(2.0)
# basis order: m_s = +1, 0, -1
_SZ = np.diag([1.0, 0.0, -1.0])
_SX = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]) / _SQ2


@dataclass(frozen=True)
class NVLevels:
    """Eigenfrequencies (MHz) labeled by dominant m_s character."""

    level_0: float
    level_minus1: float
    level_plus1: float
    degenerate: bool = False
    assumptions: tuple[str, ...] = ()

    @property
    def transition_0_to_minus1(self) -> float:
        return self.level_minus1 - self.level_0

    @property
    def eigenfrequencies(self) -> tuple[float, float, float]:
        return (self.level_0, self.level_minus1, self.level_plus1)


def hamiltonian(nv: NVConfig, fld: FieldConfig, c: PhysicalConstants) -> np.ndarray:
    """3x3 spin Hamiltonian in MHz, basis (+1, 0, -1)."""
    return (nv.D_NV * _SZ @ _SZ
            + c.gamma_bar * (fld.H_par * _SZ + fld.H_perp * _SX))


def nv_frequency(nv: NVConfig, fld: FieldConfig,
                 c: PhysicalConstants | None = None) -> NVLevels:
    """Diagonalize the NV Hamiltonian and label the levels.

    With no transverse field the levels are written down in closed form so the
    0 -> -1 gap is exactly ``D_NV - gamma_bar*H_par``.
    """
    c = c or PhysicalConstants()
    zee = c.gamma_bar * fld.H_par
    if fld.H_perp == 0.0:
        return NVLevels(0.0, nv.D_NV - zee, nv.D_NV + zee)

    vals, vecs = np.linalg.eigh(hamiltonian(nv, fld, c))
    weights = vecs**2  # rows: basis (+1, 0, -1), columns: eigenstates
    i0 = int(np.argmax(weights[1]))
    rest = [i for i in range(3) if i != i0]
    wa, wb = weights[2, rest[0]], weights[2, rest[1]]
    if abs(wa - wb) <= 1e-9:
        im1 = rest[0] if vals[rest[0]] <= vals[rest[1]] else rest[1]
    else:
        im1 = rest[0] if wa > wb else rest[1]
    ip1 = rest[1] if im1 == rest[0] else rest[0]
    e = np.sort(vals)
    degenerate = bool(np.min(np.diff(e)) < DEGENERACY_TOL_MHZ)
    return NVLevels(float(vals[i0]), float(vals[im1]), float(vals[ip1]),
                    degenerate, (TRANSVERSE_ASSUMPTION,))


def min_nonresonant_field(nv: NVConfig, c: PhysicalConstants | None = None) -> float:
    """Field (G) above which no magnon mode can reach the NV transition."""
    c = c or PhysicalConstants()
    return nv.D_NV / (2.0 * c.gamma_bar)


def critical_field(nv: NVConfig, film: FilmStack, c: PhysicalConstants | None = None,
                   H_perp: float = 0.0) -> float:
    """H_par (G) at which the surface-wave plateau meets the NV transition.

    Closed form for ``H_perp == 0``; a bracketed root search otherwise.

    Raises
    ------
    ValueError
        If no crossing exists in ``[0, min_nonresonant_field]``.
    """
    c = c or PhysicalConstants()
    upper = min_nonresonant_field(nv, c)
    if H_perp == 0.0:
        hc = (nv.D_NV - c.gamma_bar * film.M_s / 2.0) / (2.0 * c.gamma_bar)
        if not 0.0 <= hc <= upper:
            raise ValueError(f"no plateau crossing in [0, {upper:.4g}] G (got {hc:.4g} G)")
        return hc

    def mismatch(h_par: float) -> float:
        fld = FieldConfig(h_par, H_perp)
        f_p = c.gamma_bar * (fld.magnitude + film.M_s / 2.0)
        return nv_frequency(nv, fld, c).transition_0_to_minus1 - f_p

    lo, hi = mismatch(0.0), mismatch(upper)
    if lo * hi > 0:
        raise ValueError(f"no plateau crossing in [0, {upper:.4g}] G")
    return brentq(mismatch, 0.0, upper, xtol=1e-12, rtol=1e-14)
