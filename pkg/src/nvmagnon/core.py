"""Units policy, physical constants and configuration records.

Canonical internal units
------------------------
field        gauss (mu_0 H, the way fields are quoted on the bench)
frequency    MHz, ordinary (cycles per microsecond)
length       micrometre
time         microsecond
temperature  kelvin

Factors of 2*pi appear only where an angular rate is explicitly required
(self-energies and couplings reported in rad/s).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import scipy.constants as sc

__all__ = [
    "ConfigError",
    "ValidationError",
    "PhysicalConstants",
    "FilmStack",
    "NVConfig",
    "FieldConfig",
    "SweepGrid",
    "Config",
    "omega_H",
    "load_config",
    "save_config",
    "default_config",
    "units_self_test",
    "dipolar_constant_codata",
]

MHZ_TO_RAD_PER_S = 2.0 * math.pi * 1e6


class ConfigError(ValueError):
    """Malformed configuration document (bad type, unknown key)."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class ValidationError(ValueError):
    """A record violates one of its invariants."""

    def __init__(self, invariant: str, value: Any = None):
        self.invariant = invariant
        detail = f" (got {value!r})" if value is not None else ""
        super().__init__(f"invariant violated: {invariant}{detail}")


def dipolar_constant_codata() -> float:
    """Electron-electron dipolar prefactor (mu0/4pi) gamma_e^2 hbar in MHz nm^3.

    Returned as an ordinary frequency; multiply by 2*pi for rad/s.
    """
    gamma_e = sc.physical_constants["electron gyromag. ratio"][0]  # rad s^-1 T^-1
    c_si = sc.mu_0 / (4.0 * math.pi) * gamma_e**2 * sc.hbar  # rad s^-1 m^3
    return c_si / (2.0 * math.pi) * 1e27 / 1e6


def _require(cond: bool, invariant: str, value: Any = None) -> None:
    if not cond:
        raise ValidationError(invariant, value)


@dataclass(frozen=True)
class PhysicalConstants:
    """Constants shared by every module.

    ``coupling_calibration`` is the single global scale applied to the
    zero-point coupling kernel; ``None`` selects the bare physical
    normalization.
    """

    gamma_bar: float = 2.8  # MHz/G
    h_over_kB: float = 4.7992e-5  # K/MHz
    dipolar_constant: float = field(default_factory=dipolar_constant_codata)  # MHz nm^3
    coupling_calibration: float | None = 0.144

    def __post_init__(self):
        _require(self.gamma_bar > 0, "gamma_bar > 0", self.gamma_bar)
        _require(self.h_over_kB > 0, "h_over_kB > 0", self.h_over_kB)
        _require(self.dipolar_constant > 0, "dipolar_constant > 0", self.dipolar_constant)
        if self.coupling_calibration is not None:
            _require(self.coupling_calibration > 0, "coupling_calibration > 0",
                     self.coupling_calibration)

    @property
    def normalization(self) -> str:
        return "physical" if self.coupling_calibration is None else "calibrated"

    @property
    def coupling_scale(self) -> float:
        return 1.0 if self.coupling_calibration is None else self.coupling_calibration


@dataclass(frozen=True)
class FilmStack:
    """Ferrimagnetic film and the knobs of its spin-wave model.

    thickness_d in um, M_s in G, exchange_lambda in um^2.  ``surface_cone``
    is the half-width (rad) of the propagation-angle window around
    k perpendicular to M in which the surface branch exists;
    ``n_volume_modes`` is the highest thickness-mode index kept.
    """

    thickness_d: float = 3.0
    M_s: float = 1716.0
    gilbert_alpha: float = 1e-4
    exchange_lambda: float = 3.2e-4
    surface_cone: float = math.pi / 4
    n_volume_modes: int = 20

    def __post_init__(self):
        _require(self.thickness_d > 0, "thickness_d > 0", self.thickness_d)
        _require(self.M_s > 0, "M_s > 0", self.M_s)
        _require(0 < self.gilbert_alpha < 1, "0 < gilbert_alpha < 1", self.gilbert_alpha)
        _require(self.exchange_lambda >= 0, "exchange_lambda >= 0", self.exchange_lambda)
        _require(0 < self.surface_cone <= math.pi / 2, "0 < surface_cone <= pi/2",
                 self.surface_cone)
        _require(self.n_volume_modes >= 0, "n_volume_modes >= 0", self.n_volume_modes)


@dataclass(frozen=True)
class NVConfig:
    """NV ensemble: D_NV in MHz, h_NV in um, T in K, T2_star in us, init_rate in us^-1."""

    D_NV: float = 2870.0
    h_NV: float = 0.4
    temperature_T: float = 299.6
    T2_star: float = 0.18
    init_rate: float = 0.2

    def __post_init__(self):
        _require(self.D_NV > 0, "D_NV > 0", self.D_NV)
        _require(self.h_NV > 0, "h_NV > 0", self.h_NV)
        _require(self.temperature_T > 0, "temperature_T > 0", self.temperature_T)
        _require(self.T2_star > 0, "T2_star > 0", self.T2_star)
        _require(self.init_rate > 0, "init_rate > 0", self.init_rate)


@dataclass(frozen=True)
class FieldConfig:
    """In-plane static field: H_par along the NV axis, H_perp across it (G)."""

    H_par: float
    H_perp: float = 0.0

    def __post_init__(self):
        _require(self.H_par >= 0, "H_par >= 0", self.H_par)
        _require(math.isfinite(self.H_perp), "H_perp finite", self.H_perp)

    @property
    def magnitude(self) -> float:
        return math.hypot(self.H_par, self.H_perp)

    @property
    def angle(self) -> float:
        """Angle of the in-plane field away from the NV axis (rad)."""
        return math.atan2(self.H_perp, self.H_par) if self.magnitude > 0 else 0.0


@dataclass(frozen=True)
class SweepGrid:
    fields: tuple[FieldConfig, ...]
    reference_field: float = 600.0

    def __post_init__(self):
        hp = [f.H_par for f in self.fields]
        _require(all(b > a for a, b in zip(hp, hp[1:])), "H_par strictly increasing")

    def validate_against(self, nv: NVConfig, c: PhysicalConstants) -> None:
        bound = nv.D_NV / (2 * c.gamma_bar)
        _require(self.reference_field >= bound, "reference_field >= D_NV/(2*gamma_bar)",
                 self.reference_field)

    @property
    def H_par(self) -> list[float]:
        return [f.H_par for f in self.fields]


def default_sweep() -> SweepGrid:
    n = 1201
    return SweepGrid(tuple(FieldConfig(20.0 + 0.5 * i) for i in range(n)), 600.0)


@dataclass(frozen=True)
class Config:
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    film: FilmStack = field(default_factory=FilmStack)
    nv: NVConfig = field(default_factory=NVConfig)
    sweep: SweepGrid = field(default_factory=default_sweep)

    def __iter__(self):
        return iter((self.constants, self.film, self.nv, self.sweep))


def default_config() -> Config:
    return Config()


def omega_H(fld: FieldConfig, c: PhysicalConstants) -> float:
    """Zeeman frequency gamma_bar*|H| in MHz (ordinary frequency)."""
    return c.gamma_bar * fld.magnitude


# --- JSON document ----------------------------------------------------------

_SECTIONS = {"constants": PhysicalConstants, "film": FilmStack, "nv": NVConfig}


def _number(value: Any, path: str, *, integer: bool = False, nullable: bool = False):
    if value is None and nullable:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(value).__name__}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(path, "expected an integer")
        return int(value)
    return float(value)


def _section(cls, doc: Any, path: str):
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in doc.items():
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown key")
        kwargs[key] = _number(value, f"{path}.{key}",
                              integer=key == "n_volume_modes",
                              nullable=key == "coupling_calibration")
    return cls(**kwargs)


def _sweep(doc: Any, path: str) -> SweepGrid:
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    allowed = {"H_par", "H_perp", "reference_field"}
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", "unknown key")
    base = default_sweep()
    h_perp = _number(doc.get("H_perp", 0.0), f"{path}.H_perp")
    ref = _number(doc.get("reference_field", 600.0), f"{path}.reference_field")
    spec = doc.get("H_par")
    if spec is None:
        hs = [f.H_par for f in base.fields]
    elif isinstance(spec, list):
        hs = [_number(v, f"{path}.H_par[{i}]") for i, v in enumerate(spec)]
    elif isinstance(spec, dict):
        for key in spec:
            if key not in {"start", "stop", "num"}:
                raise ConfigError(f"{path}.H_par.{key}", "unknown key")
        try:
            start = _number(spec["start"], f"{path}.H_par.start")
            stop = _number(spec["stop"], f"{path}.H_par.stop")
            num = _number(spec["num"], f"{path}.H_par.num", integer=True)
        except KeyError as exc:
            raise ConfigError(f"{path}.H_par.{exc.args[0]}", "missing key") from None
        if num < 2:
            raise ConfigError(f"{path}.H_par.num", "need at least 2 points")
        step = (stop - start) / (num - 1)
        hs = [start + i * step for i in range(num)]
    else:
        raise ConfigError(f"{path}.H_par", "expected a list or {start, stop, num}")
    return SweepGrid(tuple(FieldConfig(h, h_perp) for h in hs), ref)


def load_config(text: str) -> Config:
    """Parse and validate a JSON configuration document.

    Missing sections and fields fall back to the apparatus defaults.  An
    empty string or ``{}`` yields the full default configuration.
    """
    if not text.strip():
        doc: Any = {}
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("$", f"not valid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("$", "top level must be an object")
    for key in doc:
        if key not in (*_SECTIONS, "sweep"):
            raise ConfigError(f"$.{key}", "unknown key")
    parts = {name: _section(cls, doc.get(name, {}), f"$.{name}")
             for name, cls in _SECTIONS.items()}
    sweep = _sweep(doc.get("sweep", {}), "$.sweep")
    cfg = Config(parts["constants"], parts["film"], parts["nv"], sweep)
    sweep.validate_against(cfg.nv, cfg.constants)
    return cfg


def config_to_dict(cfg: Config) -> dict:
    hs = cfg.sweep.H_par
    perps = {f.H_perp for f in cfg.sweep.fields}
    if len(perps) > 1:
        raise ValueError("sweep with varying H_perp cannot be serialized")
    return {
        "constants": asdict(cfg.constants),
        "film": asdict(cfg.film),
        "nv": asdict(cfg.nv),
        "sweep": {
            "H_par": list(hs),
            "H_perp": perps.pop() if perps else 0.0,
            "reference_field": cfg.sweep.reference_field,
        },
    }


def save_config(cfg: Config) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)


def units_self_test(c: PhysicalConstants | None = None, nv: NVConfig | None = None,
                    film: FilmStack | None = None) -> float:
    """Relative defect of gamma_bar*H_c against the NV frequency at H_c.

    At the critical field the Zeeman frequency must equal D_NV - f_NV(H_c);
    anything above 1e-9 signals a units slip somewhere in the chain.
    """
    from .nv import critical_field, nv_frequency

    c = c or PhysicalConstants()
    nv = nv or NVConfig()
    film = film or FilmStack()
    hc = critical_field(nv, film, c)
    f_nv = nv_frequency(nv, FieldConfig(hc), c).transition_0_to_minus1
    zeeman = omega_H(FieldConfig(hc), c)
    return abs((nv.D_NV - f_nv) - zeeman) / zeeman
