"""Physical parameters, unit conventions and derived rates.

Frequencies and couplings are stored as angular frequencies [rad/s]; config
files and presets use the human convention (value / 2pi in Hz).  Quadrature
units are chosen so that the thermal state has variance ``n_th`` per
quadrature.
"""

from __future__ import annotations

import configparser
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

HBAR = 1.054571817e-34  # J s
K_B = 1.380649e-23  # J / K
C_LIGHT = 299792458.0  # m / s
TWO_PI = 2.0 * math.pi

DEFAULT_OMEGA_R = TWO_PI * 1.0e6
DEFAULT_OMEGA_S = TWO_PI * 2.87e9
DEFAULT_ZP = 1.0e-14
DEFAULT_WAVELENGTH = 1550e-9

# Factor used for the "much smaller than" checks in regime_ok().
REGIME_MARGIN = 100.0


class ConfigError(ValueError):
    """Raised for malformed parameter files or unknown presets."""


class RegimeWarning(UserWarning):
    """lambda << omega_r << omega_s is violated (results may be unreliable)."""


@dataclass(frozen=True)
class SystemParams:
    """Spin, resonator and bath parameters.

    Attributes:
        gamma: spin dephasing rate [1/s].
        q_factor: mechanical quality factor; ``math.inf`` gives kappa = 0.
        lambda_coupling: spin-phonon coupling [rad/s].
        temperature: bath temperature [K].
        omega_r: resonator angular frequency [rad/s].
        omega_s: spin transition angular frequency [rad/s].
        zp: zero-point motion [m].
        mass: effective mass [kg]; derived from ``zp`` and ``omega_r`` if None.
    """

    gamma: float
    q_factor: float
    lambda_coupling: float
    temperature: float
    omega_r: float = DEFAULT_OMEGA_R
    omega_s: float = DEFAULT_OMEGA_S
    zp: float = DEFAULT_ZP
    mass: float | None = None

    def __post_init__(self):
        for name in ("gamma", "lambda_coupling", "temperature", "omega_r", "omega_s", "zp"):
            value = getattr(self, name)
            if not value > 0 or math.isnan(value):
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        if not self.q_factor >= 10:
            raise ValueError(f"q_factor must be >= 10, got {self.q_factor!r}")
        if self.mass is None:
            object.__setattr__(self, "mass", HBAR / (2.0 * self.omega_r * self.zp**2))
        elif not self.mass > 0:
            raise ValueError(f"mass must be strictly positive, got {self.mass!r}")
        if not self.regime_ok():
            warnings.warn(
                "expected lambda << omega_r << omega_s (factor 100 margins)",
                RegimeWarning,
                stacklevel=3,
            )

    def regime_ok(self) -> bool:
        return (
            self.lambda_coupling * REGIME_MARGIN <= self.omega_r
            and self.omega_r * REGIME_MARGIN <= self.omega_s
        )

    @property
    def kappa(self) -> float:
        return kappa(self)

    @property
    def n_th(self) -> float:
        return n_thermal(self)

    @property
    def cooperativity(self) -> float:
        return cooperativity(self)

    @property
    def diffusion_rate(self) -> float:
        """kappa * n_th, the per-quadrature phase-space diffusion rate [1/s]."""
        return self.kappa * self.n_th

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class MeasurementParams:
    """Resonator readout.

    ``delta_m_sq`` is the per-measurement variance in quadrature units and is
    what the protocol uses.  The optical fields only matter for the
    shot-noise / Kalman estimates in :mod:`hotmech.estimator`.
    ``photon_flux`` is the scattered photon rate P/E; the collected rate is
    ``photon_flux * eta_det * eta_geo``.
    """

    delta_m_sq: float = 0.0
    laser_wavelength: float = DEFAULT_WAVELENGTH
    photon_flux: float = 0.0
    eta_det: float = 1.0
    eta_geo: float = 1.0

    def __post_init__(self):
        if not self.delta_m_sq >= 0:
            raise ValueError(f"delta_m_sq must be >= 0, got {self.delta_m_sq!r}")
        if not self.photon_flux >= 0:
            raise ValueError(f"photon_flux must be >= 0, got {self.photon_flux!r}")
        if not self.laser_wavelength > 0:
            raise ValueError("laser_wavelength must be positive")
        if not (self.eta_det > 0 and self.eta_geo > 0):
            raise ValueError("efficiencies must be positive")

    @property
    def collected_flux(self) -> float:
        return self.photon_flux * self.eta_det * self.eta_geo

    @classmethod
    def from_power(cls, power: float, wavelength: float = DEFAULT_WAVELENGTH, **kw) -> "MeasurementParams":
        """Build from a scattered optical power [W]."""
        return cls(laser_wavelength=wavelength, photon_flux=photon_flux_from_power(power, wavelength), **kw)


STANDARD = "standard-two-measurement"
ECHO = "echo-three-measurement"
VARIANTS = (STANDARD, ECHO)


@dataclass(frozen=True)
class ProtocolConfig:
    alpha: float
    t_interact: float
    pulse_phase: float = math.pi / 2
    variant: str = STANDARD

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if not self.t_interact > 0:
            raise ValueError(f"t_interact must be positive, got {self.t_interact!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")


def photon_flux_from_power(power: float, wavelength: float) -> float:
    """Photon rate of a beam of ``power`` watts at ``wavelength`` metres."""
    return power * wavelength / (TWO_PI * HBAR * C_LIGHT)


def kappa(p: SystemParams) -> float:
    """Mechanical energy damping rate omega_r / Q [1/s]."""
    return p.omega_r / p.q_factor


def n_thermal(p: SystemParams) -> float:
    """Bose occupation of the resonator mode."""
    x = HBAR * p.omega_r / (K_B * p.temperature)
    if x > 700.0:
        return math.exp(-x)
    return 1.0 / math.expm1(x)


def cooperativity(p: SystemParams) -> float:
    """lambda^2 / (Gamma kappa n_th)."""
    return p.lambda_coupling**2 / (p.gamma * kappa(p) * n_thermal(p))


# ---------------------------------------------------------------------------
# presets and config files

# 1/Gamma [s], Q, lambda/2pi [Hz], T [K], delta_m^2 ; alpha = 0.4 throughout.
_TABLE1 = {
    "table1-row1": (10e-3, 1e7, 450.0, 4.0, 24.0),
    "table1-row2": (1.6, 1e9, 100.0, 4.0, 8.0),
    "table1-row3": (0.6, 1e9, 1000.0, 77.0, 10.0),
    "table1-row4": (10e-3, 1e9, 400.0, 293.0, 20.0),
    "table1-row5": (10e-3, 1e9, 880.0, 293.0, 27.0),
    "table1-row6": (10e-3, 1e10, 2000.0, 293.0, 0.06),
}
TABLE1_ALPHA = 0.4
PRESET_NAMES = tuple(_TABLE1)


@dataclass(frozen=True)
class ParameterSet:
    """Everything a command needs: hardware, readout and threshold."""

    name: str
    system: SystemParams
    measurement: MeasurementParams
    alpha: float = TABLE1_ALPHA
    source: dict = field(default_factory=dict, compare=False)


def preset(name: str) -> ParameterSet:
    try:
        gamma_inv, q, lam_hz, temp, dm2 = _TABLE1[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}") from None
    values = {
        "gamma_inv_s": gamma_inv,
        "q_factor": q,
        "lambda_over_2pi_hz": lam_hz,
        "temperature_k": temp,
        "omega_r_over_2pi_hz": DEFAULT_OMEGA_R / TWO_PI,
        "delta_m_sq": dm2,
        "alpha": TABLE1_ALPHA,
    }
    return _from_values(name, values)


REQUIRED_KEYS = ("gamma_inv_s", "q_factor", "lambda_over_2pi_hz", "temperature_k", "delta_m_sq")
OPTIONAL_KEYS = {
    "omega_r_over_2pi_hz": DEFAULT_OMEGA_R / TWO_PI,
    "omega_s_over_2pi_hz": DEFAULT_OMEGA_S / TWO_PI,
    "alpha": TABLE1_ALPHA,
    "zp_m": DEFAULT_ZP,
    "mass_kg": None,
    "laser_wavelength_m": DEFAULT_WAVELENGTH,
    "photon_flux_hz": 0.0,
    "laser_power_w": None,
    "eta_det": 1.0,
    "eta_geo": 1.0,
}


def load_config(path: str | Path) -> ParameterSet:
    """Read a ``key = value`` parameter file (``#`` comments allowed)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, name=str(path))


def parse_config(text: str, name: str = "<config>") -> ParameterSet:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("[params]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    raw = dict(parser["params"])
    unknown = set(raw) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS)
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    missing = [k for k in REQUIRED_KEYS if k not in raw]
    if missing:
        raise ConfigError(f"{name}: missing keys {missing}")
    values = {}
    for key, text_value in raw.items():
        try:
            values[key] = float(text_value)
        except ValueError:
            raise ConfigError(f"{name}: {key} is not a number: {text_value!r}") from None
    return _from_values(name, values)


def _from_values(name: str, values: dict) -> ParameterSet:
    v = {**OPTIONAL_KEYS, **values}
    try:
        system = SystemParams(
            gamma=1.0 / v["gamma_inv_s"],
            q_factor=v["q_factor"],
            lambda_coupling=TWO_PI * v["lambda_over_2pi_hz"],
            temperature=v["temperature_k"],
            omega_r=TWO_PI * v["omega_r_over_2pi_hz"],
            omega_s=TWO_PI * v["omega_s_over_2pi_hz"],
            zp=v["zp_m"],
            mass=v["mass_kg"],
        )
        if v["laser_power_w"] is not None:
            flux = photon_flux_from_power(v["laser_power_w"], v["laser_wavelength_m"])
        else:
            flux = v["photon_flux_hz"]
        measurement = MeasurementParams(
            delta_m_sq=v["delta_m_sq"],
            laser_wavelength=v["laser_wavelength_m"],
            photon_flux=flux,
            eta_det=v["eta_det"],
            eta_geo=v["eta_geo"],
        )
        alpha = v["alpha"]
        if not 0 < alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    return ParameterSet(name=name, system=system, measurement=measurement, alpha=alpha, source=dict(values))


def resolve(preset_name: str | None = None, config_path: str | None = None) -> ParameterSet:
    if (preset_name is None) == (config_path is None):
        raise ConfigError("give exactly one of a preset name or a config path")
    return preset(preset_name) if preset_name is not None else load_config(config_path)
