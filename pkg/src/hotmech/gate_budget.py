"""Error budget of a teleported nuclear CNOT built on the heralded Bell pair."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import erfc

from . import analytic
from .params import ParameterSet, SystemParams

# 13C nuclear over electron gyromagnetic ratio (10.7084 / 28024.951 MHz/T).
GAMMA_RATIO_13C = 10.7084 / 28024.951
READOUT_TIME_FACTOR = 20.0  # mechanical readout lasts this many t*
WALL_TIME_MODES = ("per-success", "per-attempt")


@dataclass(frozen=True)
class AncillaryErrors:
    """Error sources beyond the Bell state; all default to zero.

    Attributes:
        e_control: microwave control error per operation.
        eta: feedback multiplier on e_control.
        e_init: charge-state initialization error.
        e_ro: spin readout error.
        e_cnot: electron-nuclear two-qubit gate error.
        e_nuc: nuclear dephasing error.
        gamma_ratio: nuclear / electron gyromagnetic ratio.
        t_ro: mechanical readout duration [s], if readout is mechanical.
        gamma1: spin relaxation rate during readout [1/s].
    """

    e_control: float = 0.0
    eta: float = 0.0
    e_init: float = 0.0
    e_ro: float = 0.0
    e_cnot: float = 0.0
    e_nuc: float = 0.0
    gamma_ratio: float = GAMMA_RATIO_13C
    t_ro: float | None = None
    gamma1: float = 0.0

    def __post_init__(self):
        for name in ("e_control", "e_init", "e_ro", "e_cnot", "e_nuc"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.gamma_ratio < 0 or self.gamma1 < 0:
            raise ValueError("rates must be >= 0")


def total_error(e_bell, anc: AncillaryErrors):
    """E + 2 ((1 + eta) E_C + E_init + E_RO + E_CNOT + E_nuc), clipped to [0, 1]."""
    extra = (1.0 + anc.eta) * anc.e_control + anc.e_init + anc.e_ro + anc.e_cnot + anc.e_nuc
    return np.clip(np.asarray(e_bell, dtype=float) + 2.0 * extra, 0.0, 1.0)


def mech_readout_displacement(p: SystemParams, t_ro, gamma1: float = 0.0, sigma_z: float = 1.0):
    """Mean momentum shift from a relaxing spin driving the resonator for t_ro."""
    t = np.asarray(t_ro, dtype=float)
    d = 0.5 * p.kappa - gamma1
    scale = 2.0 * math.sqrt(2.0) * p.lambda_coupling * sigma_z / math.pi
    # (e^{-G1 t} - e^{-k t/2}) / d = e^{-G1 t} (1 - e^{-d t}) / d
    x = d * t
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, x)
    ratio = np.where(small, t * (1.0 - x / 2.0 + x * x / 6.0), -np.expm1(-safe) / np.where(small, 1.0, d))
    return scale * np.exp(-gamma1 * t) * ratio


def mech_readout_error(p: SystemParams, t_ro):
    """Misassignment probability of a diffusion-limited mechanical spin readout."""
    t = np.asarray(t_ro, dtype=float)
    arg = p.lambda_coupling / math.pi * np.sqrt(4.0 * t / p.diffusion_rate)
    return 0.5 * erfc(arg)


def mech_readout_error_c(c, gamma_t_ro):
    """mech_readout_error in terms of C and Gamma t_RO only."""
    return 0.5 * erfc(np.sqrt(4.0 * np.asarray(c) * np.asarray(gamma_t_ro) / analytic.PI2))


def nuclear_dephasing_error(p: SystemParams, anc: AncillaryErrors, wall_time):
    """(1 - exp(-Gamma gamma_N / gamma_e * wall_time)) / 2."""
    w = np.asarray(wall_time, dtype=float)
    if np.any(w < 0):
        raise ValueError("wall_time must be >= 0")
    return -0.5 * np.expm1(-p.gamma * anc.gamma_ratio * w)


def wall_time(t_opt: float, acceptance: float, mode: str = "per-success") -> float:
    """Time over which the nuclear memory waits."""
    if mode == "per-attempt":
        return t_opt
    if mode == "per-success":
        return t_opt / acceptance if acceptance > 0 else math.inf
    raise ValueError(f"mode must be one of {WALL_TIME_MODES}")


@dataclass(frozen=True)
class GateCurve:
    c: np.ndarray
    gamma_t: np.ndarray
    e_bell: np.ndarray
    e_ro: np.ndarray
    e_total: np.ndarray
    e_reference: np.ndarray

    def rows(self):
        for i in range(len(self.c)):
            yield {
                "C": float(self.c[i]),
                "gamma_t_opt": float(self.gamma_t[i]),
                "E_bell": float(self.e_bell[i]),
                "E_RO": float(self.e_ro[i]),
                "E_T": float(self.e_total[i]),
                "E_hot_gate": float(self.e_reference[i]),
            }


def gate_error_curve(c_values, e_cnot: float = 1e-4, alpha: float = 0.0, readout_factor: float = READOUT_TIME_FACTOR, anc: AncillaryErrors | None = None) -> GateCurve:
    """Total gate error vs cooperativity with a mechanical spin readout.

    Uses the zero-readout-noise optimum at each C; the readout runs for
    ``readout_factor`` optimal interaction times.  Other ancillary errors
    come from ``anc`` (zero by default).
    """
    c_values = np.asarray(c_values, dtype=float)
    base = anc or AncillaryErrors()
    gt = np.array([analytic.optimal_gamma_t(c, alpha) for c in c_values])
    e_bell = 1.0 - np.array([float(analytic.fidelity_c(c, g, alpha)) for c, g in zip(c_values, gt)])
    e_ro = mech_readout_error_c(c_values, readout_factor * gt)
    total = np.array([
        float(total_error(eb, AncillaryErrors(**{**asdict(base), "e_cnot": e_cnot, "e_ro": float(er)})))
        for eb, er in zip(e_bell, e_ro)
    ])
    ref = analytic.hot_gate_error(c_values) + 2.0 * e_cnot
    return GateCurve(c_values, gt, e_bell, e_ro, total, ref)


@dataclass(frozen=True)
class BudgetReport:
    name: str
    e_bell: float
    t_opt: float
    acceptance: float
    wall_time: float
    e_ro: float
    e_nuc: float
    e_total: float
    e_hot_gate: float
    ancillary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def budget_report(ps: ParameterSet, anc: AncillaryErrors | None = None, mode: str = "per-success") -> BudgetReport:
    """Bell-state error plus mechanical readout and nuclear dephasing for one parameter set."""
    anc = anc or AncillaryErrors()
    p = ps.system
    rep = analytic.analyze(p, ps.measurement, ps.alpha)
    acceptance = rep.rate_tp + rep.rate_fp
    w = wall_time(rep.t_opt, acceptance, mode)
    t_ro = READOUT_TIME_FACTOR * rep.t_opt if anc.t_ro is None else anc.t_ro
    e_ro = float(mech_readout_error(p, t_ro)) if anc.e_ro == 0 else anc.e_ro
    e_nuc = float(nuclear_dephasing_error(p, anc, w)) if anc.e_nuc == 0 else anc.e_nuc
    filled = AncillaryErrors(**{**asdict(anc), "e_ro": e_ro, "e_nuc": e_nuc, "t_ro": t_ro})
    return BudgetReport(
        name=ps.name,
        e_bell=rep.error,
        t_opt=rep.t_opt,
        acceptance=acceptance,
        wall_time=w,
        e_ro=e_ro,
        e_nuc=e_nuc,
        e_total=float(total_error(rep.error, filled)),
        e_hot_gate=float(analytic.hot_gate_error(p.cooperativity)),
        ancillary=asdict(filled),
    )
