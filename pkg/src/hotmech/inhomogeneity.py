"""Fidelity loss from unequal spin couplings and the echo sequence.

All quantities share the quadrature units of :mod:`hotmech.analytic`.  A
coupling mismatch delta_lambda displaces the anti-parallel states by
+-2 sqrt2 delta_lambda t / pi and dephases them through the thermal motion.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc

from . import analytic, mech_sim
from .params import ECHO, MeasurementParams, ProtocolConfig, SystemParams

SQRT2 = math.sqrt(2.0)
PI2 = math.pi**2
# Combined uncertainty of three identical readouts, in units of delta_m^2.
ECHO_READOUT_FACTOR = 6.0


class ProjectionWarning(UserWarning):
    """Noise-free readout fully resolves the anti-parallel branches."""


def _echo_kernel(u):
    """u + 12 e^{-u/4} + 4 e^{-3u/4} - 8 e^{-u/2} - e^{-u} - 7, stable near 0."""
    u = np.asarray(u, dtype=float)
    direct = u + 12 * np.exp(-u / 4) + 4 * np.exp(-3 * u / 4) - 8 * np.exp(-u / 2) - np.exp(-u) - 7
    series = np.zeros_like(u)
    term_u = np.ones_like(u)
    fact = 1.0
    for n in range(1, 16):
        term_u = term_u * -u
        fact *= n
        if n >= 3:
            coeff = 12 * 0.25**n + 4 * 0.75**n - 8 * 0.5**n - 1
            series = series + coeff * term_u / fact
    return np.where(u < 0.1, series, direct)


def sigma_dphi_sq(p: SystemParams, delta_lambda: float, t, exact: bool = True):
    """Variance of the anti-parallel relative phase after an echo of length t."""
    t = np.asarray(t, dtype=float)
    if not exact or p.kappa == 0:
        return 16.0 / (3.0 * PI2) * p.diffusion_rate * delta_lambda**2 * t**3
    k = p.kappa
    return 16.0 / PI2 * 16.0 * p.n_th * delta_lambda**2 / k**2 * _echo_kernel(k * t)


def dephasing_fidelity_factor(s2):
    """(1 + exp(-sigma^2 / 2)) / 2."""
    return 0.5 * (1.0 + np.exp(-0.5 * np.asarray(s2, dtype=float)))


def projection_fidelity_factor(delta_g: float, s2: float, method: str = "quad") -> float:
    """Fidelity multiplier from readout which-branch information and dephasing.

    Args:
        delta_g: branch displacement over readout uncertainty.
        s2: phase variance.
        method: "quad" integrates the Gaussian overlap numerically, "closed"
            uses its closed form and "expansion" the lowest-order expansion.
    """
    if math.isinf(delta_g):
        warnings.warn("zero readout noise with a branch displacement: full projection", ProjectionWarning, stacklevel=2)
        return 0.5
    if method == "expansion":
        return 1.0 - delta_g**2 / 4.0 - s2 / 4.0
    if method == "closed":
        overlap = math.exp(-0.5 * delta_g**2)
    elif method == "quad":
        def integrand(z):
            return math.exp(-0.5 * (z * z + delta_g**2)) / math.sqrt(2 * math.pi)

        overlap = quad(integrand, -np.inf, np.inf, epsabs=0.0, epsrel=1e-12)[0]
    else:
        raise ValueError(f"unknown method {method!r}")
    return 0.5 + 0.5 * math.exp(-0.5 * s2) * overlap


def shifted_true_positive(g, alpha, delta_g):
    """True-positive probability when the anti-parallel peak is shifted by delta_g."""
    g = np.asarray(g, dtype=float)
    ag = alpha * g
    return 0.5 - 0.25 * (erfc((ag + delta_g) / SQRT2) + erfc((ag - delta_g) / SQRT2))


def branch_displacement(delta_lambda: float, t):
    """|delta mu| = 2 sqrt2 delta_lambda t / pi."""
    return 2.0 * SQRT2 * delta_lambda * np.asarray(t, dtype=float) / math.pi


def dl_max_phi(p: SystemParams, t: float, error: float) -> float:
    """Mismatch at which phonon dephasing alone produces ``error``."""
    kn = p.diffusion_rate
    if kn == 0:
        return math.inf
    return math.sqrt(3.0 * PI2 / (16.0 * kn * t**3) * math.log(1.0 / (1.0 - 2.0 * error) ** 2))


def dl_max_m(delta_m_bar_sq: float, t: float, error: float) -> float:
    """Mismatch at which readout which-branch information reaches ``error``."""
    return math.sqrt(PI2 * delta_m_bar_sq * error / (2.0 * t**2))


def dl_max_disp(sigma: float, t: float, rp0: float, rf: float, alpha: float, g: float, error: float) -> float:
    """Mismatch at which the shifted acceptance window changes S by ``error``."""
    core = 2.0 * math.sqrt(2.0 * math.pi) * error * math.exp(alpha**2 * g**2 / 2.0) / (alpha * g)
    return math.pi * sigma * (rp0 + rf) / (2.0 * SQRT2 * t) * math.sqrt(core)


@dataclass(frozen=True)
class InhomogeneityBudget:
    delta_lambda: float
    sigma_dphi_sq: float
    dl_max_phi: float
    dl_max_m: float
    dl_max_disp: float
    dl_max: float
    delta_g: float
    t_opt: float
    error: float

    @property
    def limiting(self) -> str:
        terms = {"phi": self.dl_max_phi, "m": self.dl_max_m, "disp": self.dl_max_disp}
        return min(terms, key=terms.get)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["limiting"] = self.limiting
        return d


def tolerances(
    p: SystemParams,
    m: MeasurementParams,
    alpha: float,
    target_error: float | None = None,
    delta_lambda: float = 0.0,
) -> InhomogeneityBudget:
    """Largest coupling mismatch that leaves the error budget intact.

    The optimum (t*, error, sigma, g, rates) is recomputed with zero readout
    noise at the same cooperativity; the readout term still uses the three-
    measurement uncertainty 6 delta_m^2 of the given readout.

    Args:
        target_error: error each mechanism may contribute; defaults to the
            optimal error itself.
    """
    ideal = replace(m, delta_m_sq=0.0)
    t = analytic.optimal_time(p, ideal, alpha)
    report = analytic.analyze(p, ideal, alpha, t=t)
    error = report.error if target_error is None else target_error
    if not 0 < error < 0.5:
        raise ValueError(f"target error must lie in (0, 1/2), got {error}")
    sigma = math.sqrt(report.sigma_sq)
    phi = dl_max_phi(p, t, error)
    meas = dl_max_m(ECHO_READOUT_FACTOR * m.delta_m_sq, t, error)
    disp = dl_max_disp(sigma, t, report.rate_tp, report.rate_fp, alpha, report.g_value, error)
    return InhomogeneityBudget(
        delta_lambda=delta_lambda,
        sigma_dphi_sq=float(sigma_dphi_sq(p, delta_lambda, t)),
        dl_max_phi=phi,
        dl_max_m=meas,
        dl_max_disp=disp,
        dl_max=min(phi, meas, disp),
        delta_g=float(branch_displacement(delta_lambda, t)) / sigma,
        t_opt=t,
        error=error,
    )


def echo_sigma_sq(p: SystemParams, m: MeasurementParams, t):
    """Variance of the three-readout echo statistic."""
    t = np.asarray(t, dtype=float)
    k = p.kappa
    readout = m.delta_m_sq * (1.0 + 4.0 * np.exp(-0.5 * k * t) + np.exp(-k * t))
    return readout + p.n_th * -np.expm1(-k * t)


def run_echo_protocol(p: SystemParams, m: MeasurementParams, cfg: ProtocolConfig, delta_lambda: float, seed) -> mech_sim.ProtocolOutcome:
    """One echo attempt: readouts at 0, t/2 and t with a pi pulse at t/2."""
    if cfg.variant != ECHO:
        raise ValueError("run_echo_protocol needs the echo-three-measurement variant")
    return mech_sim.run_protocol(p, m, cfg, seed, delta_lambda=delta_lambda)


def echo_phase_samples(
    p: SystemParams,
    delta_lambda: float,
    t: float,
    n: int,
    seed,
    echo: bool = True,
    x0: float = 0.0,
) -> np.ndarray:
    """Relative phase of the anti-parallel states from sampled x~ paths.

    Uses the exact joint transition of x~ and its signed time integral, with
    the initial x~ fixed at ``x0``.
    """
    rng = np.random.default_rng(seed)
    segments = [(1.0, t / 2), (-1.0, t / 2)] if echo else [(1.0, t)]
    _, integral = mech_sim._phase_segments(p, np.full(n, float(x0)), segments, rng)
    return mech_sim.PHASE_RATE * delta_lambda * integral


def coherent_phase_gain(p: SystemParams, t: float, echo: bool = True) -> float:
    """Phase per unit delta_lambda * x0 from the initial displacement alone."""
    k2 = 0.5 * p.kappa
    if echo:
        if k2 == 0:
            return 0.0
        val = (1.0 - math.exp(-k2 * t / 2)) ** 2 / k2
        # int_0^{t/2} e^{-k2 s} ds - int_{t/2}^{t} e^{-k2 s} ds
        return mech_sim.PHASE_RATE * val
    return mech_sim.PHASE_RATE * float(analytic._saturating_time(p.kappa, t))
