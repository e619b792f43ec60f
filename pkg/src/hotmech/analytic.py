"""Closed-form displacements, heralding rates, fidelity and optimal times.

Every function takes scalars or numpy arrays for time / g.  ``alpha = 0``
is the exact alpha -> 0 limit (never fed into r_p / (r_p + r_f)).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import erf, erfc, expit

from .golden import scan_then_refine
from .params import MeasurementParams, ProtocolConfig, SystemParams

SQRT2 = math.sqrt(2.0)
PI2 = math.pi**2
C_THRESHOLD = PI2 / 8.0  # entanglement possible only above this cooperativity

# Hot deterministic gate reference: alpha_k / alpha_T = 4 / 0.1.
HOT_GATE_PREFACTOR = 1.2
HOT_GATE_ALPHA_RATIO = 40.0


class UndefinedAcceptanceError(ArithmeticError):
    """r_p + r_f = 0: the success probability has no value."""


class NoEntanglementError(ValueError):
    """Cooperativity at or below pi^2/8: closed forms have no domain."""


class NoEntanglementWarning(UserWarning):
    """The best achievable fidelity does not exceed 1/2."""


# ---------------------------------------------------------------------------
# displacements and variances


def _saturating_time(kappa: float, t):
    """(1 - exp(-kappa t / 2)) / (kappa / 2), with the kappa -> 0 limit t."""
    t = np.asarray(t, dtype=float)
    if kappa == 0:
        return t
    return -np.expm1(-0.5 * kappa * t) / (0.5 * kappa)


def displacement_for_force(p: SystemParams, force: float, t):
    """Momentum shift for a coupling-times-spin product ``force`` [rad/s]."""
    return -2.0 * SQRT2 * force * _saturating_time(p.kappa, t) / math.pi


def displacement_mu(p: SystemParams, s_z: int, t):
    """Momentum shift of the resonator after time t for spin sector s_z."""
    return displacement_for_force(p, p.lambda_coupling * s_z, t)


def sigma_sq(p: SystemParams, m: MeasurementParams, t):
    """Variance of the momentum difference M2 - exp(-kappa t/2) M1."""
    t = np.asarray(t, dtype=float)
    decay = -np.expm1(-p.kappa * t)
    return m.delta_m_sq * (2.0 - decay) + p.n_th * decay


def g_normalized(p: SystemParams, m: MeasurementParams, t, linearized: bool = False):
    """|mu(2, t)| / (2 sigma(t)).

    With ``linearized`` the small-kappa t, zero-readout-noise form
    g^2 = 8 C Gamma t / pi^2 is returned instead.
    """
    t = np.asarray(t, dtype=float)
    if linearized:
        return np.sqrt(8.0 / PI2 * p.cooperativity * p.gamma * t)
    s2 = sigma_sq(p, m, t)
    mu = np.abs(displacement_mu(p, 2, t))
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(s2 > 0, mu / (2.0 * np.sqrt(s2)), np.where(mu > 0, np.inf, 0.0))
    return g


# ---------------------------------------------------------------------------
# heralding rates


def rate_false_positive(g, alpha):
    """Probability per attempt of accepting a parallel-spin state."""
    g = np.asarray(g, dtype=float)
    x1 = (2.0 - alpha) * g / SQRT2
    x2 = (2.0 + alpha) * g / SQRT2
    # erf difference near zero, erfc difference in the tail: no cancellation.
    small = 0.25 * (erf(x2) - erf(x1))
    tail = 0.25 * (erfc(x1) - erfc(x2))
    return np.where(x1 < 1.0, small, tail)


def false_positive_bound(g, alpha):
    """Upper bound exp(-(2 - alpha)^2 g^2 / 2) / 4 on the false-positive rate."""
    g = np.asarray(g, dtype=float)
    return 0.25 * np.exp(-((2.0 - alpha) * g) ** 2 / 2.0)


def rate_true_positive(g, alpha):
    """Probability per attempt of accepting an anti-parallel state."""
    return 0.5 * erf(alpha * np.asarray(g, dtype=float) / SQRT2)


def success_probability(g, alpha):
    """Fraction of accepted events that are true positives.

    ``alpha = 0`` returns the exact limit 1 / (1 + exp(-2 g^2)).

    Raises:
        UndefinedAcceptanceError: if r_p + r_f vanishes (g = 0).
    """
    g = np.asarray(g, dtype=float)
    if alpha == 0:
        return expit(2.0 * g**2)
    rp = rate_true_positive(g, alpha)
    rf = rate_false_positive(g, alpha)
    total = rp + rf
    if np.any(total <= 0):
        raise UndefinedAcceptanceError("no acceptance window: r_p + r_f = 0 (g = 0)")
    return rp / total


def success_probability_small_alpha(g, alpha):
    """Second-order expansion of S in alpha."""
    g = np.asarray(g, dtype=float)
    return expit(2.0 * g**2) - g**4 * alpha**2 / (6.0 * np.cosh(g**2) ** 2)


# ---------------------------------------------------------------------------
# fidelity and optimal time


def coherence_factor(p: SystemParams, t):
    return 0.5 * (1.0 + np.exp(-2.0 * p.gamma * np.asarray(t, dtype=float)))


def fidelity_at(p: SystemParams, m: MeasurementParams, alpha: float, t, linearized: bool = False):
    """Bell-state fidelity after a heralded attempt of duration t."""
    g = g_normalized(p, m, t, linearized=linearized)
    return coherence_factor(p, t) * success_probability(g, alpha)


def fidelity(p: SystemParams, m: MeasurementParams, cfg: ProtocolConfig):
    return fidelity_at(p, m, cfg.alpha, cfg.t_interact)


def optimal_gamma_t_analytic(c):
    """Small-alpha approximation to the optimal Gamma t."""
    c = float(c)
    if c <= C_THRESHOLD:
        raise NoEntanglementError(f"C = {c:.6g} <= pi^2/8: no entangling optimum")
    return PI2 / (16.0 * c) * math.log(16.0 * c / PI2 - 1.0)


def time_window(p: SystemParams) -> float:
    """Upper end of the optimal-time search window, min(10/Gamma, 1/kappa)."""
    hi = 10.0 / p.gamma
    return hi if p.kappa == 0 else min(hi, 1.0 / p.kappa)


def optimal_time(p: SystemParams, m: MeasurementParams, alpha: float, mode: str = "numeric") -> float:
    """Interaction time that maximizes the fidelity.

    Args:
        mode: "numeric" maximizes the full expression; "analytic" returns the
            small-alpha, zero-readout-noise approximation.

    Raises:
        NoEntanglementError: analytic mode with C <= pi^2/8.
    """
    if mode == "analytic":
        return optimal_gamma_t_analytic(p.cooperativity) / p.gamma
    if mode != "numeric":
        raise ValueError(f"unknown mode {mode!r}")
    hi = math.log(time_window(p))
    lo = hi - math.log(1e10)
    seeds = []
    if p.cooperativity > C_THRESHOLD:
        seeds.append(math.log(optimal_gamma_t_analytic(p.cooperativity) / p.gamma))
    u, f_best = scan_then_refine(lambda u: float(fidelity_at(p, m, alpha, math.exp(u))), lo, hi, xtol=1e-6, seeds=seeds)
    if f_best <= 0.5:
        warnings.warn(f"best fidelity {f_best:.4f} does not exceed 1/2", NoEntanglementWarning, stacklevel=2)
    return math.exp(u)


# ---------------------------------------------------------------------------
# cooperativity-only forms (zero readout noise, kappa t << 1)


def fidelity_c(c, gamma_t, alpha: float = 0.0):
    """Fidelity as a function of C and Gamma t only."""
    gamma_t = np.asarray(gamma_t, dtype=float)
    g = np.sqrt(8.0 / PI2 * c * gamma_t)
    return 0.5 * (1.0 + np.exp(-2.0 * gamma_t)) * success_probability(g, alpha)


def optimal_gamma_t(c: float, alpha: float = 0.0) -> float:
    """Numeric argmax of fidelity_c over Gamma t in (0, 10]."""
    hi = math.log(10.0)
    lo = math.log(1e-16)
    seeds = [math.log(optimal_gamma_t_analytic(c))] if c > C_THRESHOLD else []
    u, _ = scan_then_refine(lambda u: float(fidelity_c(c, math.exp(u), alpha)), lo, hi, n_grid=401, xtol=1e-8, seeds=seeds)
    return math.exp(u)


def fidelity_lower_bound(c):
    """Fidelity reached at the approximate optimal time (alpha -> 0).

    Raises:
        NoEntanglementError: for C <= pi^2/8.
    """
    c = float(c)
    if c <= C_THRESHOLD:
        raise NoEntanglementError(f"C = {c:.6g} <= pi^2/8")
    b = 16.0 * c / PI2 - 1.0
    return 0.5 * (1.0 + math.exp(-PI2 / (8.0 * c) * math.log(b))) / (1.0 + 1.0 / b)


def error_lower_bound(c) -> float:
    """1 - fidelity_lower_bound, computed without cancellation."""
    c = float(c)
    if c <= C_THRESHOLD:
        raise NoEntanglementError(f"C = {c:.6g} <= pi^2/8")
    b = 16.0 * c / PI2 - 1.0
    # 1 - (1 + y) b / (2 (b + 1)) = ((1 - y) b + 2) / (2 (b + 1))
    one_minus_y = -math.expm1(-PI2 / (8.0 * c) * math.log(b))
    return (one_minus_y * b + 2.0) / (2.0 * (b + 1.0))


def scaling_exponent(c) -> float:
    """Published closed form for d ln E / d ln C (alpha -> 0)."""
    c = float(c)
    if c <= C_THRESHOLD:
        raise NoEntanglementError(f"C = {c:.6g} <= pi^2/8")
    b = 16.0 * c / PI2 - 1.0
    ln_y = PI2 / (8.0 * c) * math.log(b)
    y = math.exp(ln_y)
    return -PI2 / 8.0 * y * math.log(b) / (c * math.expm1(ln_y))


def scaling_exponent_exact(c) -> float:
    """Exact logarithmic derivative of error_lower_bound with respect to C."""
    c = float(c)
    if c <= C_THRESHOLD:
        raise NoEntanglementError(f"C = {c:.6g} <= pi^2/8")
    b = 16.0 * c / PI2 - 1.0
    a = PI2 / (8.0 * c)
    u = math.exp(-a * math.log(b))
    # d b / d ln C = b + 1 and d a / d ln C = -a
    du = u * (a * math.log(b) - a * (b + 1.0) / b)
    df = 0.5 * (du * b / (b + 1.0) + (1.0 + u) / (b + 1.0))
    return -df / error_lower_bound(c)


def asymptotic_error(c):
    """Two-term large-C expansion of the error at the approximate optimum."""
    c = np.asarray(c, dtype=float)
    return PI2 / 16.0 * np.log(c) / c + PI2 * (1.0 + math.log(16.0 / PI2)) / (16.0 * c)


def asymptotic_gap(c: float) -> float:
    """Relative gap between asymptotic_error and error_lower_bound."""
    exact = error_lower_bound(c)
    return abs(float(asymptotic_error(c)) - exact) / exact


def asymptotic_valid(c: float, max_exponent: float = 0.1) -> bool:
    """Whether the expansion of B^(-pi^2/8C) to first order is justified.

    The asymptote linearizes exp(-x) with x = pi^2 ln(16C/pi^2 - 1) / 8C;
    we call it valid while x <= ``max_exponent``.
    """
    if c <= C_THRESHOLD:
        return False
    return PI2 / (8.0 * c) * math.log(16.0 * c / PI2 - 1.0) <= max_exponent


@dataclass(frozen=True)
class HotGateReference:
    error: float
    omega_opt: float


def hot_gate_error(c):
    return HOT_GATE_PREFACTOR / np.sqrt(np.asarray(c, dtype=float))


def hot_gate_reference(p: SystemParams) -> HotGateReference:
    """Error and optimal resonator frequency of the deterministic hot gate."""
    omega = p.lambda_coupling * math.sqrt(p.diffusion_rate / p.gamma * HOT_GATE_ALPHA_RATIO)
    return HotGateReference(error=float(hot_gate_error(p.cooperativity)), omega_opt=omega)


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class AnalyticReport:
    c: float
    t_opt: float
    fidelity: float
    error: float
    rate_tp: float
    rate_fp: float
    g_value: float
    sigma_sq: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HeraldingRates:
    """Per-attempt probability, per-second rate and total acceptance."""

    per_attempt: float
    per_second: float
    acceptance: float


def analyze(p: SystemParams, m: MeasurementParams, alpha: float, t: float | None = None) -> AnalyticReport:
    """Evaluate every closed form at the optimal (or a given) time."""
    t_opt = optimal_time(p, m, alpha) if t is None else float(t)
    g = float(g_normalized(p, m, t_opt))
    f = float(fidelity_at(p, m, alpha, t_opt))
    return AnalyticReport(
        c=p.cooperativity,
        t_opt=t_opt,
        fidelity=f,
        error=1.0 - f,
        rate_tp=float(rate_true_positive(g, alpha)) if alpha else 0.0,
        rate_fp=float(rate_false_positive(g, alpha)) if alpha else 0.0,
        g_value=g,
        sigma_sq=float(sigma_sq(p, m, t_opt)),
    )


def heralding_rates(report: AnalyticReport) -> HeraldingRates:
    return HeraldingRates(
        per_attempt=report.rate_tp,
        per_second=report.rate_tp / report.t_opt,
        acceptance=report.rate_tp + report.rate_fp,
    )
