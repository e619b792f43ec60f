"""Kalman estimation of the resonator from shot-noise-limited readout.

State is (x, p) / z_p, so the thermal covariance is 2 n_th * I and the
process-noise intensity on p is 4 kappa n_th.  The measurement is a photon
rate z = H (x, p) + white noise of intensity R (the collected photon flux),
with H = (0, R / a) for momentum readout and a = lambda_l / (2 pi z_p).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_continuous_lyapunov
from scipy.optimize import brentq

from . import mech_sim
from .kernels import van_loan
from .params import MeasurementParams, SystemParams

READOUTS = ("momentum", "position")
RESIDUAL_TOL = 1e-10


class RiccatiConvergenceError(ArithmeticError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3g})")
        self.residual = residual


class FilterDivergenceError(ArithmeticError):
    """Filter covariance stopped being finite or positive semi-definite."""


class BackactionWarning(UserWarning):
    """Readout variance below one quantum: neglecting backaction is unsafe."""


def readout_scale(p: SystemParams, m: MeasurementParams) -> float:
    """a = lambda_l / (2 pi z_p): converts photon-phase to z_p units."""
    return m.laser_wavelength / (2.0 * math.pi * p.zp)


@dataclass(frozen=True)
class FilterModel:
    """Continuous linear model dx = F x dt + L dw, z = H x + v.

    Attributes:
        f: drift matrix.
        l: noise injection vector.
        qc: white-noise intensity of w.
        h: measurement row.
        r_noise: white-noise intensity of v.
    """

    f: np.ndarray
    l: np.ndarray
    qc: float
    h: np.ndarray
    r_noise: float
    readout: str = "momentum"

    def __post_init__(self):
        for name in ("f", "l", "h"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.qc < 0:
            raise ValueError("qc must be >= 0")
        if self.r_noise < 0:
            raise ValueError("r_noise must be >= 0")
        if np.linalg.eigvals(self.f).real.max() > 1e-12 * np.abs(self.f).max():
            raise ValueError("F must have eigenvalues with non-positive real parts")

    @classmethod
    def from_params(cls, p: SystemParams, m: MeasurementParams, readout: str = "momentum") -> "FilterModel":
        if readout not in READOUTS:
            raise ValueError(f"readout must be one of {READOUTS}")
        rate = m.collected_flux
        gain = rate / readout_scale(p, m)
        h = [0.0, gain] if readout == "momentum" else [gain, 0.0]
        f = [[0.0, p.omega_r], [-p.omega_r, -p.kappa]]
        return cls(f=f, l=[0.0, 1.0], qc=4.0 * p.diffusion_rate, h=h, r_noise=rate, readout=readout)

    @property
    def process_noise(self) -> np.ndarray:
        return self.qc * np.outer(self.l, self.l)

    @property
    def info_rate(self) -> np.ndarray:
        """H^T R^-1 H, zero without measurement."""
        if self.r_noise == 0:
            return np.zeros((2, 2))
        return np.outer(self.h, self.h) / self.r_noise

    @property
    def omega(self) -> float:
        return float(self.f[0, 1])

    @property
    def kappa(self) -> float:
        return float(-self.f[1, 1])


def riccati_residual(model: FilterModel, pss: np.ndarray) -> float:
    """Backward error ||res|| / (2 ||F|| ||P|| + ||Q|| + ||P S P||)."""
    s = model.info_rate
    q = model.process_noise
    pgp = pss @ s @ pss
    res = model.f @ pss + pss @ model.f.T + q - pgp
    scale = 2.0 * np.linalg.norm(model.f) * np.linalg.norm(pss) + np.linalg.norm(q) + np.linalg.norm(pgp)
    scale = max(scale, np.finfo(float).tiny)
    return float(np.linalg.norm(res) / scale)


def _direct(model: FilterModel) -> np.ndarray | None:
    s = model.info_rate
    q, w, k = model.qc * model.l[1] ** 2, model.omega, model.kappa
    if model.l[0] != 0:
        return None
    if not s.any():
        if k == 0:
            return None
        return q / (2.0 * k) * np.eye(2)
    if s[0, 0] == 0 and s[0, 1] == 0:
        # momentum readout: isotropic solution c I with s c^2 + 2 kappa c - q = 0
        sp = s[1, 1]
        c = q / (k + math.sqrt(k * k + q * sp))
        return c * np.eye(2)
    if s[1, 1] == 0 and s[0, 1] == 0:
        sx = s[0, 0]

        def parts(a):
            b = sx * a * a / (2.0 * w)
            c = a + b * (k + sx * a) / w
            return b, c

        def eq(a):
            b, c = parts(a)
            return -2.0 * w * b - 2.0 * k * c + q - sx * b * b

        hi = math.sqrt(q / sx) if sx > 0 else 1.0
        while eq(hi) > 0:
            hi *= 2.0
        a = brentq(eq, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        b, c = parts(a)
        return np.array([[a, b], [b, c]])
    return None


def _doubling(model: FilterModel, max_iter: int = 60) -> np.ndarray:
    """Doubling on the exactly discretized model, then Newton polishing."""
    w = max(abs(model.omega), model.kappa, 1e-300)
    h = 0.01 / w
    phi, qd = van_loan(model.f, model.process_noise, h)
    g = model.info_rate * h
    a_k, g_k, h_k = phi.T, g, qd
    eye = np.eye(2)
    for _ in range(max_iter):
        w_inv = np.linalg.inv(eye + g_k @ h_k)
        a_next = a_k @ w_inv @ a_k
        g_next = g_k + a_k @ w_inv @ g_k @ a_k.T
        h_next = h_k + a_k.T @ h_k @ w_inv @ a_k
        done = np.linalg.norm(h_next - h_k) <= 1e-15 * np.linalg.norm(h_next)
        a_k, g_k, h_k = a_next, g_next, h_next
        if done:
            break
    pss = 0.5 * (h_k + h_k.T)
    s = model.info_rate
    for _ in range(20):
        closed = model.f - pss @ s
        rhs = -(model.process_noise + pss @ s @ pss)
        nxt = solve_continuous_lyapunov(closed, rhs)
        nxt = 0.5 * (nxt + nxt.T)
        if np.linalg.norm(nxt - pss) <= 1e-14 * np.linalg.norm(nxt):
            pss = nxt
            break
        pss = nxt
    return pss


def riccati_steady_state(model: FilterModel, method: str = "auto") -> np.ndarray:
    """Steady-state error covariance of the continuous filter.

    Args:
        method: "auto" tries the algebraic 2x2 solution first, "direct" or
            "doubling" force one path.

    Raises:
        RiccatiConvergenceError: if no solution meets the residual tolerance.
    """
    attempts = {"auto": ("direct", "doubling"), "direct": ("direct",), "doubling": ("doubling",)}[method]
    best = math.inf
    for name in attempts:
        try:
            pss = _direct(model) if name == "direct" else _doubling(model)
        except (np.linalg.LinAlgError, ValueError, ArithmeticError):
            pss = None
        if pss is None or not np.all(np.isfinite(pss)):
            continue
        res = riccati_residual(model, pss)
        if res < RESIDUAL_TOL:
            return pss
        best = min(best, res)
    raise RiccatiConvergenceError("no steady-state covariance found", best)


def filter_time_constant(model: FilterModel, pss: np.ndarray | None = None) -> float:
    """1 / (kappa + tr(P_ss H^T R^-1 H)): e-folding time of covariance errors.

    The rotation averages the information rate over both quadratures, so
    deviations from P_ss decay at kappa plus the mean measurement rate.
    """
    pss = riccati_steady_state(model) if pss is None else pss
    return 1.0 / (model.kappa + float(np.trace(pss @ model.info_rate)))


@dataclass(frozen=True)
class DeltaMSquared:
    expanded: float
    exact: float


def delta_m_closed_form(p: SystemParams, m: MeasurementParams) -> DeltaMSquared:
    """Steady-state readout variance in z_p units.

    ``expanded`` is 2 a sqrt(kappa n_th / R); ``exact`` keeps the damping
    term the expansion drops.
    """
    a = readout_scale(p, m)
    rate = m.collected_flux
    q = 4.0 * p.diffusion_rate
    k = p.kappa
    if rate == 0:
        expanded = math.inf
        exact = q / (2.0 * k) if k > 0 else math.inf
    else:
        s = rate / (a * a)
        expanded = 2.0 * a * math.sqrt(p.diffusion_rate / rate)
        exact = q / (k + math.sqrt(k * k + q * s))
    if exact < 1.0:
        warnings.warn(f"readout variance {exact:.3g} < 1: backaction not negligible", BackactionWarning, stacklevel=2)
    return DeltaMSquared(expanded=expanded, exact=exact)


# ---------------------------------------------------------------------------
# discrete filter


@dataclass(frozen=True)
class FilterTrace:
    """Filter output at t = dt, 2 dt, ...; means are (n_records, n_steps, 2)."""

    t: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    gain: np.ndarray


def run_filter(model: FilterModel, record, dt: float, x0=None, p0=None) -> FilterTrace:
    """Discretized continuous Kalman filter over one or many records.

    Propagation uses the exact transition and integrated process noise per
    step; the update sees measurement noise R / dt and uses the Joseph form.
    The covariance and gain sequences do not depend on the data, so many
    records are filtered at once.

    Raises:
        FilterDivergenceError: if the covariance becomes non-finite or indefinite.
    """
    z = np.atleast_2d(np.asarray(record, dtype=float))
    n_rec, n_steps = z.shape
    phi, qd = van_loan(model.f, model.process_noise, dt)
    if p0 is None:
        if model.kappa > 0:
            p0 = solve_continuous_lyapunov(model.f, -model.process_noise)
        else:
            p0 = np.zeros((2, 2))
    cov = np.array(p0, dtype=float)
    mean = np.zeros((n_rec, 2)) if x0 is None else np.broadcast_to(np.asarray(x0, dtype=float), (n_rec, 2)).copy()
    h = model.h
    rd = model.r_noise / dt
    update = model.r_noise > 0 and np.any(h)
    eye = np.eye(2)
    means = np.empty((n_rec, n_steps, 2))
    covs = np.empty((n_steps, 2, 2))
    gains = np.zeros((n_steps, 2))
    for k in range(n_steps):
        mean = mean @ phi.T
        cov = phi @ cov @ phi.T + qd
        if update:
            s = h @ cov @ h + rd
            gain = cov @ h / s
            mean = mean + np.outer(z[:, k] - mean @ h, gain)
            ikh = eye - np.outer(gain, h)
            cov = ikh @ cov @ ikh.T + rd * np.outer(gain, gain)
            gains[k] = gain
        cov = 0.5 * (cov + cov.T)
        if not np.all(np.isfinite(cov)) or np.linalg.eigvalsh(cov).min() < -1e-9 * np.abs(cov).max():
            raise FilterDivergenceError(f"covariance lost positivity at step {k}")
        means[:, k] = mean
        covs[k] = cov
    return FilterTrace(t=dt * np.arange(1, n_steps + 1), mean=means, cov=covs, gain=gains)


def synthetic_truth(p: SystemParams, duration: float, dt: float, seed, n_records: int = 1) -> np.ndarray:
    """Thermal lab-frame paths in z_p units at t = dt, 2 dt, ... ."""
    rec = mech_sim.simulate_labframe_free(p, duration, dt, seed, n_paths=n_records)
    truth = np.stack([rec.lab_x, rec.lab_p], axis=-1) * math.sqrt(2.0)
    return truth[:, 1:]


def synthetic_record(model: FilterModel, truth: np.ndarray, dt: float, seed) -> np.ndarray:
    """Shot-noise-limited readout of ``truth``."""
    rng = np.random.default_rng(seed)
    clean = truth @ model.h
    if model.r_noise == 0:
        return clean
    return clean + rng.normal(0.0, math.sqrt(model.r_noise / dt), clean.shape)


def read_record_csv(path: str | Path) -> tuple[np.ndarray, float]:
    """Load a (t, z) CSV; returns the z column and the uniform step."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 2 or len(data) < 2:
        raise ValueError(f"{path}: expected columns t,z and at least two rows")
    steps = np.diff(data[:, 0])
    dt = float(steps.mean())
    if not np.allclose(steps, dt, rtol=1e-6):
        raise ValueError(f"{path}: time column is not uniformly sampled")
    return data[:, 1], dt


def write_filter_csv(path: str | Path, trace: FilterTrace, record_index: int = 0) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "x_hat", "p_hat", "P11", "P22", "P12"])
        for k, t in enumerate(trace.t):
            x, pm = trace.mean[record_index, k]
            c = trace.cov[k]
            writer.writerow([repr(float(t)), repr(float(x)), repr(float(pm)), repr(float(c[0, 0])), repr(float(c[1, 1])), repr(float(c[0, 1]))])


# ---------------------------------------------------------------------------
# pulsed-measurement budget


@dataclass(frozen=True)
class ShotNoiseBudget:
    dm_imp_sq: float
    dm_th_sq: float
    dm_tot_sq: float
    tau_opt: float
    dm_opt_sq: float

    def to_dict(self) -> dict:
        return asdict(self)


def shot_noise_budget(m: MeasurementParams, p: SystemParams, tau_m: float) -> ShotNoiseBudget:
    """Imprecision and thermal terms of a readout lasting tau_m."""
    if not tau_m > 0:
        raise ValueError("tau_m must be positive")
    a = readout_scale(p, m)
    rate = m.collected_flux
    kn = p.diffusion_rate
    imp = a * a / (rate * tau_m) if rate > 0 else math.inf
    th = kn * tau_m
    tau_opt = a / math.sqrt(rate * kn) if rate > 0 and kn > 0 else math.inf
    opt = 2.0 * a * math.sqrt(kn / rate) if rate > 0 else math.inf
    return ShotNoiseBudget(dm_imp_sq=imp, dm_th_sq=th, dm_tot_sq=imp + th, tau_opt=tau_opt, dm_opt_sq=opt)


def min_interaction_time(p: SystemParams, m: MeasurementParams) -> float:
    """Interaction time below which readout noise dominates the signal."""
    rate = m.collected_flux
    if rate == 0 or p.diffusion_rate == 0:
        return math.inf
    return m.laser_wavelength / (math.pi * p.zp) / math.sqrt(p.diffusion_rate * rate)
