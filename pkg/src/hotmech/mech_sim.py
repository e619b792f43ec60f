"""Phase-space simulation of the spin-conditioned resonator.

Rotating-frame quadratures (x~, p~) are in units where the thermal state has
variance n_th.  A spin product ``force`` = lambda * S_z drives the rotating
frame at rate (2 sqrt2 / pi) force (cos phi, -sin phi); the lab-frame
simulator instead applies the full square wave sqrt2 * force * sgn(sin(w t + phi)).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from . import analytic
from .kernels import forced_response, noise_factor, van_loan
from .params import ECHO, STANDARD, MeasurementParams, ProtocolConfig, SystemParams

SQRT2 = math.sqrt(2.0)
SECTORS = np.array([-2, 0, 2])
SECTOR_WEIGHTS = np.array([0.25, 0.5, 0.25])
# Rate of DFS phase per unit differential coupling and unit x~.
PHASE_RATE = 8.0 / math.pi
CHUNK_SIZE = 8192


class StepTooCoarseError(ValueError):
    """Requested integration step violates the accuracy preconditions."""


# ---------------------------------------------------------------------------
# Gaussian states


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(2)
        cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        if not np.allclose(cov, cov.T, rtol=1e-12, atol=0.0):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-12 * max(1.0, np.abs(cov).max()):
            raise ValueError("covariance must be positive semi-definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def thermal(cls, p: SystemParams) -> "GaussianState":
        return cls(np.zeros(2), p.n_th * np.eye(2))

    @classmethod
    def point(cls, x: float, p: float) -> "GaussianState":
        return cls(np.array([x, p]), np.zeros((2, 2)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mean + rng.standard_normal((n, 2)) @ noise_factor(self.cov).T


def drift_vector(force: float, phase: float = math.pi / 2) -> np.ndarray:
    """Rotating-frame drive (dx~/dt, dp~/dt) from a spin product ``force``."""
    amp = 2.0 * SQRT2 * force / math.pi
    return amp * np.array([math.cos(phase), -math.sin(phase)])


def evolve_exact(state: GaussianState, p: SystemParams, s_z: int, dt: float, phase: float = math.pi / 2) -> GaussianState:
    """Exact Gaussian transition of the rotating-frame dynamics over dt."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    decay = math.exp(-0.5 * p.kappa * dt)
    shift = drift_vector(p.lambda_coupling * s_z, phase) * float(analytic._saturating_time(p.kappa, dt))
    kept = decay * decay
    cov = kept * state.cov + p.n_th * (-math.expm1(-p.kappa * dt)) * np.eye(2)
    return GaussianState(decay * state.mean + shift, cov)


@dataclass(frozen=True)
class TrajectoryRecord:
    """Sample paths on a uniform grid; arrays are (n_paths, n_times)."""

    t: np.ndarray
    x: np.ndarray
    p: np.ndarray
    drive_sign: np.ndarray
    lab_x: np.ndarray | None = None
    lab_p: np.ndarray | None = None

    def __post_init__(self):
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.p))):
            raise FloatingPointError("non-finite values in trajectory")


def _initial(p: SystemParams, initial: GaussianState | None, rng, n: int) -> np.ndarray:
    return (initial or GaussianState.thermal(p)).sample(rng, n)


def sample_trajectory(
    p: SystemParams,
    s_z: int,
    t_interact: float,
    dt: float,
    seed,
    n_paths: int = 1,
    initial: GaussianState | None = None,
    phase: float = math.pi / 2,
) -> TrajectoryRecord:
    """Euler-Maruyama paths of the rotating-frame Langevin equations.

    Raises:
        StepTooCoarseError: unless dt <= 0.01 / kappa and dt <= t_interact / 100.
    """
    if dt <= 0 or dt > t_interact / 100.0 or (p.kappa > 0 and dt > 0.01 / p.kappa):
        raise StepTooCoarseError(
            f"dt = {dt:.3g} s; need dt <= t_I/100 = {t_interact / 100:.3g} s"
            + (f" and dt <= 0.01/kappa = {0.01 / p.kappa:.3g} s" if p.kappa > 0 else "")
        )
    rng = np.random.default_rng(seed)
    n_steps = int(round(t_interact / dt))
    state = _initial(p, initial, rng, n_paths)
    drive = drift_vector(p.lambda_coupling * s_z, phase)
    kick = math.sqrt(p.diffusion_rate * dt)
    out = np.empty((n_paths, n_steps + 1, 2))
    out[:, 0] = state
    for k in range(n_steps):
        state = state + (drive - 0.5 * p.kappa * state) * dt + kick * rng.standard_normal((n_paths, 2))
        out[:, k + 1] = state
    t = dt * np.arange(n_steps + 1)
    return TrajectoryRecord(t, out[..., 0], out[..., 1], np.ones(n_steps + 1))


# ---------------------------------------------------------------------------
# lab frame


def _lab_matrices(p: SystemParams, h: float):
    a = np.array([[0.0, p.omega_r], [-p.omega_r, -p.kappa]])
    qc = np.diag([0.0, 2.0 * p.diffusion_rate])
    phi, qd = van_loan(a, qc, h)
    unit_push = forced_response(a, np.array([0.0, 1.0]), h)
    return phi, noise_factor(qd), unit_push


def _run_lab(p, n_steps, h, signs, push_amp, rng, start, stride):
    phi, noise_l, unit_push = _lab_matrices(p, h)
    y = start.copy()
    keep = np.arange(0, n_steps + 1, stride)
    if keep[-1] != n_steps:
        keep = np.append(keep, n_steps)
    rec = np.empty((y.shape[0], len(keep), 2))
    j = 0
    if keep[0] == 0:
        rec[:, 0] = y
        j = 1
    for k in range(n_steps):
        y = y @ phi.T + (signs[k] * push_amp) * unit_push + rng.standard_normal(y.shape) @ noise_l.T
        if j < len(keep) and keep[j] == k + 1:
            rec[:, j] = y
            j += 1
    t = keep * h
    wt = p.omega_r * t
    cos_wt, sin_wt = np.cos(wt), np.sin(wt)
    lab_x, lab_p = rec[..., 0], rec[..., 1]
    x_rot = lab_x * cos_wt - lab_p * sin_wt
    p_rot = lab_x * sin_wt + lab_p * cos_wt
    return t, keep, x_rot, p_rot, lab_x, lab_p


def simulate_labframe_squarewave(
    p: SystemParams,
    s_z: int,
    t_interact: float,
    dt: float,
    seed,
    phase: float = math.pi / 2,
    n_paths: int = 1,
    initial: GaussianState | None = None,
    stride: int = 1,
) -> TrajectoryRecord:
    """Lab-frame oscillator driven by the toggled spin force.

    The step is shrunk so that an even number of steps spans half a period,
    which puts every toggle of sgn(sin(w t + phi)) on a grid point for
    phi a multiple of pi / 2.  Within a step the force is constant and the
    transition is exact.

    Raises:
        StepTooCoarseError: if dt > 0.01 of a mechanical period.
    """
    period = 2.0 * math.pi / p.omega_r
    if dt <= 0 or dt > 0.01 * period:
        raise StepTooCoarseError(f"dt = {dt:.3g} s exceeds 0.01 mechanical periods ({0.01 * period:.3g} s)")
    n_sub = math.ceil(math.pi / (p.omega_r * dt))
    n_sub += n_sub % 2
    h = math.pi / (p.omega_r * n_sub)
    n_steps = max(1, int(round(t_interact / h)))
    mid = (np.arange(n_steps) + 0.5) * h
    signs = np.sign(np.sin(p.omega_r * mid + phase))
    rng = np.random.default_rng(seed)
    start = _initial(p, initial, rng, n_paths)
    push = -SQRT2 * p.lambda_coupling * s_z
    t, keep, x_rot, p_rot, lab_x, lab_p = _run_lab(p, n_steps, h, signs, push, rng, start, stride)
    sign_path = np.append(signs, signs[-1])[keep]
    return TrajectoryRecord(t, x_rot, p_rot, sign_path, lab_x, lab_p)


def simulate_labframe_free(
    p: SystemParams,
    duration: float,
    dt: float,
    seed,
    n_paths: int = 1,
    initial: GaussianState | None = None,
) -> TrajectoryRecord:
    """Undriven thermal oscillator in the lab frame, exact for any dt."""
    if dt <= 0:
        raise StepTooCoarseError("dt must be positive")
    n_steps = max(1, int(round(duration / dt)))
    rng = np.random.default_rng(seed)
    start = _initial(p, initial, rng, n_paths)
    t, _, x_rot, p_rot, lab_x, lab_p = _run_lab(p, n_steps, dt, np.zeros(n_steps), 0.0, rng, start, 1)
    return TrajectoryRecord(t, x_rot, p_rot, np.zeros_like(t), lab_x, lab_p)


# ---------------------------------------------------------------------------
# protocol Monte Carlo


@dataclass(frozen=True)
class ProtocolOutcome:
    """One heralding attempt.

    ``bell_populations`` holds the final two-spin populations in the Bell
    basis (psi_plus, psi_minus, phi_plus, phi_minus).
    """

    s_z_true: int
    m1: float
    m2: float
    delta_m_stat: float
    accepted: bool
    dephased: bool
    bell_populations: dict
    x_tilde: float
    m_int: float | None = None
    dfs_phase: float = 0.0
    variant: str = STANDARD

    def to_dict(self) -> dict:
        return asdict(self)


def _phase_kernel(p: SystemParams, sign: float, h: float):
    """Exact (x~, int sign * x~) transition over a step h."""
    a = np.array([[-0.5 * p.kappa, 0.0], [sign, 0.0]])
    phi, qd = van_loan(a, np.diag([p.diffusion_rate, 0.0]), h)
    return phi, noise_factor(qd)


def _phase_segments(p: SystemParams, x0: np.ndarray, segments, rng) -> tuple[np.ndarray, np.ndarray]:
    """Propagate x~ and its signed integral through (sign, duration) segments."""
    y = np.column_stack([x0, np.zeros_like(x0)])
    for sign, h in segments:
        phi, lq = _phase_kernel(p, sign, h)
        y = y @ phi.T + rng.standard_normal(y.shape) @ lq.T
    return y[:, 0], y[:, 1]


def threshold(p: SystemParams, cfg: ProtocolConfig) -> float:
    """Acceptance half-width alpha |mu(2, t_I)| / 2."""
    return cfg.alpha * abs(float(analytic.displacement_mu(p, 2, cfg.t_interact))) / 2.0


def _protocol_batch(p: SystemParams, m: MeasurementParams, cfg: ProtocolConfig, rng, n: int, delta_lambda: float = 0.0) -> dict:
    t = cfg.t_interact
    dm = math.sqrt(m.delta_m_sq)
    sd_th = math.sqrt(p.n_th)
    s_z = rng.choice(SECTORS, size=n, p=SECTOR_WEIGHTS)
    # Anti-parallel spins feel only the differential coupling, with a random branch sign.
    branch = rng.choice(np.array([-1.0, 1.0]), size=n)
    force = np.where(s_z == 0, branch * delta_lambda, p.lambda_coupling * s_z)
    d = drift_vector(1.0, cfg.pulse_phase)
    x0 = rng.normal(0.0, sd_th, n)
    p0 = rng.normal(0.0, sd_th, n)
    m1 = p0 + rng.normal(0.0, dm, n) if dm else p0.copy()

    if cfg.variant == STANDARD:
        e = math.exp(-0.5 * p.kappa * t)
        sd_step = math.sqrt(p.n_th * -math.expm1(-p.kappa * t))
        push = float(analytic._saturating_time(p.kappa, t))
        p_t = e * p0 + force * d[1] * push + rng.normal(0.0, sd_step, n)
        m2 = p_t + (rng.normal(0.0, dm, n) if dm else 0.0)
        m_int = np.full(n, np.nan)
        stat = m2 - e * m1
        segments = [(1.0, t)]
    elif cfg.variant == ECHO:
        e = math.exp(-0.25 * p.kappa * t)
        sd_step = math.sqrt(p.n_th * -math.expm1(-0.5 * p.kappa * t))
        push = float(analytic._saturating_time(p.kappa, t / 2))
        p_h = e * p0 + force * d[1] * push + rng.normal(0.0, sd_step, n)
        m_int = p_h + (rng.normal(0.0, dm, n) if dm else 0.0)
        p_t = e * p_h - force * d[1] * push + rng.normal(0.0, sd_step, n)
        m2 = p_t + (rng.normal(0.0, dm, n) if dm else 0.0)
        stat = m2 - 2.0 * e * m_int + e * e * m1
        segments = [(1.0, t / 2), (-1.0, t / 2)]
    else:
        raise ValueError(f"unknown variant {cfg.variant!r}")

    x_t, integral = _phase_segments(p, x0, segments, rng)
    dfs_phase = np.where(s_z == 0, PHASE_RATE * delta_lambda * integral, 0.0)
    accepted = np.abs(stat) < threshold(p, cfg)
    dephased = rng.random(n) < 0.5 * -math.expm1(-2.0 * p.gamma * t)
    overlap = 0.5 * (1.0 + np.cos(dfs_phase))
    anti = s_z == 0
    psi_plus = np.where(anti, np.where(dephased, 1.0 - overlap, overlap), 0.0)
    psi_minus = np.where(anti, 1.0 - psi_plus, 0.0)
    phi = np.where(anti, 0.0, 0.5)
    return {
        "s_z": s_z,
        "m1": m1,
        "m_int": m_int,
        "m2": m2,
        "stat": stat,
        "accepted": accepted,
        "dephased": dephased,
        "x_tilde": x_t,
        "dfs_phase": dfs_phase,
        "psi_plus": psi_plus,
        "psi_minus": psi_minus,
        "phi": phi,
    }


def run_protocol(p: SystemParams, m: MeasurementParams, cfg: ProtocolConfig, seed, delta_lambda: float = 0.0) -> ProtocolOutcome:
    """Single heralding attempt: measure, interact, measure, threshold."""
    b = _protocol_batch(p, m, cfg, np.random.default_rng(seed), 1, delta_lambda)
    m_int = float(b["m_int"][0])
    return ProtocolOutcome(
        s_z_true=int(b["s_z"][0]),
        m1=float(b["m1"][0]),
        m2=float(b["m2"][0]),
        delta_m_stat=float(b["stat"][0]),
        accepted=bool(b["accepted"][0]),
        dephased=bool(b["dephased"][0]),
        bell_populations={
            "psi_plus": float(b["psi_plus"][0]),
            "psi_minus": float(b["psi_minus"][0]),
            "phi_plus": float(b["phi"][0]),
            "phi_minus": float(b["phi"][0]),
        },
        x_tilde=float(b["x_tilde"][0]),
        m_int=None if math.isnan(m_int) else m_int,
        dfs_phase=float(b["dfs_phase"][0]),
        variant=cfg.variant,
    )


def wilson_interval(successes: float, n: int, confidence: float = 0.99) -> tuple[float, float]:
    """Wilson score interval; [0, 1] when n <= 1."""
    if n <= 1:
        return 0.0, 1.0
    z = norm.ppf(0.5 + confidence / 2.0)
    ph = successes / n
    denom = 1.0 + z * z / n
    centre = (ph + z * z / (2 * n)) / denom
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if successes <= 0 else max(0.0, centre - half)
    hi = 1.0 if successes >= n else min(1.0, centre + half)
    return float(lo), float(hi)


@dataclass(frozen=True)
class MonteCarloSummary:
    n_runs: int
    n_accepted: int
    n_true_positive: int
    n_false_positive: int
    psi_plus_accepted: float
    acceptance: float
    acceptance_ci: tuple
    r_p: float
    r_p_ci: tuple
    r_f: float
    r_f_ci: tuple
    fidelity: float
    fidelity_ci: tuple
    confidence: float
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def error(self) -> float:
        return 1.0 - self.fidelity

    def to_dict(self) -> dict:
        d = asdict(self)
        d["error"] = self.error
        for key in ("acceptance_ci", "r_p_ci", "r_f_ci", "fidelity_ci"):
            d[key] = list(d[key])
        return d


def _chunk_counts(args) -> np.ndarray:
    p, m, cfg, seed_seq, n, delta_lambda = args
    b = _protocol_batch(p, m, cfg, np.random.default_rng(seed_seq), n, delta_lambda)
    acc = b["accepted"]
    return np.array([
        n,
        acc.sum(),
        (acc & (b["s_z"] == 0)).sum(),
        (acc & (b["s_z"] != 0)).sum(),
        b["psi_plus"][acc].sum(),
    ], dtype=float)


def chunk_plan(n_runs: int, seed, chunk_size: int = CHUNK_SIZE):
    """Fixed split of runs into independent seeded chunks."""
    sizes = [chunk_size] * (n_runs // chunk_size)
    if n_runs % chunk_size:
        sizes.append(n_runs % chunk_size)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    return list(zip(children, sizes))


def monte_carlo(
    p: SystemParams,
    m: MeasurementParams,
    cfg: ProtocolConfig,
    n_runs: int,
    seed,
    workers: int = 1,
    delta_lambda: float = 0.0,
    confidence: float = 0.99,
    chunk_size: int = CHUNK_SIZE,
) -> MonteCarloSummary:
    """Aggregate many heralding attempts into rates and a fidelity estimate.

    Results depend only on (inputs, n_runs, seed, chunk_size), never on the
    number of workers: every chunk owns a spawned seed stream and counts are
    summed.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    tasks = [(p, m, cfg, s, n, delta_lambda) for s, n in chunk_plan(n_runs, seed, chunk_size)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(_chunk_counts, tasks))
    else:
        counts = [_chunk_counts(t) for t in tasks]
    n, n_acc, n_tp, n_fp, good = np.sum(counts, axis=0)
    n, n_acc, n_tp, n_fp = int(n), int(n_acc), int(n_tp), int(n_fp)
    fid = good / n_acc if n_acc else float("nan")
    return MonteCarloSummary(
        n_runs=n,
        n_accepted=n_acc,
        n_true_positive=n_tp,
        n_false_positive=n_fp,
        psi_plus_accepted=float(good),
        acceptance=n_acc / n,
        acceptance_ci=wilson_interval(n_acc, n, confidence),
        r_p=n_tp / n,
        r_p_ci=wilson_interval(n_tp, n, confidence),
        r_f=n_fp / n,
        r_f_ci=wilson_interval(n_fp, n, confidence),
        fidelity=float(fid),
        fidelity_ci=wilson_interval(good, n_acc, confidence) if n_acc else (0.0, 1.0),
        confidence=confidence,
        seed=seed if isinstance(seed, int) else None,
    )
