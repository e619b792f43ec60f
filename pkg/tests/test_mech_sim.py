import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hotmech import analytic as A
from hotmech import mech_sim as S
from hotmech.params import ECHO, TWO_PI, MeasurementParams, ProtocolConfig, SystemParams

from oracles import standard_error, variance_standard_error, window_probability

ROW5 = SystemParams(gamma=100.0, q_factor=1e9, lambda_coupling=TWO_PI * 880, temperature=293.0)
ORIGIN = S.GaussianState.point(0.0, 0.0)


def test_gaussian_state_validation():
    with pytest.raises(ValueError, match="symmetric"):
        S.GaussianState(np.zeros(2), [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError, match="semi-definite"):
        S.GaussianState(np.zeros(2), [[1.0, 0.0], [0.0, -1.0]])


def test_thermal_state_is_fixed_point():
    th = S.GaussianState.thermal(ROW5)
    out = S.evolve_exact(th, ROW5, 0, 1.0)
    assert np.allclose(out.mean, 0.0)
    assert np.allclose(out.cov, th.cov, rtol=1e-12)


def test_long_evolution_reaches_driven_steady_state():
    p = ROW5.with_(q_factor=1e4)
    out = S.evolve_exact(ORIGIN, p, 2, 100.0 / p.kappa)
    target = -4 * math.sqrt(2) * p.lambda_coupling * 2 / (math.pi * p.kappa)
    assert out.mean == pytest.approx([0.0, target], rel=1e-12, abs=1e-9)
    assert np.allclose(out.cov, p.n_th * np.eye(2), rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 10.0), st.sampled_from([-2, 0, 2]), st.floats(0, 2 * math.pi))
def test_exact_evolution_is_a_semigroup(t, s_z, phase):
    p = ROW5.with_(q_factor=1e5)
    start = S.GaussianState([3.0, -7.0], [[50.0, 5.0], [5.0, 20.0]])
    full = S.evolve_exact(start, p, s_z, t, phase)
    half = S.evolve_exact(S.evolve_exact(start, p, s_z, t / 2, phase), p, s_z, t / 2, phase)
    assert np.allclose(full.mean, half.mean, rtol=1e-12, atol=1e-12 * np.abs(full.mean).max())
    assert np.allclose(full.cov, half.cov, rtol=1e-12)


def test_covariance_conserved_without_damping():
    p = ROW5.with_(q_factor=math.inf)
    start = S.GaussianState(np.zeros(2), [[4.0, 1.0], [1.0, 2.0]])
    out = S.evolve_exact(start, p, 0, 123.0)
    assert np.array_equal(out.cov, start.cov)


def test_undamped_path_is_constant():
    p = ROW5.with_(q_factor=math.inf)
    rec = S.sample_trajectory(p, 0, 1e-3, 1e-5, seed=1, n_paths=3)
    assert np.all(rec.x == rec.x[:, :1])
    assert np.all(rec.p == rec.p[:, :1])


def test_step_size_guard():
    with pytest.raises(S.StepTooCoarseError):
        S.sample_trajectory(ROW5, 2, 1e-3, 1e-4, seed=0)
    p = ROW5.with_(q_factor=1e3)
    with pytest.raises(S.StepTooCoarseError, match="kappa"):
        S.sample_trajectory(p, 2, 10.0, 0.05, seed=0)


@pytest.mark.parametrize("s_z", [-2, 2])
def test_euler_maruyama_ensemble_matches_analytic_moments(s_z):
    t = 3.1e-3
    rec = S.sample_trajectory(ROW5, s_z, t, t / 100, seed=11, n_paths=10_000, initial=ORIGIN)
    p_end = rec.p[:, -1]
    mu = float(A.displacement_mu(ROW5, s_z, t))
    assert abs(p_end.mean() - mu) < 3 * standard_error(p_end)
    var = ROW5.n_th * -math.expm1(-ROW5.kappa * t)
    assert abs(p_end.var(ddof=1) - var) < 3 * variance_standard_error(p_end)
    assert abs(rec.x[:, -1].mean()) < 3 * standard_error(rec.x[:, -1])


def test_euler_maruyama_agrees_with_exact_kernel():
    p = ROW5.with_(q_factor=1e6)
    t = 10.0 / p.kappa * 0.05
    rec = S.sample_trajectory(p, 2, t, 0.005 / p.kappa, seed=5, n_paths=10_000, initial=ORIGIN)
    exact = S.evolve_exact(ORIGIN, p, 2, t)
    p_end = rec.p[:, -1]
    assert abs(p_end.mean() - exact.mean[1]) < 3 * standard_error(p_end)
    assert abs(p_end.var(ddof=1) - exact.cov[1, 1]) < 3 * variance_standard_error(p_end)


@pytest.mark.parametrize("lam_hz", [10.0, 100.0, 1000.0, 10000.0])
def test_dfs_sector_feels_no_coupling(lam_hz):
    p = ROW5.with_(lambda_coupling=TWO_PI * lam_hz)
    rec = S.sample_trajectory(p, 0, 3.1e-3, 3.1e-5, seed=3, n_paths=2000, initial=ORIGIN)
    ref = S.sample_trajectory(ROW5, 0, 3.1e-3, 3.1e-5, seed=3, n_paths=2000, initial=ORIGIN)
    assert np.array_equal(rec.p, ref.p)
    assert abs(rec.p[:, -1].mean()) < 3 * standard_error(rec.p[:, -1])


LAB = SystemParams(gamma=100.0, q_factor=1e4, lambda_coupling=TWO_PI * 1e4, temperature=1e-3)


def test_labframe_guard_on_step():
    with pytest.raises(S.StepTooCoarseError):
        S.simulate_labframe_squarewave(LAB, 2, 1e-5, 0.05e-6, seed=0)


def test_labframe_dfs_has_no_drift():
    period = TWO_PI / LAB.omega_r
    rec = S.simulate_labframe_squarewave(LAB, 0, 50 * period, 0.005 * period, seed=2, n_paths=500, initial=ORIGIN, stride=100)
    for q in (rec.x[:, -1], rec.p[:, -1]):
        assert abs(q.mean()) < 3 * standard_error(q)


def test_labframe_phase_zero_moves_position_quadrature():
    period = TWO_PI / LAB.omega_r
    t = 50 * period
    rec = S.simulate_labframe_squarewave(LAB, 2, t, 0.005 * period, seed=4, n_paths=500, phase=0.0, initial=ORIGIN, stride=100)
    mu = abs(float(A.displacement_mu(LAB, 2, t)))
    x_end, p_end = rec.x[:, -1], rec.p[:, -1]
    assert x_end.mean() == pytest.approx(mu, rel=0.02)
    assert abs(p_end.mean()) < 0.02 * mu


def test_labframe_free_is_thermal():
    p = LAB.with_(temperature=4.0)
    rec = S.simulate_labframe_free(p, 2.0 / p.kappa, 1e-7, seed=8, n_paths=4000)
    end = rec.lab_x[:, -1]
    assert abs(end.var(ddof=1) - p.n_th) < 3 * variance_standard_error(end)


def test_trajectory_record_rejects_bad_grid():
    with pytest.raises(ValueError):
        S.TrajectoryRecord(np.array([0.0, 0.0]), np.zeros((1, 2)), np.zeros((1, 2)), np.ones(2))


def test_perfect_separation_surrogate():
    p = ROW5.with_(q_factor=math.inf, gamma=1e-6)
    cfg = ProtocolConfig(alpha=1.0, t_interact=3e-3)
    s = S.monte_carlo(p, MeasurementParams(0.0), cfg, 20_000, seed=9)
    assert s.n_false_positive == 0
    assert s.acceptance == pytest.approx(0.5, abs=3 * math.sqrt(0.25 / 20_000))
    assert s.fidelity == pytest.approx(1.0, abs=1e-4)


def test_vanishing_interaction_accepts_nothing():
    cfg = ProtocolConfig(alpha=0.4, t_interact=1e-12)
    s = S.monte_carlo(ROW5, MeasurementParams(27.0), cfg, 10_000, seed=10)
    assert s.acceptance < 1e-3


def test_single_attempt_outcome():
    cfg = ProtocolConfig(alpha=0.4, t_interact=3.1e-3)
    out = S.run_protocol(ROW5, MeasurementParams(27.0), cfg, seed=1)
    assert out.s_z_true in (-2, 0, 2)
    assert sum(out.bell_populations.values()) == pytest.approx(1.0)
    assert out.m_int is None
    assert out.accepted == (abs(out.delta_m_stat) < S.threshold(ROW5, cfg))
    assert out.to_dict()["variant"] == "standard-two-measurement"
    again = S.run_protocol(ROW5, MeasurementParams(27.0), cfg, seed=1)
    assert again == out


def test_echo_attempt_records_midpoint():
    cfg = ProtocolConfig(alpha=0.4, t_interact=3.1e-3, variant=ECHO)
    out = S.run_protocol(ROW5, MeasurementParams(27.0), cfg, seed=1)
    assert out.m_int is not None


# (alpha, g) grid, g set through the interaction time with zero readout noise
ACCEPT_GRID = [(a, g) for a in (0.2, 0.4, 1.0) for g in (0.5, 1.0, 2.0)]


@pytest.mark.parametrize("alpha, g", ACCEPT_GRID)
def test_sector_acceptance_matches_quadrature(alpha, g):
    p = ROW5.with_(q_factor=1e12)
    m = MeasurementParams(0.0)
    t = g * g * math.pi**2 / (8 * p.cooperativity * p.gamma)
    assert float(A.g_normalized(p, m, t)) == pytest.approx(g, rel=1e-6)
    n = 40_000
    s = S.monte_carlo(p, m, ProtocolConfig(alpha=alpha, t_interact=t), n, seed=21)
    rp = 0.5 * window_probability(0.0, alpha * g)
    rf = 0.25 * (window_probability(2 * g, alpha * g) + window_probability(-2 * g, alpha * g))
    for emp, exp in ((s.r_p, rp), (s.r_f, rf)):
        se = math.sqrt(max(exp * (1 - exp), 1e-12) / n)
        assert abs(emp - exp) < 3 * se + 1.0 / n


@pytest.mark.parametrize("name", [f"table1-row{i}" for i in range(1, 7)])
def test_monte_carlo_consistent_with_analytic(presets, name):
    ps = presets[name]
    rep = A.analyze(ps.system, ps.measurement, ps.alpha)
    s = S.monte_carlo(ps.system, ps.measurement, ProtocolConfig(ps.alpha, rep.t_opt), 100_000, seed=7)
    lo, hi = s.fidelity_ci
    assert lo <= rep.fidelity <= hi
    lo, hi = s.acceptance_ci
    assert lo <= rep.rate_tp + rep.rate_fp <= hi


def test_row5_error_near_tabulated(presets):
    ps = presets["table1-row5"]
    t = A.optimal_time(ps.system, ps.measurement, ps.alpha)
    s = S.monte_carlo(ps.system, ps.measurement, ProtocolConfig(ps.alpha, t), 100_000, seed=3)
    lo, hi = s.fidelity_ci
    assert 1 - hi <= 0.28 + 0.005 and 1 - lo >= 0.28 - 0.005


def test_monte_carlo_is_deterministic_and_worker_independent():
    cfg = ProtocolConfig(alpha=0.4, t_interact=3.1e-3)
    m = MeasurementParams(27.0)
    a = S.monte_carlo(ROW5, m, cfg, 20_000, seed=42, chunk_size=4096)
    b = S.monte_carlo(ROW5, m, cfg, 20_000, seed=42, chunk_size=4096)
    c = S.monte_carlo(ROW5, m, cfg, 20_000, seed=42, chunk_size=4096, workers=2)
    assert a == b == c
    assert a != S.monte_carlo(ROW5, m, cfg, 20_000, seed=43, chunk_size=4096)


def test_monte_carlo_edge_cases():
    cfg = ProtocolConfig(alpha=0.4, t_interact=3.1e-3)
    one = S.monte_carlo(ROW5, MeasurementParams(27.0), cfg, 1, seed=0)
    assert one.fidelity_ci == (0.0, 1.0)
    assert one.acceptance_ci == (0.0, 1.0)
    with pytest.raises(ValueError):
        S.monte_carlo(ROW5, MeasurementParams(27.0), cfg, 0, seed=0)


def test_summary_serializes():
    cfg = ProtocolConfig(alpha=0.4, t_interact=3.1e-3)
    d = S.monte_carlo(ROW5, MeasurementParams(27.0), cfg, 500, seed=0).to_dict()
    assert d["error"] == pytest.approx(1 - d["fidelity"])
    assert isinstance(d["fidelity_ci"], list)


def test_chunk_plan_covers_runs():
    plan = S.chunk_plan(20_001, seed=1, chunk_size=5000)
    assert [n for _, n in plan] == [5000, 5000, 5000, 5000, 1]


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10**6), st.floats(0, 1))
def test_wilson_interval_brackets_estimate(n, frac):
    k = round(frac * n)
    lo, hi = S.wilson_interval(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0
