"""Command-line front end.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import asdict, replace

import numpy as np

from . import __version__, analytic, estimator, gate_budget, inhomogeneity, mech_sim, params, report

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
DEMO_TIME_CONSTANTS = 10.0  # default kalman-demo length in filter time constants

TABLE_COLUMNS = [
    "label", "gamma_inv_s", "q_factor", "lambda_over_2pi_hz", "temperature_k", "C",
    "delta_m_sq", "t_opt_s", "error", "r_p", "dl_max_over_lambda",
]


class UsageError(Exception):
    pass


def _split(values) -> list[str]:
    out = []
    for v in values or []:
        out.extend(s.strip() for s in v.split(",") if s.strip())
    return out


def _sources(args, default_all: bool = False) -> list[params.ParameterSet]:
    presets = _split(args.preset)
    configs = _split(getattr(args, "config", None))
    if args.preset is None and not configs and default_all:
        presets = list(params.PRESET_NAMES)
    sets = [params.preset(n) for n in presets] + [params.load_config(c) for c in configs]
    if args.alpha is not None:
        sets = [replace(s, alpha=args.alpha) for s in sets]
    return sets


def _single_source(args) -> params.ParameterSet:
    sets = _sources(args)
    if len(sets) != 1:
        raise UsageError("give exactly one --preset or --config")
    return sets[0]


def _emit(args, text: str, manifest: report.RunManifest, stdout) -> None:
    if args.out is None and args.format == "csv":
        sys.stderr.write(json.dumps(report.clean(manifest.to_dict()), sort_keys=True) + "\n")
    report.write_output(text, args.out, manifest, stdout)


def _manifest(args, command: str, sources, **extra) -> report.RunManifest:
    return report.RunManifest(
        command=command,
        source=[s.name for s in sources],
        seed=getattr(args, "seed", None),
        n_runs=getattr(args, "runs", None),
        outputs=[args.out] if args.out else [],
        options=extra,
    )


# ---------------------------------------------------------------------------
# commands


def table_rows(sets) -> list[dict]:
    rows = []
    for s in sets:
        p, m = s.system, s.measurement
        rep = analytic.analyze(p, m, s.alpha)
        budget = inhomogeneity.tolerances(p, m, s.alpha)
        rows.append({
            "label": s.name,
            "gamma_inv_s": 1.0 / p.gamma,
            "q_factor": p.q_factor,
            "lambda_over_2pi_hz": p.lambda_coupling / (2 * math.pi),
            "temperature_k": p.temperature,
            "C": rep.c,
            "delta_m_sq": m.delta_m_sq,
            "t_opt_s": rep.t_opt,
            "error": rep.error,
            "r_p": rep.rate_tp,
            "dl_max_over_lambda": budget.dl_max / p.lambda_coupling,
        })
    return rows


def cmd_table(args, stdout) -> int:
    sets = _sources(args, default_all=True)
    rows = table_rows(sets)
    manifest = _manifest(args, "table", sets)
    if args.format == "json":
        text = report.to_json({"rows": rows, "columns": TABLE_COLUMNS}, manifest)
    else:
        text = report.to_csv(TABLE_COLUMNS, rows)
    _emit(args, text, manifest, stdout)
    return EXIT_OK


def _grid(spec, scale: str) -> np.ndarray:
    start, stop, num = float(spec[0]), float(spec[1]), int(spec[2])
    if num < 1:
        raise UsageError("range needs at least one point")
    if num == 1:
        return np.array([start])
    if scale == "log":
        if start <= 0 or stop <= 0:
            raise UsageError("log range needs positive bounds")
        return np.geomspace(start, stop, num)
    return np.linspace(start, stop, num)


def sweep_rows(axis: str, grid, alphas, c_fixed: float | None = None) -> list[dict]:
    rows = []
    for a in alphas:
        for x in grid:
            if axis == "C":
                c, alpha = x, a
            elif axis == "alpha":
                c, alpha = c_fixed, x
            else:
                c, alpha = c_fixed, a
            if axis == "t":
                gt = x
            else:
                gt = analytic.optimal_gamma_t(c, alpha)
            g = math.sqrt(8.0 / analytic.PI2 * c * gt)
            f = float(analytic.fidelity_c(c, gt, alpha)) if g > 0 else 0.5
            rp = float(analytic.rate_true_positive(g, alpha)) if alpha else 0.0
            rows.append({
                "C": c,
                "alpha": alpha,
                "gamma_t": gt,
                "g": g,
                "fidelity": f,
                "error": 1.0 - f,
                "r_p": rp,
                "r_p_over_gamma": rp / gt if gt > 0 else 0.0,
                "error_bound": analytic.error_lower_bound(c) if c > analytic.C_THRESHOLD else 0.5,
                "error_asymptotic": float(analytic.asymptotic_error(c)),
                "error_hot_gate": float(analytic.hot_gate_error(c)),
            })
    return rows


SWEEP_COLUMNS = ["C", "alpha", "gamma_t", "g", "fidelity", "error", "r_p", "r_p_over_gamma",
                 "error_bound", "error_asymptotic", "error_hot_gate"]


def cmd_sweep(args, stdout) -> int:
    grid = _grid(args.range, args.scale)
    alphas = args.alpha_values or [0.0]
    if any(not 0 <= a <= 1 for a in alphas):
        raise UsageError("alpha values must lie in [0, 1]")
    if args.axis != "C" and args.c is None:
        raise UsageError(f"--c is required for --axis {args.axis}")
    if args.axis == "C" and np.any(grid <= 0):
        raise UsageError("cooperativity must be positive")
    if args.axis == "alpha" and np.any((grid < 0) | (grid > 1)):
        raise UsageError("alpha range must lie in [0, 1]")
    if args.axis == "t" and np.any(grid <= 0):
        raise UsageError("Gamma t must be positive")
    rows = sweep_rows(args.axis, grid, [None] if args.axis == "alpha" else alphas, args.c)
    manifest = report.RunManifest(command="sweep", source=[], outputs=[args.out] if args.out else [],
                                  options={"axis": args.axis, "range": list(args.range), "scale": args.scale,
                                           "alpha": alphas, "c": args.c})
    if args.format == "json":
        text = report.to_json({"rows": rows, "columns": SWEEP_COLUMNS}, manifest)
    else:
        text = report.to_csv(SWEEP_COLUMNS, rows)
    _emit(args, text, manifest, stdout)
    return EXIT_OK


def cmd_mc(args, stdout) -> int:
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    s = _single_source(args)
    p, m = s.system, s.measurement
    t = args.t if args.t is not None else analytic.optimal_time(p, m, s.alpha)
    cfg = params.ProtocolConfig(alpha=s.alpha, t_interact=t, variant=args.variant)
    dl = 2 * math.pi * args.delta_lambda_hz
    summary = mech_sim.monte_carlo(p, m, cfg, args.runs, args.seed, workers=args.workers, delta_lambda=dl)
    predicted = analytic.analyze(p, m, s.alpha, t=t)
    if args.trajectory_csv:
        rec = mech_sim.sample_trajectory(p, 2, t, t / 1000, args.seed)
        rows = [{"t": rec.t[k], "x_tilde": rec.x[0, k], "p_tilde": rec.p[0, k]} for k in range(len(rec.t))]
        with open(args.trajectory_csv, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv(["t", "x_tilde", "p_tilde"], rows))
    manifest = _manifest(args, "mc", [s], alpha=s.alpha, t_interact=t, variant=args.variant,
                         delta_lambda_hz=args.delta_lambda_hz)
    payload = {"summary": summary.to_dict(), "analytic": predicted.to_dict()}
    if args.format == "csv":
        flat = {k: v for k, v in summary.to_dict().items() if not isinstance(v, (list, dict))}
        cols = sorted(flat)
        text = report.to_csv(cols, [flat])
    else:
        text = report.to_json(payload, manifest)
    _emit(args, text, manifest, stdout)
    return EXIT_OK


def cmd_kalman_demo(args, stdout) -> int:
    for name in ("dt", "duration"):
        v = getattr(args, name)
        if v is not None and not v > 0:
            raise UsageError(f"--{name} must be positive")
    if args.power_w < 0:
        raise UsageError("--power-w must be >= 0")
    s = _single_source(args)
    p = s.system
    m = replace(s.measurement, photon_flux=params.photon_flux_from_power(args.power_w, s.measurement.laser_wavelength))
    model = estimator.FilterModel.from_params(p, m, readout=args.readout)
    period = 2 * math.pi / p.omega_r
    dt = args.dt if args.dt is not None else period / 20
    pss = estimator.riccati_steady_state(model) if m.collected_flux > 0 else None
    if args.duration is not None:
        duration = args.duration
    else:
        tau = estimator.filter_time_constant(model, pss) if pss is not None else 1.0 / max(p.kappa, p.gamma)
        duration = max(20 * period, DEMO_TIME_CONSTANTS * tau)
    n_steps = max(1, int(round(duration / dt)))
    truth = estimator.synthetic_truth(p, n_steps * dt, dt, args.seed, n_records=1)
    z = estimator.synthetic_record(model, truth, dt, np.random.SeedSequence(args.seed).spawn(1)[0])
    p0 = None if args.p0 == "thermal" else np.zeros((2, 2))
    x0 = None if args.p0 == "thermal" else truth[:, 0]
    trace = estimator.run_filter(model, z, dt, x0=x0, p0=p0)
    manifest = _manifest(args, "kalman-demo", [s], power_w=args.power_w, dt=dt, duration=n_steps * dt,
                         readout=args.readout, p0=args.p0)
    if args.format == "json":
        payload = {
            "p_ss": pss,
            "final_cov": trace.cov[-1],
            "delta_m_sq": asdict(estimator.delta_m_closed_form(p, m)) if m.collected_flux > 0 else None,
            "n_steps": n_steps,
        }
        text = report.to_json(payload, manifest)
    else:
        rows = [{
            "t": trace.t[k], "x_hat": trace.mean[0, k, 0], "p_hat": trace.mean[0, k, 1],
            "P11": trace.cov[k, 0, 0], "P22": trace.cov[k, 1, 1], "P12": trace.cov[k, 0, 1],
        } for k in range(n_steps)]
        text = report.to_csv(["t", "x_hat", "p_hat", "P11", "P22", "P12"], rows)
    _emit(args, text, manifest, stdout)
    return EXIT_OK


BUDGET_COLUMNS = ["C", "gamma_t_opt", "E_bell", "E_RO", "E_T", "E_hot_gate"]


def cmd_budget(args, stdout) -> int:
    anc = gate_budget.AncillaryErrors(
        e_control=args.e_control, eta=args.eta, e_init=args.e_init, e_cnot=args.e_cnot,
    )
    if args.curve:
        grid = _grid(args.range, "log")
        curve = gate_budget.gate_error_curve(grid, e_cnot=args.e_cnot, anc=anc)
        rows = list(curve.rows())
        manifest = report.RunManifest(command="budget", source=[], outputs=[args.out] if args.out else [],
                                      options={"curve": True, "range": list(args.range), "e_cnot": args.e_cnot})
        if args.format == "json":
            text = report.to_json({"rows": rows, "columns": BUDGET_COLUMNS}, manifest)
        else:
            text = report.to_csv(BUDGET_COLUMNS, rows)
    else:
        sets = _sources(args, default_all=True)
        reports = [gate_budget.budget_report(s, anc, mode=args.wall_time).to_dict() for s in sets]
        manifest = _manifest(args, "budget", sets, wall_time=args.wall_time)
        if args.format == "json":
            text = report.to_json({"budgets": reports}, manifest)
        else:
            cols = ["name", "e_bell", "t_opt", "acceptance", "wall_time", "e_ro", "e_nuc", "e_total", "e_hot_gate"]
            text = report.to_csv(cols, reports)
    _emit(args, text, manifest, stdout)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _source_args(sp, multi: bool = True):
    sp.add_argument("--preset", action="append", help=f"preset name(s), comma separated; one of {', '.join(params.PRESET_NAMES)}")
    sp.add_argument("--config", action="append", help="key = value parameter file")
    sp.add_argument("--alpha", type=float, help="override the threshold parameter")


def _output_args(sp, default_format: str = "csv"):
    sp.add_argument("--out", help="output file (default: stdout)")
    sp.add_argument("--format", choices=("csv", "json"), default=default_format)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hotmech", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("table", help="closed-form table for presets or configs")
    _source_args(sp)
    _output_args(sp)
    sp.set_defaults(func=cmd_table)

    sp = sub.add_parser("sweep", help="fidelity vs C, alpha or Gamma t")
    sp.add_argument("--axis", choices=("C", "alpha", "t"), default="C")
    sp.add_argument("--range", nargs=3, metavar=("START", "STOP", "NUM"), required=True)
    sp.add_argument("--scale", choices=("lin", "log"), default="log")
    sp.add_argument("--alpha", dest="alpha_values", type=float, action="append",
                    help="threshold(s); 0 is the alpha -> 0 limit (default)")
    sp.add_argument("--c", type=float, help="fixed cooperativity for the alpha and t axes")
    _output_args(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("mc", help="Monte-Carlo run of the heralding protocol")
    _source_args(sp)
    sp.add_argument("--runs", type=int, default=100000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--t", type=float, help="interaction time [s] (default: optimal)")
    sp.add_argument("--variant", choices=params.VARIANTS, default=params.STANDARD)
    sp.add_argument("--delta-lambda-hz", type=float, default=0.0, help="coupling mismatch / 2pi [Hz]")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--trajectory-csv", help="also dump one S_z = +2 trajectory (t, x~, p~)")
    _output_args(sp, "json")
    sp.set_defaults(func=cmd_mc)

    sp = sub.add_parser("kalman-demo", help="filter a synthetic shot-noise record")
    _source_args(sp)
    sp.add_argument("--power-w", type=float, default=1e-3)
    sp.add_argument("--duration", type=float, help="record length [s] (default: 10 filter time constants)")
    sp.add_argument("--dt", type=float, help="sample step [s] (default: period / 20)")
    sp.add_argument("--readout", choices=estimator.READOUTS, default="momentum")
    sp.add_argument("--p0", choices=("thermal", "known"), default="thermal",
                    help="initial knowledge: thermal prior or exactly known state")
    sp.add_argument("--seed", type=int, default=0)
    _output_args(sp)
    sp.set_defaults(func=cmd_kalman_demo)

    sp = sub.add_parser("budget", help="teleported-gate error budget")
    _source_args(sp)
    sp.add_argument("--curve", action="store_true", help="error vs C instead of per-preset budgets")
    sp.add_argument("--range", nargs=3, metavar=("START", "STOP", "NUM"), default=["10", "1e8", "57"])
    sp.add_argument("--e-cnot", type=float, default=1e-4)
    sp.add_argument("--e-control", type=float, default=0.0)
    sp.add_argument("--eta", type=float, default=0.0)
    sp.add_argument("--e-init", type=float, default=0.0)
    sp.add_argument("--wall-time", choices=gate_budget.WALL_TIME_MODES, default="per-success")
    _output_args(sp)
    sp.set_defaults(func=cmd_budget)
    return parser


def main(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", analytic.NoEntanglementWarning)
            return args.func(args, stdout)
    except (UsageError, params.ConfigError) as exc:
        print(f"hotmech: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, analytic.NoEntanglementError) as exc:
        print(f"hotmech: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"hotmech: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
