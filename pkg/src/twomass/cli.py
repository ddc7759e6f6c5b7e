"""Command-line front end.

Subcommands: ``simulate`` one config, ``sweep`` a preset or config, ``feedforward``
(solve and dump a lookup table), ``analyze`` (recompute metrics from a stored
trace), ``check-plant`` (print the reduced realization and the internal-dynamics
stability verdict).

Output directory and sweep parallelism can also come from the environment
(``TWOMASS_OUT``, ``TWOMASS_WORKERS``).  All outputs are plain CSV with
``#``-prefixed header comments; every file embeds its resolved configuration.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import closedloop, metrics as metrics_mod, presets
from .config import load_config, load_config_file
from .errors import ParseError, ValidationError
from .feedforward import NewtonOptions, solve_feedforward, write_table_csv
from .plant import check_minimum_phase, reduced_realization
from .presets import NOMINAL_PLANT, REFERENCE_TRAJECTORY

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_CONFIG = 2


def _out_dir(args) -> str:
    out = args.out or os.environ.get("TWOMASS_OUT") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_summary(path, result: closedloop.SweepResult) -> None:
    trace = result.trace
    lines = [f"run: {result.config.label}", f"mode: {result.config.mode.name}"]
    if trace is None:
        lines.append(f"error: {result.error}")
    else:
        status = trace.status
        if status.completed:
            lines.append("status: completed")
        else:
            lines.append(f"status: {status.kind} at t={status.at:.6g} s")
        lines.append(f"ticks: {len(trace.t)}")
        iters = trace.newton_iterations[~np.isnan(trace.newton_iterations)]
        if len(iters):
            lines.append(
                f"newton iterations per tick: max={int(iters.max())} mean={iters.mean():.3f}"
            )
        if trace.wall_us is not None and len(trace.wall_us):
            p50, p90, p99 = np.percentile(trace.wall_us, [50, 90, 99])
            lines.append(
                "controller wall time per tick [us]: "
                f"p50={p50:.1f} p90={p90:.1f} p99={p99:.1f} max={trace.wall_us.max():.1f}"
            )
        if result.metrics is not None:
            rep = result.metrics
            lines.append(
                f"metrics: u_sum_t={rep.u_sum_t:.6g} e_sum_t={rep.e_sum_t:.6g} "
                f"var_u_s={rep.var_u_s:.6g} e_sum_s={rep.e_sum_s:.6g}"
            )
        elif result.error:
            lines.append(f"note: {result.error}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _emit_results(results, out: str, use_true_output: bool) -> list[str]:
    rows = []
    config_lines = []
    for result in results:
        cfg = result.config
        if result.trace is not None:
            closedloop.write_trace_csv(result.trace, os.path.join(out, f"{cfg.label}-trace.csv"))
            if use_true_output and result.trace.status.completed:
                result.metrics = metrics_mod.report(result.trace, cfg.trajectory, use_true_output=True)
        _write_summary(os.path.join(out, f"{cfg.label}-summary.txt"), result)
        rows.append(
            metrics_mod.metrics_csv_row(
                cfg.label, cfg.mode.name, cfg.control_frequency, result.metrics
            )
        )
        echo = "|".join(f"{k}={v}" for k, v in sorted(closedloop.config_echo(cfg).items()))
        config_lines.append(f"{cfg.label}: {echo}")
    metrics_mod.write_metrics_csv(rows, os.path.join(out, "metrics.csv"), config_lines)
    return rows


def _report_outcomes(results, allow_failures: bool) -> int:
    code = EXIT_OK
    for result in results:
        label = result.config.label
        if result.trace is None:
            print(f"{label}: error: {result.error}", file=sys.stderr)
            code = EXIT_CONFIG
        elif not result.trace.status.completed:
            status = result.trace.status
            print(f"{label}: {status.kind} at t={status.at:.6g} s")
            if not allow_failures and code == EXIT_OK:
                code = EXIT_RUN_FAILED
        else:
            print(f"{label}: completed")
    return code


def _cmd_simulate(args) -> int:
    loaded = load_config(args.config)
    if isinstance(loaded, presets.ExperimentPreset):
        print(f"{args.config} names a preset; use the sweep command", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args)
    results = closedloop.run_sweep([loaded])
    _emit_results(results, out, args.metrics_on_true)
    return _report_outcomes(results, args.allow_failures)


def _cmd_sweep(args) -> int:
    loaded = load_config(args.experiment)
    if isinstance(loaded, presets.ExperimentPreset):
        configs = list(loaded.configs)
    else:
        configs = [loaded]
    out = _out_dir(args)
    workers = args.workers or int(os.environ.get("TWOMASS_WORKERS", "1"))
    results = closedloop.run_sweep(configs, workers=workers)
    _emit_results(results, out, args.metrics_on_true)
    return _report_outcomes(results, args.allow_failures)


def _cmd_feedforward(args) -> int:
    if args.config:
        cfg = load_config_file(args.config)
        params, trajectory = cfg.nominal_params, cfg.trajectory
    else:
        params, trajectory = NOMINAL_PLANT, REFERENCE_TRAJECTORY
    opts = NewtonOptions(residual_tolerance=args.tolerance)
    table = solve_feedforward(params, trajectory, dt=args.dt, horizon=args.horizon, opts=opts)
    out = args.output or os.path.join(_out_dir(args), "feedforward-table.csv")
    write_table_csv(table, out)
    iters = table.newton_iterations
    print(
        f"wrote {out}: {len(table)} samples, dt={args.dt:g} s, "
        f"newton max={int(iters.max())} per step"
    )
    return EXIT_OK


def _cmd_analyze(args) -> int:
    trace = closedloop.read_trace_csv(args.trace)
    echo = trace.run_config
    try:
        from .trajectory import TrajectorySpec

        spec = TrajectorySpec(
            y0=float(echo["trajectory.y0"]),
            yf=float(echo["trajectory.yf"]),
            t0=float(echo["trajectory.t0"]),
            tf=float(echo["trajectory.tf"]),
        )
        label = echo["simulation.label"]
        mode = echo["simulation.mode"]
        frequency = float(echo["simulation.control_frequency"])
    except KeyError as err:
        raise ParseError(f"{args.trace}: header lacks config key {err}") from None
    if not trace.status.completed:
        print(f"{label}: run ended {trace.status.kind}; no metrics", file=sys.stderr)
        return EXIT_RUN_FAILED
    rep = metrics_mod.report(trace, spec, use_true_output=args.metrics_on_true)
    row = metrics_mod.metrics_csv_row(label, mode, frequency, rep)
    print(",".join(metrics_mod.METRICS_COLUMNS))
    print(row)
    if args.output:
        echo = "|".join(f"{k}={v}" for k, v in sorted(trace.run_config.items()))
        metrics_mod.write_metrics_csv([row], args.output, [f"{label}: {echo}"])
    return EXIT_OK


def _cmd_check_plant(args) -> int:
    if args.config:
        cfg = load_config_file(args.config)
        params = cfg.nominal_params
    else:
        params = NOMINAL_PLANT
    real = reduced_realization(params)
    report = check_minimum_phase(params)
    print(f"plant: I1={params.I1} I2={params.I2} k={params.k} d={params.d}")
    print(f"high-frequency gain Gamma = C B = {real.Gamma:.6g}")
    print(f"R = {real.R:.6g}  S = [{real.S[0]:.6g} {real.S[1]:.6g}]")
    print(f"Q = [[{real.Q[0,0]:.6g} {real.Q[0,1]:.6g}] [{real.Q[1,0]:.6g} {real.Q[1,1]:.6g}]]")
    lam1, lam2 = report.eigenvalues
    print(f"internal-dynamics eigenvalues: {lam1:.6g} , {lam2:.6g}")
    verdict = "minimum phase" if report.is_minimum_phase else "NOT minimum phase"
    print(f"verdict: {verdict}")
    return EXIT_OK if report.is_minimum_phase else EXIT_RUN_FAILED


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twomass",
        description="Closed-loop tracking experiments on the two-flywheel torsional rig",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one configuration file")
    sim.add_argument("config", help="config file path")
    sim.add_argument("--out", help="output directory (default TWOMASS_OUT or '.')")
    sim.add_argument("--allow-failures", action="store_true",
                     help="exit 0 even when the run ends in a violation")
    sim.add_argument("--metrics-on-true", action="store_true",
                     help="compute error metrics on the true output instead of the measured one")
    sim.set_defaults(func=_cmd_simulate)

    swp = sub.add_parser("sweep", help="run a preset (or a single config) as a batch")
    swp.add_argument("experiment", help=f"preset name ({', '.join(presets.preset_names())}) or config file")
    swp.add_argument("--out", help="output directory (default TWOMASS_OUT or '.')")
    swp.add_argument("--workers", type=int, default=0,
                     help="parallel runs (default TWOMASS_WORKERS or 1)")
    swp.add_argument("--allow-failures", action="store_true")
    swp.add_argument("--metrics-on-true", action="store_true")
    swp.set_defaults(func=_cmd_sweep)

    ffw = sub.add_parser("feedforward", help="solve the inverse model and dump the torque table")
    ffw.add_argument("--config", help="take plant/trajectory from this config file")
    ffw.add_argument("--dt", type=float, default=1e-3, help="grid step in seconds")
    ffw.add_argument("--horizon", type=float, default=15.0, help="table length in seconds")
    ffw.add_argument("--tolerance", type=float, default=1e-10, help="newton residual tolerance")
    ffw.add_argument("--output", help="table file path")
    ffw.add_argument("--out", help="output directory used when --output is not given")
    ffw.set_defaults(func=_cmd_feedforward)

    ana = sub.add_parser("analyze", help="recompute metrics from a stored trace")
    ana.add_argument("trace", help="trace CSV written by simulate/sweep")
    ana.add_argument("--output", help="also write the row as a metrics CSV")
    ana.add_argument("--metrics-on-true", action="store_true")
    ana.set_defaults(func=_cmd_analyze)

    chk = sub.add_parser("check-plant", help="print realization blocks and stability verdict")
    chk.add_argument("--config", help="take plant parameters from this config file")
    chk.set_defaults(func=_cmd_check_plant)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
