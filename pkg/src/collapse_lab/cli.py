"""Command-line entry point.

Subcommands: simulate | criteria | phase-plane | cn | converge |
critical-point.  Exit codes: 0 success, 2 invalid configuration or state,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import analysis, criteria, density, dynamics, model
from .config import ConfigError, RunConfig, load_config
from .dynamics import OutcomeKind, RunClass

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_FMT = "%.17g"


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _out_path(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _resolve(args, configured: str) -> str:
    if os.path.isabs(configured):
        return configured
    return _out_path(args, configured)


def _write_csv(path: str, header: str, rows) -> None:
    # comma separated, 17 significant digits, LF line endings
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_FMT % v if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _load(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config is required for this subcommand")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.values["seed"] = args.seed
    return cfg


def _certificate_json(cert: criteria.Certificate) -> dict:
    return {
        "verdict": cert.verdict.value,
        "triggered": sorted(tag.value for tag in cert.triggered),
        "thresholds": {tag.value: {"threshold": thr, "measured": meas}
                       for tag, (thr, meas) in cert.thresholds.items()},
    }


def _diagnostics_json(d: model.Diagnostics) -> dict:
    return {"G": d.g, "U": d.u, "W": d.w, "phi": d.phi, "I2": d.i2,
            "com": d.com, "min_gap": d.min_gap,
            "virial_residual": d.virial_residual}


def _trajectory_rows(record: dynamics.TrajectoryRecord):
    for t, state, d in record.samples:
        yield ([float(t)] + [float(x) for x in state.x]
               + [d.g, d.u, d.w, d.phi, d.i2, d.com, d.min_gap,
                  d.virial_residual])


def _trajectory_gnuplot(path: str, csv_path: str, n: int) -> None:
    rel = os.path.basename(csv_path)
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 't'",
        "set multiplot layout 2,1",
        "set ylabel 'positions'",
        "plot " + ", ".join(f"'{rel}' using 1:{k + 2} with lines"
                            for k in range(n)),
        "set ylabel '|X|^2'",
        f"plot '{rel}' using 1:{n + 6} with lines",
        "unset multiplot",
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_simulate(args) -> int:
    cfg = _load(args)
    state0, p = cfg.initial_state()
    icfg = cfg.integrator()
    csv_path = _resolve(args, cfg.get("outputs.trajectory_csv", "trajectory.csv"))
    summary_path = _resolve(args, cfg.get("outputs.summary_json", "summary.json"))

    start = time.perf_counter()
    failure = None
    try:
        record, outcome = dynamics.simulate(state0, p, icfg)
    except model.NumericalFailure as exc:
        failure = exc
        record, outcome = None, None
    wall = time.perf_counter() - start

    cert = criteria.classify_initial(state0, p)
    if failure is not None:
        print(f"numerical failure: {failure}", file=sys.stderr)
        return EXIT_NUMERICAL

    classification = dynamics.classify_run(record, outcome, p, icfg)
    header = ("t," + ",".join(f"x_{i + 1}" for i in range(p.n))
              + ",G,U,W,phi,I2,com,min_gap,virial_residual")
    _write_csv(csv_path, header, _trajectory_rows(record))

    gp_key = cfg.get("outputs.gnuplot")
    if gp_key:
        _trajectory_gnuplot(_resolve(args, gp_key), csv_path, p.n)

    from . import plotting
    fig_path = os.path.splitext(csv_path)[0] + ".png"
    plotting.trajectory_figure(record.samples, fig_path)

    terminal = record.samples[-1][2]
    inconsistent = (cert.verdict is criteria.Verdict.GLOBAL_CERTIFIED
                    and classification is RunClass.BLOWUP_OBSERVED)
    summary = {
        "config": dict(cfg.values),
        "certificate": _certificate_json(cert),
        "outcome": {"kind": outcome.kind.value, "t_star": outcome.t_star,
                    "t_star_error": outcome.t_star_error,
                    "pair": list(outcome.pair) if outcome.pair else None,
                    "t": outcome.t},
        "classification": classification.value,
        "terminal_diagnostics": _diagnostics_json(terminal),
        "steps": record.step_count,
        "rejected_steps": record.rejected_steps,
        "wall_time_s": wall,
        "inconsistent": inconsistent,
    }
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    _say(args, f"{cert.verdict.value} + {classification.value} "
               f"({outcome.kind.value}), {record.step_count} steps, "
               f"wrote {csv_path}")
    if outcome.kind is OutcomeKind.STEP_UNDERFLOW \
            and classification is RunClass.UNDETERMINED:
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_criteria(args) -> int:
    cfg = _load(args)
    state0, p = cfg.initial_state()
    cert = criteria.classify_initial(state0, p)
    print(f"verdict: {cert.verdict.value}")
    for tag, (threshold, measured) in sorted(cert.thresholds.items(),
                                             key=lambda kv: kv[0].value):
        mark = " [triggered]" if tag in cert.triggered else ""
        print(f"{tag.value}: threshold {_FMT % threshold} "
              f"measured {_FMT % measured}{mark}")
    return EXIT_OK


_PHASE_GP = """\
set datafile separator ','
set logscale xy
set xlabel 'u'
set ylabel 'v'
set multiplot layout 2,3
{panels}
unset multiplot
"""


def _phase_gnuplot(path: str, curve_files: dict) -> None:
    grid_part = ("'grid.csv' using 1:2:($3 eq 'GlobalObserved' ? 2 : "
                 "($3 eq 'Undetermined' ? 1 : 0)) with points pt 5 ps 0.5 "
                 "palette notitle")
    panels = []
    for name, fname in curve_files.items():
        panels.append(f"set title '{name}'")
        panels.append(f"plot {grid_part}, '{fname}' using 1:2 with lines "
                      f"lw 2 title '{name}'")
    panels.append("set title 'all curves'")
    overlay = ", ".join(f"'{fname}' using 1:2 with lines lw 2 title '{name}'"
                        for name, fname in curve_files.items())
    panels.append(f"plot {grid_part}, {overlay}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_PHASE_GP.format(panels="\n".join(panels)))


def cmd_phase_plane(args) -> int:
    cfg = _load(args)
    p = cfg.params()
    window = (cfg.get("phase.window_min", 0.02), cfg.get("phase.window_max", 0.8))
    resolution = cfg.get("phase.resolution", 64)
    portrait = analysis.phase_plane_sweep(p, window=window,
                                          resolution=resolution,
                                          cfg=cfg.integrator()
                                          if any(k.startswith("integrator.")
                                                 for k in cfg.values) else None,
                                          jobs=args.jobs)
    grid_rows = []
    for i, u in enumerate(portrait.u_grid):
        for j, v in enumerate(portrait.v_grid):
            grid_rows.append([float(u), float(v), portrait.grid[i, j].value])
    _write_csv(_out_path(args, "grid.csv"), "u,v,class", grid_rows)

    curve_files = {}
    for name, curve in portrait.curves.items():
        fname = f"{name}.csv"
        _write_csv(_out_path(args, fname), "u,v",
                   [[float(a), float(b)] for a, b in curve])
        curve_files[name] = fname
    _phase_gnuplot(_out_path(args, "phase_plane.gp"), curve_files)

    from . import plotting
    plotting.phase_figure(portrait, _out_path(args, "phase_plane.png"))
    undetermined = int(np.sum(portrait.grid == RunClass.UNDETERMINED))
    _say(args, f"swept {resolution}x{resolution} cells "
               f"({undetermined} undetermined), wrote {args.out}")
    return EXIT_OK


def cmd_cn(args) -> int:
    rows = []
    for n in range(args.n_min, args.n_max + 1, args.step):
        gauss = criteria.c_of_mu(criteria.gaussian_mu(n), n)
        upper = 1.0 / (criteria.lambda_min(n) * (n - 1))
        try:
            cn = criteria.c_of_n(n, seed=args.seed or 0)
            rows.append([n, cn, cn / n, gauss, upper])
        except model.NumericalFailure as exc:
            print(f"N={n}: optimizer failure: {exc}", file=sys.stderr)
    path = _out_path(args, "cn.csv")
    _write_csv(path, "N,C(N),C(N)/N,gauss_lower,lambda1_upper", rows)
    _say(args, f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


def cmd_converge(args) -> int:
    cfg = _load(args)
    gamma = cfg.require("problem.gamma")
    n_list = cfg.get("converge.n_list", [10, 30, 100, 300, 1000])
    rows = density.convergence_report(cfg.density_spec(), gamma, n_list)
    header = ",".join(rows[0].keys())
    path = _out_path(args, "converge.csv")
    _write_csv(path, header, [list(r.values()) for r in rows])
    _say(args, f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


def cmd_critical_point(args) -> int:
    cfg = _load(args)
    p = cfg.params()
    try:
        variant_present = any(k.startswith("init.") for k in cfg.values)
        if variant_present:
            state0, p = cfg.initial_state()
            cp = analysis.newton_critical_point(criteria.recenter(state0), p)
        else:
            cp = analysis.symmetric_critical_point(p)
    except model.NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print("positions: " + " ".join(_FMT % x for x in cp.state.x))
    print("gaps: " + " ".join(_FMT % y for y in np.diff(cp.state.x)))
    print(f"grad_norm: {_FMT % cp.grad_norm}")
    print("hessian_eigs: " + " ".join(_FMT % e for e in cp.hessian_eigs))
    print(f"kind: {cp.kind.value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collapse-lab",
        description="Particle gradient-flow simulator and blow-up "
                    "certification toolkit for 1D aggregation-diffusion "
                    "dynamics.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="path to a key = value config file")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
        sp.add_argument("--jobs", type=int,
                        default=int(os.environ.get("COLLAPSE_LAB_JOBS", "1")),
                        help="parallel workers for sweeps")
        sp.add_argument("--quiet", action="store_true",
                        help="suppress progress output")
        return sp

    common(sub.add_parser("simulate", help="integrate one trajectory")) \
        .set_defaults(func=cmd_simulate)
    common(sub.add_parser("criteria", help="evaluate certificates only")) \
        .set_defaults(func=cmd_criteria)
    common(sub.add_parser("phase-plane", help="basin sweep and figure data")) \
        .set_defaults(func=cmd_phase_plane)
    cn = common(sub.add_parser("cn", help="entropy-constant table"))
    cn.add_argument("--n-min", type=int, default=3)
    cn.add_argument("--n-max", type=int, default=64)
    cn.add_argument("--step", type=int, default=1)
    cn.set_defaults(func=cmd_cn)
    common(sub.add_parser("converge", help="discrete-to-continuous table")) \
        .set_defaults(func=cmd_converge)
    common(sub.add_parser("critical-point", help="locate an energy critical "
                                                 "point")) \
        .set_defaults(func=cmd_critical_point)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (model.DomainError, model.PreconditionError) as exc:
        print(f"invalid state: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except model.NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
