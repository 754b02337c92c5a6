"""Command-line front end.

Four subcommands, all driven by a JSON config file (see config.py):

  navkit simulate  write truth.csv / imu.csv / odo.csv for one realization
  navkit run       filtered Monte-Carlo run: errors.csv / nees.csv / summary.json
  navkit autonomy  twin-trajectory error-flow comparison: autonomy.json
  navkit compare   grouping x convention grid on one scenario: compare.csv

Exit codes: 0 success, 2 config problem, 3 numerical failure or filter
divergence.  Every output embeds the sha256 of the resolved config, and a
rerun with the same config and seed reproduces each file byte for byte.
Set NAVKIT_THREADS to parallelize Monte-Carlo runs.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .config import (
    ConfigError,
    apply_overrides,
    build_autonomy_inputs,
    build_run_config,
    config_hash,
    load_config,
)
from .error_models import ErrorConvention
from .lgekf import CovarianceNotPSD, SingularInnovation
from .mechanization import Grouping
from .se23 import AngleAtPi, NotARotation
from .simulate import (
    SensorErrors,
    SpecInvalid,
    _aggregate,
    _odo_indices,
    autonomy_experiment,
    corrupt,
    draw_biases,
    gen_odometer,
    gen_truth,
    inverse_imu,
    run_monte_carlo,
    run_single,
)
from .earth import ned_world

_NEES_DIVERGENCE = 1e6

_NUMERICAL_FAILURES = (
    CovarianceNotPSD,
    SingularInnovation,
    NotARotation,
    AngleAtPi,
    np.linalg.LinAlgError,
    RuntimeError,
    FloatingPointError,
)


def _fmt(x) -> str:
    return "%.17g" % float(x)


def _fmt_t(x) -> str:
    return "%.9f" % float(x)


def _write_csv(path, cfg_hash, header, rows):
    """RFC-4180 CSV with a leading comment line carrying the config hash."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_sha256={cfg_hash}\r\n")
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _quat_from_rot(C):
    """Unit quaternion (w,x,y,z), w >= 0, from a rotation matrix."""
    tr = np.trace(C)
    if tr > 0.0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = np.array(
            [0.25 * s, (C[2, 1] - C[1, 2]) / s, (C[0, 2] - C[2, 0]) / s, (C[1, 0] - C[0, 1]) / s]
        )
    else:
        a = int(np.argmax(np.diag(C)))
        b, c = (a + 1) % 3, (a + 2) % 3
        s = 2.0 * np.sqrt(1.0 + C[a, a] - C[b, b] - C[c, c])
        q = np.empty(4)
        q[0] = (C[c, b] - C[b, c]) / s
        q[1 + a] = 0.25 * s
        q[1 + b] = (C[b, a] + C[a, b]) / s
        q[1 + c] = (C[c, a] + C[a, c]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(resolved, out_dir):
    cfg = build_run_config(resolved)
    h = config_hash(resolved)
    world = ned_world(cfg.origin_e, cfg.earth)
    truth = gen_truth(cfg.traj, cfg.earth, cfg.gravity, world)
    imu_true = inverse_imu(truth, cfg.earth, cfg.gravity, world)

    _, true_bg, true_ba = draw_biases(cfg, 0)
    errors = SensorErrors(true_bg, true_ba, cfg.noise, cfg.seed, 0)
    imu_meas = corrupt(imu_true, errors)
    odo = gen_odometer(truth, cfg.noise, cfg.seed, cfg.odo_rate, 0)
    odo_idx = _odo_indices(truth, cfg.odo_rate)

    rows = []
    for k in range(len(truth.t)):
        q = _quat_from_rot(truth.C_b_w[k])
        rows.append(
            [_fmt_t(truth.t[k])]
            + [_fmt(x) for x in q]
            + [_fmt(x) for x in truth.v_wb_w[k]]
            + [_fmt(x) for x in truth.r_w[k]]
        )
    _write_csv(
        os.path.join(out_dir, "truth.csv"),
        h,
        ["t", "q_w", "q_x", "q_y", "q_z", "v_n", "v_e", "v_d", "r_n", "r_e", "r_d"],
        rows,
    )

    rows = []
    for k, s in enumerate(imu_meas):
        rows.append(
            [_fmt_t(truth.t[k])]
            + [_fmt(x) for x in s.omega_ib_b]
            + [_fmt(x) for x in s.f_ib_b]
            + [_fmt(s.dt)]
        )
    _write_csv(
        os.path.join(out_dir, "imu.csv"),
        h,
        ["t", "omega_x", "omega_y", "omega_z", "f_x", "f_y", "f_z", "dt"],
        rows,
    )

    rows = []
    for idx, z in zip(odo_idx, odo):
        rows.append([_fmt_t(truth.t[idx])] + [_fmt(x) for x in z.v_odo_b])
    _write_csv(os.path.join(out_dir, "odo.csv"), h, ["t", "v_x", "v_y", "v_z"], rows)
    return 0


def cmd_run(resolved, out_dir):
    cfg = build_run_config(resolved)
    h = config_hash(resolved)
    if cfg.n_runs >= 2:
        mc = run_monte_carlo(cfg)
    else:
        mc = _aggregate([run_single(cfg)])
    run0 = mc.runs[0]

    rows = []
    for k in range(len(run0.t)):
        rows.append(
            [_fmt_t(run0.t[k])]
            + [_fmt(x) for x in run0.att_err[k]]
            + [_fmt(x) for x in run0.vel_err[k]]
            + [_fmt(x) for x in run0.pos_err[k]]
            + ["1" if run0.updated[k] else "0"]
        )
    _write_csv(
        os.path.join(out_dir, "errors.csv"),
        h,
        [
            "t",
            "att_x", "att_y", "att_z",
            "vel_x", "vel_y", "vel_z",
            "pos_x", "pos_y", "pos_z",
            "updated",
        ],
        rows,
    )

    rows = [
        [_fmt_t(t), _fmt(v)] for t, v in zip(run0.t, mc.mean_nees_series)
    ]
    _write_csv(os.path.join(out_dir, "nees.csv"), h, ["t", "mean_nees"], rows)

    summary = {
        "config_sha256": h,
        "n_runs": len(mc.runs),
        "time_avg_nees": mc.time_avg_nees,
        "innovation_lag1": [float(x) for x in mc.innovation_lag1],
        "rmse_att": mc.rmse_att,
        "rmse_vel": mc.rmse_vel,
        "rmse_pos": mc.rmse_pos,
        "per_run_mean_nees": [r.mean_nees for r in mc.runs],
    }
    _write_json(os.path.join(out_dir, "summary.json"), summary)

    nees = np.asarray(mc.mean_nees_series)
    if not np.all(np.isfinite(nees)) or np.any(nees > _NEES_DIVERGENCE):
        print("filter diverged: mean NEES exceeded 1e6", file=sys.stderr)
        return 3
    return 0


def cmd_autonomy(resolved, out_dir):
    variant, conv, traj_a, traj_b, xi0, settings = build_autonomy_inputs(resolved)
    h = config_hash(resolved)
    result = autonomy_experiment(variant, conv, traj_a, traj_b, xi0, settings)
    payload = {
        "config_sha256": h,
        "class": result.classification.value,
        "divergence_metric": result.divergence_metric,
        "settings": {
            "variant": variant.name,
            "convention": conv.value,
            "xi0": [float(x) for x in xi0],
            "gyro_input_error": [float(x) for x in settings.gyro_input_error],
            "accel_input_error": [float(x) for x in settings.accel_input_error],
            "gravity": resolved["gravity"],
            "origin_ecef": resolved["origin"]["ecef"],
            "trajectory_b": resolved["autonomy"]["trajectory_b"],
        },
    }
    _write_json(os.path.join(out_dir, "autonomy.json"), payload)
    return 0


def cmd_compare(resolved, out_dir):
    base = build_run_config(resolved)
    h = config_hash(resolved)
    rows = []
    for grouping in (Grouping.TRADITIONAL, Grouping.PROPOSED):
        for conv in (ErrorConvention.LEFT, ErrorConvention.RIGHT):
            cfg = replace(base, grouping=grouping, convention=conv)
            if cfg.n_runs >= 2:
                mc = run_monte_carlo(cfg)
            else:
                mc = _aggregate([run_single(cfg)])
            rows.append(
                [
                    f"{grouping.value}-{base.frame.value}",
                    conv.value,
                    _fmt(mc.rmse_att),
                    _fmt(mc.rmse_vel),
                    _fmt(mc.rmse_pos),
                    _fmt(mc.time_avg_nees),
                ]
            )
    _write_csv(
        os.path.join(out_dir, "compare.csv"),
        h,
        ["variant", "convention", "rmse_att", "rmse_vel", "rmse_pos", "mean_nees"],
        rows,
    )
    return 0


# ---------------------------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="navkit",
        description="Lie-group inertial navigation: simulation, filtering, model comparison.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, runs=False, model=False):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        if runs:
            p.add_argument("--runs", type=int, default=None, help="override monte_carlo.n_runs")
        if model:
            p.add_argument(
                "--variant", default=None, help="override model, e.g. proposed-w, traditional-e"
            )
            p.add_argument(
                "--convention", default=None, choices=("left", "right"),
                help="override error convention",
            )

    common(sub.add_parser("simulate", help="write truth/imu/odo series"))
    common(sub.add_parser("run", help="filtered Monte-Carlo run"), runs=True, model=True)
    common(sub.add_parser("autonomy", help="twin-trajectory error-flow comparison"), model=True)
    common(sub.add_parser("compare", help="grouping x convention comparison grid"), runs=True)
    return parser


_DISPATCH = {
    "simulate": cmd_simulate,
    "run": cmd_run,
    "autonomy": cmd_autonomy,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        resolved = load_config(args.config)
        resolved = apply_overrides(
            resolved,
            seed=args.seed,
            runs=getattr(args, "runs", None),
            variant=getattr(args, "variant", None),
            convention=getattr(args, "convention", None),
        )
    except FileNotFoundError:
        print(f"config: {args.config}: no such file", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config: {args.config}:{exc.lineno}:{exc.colno}: {exc.msg}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 2

    os.makedirs(args.out, exist_ok=True)
    try:
        return _DISPATCH[args.command](resolved, args.out)
    except (SpecInvalid, ConfigError) as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_FAILURES as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
