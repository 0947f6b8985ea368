"""Command line entry point: ``ctvio simulate | run | eval``.

Exit codes: 0 success, 2 configuration error, 3 data error (including an
initialization that the data cannot support), 4 divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, dataset, evalkit
from .config import get_bool, get_float, read_keyvalue, write_keyvalue
from .errors import (BadQuaternion, ConfigError, DegenerateGeometry, Diverged, InitFailure, NoMatches,
                     NonMonotonicTime, ParseError)
from .estimator import SolverConfig
from .imu import (EUROC_ACCEL_NOISE, EUROC_ACCEL_WALK, EUROC_GYRO_NOISE, EUROC_GYRO_WALK,
                  sensor_config_from_values)
from .pipeline import run_sequence
from .sim import (config_values, generate_imu, generate_observations, ground_truth, load_sim_config,
                  simulation_trajectory, true_biases, truth_arrays)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

# Arbitrary but fixed epoch for simulated data, so files look like real recordings.
SIM_EPOCH_NS = 1_400_000_000_000_000_000

_SOLVER_KEYS = {f.name for f in fields(SolverConfig)}
_SENSOR_KEYS = {"r_ic", "accel_noise", "gyro_noise", "accel_walk", "gyro_walk", "rate_hz"}
_SEQUENCE_KEYS = {"keyframe_rate", "observation_scale", "observation_position_noise",
                  "observation_rotation_noise", "seed", "imu_rate", "max_dt"}

log = logging.getLogger("ctvio")


@dataclass
class RunReport:
    """Deterministic summary of one run; wall-clock timings live in a separate sidecar."""

    sequence: str
    ate_rmse: float | None
    scale: float
    gravity_roll: float
    gravity_pitch: float
    keyframes: int
    iterations_histogram: dict
    constraint_max: float
    constraint_maxima: list
    seed: int
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.__dict__), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        ate = "n/a" if self.ate_rmse is None else f"{self.ate_rmse:.6f} m"
        hist = ", ".join(f"{k}: {v}" for k, v in sorted(self.iterations_histogram.items(), key=lambda kv: int(kv[0])))
        lines = [
            f"sequence        {self.sequence}",
            f"ATE RMSE (se3)  {ate}",
            f"scale           {self.scale:.9f}",
            f"gravity r, p    {self.gravity_roll:.9f} {self.gravity_pitch:.9f} rad",
            f"keyframes       {self.keyframes}",
            f"iterations      {hist}",
            f"max |c|         {self.constraint_max:.3e}",
            f"seed            {self.seed}",
            "config:",
        ]
        lines += [f"  {k} = {_fmt(v)}" for k, v in sorted(self.config.items())]
        return "\n".join(lines) + "\n"


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def _fmt(v):
    if isinstance(v, list):
        return " ".join(repr(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


# -- configuration ---------------------------------------------------------
def split_run_config(values: dict):
    """Partition a run config into solver, sensor and sequence key groups."""
    solver, sensor, sequence = {}, {}, {}
    for key, value in values.items():
        name = key.lower()
        if name in _SOLVER_KEYS:
            solver[name] = value
        elif name in _SENSOR_KEYS:
            sensor[name] = value
        elif name in _SEQUENCE_KEYS:
            sequence[name] = value
        else:
            raise ConfigError(f"unknown run config key {key!r}")
    return solver, sensor, sequence


def solver_config(values: dict, args=None) -> SolverConfig:
    kw = {}
    for f in fields(SolverConfig):
        if f.name not in values:
            continue
        if f.type in ("bool", bool):
            kw[f.name] = get_bool(values, f.name, f.default)
        elif f.type in ("int", int):
            kw[f.name] = int(get_float(values, f.name))
        else:
            kw[f.name] = get_float(values, f.name)
    if args is not None:
        overrides = {"imu_weight": args.imu_weight, "window_size": args.window_size,
                     "max_iterations": args.max_iters, "estimate_roll_pitch": args.estimate_roll_pitch,
                     "gravity_magnitude": args.gravity_mag,
                     "fej_enabled": None if args.fej is None else args.fej == "on"}
        kw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _sensor_values_for_sim(cfg) -> dict:
    """Calibration the estimator should use for a simulated dataset.

    Noise-free simulations still get EuRoC-level weights; a near-zero noise
    model would make the problem needlessly stiff.
    """
    def floor(v, d):
        return v if v > 0 else d
    return {
        "r_ic": cfg.R_ic.ravel(),
        "accel_noise": floor(cfg.accel_noise, EUROC_ACCEL_NOISE),
        "gyro_noise": floor(cfg.gyro_noise, EUROC_GYRO_NOISE),
        "accel_walk": floor(cfg.accel_walk, EUROC_ACCEL_WALK),
        "gyro_walk": floor(cfg.gyro_walk, EUROC_GYRO_WALK),
        "rate_hz": cfg.imu_rate,
    }


# -- commands --------------------------------------------------------------
def cmd_simulate(config_path, out_dir, seed: int | None = None) -> Path:
    """Write a EuRoC-layout dataset generated from a simulation config."""
    traj, cfg = load_sim_config(config_path)
    if seed is not None:
        cfg.seed = seed
    path = simulation_trajectory(traj, cfg)
    imu = generate_imu(path, cfg)
    gt = ground_truth(path, cfg)
    obs = generate_observations(path, cfg)
    _, _, vel, _, _ = truth_arrays(path, gt.times)
    ba, bg = true_biases(traj, cfg, gt.times)
    out = Path(out_dir)
    dataset.write_euroc_imu(out / dataset.IMU_PATH, imu, SIM_EPOCH_NS)
    dataset.write_euroc_groundtruth(out / dataset.GROUNDTRUTH_PATH, gt, SIM_EPOCH_NS, vel, bg, ba)
    dataset.write_observations(out / dataset.OBSERVATIONS_PATH, obs, SIM_EPOCH_NS)
    write_keyvalue(out / dataset.SENSOR_CONFIG_PATH, _sensor_values_for_sim(cfg))
    write_keyvalue(out / "simulation.cfg", config_values(traj, cfg))
    return out


def cmd_run(dataset_dir, config_path, out_dir, args=None) -> RunReport:
    values = read_keyvalue(config_path) if config_path else {}
    solver_vals, sensor_vals, seq_vals = split_run_config(values)
    cfg = solver_config(solver_vals, args)
    seed = int(get_float(seq_vals, "seed", 0))
    if args is not None and args.seed is not None:
        seed = args.seed
    root = dataset.resolve_dataset(dataset_dir)
    sensor_file = root / dataset.SENSOR_CONFIG_PATH
    file_vals = read_keyvalue(sensor_file) if sensor_file.exists() else {}
    file_vals.update(sensor_vals)
    calib = sensor_config_from_values(file_vals)
    keyframe_rate = get_float(seq_vals, "keyframe_rate", 5.0)
    if args is not None and args.keyframe_rate is not None:
        keyframe_rate = args.keyframe_rate
    bundle = dataset.load_sequence(
        root, keyframe_rate=keyframe_rate, scale=get_float(seq_vals, "observation_scale", 1.0),
        position_noise=get_float(seq_vals, "observation_position_noise", 0.0),
        rotation_noise=get_float(seq_vals, "observation_rotation_noise", 0.0),
        seed=seed, declared_rate=get_float(seq_vals, "imu_rate", calib.rate_hz))
    t, acc, gyr = bundle.imu_arrays()
    result = run_sequence(t, acc, gyr, bundle.observations, calib, cfg)

    ate = None
    if len(bundle.groundtruth) and len(result.trajectory) >= 3:
        ate, _, _ = evalkit.evaluate(result.trajectory, bundle.groundtruth, "se3",
                                     get_float(seq_vals, "max_dt", evalkit.DEFAULT_MAX_DT))
    echo = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    echo.update({"keyframe_rate": keyframe_rate, "accel_noise": calib.accel_noise, "gyro_noise": calib.gyro_noise,
                 "accel_walk": calib.accel_walk, "gyro_walk": calib.gyro_walk, "rate_hz": calib.rate_hz,
                 "r_ic": [float(x) for x in calib.R_ic.ravel()]})
    echo.update({k: v for k, v in seq_vals.items() if k not in echo})
    report = RunReport(
        sequence=bundle.name, ate_rmse=ate, scale=float(result.scale),
        gravity_roll=float(result.gravity.roll), gravity_pitch=float(result.gravity.pitch),
        keyframes=len(result.trajectory),
        iterations_histogram={str(k): v for k, v in sorted(Counter(result.iterations).items())},
        constraint_max=float(result.max_constraint),
        constraint_maxima=[float(r.constraint_max) for r in result.reports], seed=seed, config=echo)

    # Outputs are only written once the whole run has succeeded.
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset.save_trajectory(result.trajectory, out / "trajectory.txt")
    if len(bundle.groundtruth):
        dataset.save_trajectory(bundle.groundtruth, out / "groundtruth.txt")
    (out / "report.txt").write_text(report.to_text())
    (out / "report.json").write_text(report.to_json())
    ms = 1e3 * np.asarray(result.solve_times)
    timing = {"wall_time_s": result.wall_time, "sequence_duration_s": float(t[-1] - t[0]) if len(t) else 0.0,
              "solve_ms": ms.tolist(), "solve_ms_median": float(np.median(ms)) if len(ms) else None,
              "solve_ms_mean": float(np.mean(ms)) if len(ms) else None}
    (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    return report


def load_any_trajectory(path, epoch_ns: int | None = None):
    """Trajectory text file, EuRoC ground-truth CSV, or a dataset directory."""
    p = dataset.resolve_dataset(path)
    if p.is_dir():
        stamps, _, _ = dataset.read_imu_table(p / dataset.IMU_PATH)
        return dataset.load_euroc_groundtruth(p / dataset.GROUNDTRUTH_PATH,
                                              int(stamps[0]) if epoch_ns is None else epoch_ns)
    if p.suffix.lower() == ".csv":
        return dataset.load_euroc_groundtruth(p, epoch_ns)
    return dataset.load_trajectory(p)


def _f6(v) -> str:
    # avoid printing "-0.000000"
    return f"{round(float(v), 6) + 0.0:.6f}"


def cmd_eval(est_path, gt_path, mode: str = "se3", max_dt: float = evalkit.DEFAULT_MAX_DT,
             epoch_ns: int | None = None, stream=None) -> float:
    stream = stream or sys.stdout
    est = load_any_trajectory(est_path, epoch_ns)
    gt = load_any_trajectory(gt_path, epoch_ns)
    rmse, al, pairs = evalkit.evaluate(est, gt, mode, max_dt)
    print(f"ATE RMSE: {_f6(rmse)} m", file=stream)
    print(f"mode: {mode}", file=stream)
    print(f"pairs: {len(pairs)}", file=stream)
    print(f"scale: {_f6(al.scale)}", file=stream)
    print("translation: " + " ".join(_f6(v) for v in al.translation), file=stream)
    for row in al.rotation:
        print("rotation: " + " ".join(_f6(v) for v in row), file=stream)
    return rmse


# -- argument parsing ------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctvio", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic EuRoC-layout dataset")
    p.add_argument("config", help="simulation config file")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("run", help="estimate a trajectory for a dataset directory")
    p.add_argument("dataset_dir", help="dataset root; relative names are also looked up under $CTVIO_DATA_ROOT")
    p.add_argument("out_dir")
    p.add_argument("--config", default=None, help="run config file (solver, sensor and sequence keys)")
    p.add_argument("--imu-weight", type=float, default=None)
    p.add_argument("--window-size", type=int, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--estimate-roll-pitch", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--fej", choices=("on", "off"), default=None)
    p.add_argument("--gravity-mag", type=float, default=None)
    p.add_argument("--keyframe-rate", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("eval", help="ATE RMSE of an estimate against ground truth")
    p.add_argument("est")
    p.add_argument("gt")
    p.add_argument("--mode", choices=("se3", "sim3"), default="se3")
    p.add_argument("--max-dt", type=float, default=evalkit.DEFAULT_MAX_DT)
    p.add_argument("--epoch-ns", type=int, default=None,
                   help="epoch for EuRoC CSV inputs (default: first row of each file)")
    return parser


def _fail(stage, exc, code):
    print(f"ctvio: error [{stage}]: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            out = cmd_simulate(args.config, args.out_dir, args.seed)
            print(f"wrote dataset to {out}")
        elif args.command == "run":
            report = cmd_run(args.dataset_dir, args.config, args.out_dir, args)
            sys.stdout.write(report.to_text())
        else:
            cmd_eval(args.est, args.gt, args.mode, args.max_dt, args.epoch_ns)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except InitFailure as exc:
        return _fail(f"init:{exc.stage}", exc, EXIT_DATA)
    except Diverged as exc:
        return _fail(f"optimize:keyframe {exc.keyframe_index}", exc, EXIT_DIVERGED)
    except (ParseError, NonMonotonicTime, BadQuaternion, NoMatches, DegenerateGeometry) as exc:
        return _fail("data", exc, EXIT_DATA)
    except OSError as exc:
        return _fail("io", exc, EXIT_DATA)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
