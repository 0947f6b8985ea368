"""EuRoC-style CSV ingestion, observation synthesis and trajectory text files.

Directory layout (as published for EuRoC, also used by the TUM-VI euroc export)::

    <root>/mav0/imu0/data.csv
    <root>/mav0/state_groundtruth_estimate0/data.csv
    <root>/observations.csv          (optional, written by the simulator)
    <root>/sensor.cfg                (optional noise/extrinsics config)

Timestamps on disk are integer nanoseconds; in memory they are seconds
relative to a sequence epoch (the first IMU sample by default).
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import so3
from .errors import BadQuaternion, NonMonotonicTime, ParseError
from .imu import ImuSample
from .types import PoseObservation, Trajectory

DATA_ROOT_ENV = "CTVIO_DATA_ROOT"
IMU_PATH = Path("mav0") / "imu0" / "data.csv"
GROUNDTRUTH_PATH = Path("mav0") / "state_groundtruth_estimate0" / "data.csv"
OBSERVATIONS_PATH = Path("observations.csv")
SENSOR_CONFIG_PATH = Path("sensor.cfg")
QUAT_TOLERANCE = 1e-3

_IMU_HEADER = ["#timestamp [ns]", "w_RS_S_x [rad s^-1]", "w_RS_S_y [rad s^-1]", "w_RS_S_z [rad s^-1]",
               "a_RS_S_x [m s^-2]", "a_RS_S_y [m s^-2]", "a_RS_S_z [m s^-2]"]
_GT_HEADER = ["#timestamp", "p_RS_R_x [m]", "p_RS_R_y [m]", "p_RS_R_z [m]", "q_RS_w []", "q_RS_x []",
              "q_RS_y []", "q_RS_z []", "v_RS_R_x [m s^-1]", "v_RS_R_y [m s^-1]", "v_RS_R_z [m s^-1]",
              "b_w_RS_S_x [rad s^-1]", "b_w_RS_S_y [rad s^-1]", "b_w_RS_S_z [rad s^-1]",
              "b_a_RS_S_x [m s^-2]", "b_a_RS_S_y [m s^-2]", "b_a_RS_S_z [m s^-2]"]
_OBS_HEADER = ["#timestamp [ns]", "p_x", "p_y", "p_z", "q_w", "q_x", "q_y", "q_z", "sigma_p", "sigma_r"]


def _rows(path):
    """``(line_number, fields)`` for every non-comment, non-blank line."""
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            yield lineno, [f.strip() for f in text.split(",")]


def _parse_row(lineno, fields, ncols):
    if len(fields) < ncols:
        raise ParseError(f"expected {ncols} fields, got {len(fields)}", line=lineno)
    try:
        stamp = int(fields[0])
        values = np.array([float(f) for f in fields[1:ncols]])
    except ValueError as exc:
        raise ParseError(f"malformed number ({exc})", line=lineno) from None
    if not np.all(np.isfinite(values)):
        raise ParseError("non-finite value", line=lineno)
    return stamp, values


def _read_table(path, ncols, errors):
    stamps, values = [], []
    for lineno, fields in _rows(path):
        try:
            stamp, vals = _parse_row(lineno, fields, ncols)
        except ParseError as exc:
            if errors is None:
                raise
            errors.append(exc)
            continue
        if stamps and stamp <= stamps[-1]:
            raise NonMonotonicTime(f"line {lineno}: timestamp {stamp} not after {stamps[-1]}")
        stamps.append(stamp)
        values.append(vals)
    return np.array(stamps, dtype=np.int64), np.array(values).reshape(len(values), ncols - 1)


def _seconds(stamps_ns, epoch_ns):
    # integer subtraction first keeps full precision for long sequences
    return (stamps_ns - np.int64(epoch_ns)).astype(float) / 1e9


def read_imu_table(path, errors: list | None = None):
    """``(stamps_ns, gyro, accel)`` arrays from an EuRoC IMU CSV."""
    stamps, values = _read_table(path, 7, errors)
    return stamps, values[:, 0:3], values[:, 3:6]


def load_euroc_imu(path, epoch_ns: int | None = None, errors: list | None = None) -> list[ImuSample]:
    """Parse an EuRoC ``imu0/data.csv``.

    Rows are ``timestamp[ns], gyro xyz [rad/s], accel xyz [m/s^2]``. With
    ``errors`` given, malformed rows are appended to it as :class:`ParseError`
    instead of raising, so parsed + reported always equals the row count.
    """
    stamps, gyro, accel = read_imu_table(path, errors)
    if epoch_ns is None:
        epoch_ns = int(stamps[0]) if len(stamps) else 0
    t = _seconds(stamps, epoch_ns)
    return [ImuSample(float(t[k]), accel[k], gyro[k]) for k in range(len(t))]


def _quat_rotation(q_wxyz, lineno=None):
    n = float(np.linalg.norm(q_wxyz))
    if abs(n - 1.0) >= QUAT_TOLERANCE:
        where = f"line {lineno}: " if lineno is not None else ""
        raise BadQuaternion(f"{where}quaternion norm {n:.6f} outside tolerance")
    return so3.from_quat_wxyz(q_wxyz / n)


def load_euroc_groundtruth(path, epoch_ns: int | None = None, errors: list | None = None) -> Trajectory:
    """Parse ``state_groundtruth_estimate0/data.csv`` (velocity and bias columns ignored)."""
    stamps, values = [], []
    for lineno, fields in _rows(path):
        try:
            stamp, vals = _parse_row(lineno, fields, 8)
        except ParseError as exc:
            if errors is None:
                raise
            errors.append(exc)
            continue
        if stamps and stamp <= stamps[-1][0]:
            raise NonMonotonicTime(f"line {lineno}: timestamp {stamp} not after {stamps[-1][0]}")
        stamps.append((stamp, lineno))
        values.append(vals)
    if not stamps:
        return Trajectory.empty()
    ns = np.array([s for s, _ in stamps], dtype=np.int64)
    values = np.array(values)
    rotations = np.array([_quat_rotation(v[3:7], ln) for v, (_, ln) in zip(values, stamps)])
    if epoch_ns is None:
        epoch_ns = int(ns[0])
    return Trajectory(_seconds(ns, epoch_ns), values[:, 0:3], rotations)


def _ns(t, epoch_ns):
    return int(epoch_ns) + int(round(float(t) * 1e9))


def _num(x):
    return repr(float(x) + 0.0)


def write_euroc_imu(path, samples, epoch_ns: int = 0) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_IMU_HEADER)
        for s in samples:
            w.writerow([_ns(s.timestamp, epoch_ns)] + [_num(v) for v in s.gyro] + [_num(v) for v in s.accel])


def write_euroc_groundtruth(path, traj: Trajectory, epoch_ns: int = 0, velocities=None,
                            gyro_bias=None, accel_bias=None) -> None:
    """17-column ground-truth CSV; unknown velocity/bias columns are written as zero."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    n = len(traj)
    zeros = np.zeros((n, 3))
    vel = zeros if velocities is None else np.asarray(velocities)
    bg = zeros if gyro_bias is None else np.asarray(gyro_bias)
    ba = zeros if accel_bias is None else np.asarray(accel_bias)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_GT_HEADER)
        for k in range(n):
            qx, qy, qz, qw = so3.to_quat_xyzw(traj.rotations[k])
            w.writerow([_ns(traj.times[k], epoch_ns)] + [_num(v) for v in traj.positions[k]]
                       + [_num(v) for v in (qw, qx, qy, qz)]
                       + [_num(v) for v in np.concatenate([vel[k], bg[k], ba[k]])])


def write_observations(path, observations, epoch_ns: int = 0) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_OBS_HEADER)
        for o in observations:
            qx, qy, qz, qw = so3.to_quat_xyzw(o.rotation)
            w.writerow([_ns(o.timestamp, epoch_ns)] + [_num(v) for v in o.position]
                       + [_num(v) for v in (qw, qx, qy, qz, o.position_sigma, o.rotation_sigma)])


def load_observations(path, epoch_ns: int = 0) -> list[PoseObservation]:
    out = []
    last = None
    for lineno, fields in _rows(path):
        stamp, v = _parse_row(lineno, fields, 10)
        if last is not None and stamp <= last:
            raise NonMonotonicTime(f"line {lineno}: timestamp {stamp} not after {last}")
        last = stamp
        try:
            obs = PoseObservation(float(_seconds(np.int64(stamp), epoch_ns)), v[0:3],
                                  _quat_rotation(v[3:7], lineno), float(v[7]), float(v[8]))
        except ValueError as exc:
            if isinstance(exc, BadQuaternion):
                raise
            raise ParseError(str(exc), line=lineno) from None
        out.append(obs)
    return out


def make_observations(gt: Trajectory, keyframe_rate: float, scale: float = 1.0, position_noise: float = 0.0,
                      rotation_noise: float = 0.0, seed: int = 0, position_sigma: float | None = None,
                      rotation_sigma: float | None = None) -> list[PoseObservation]:
    """Subsample ground truth to ``keyframe_rate`` and distort it.

    Keyframes are the ground-truth samples nearest to a regular grid starting
    at the first pose. Positions are multiplied by ``scale`` and then receive
    Gaussian noise; rotations get a right-multiplied ``exp`` of Gaussian noise.
    """
    if len(gt) == 0:
        return []
    if len(gt) > 1:
        gt_rate = 1.0 / np.median(np.diff(gt.times))
        if not keyframe_rate < gt_rate:
            raise ValueError("keyframe_rate must be below the ground-truth rate")
    grid = np.arange(gt.times[0], gt.times[-1] + 1e-9, 1.0 / keyframe_rate)
    idx = np.clip(np.searchsorted(gt.times, grid), 0, len(gt) - 1)
    prev = np.clip(idx - 1, 0, len(gt) - 1)
    idx = np.where(np.abs(gt.times[prev] - grid) <= np.abs(gt.times[idx] - grid), prev, idx)
    idx = np.unique(idx)
    rng = np.random.default_rng(seed)
    dp = rng.standard_normal((len(idx), 3)) * position_noise
    dr = rng.standard_normal((len(idx), 3)) * rotation_noise
    ps = position_sigma if position_sigma is not None else max(position_noise, 1e-3)
    rs = rotation_sigma if rotation_sigma is not None else max(rotation_noise, 1e-3)
    R = gt.rotations[idx] @ so3.exp(dr)
    P = scale * gt.positions[idx] + dp
    return [PoseObservation(float(gt.times[i]), P[k], R[k], ps, rs) for k, i in enumerate(idx)]


def save_trajectory(traj: Trajectory, path) -> None:
    """Write ``timestamp tx ty tz qx qy qz qw`` lines (no header)."""
    lines = []
    for t, p, R in zip(traj.times, traj.positions, traj.rotations):
        q = so3.to_quat_xyzw(R)
        nums = " ".join(f"{float(v) + 0.0:.17g}" for v in np.concatenate([p, q]))
        lines.append(f"{float(t):.9f} {nums}\n")
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.writelines(lines)


def load_trajectory(path) -> Trajectory:
    times, pos, rots = [], [], []
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = text.replace(",", " ").split()
            if len(fields) != 8:
                raise ParseError(f"expected 8 fields, got {len(fields)}", line=lineno)
            try:
                v = [float(f) for f in fields]
            except ValueError as exc:
                raise ParseError(f"malformed number ({exc})", line=lineno) from None
            times.append(v[0])
            pos.append(v[1:4])
            qx, qy, qz, qw = v[4:8]
            rots.append(_quat_rotation(np.array([qw, qx, qy, qz]), lineno))
    if not times:
        return Trajectory.empty()
    return Trajectory(times, pos, rots)


@dataclass
class SequenceBundle:
    name: str
    imu: list
    groundtruth: Trajectory
    observations: list
    epoch_ns: int
    metadata: dict = field(default_factory=dict)

    def imu_arrays(self):
        if not self.imu:
            return np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3))
        return (np.array([s.timestamp for s in self.imu]), np.array([s.accel for s in self.imu]),
                np.array([s.gyro for s in self.imu]))


def resolve_dataset(path) -> Path:
    """Relative paths that do not exist are looked up under ``$CTVIO_DATA_ROOT``."""
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(DATA_ROOT_ENV):
        p = Path(os.environ[DATA_ROOT_ENV]) / p
    return p


def imu_rate(samples) -> float:
    t = np.array([s.timestamp for s in samples])
    return float(1.0 / np.median(np.diff(t))) if len(t) > 1 else float("nan")


def load_sequence(path, keyframe_rate: float = 5.0, scale: float = 1.0, position_noise: float = 0.0,
                  rotation_noise: float = 0.0, seed: int = 0, declared_rate: float = 200.0) -> SequenceBundle:
    """Load a dataset directory; observations come from ``observations.csv`` if present,
    otherwise from ground truth via :func:`make_observations`."""
    root = resolve_dataset(path)
    imu_file = root / IMU_PATH
    if not imu_file.exists():
        raise FileNotFoundError(f"no IMU file at {imu_file}")
    stamps, _, _ = read_imu_table(imu_file)
    epoch = int(stamps[0]) if len(stamps) else 0
    imu = load_euroc_imu(imu_file, epoch)
    gt_file = root / GROUNDTRUTH_PATH
    gt = load_euroc_groundtruth(gt_file, epoch) if gt_file.exists() else Trajectory.empty()
    obs_file = root / OBSERVATIONS_PATH
    if obs_file.exists():
        obs = load_observations(obs_file, epoch)
    else:
        obs = make_observations(gt, keyframe_rate, scale, position_noise, rotation_noise, seed)
    rate = imu_rate(imu)
    if np.isfinite(rate) and abs(rate - declared_rate) > 0.1 * declared_rate:
        raise ParseError(f"IMU rate {rate:.1f} Hz differs from declared {declared_rate} Hz by more than 10%")
    # Keep only observations the IMU stream covers.
    if imu:
        obs = [o for o in obs if imu[0].timestamp <= o.timestamp <= imu[-1].timestamp]
    meta = {"imu_rate_hz": rate, "imu_samples": len(imu), "groundtruth_poses": len(gt),
            "observations": len(obs), "root": str(root)}
    return SequenceBundle(root.name, imu, gt, obs, epoch, meta)
