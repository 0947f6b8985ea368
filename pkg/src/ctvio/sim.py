"""Closed-form ground-truth trajectories, exact IMU sampling and pose observations.

Analytic trajectories are built from scalar profiles that carry their own first
and second derivatives, so velocity, acceleration and body angular velocity are
exact. :func:`fit_keyframe_spline` turns one into a per-keyframe cubic spline
(Hermite in position and in the rotation tangent coordinate) whose IMU stream
the estimator's motion model reproduces exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import so3
from .config import get_bool, get_float, get_floats, read_keyvalue
from .errors import ConfigError, OutOfRange
from .imu import GRAVITY_MAGNITUDE, GravityParams, ImuSample, gravity_vector
from .spline import SplinePath, SplineSegment
from .types import PoseObservation, Trajectory

KINDS = ("circle", "sinusoid-3d", "figure-eight", "static")

POSITION_SIGMA_FLOOR = 1e-3
ROTATION_SIGMA_FLOOR = 1e-3


@dataclass
class AnalyticTrajectory:
    kind: str = "circle"
    duration: float = 60.0
    radius: float = 1.0
    rate: float = 1.0
    amplitude: tuple = (1.0, 0.8, 0.3)
    frequency: tuple = (0.7, 0.5, 0.9)
    z_amplitude: float = 0.0
    z_rate: float = 0.0
    yaw_amplitude: float = 0.5
    yaw_rate: float = 0.4
    origin: tuple = (0.0, 0.0, 0.0)
    static_rotation: tuple = (0.0, 0.0, 0.0)
    excitation: bool = False
    excitation_duration: float = 2.0
    excitation_amplitude: float = 0.3
    excitation_angle: float = 0.3
    excitation_rate: float = np.pi
    ramp_duration: float = 1.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown trajectory kind {self.kind!r}; expected one of {KINDS}")
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if self.ramp_duration < 0:
            raise ConfigError("ramp_duration must be non-negative")


@dataclass(frozen=True)
class TruthSample:
    position: np.ndarray
    rotation: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    body_angular_velocity: np.ndarray


@dataclass
class SimConfig:
    imu_rate: float = 200.0
    keyframe_rate: float = 5.0
    accel_noise: float = 0.0
    gyro_noise: float = 0.0
    accel_walk: float = 0.0
    gyro_walk: float = 0.0
    accel_bias: tuple = (0.0, 0.0, 0.0)
    gyro_bias: tuple = (0.0, 0.0, 0.0)
    observation_scale: float = 1.0
    observation_position_noise: float = 0.0
    observation_rotation_noise: float = 0.0
    seed: int = 0
    R_ic: np.ndarray = field(default_factory=lambda: np.eye(3))
    gravity_roll: float = 0.0
    gravity_pitch: float = 0.0
    gravity_magnitude: float = GRAVITY_MAGNITUDE
    spline_exact: bool = True

    def __post_init__(self):
        if not (self.imu_rate > 0 and self.keyframe_rate > 0):
            raise ConfigError("rates must be positive")
        if not self.keyframe_rate < self.imu_rate:
            raise ConfigError("keyframe_rate must be below imu_rate")
        if not self.observation_scale > 0:
            raise ConfigError("observation_scale must be positive")
        self.R_ic = np.asarray(self.R_ic, dtype=float)

    @property
    def gravity(self):
        return gravity_vector(GravityParams(self.gravity_roll, self.gravity_pitch), self.gravity_magnitude)


# --- scalar profiles as (value, d/dt, d2/dt2) ---

def _const(t, c=0.0):
    z = np.zeros_like(t)
    return z + c, z, z


def _sine(t, amp, omega, phase=0.0):
    s, c = np.sin(omega * t + phase), np.cos(omega * t + phase)
    return amp * s, amp * omega * c, -amp * omega * omega * s


def _cosine(t, amp, omega):
    return _sine(t, amp, omega, np.pi / 2)


def _bump(t, T):
    # sin^4 window: value, slope and curvature all vanish at both ends.
    inside = (t >= 0.0) & (t <= T)
    k = np.pi / T
    s, c = np.sin(k * t), np.cos(k * t)
    v = s ** 4
    d1 = 4.0 * s ** 3 * c * k
    d2 = (12.0 * s * s * c * c - 4.0 * s ** 4) * k * k
    return np.where(inside, v, 0.0), np.where(inside, d1, 0.0), np.where(inside, d2, 0.0)


def _warp(t, T):
    # Time warp starting from rest: w' ramps 0 -> 1 as smoothstep over [0, T].
    if T <= 0.0:
        return t, np.ones_like(t), np.zeros_like(t)
    x = np.clip(t / T, 0.0, 1.0)
    w = np.where(t < T, T * (x ** 3 - 0.5 * x ** 4), t - 0.5 * T)
    return w, 3.0 * x * x - 2.0 * x ** 3, 6.0 * x * (1.0 - x) / T


def _compose(f, w):
    # Chain rule for f(w(t)) given f's derivatives w.r.t. its own argument.
    return f[0], f[1] * w[1], f[2] * w[1] ** 2 + f[1] * w[2]


def _add(a, b):
    return a[0] + b[0], a[1] + b[1], a[2] + b[2]


def _mul(a, b):
    return a[0] * b[0], a[1] * b[0] + a[0] * b[1], a[2] * b[0] + 2.0 * a[1] * b[1] + a[0] * b[2]


def _position_profiles(traj, t):
    ox, oy, oz = traj.origin
    if traj.kind == "static":
        return [_const(t, ox), _const(t, oy), _const(t, oz)]
    if traj.kind == "circle":
        x = _add(_cosine(t, traj.radius, traj.rate), _const(t, ox))
        y = _add(_sine(t, traj.radius, traj.rate), _const(t, oy))
    elif traj.kind == "figure-eight":
        x = _add(_sine(t, traj.radius, traj.rate), _const(t, ox))
        y = _add(_sine(t, 0.5 * traj.radius, 2.0 * traj.rate), _const(t, oy))
    else:
        x = _add(_sine(t, traj.amplitude[0], traj.frequency[0]), _const(t, ox))
        y = _add(_sine(t, traj.amplitude[1], traj.frequency[1]), _const(t, oy))
    if traj.kind == "sinusoid-3d":
        z = _add(_sine(t, traj.amplitude[2], traj.frequency[2]), _const(t, oz))
    else:
        z = _add(_sine(t, traj.z_amplitude, traj.z_rate), _const(t, oz))
    return [x, y, z]


def _excitation(traj, t, amp, offsets):
    bump = _bump(t, traj.excitation_duration)
    return [_mul(bump, _sine(t, amp, traj.excitation_rate * f, f)) for f in offsets]


def _analytic_arrays(traj, t):
    t = np.asarray(t, dtype=float)
    warp = _warp(t, traj.ramp_duration)
    base = _position_profiles(traj, warp[0])
    pos = [_compose(p, warp) for p in base]
    if traj.kind == "static":
        R = np.broadcast_to(so3.exp(np.asarray(traj.static_rotation, dtype=float)), t.shape + (3, 3)).copy()
        zero = np.zeros(t.shape + (3,))
        P = np.stack([p[0] for p in pos], axis=-1)
        return P, R, zero, zero.copy(), zero.copy()

    if traj.kind == "sinusoid-3d":
        yaw = _compose(_sine(warp[0], traj.yaw_amplitude, traj.yaw_rate), warp)
        psi, yaw_rate = yaw[0], yaw[1]
    else:
        # Heading of the unexcited horizontal path, taken along the unwarped
        # curve so it stays defined while starting from rest.
        vx, vy, ax, ay = base[0][1], base[1][1], base[0][2], base[1][2]
        psi = np.arctan2(vy, vx)
        yaw_rate = (vx * ay - vy * ax) / (vx * vx + vy * vy) * warp[1]
    roll = _const(t)
    pitch = _const(t)
    if traj.excitation:
        dp = _excitation(traj, t, traj.excitation_amplitude, (1.0, 1.3, 0.7))
        pos = [_add(p, d) for p, d in zip(pos, dp)]
        da = _excitation(traj, t, traj.excitation_angle, (0.9, 1.1, 1.2))
        roll, pitch = _add(roll, da[0]), _add(pitch, da[1])
        psi = psi + da[2][0]
        yaw_rate = yaw_rate + da[2][1]

    P = np.stack([p[0] for p in pos], axis=-1)
    V = np.stack([p[1] for p in pos], axis=-1)
    A = np.stack([p[2] for p in pos], axis=-1)
    phi, theta = roll[0], pitch[0]
    dphi, dtheta = roll[1], pitch[1]
    R = _rz(psi) @ _ry(theta) @ _rx(phi)
    sphi, cphi, sth, cth = np.sin(phi), np.cos(phi), np.sin(theta), np.cos(theta)
    W = np.stack([
        dphi - yaw_rate * sth,
        dtheta * cphi + yaw_rate * cth * sphi,
        -dtheta * sphi + yaw_rate * cth * cphi,
    ], axis=-1)
    return P, R, V, A, W


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1), np.stack([z, z, o], -1)], -2)


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, z, s], -1), np.stack([z, o, z], -1), np.stack([-s, z, c], -1)], -2)


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([o, z, z], -1), np.stack([z, c, -s], -1), np.stack([z, s, c], -1)], -2)


def time_range(traj):
    if isinstance(traj, SplinePath):
        return float(traj.times[0]), float(traj.times[-1])
    return 0.0, float(traj.duration)


def truth_arrays(traj, times):
    """Stacked (position, rotation, velocity, acceleration, body rate) at ``times``."""
    times = np.asarray(times, dtype=float)
    t0, t1 = time_range(traj)
    if np.any(times < t0 - 1e-9) or np.any(times > t1 + 1e-9):
        raise OutOfRange(f"time outside trajectory range [{t0}, {t1}]")
    if isinstance(traj, SplinePath):
        return traj.sample_many(times)[:5]
    return _analytic_arrays(traj, times)


def sample_truth(traj, t) -> TruthSample:
    """Closed-form pose and derivatives at time ``t``.

    For a :class:`SplinePath` the body rate is the derivative of the rotation
    tangent polynomial, the same convention the IMU model uses.
    """
    out = truth_arrays(traj, np.array([t], dtype=float))
    return TruthSample(*(x[0] for x in out))


def _hermite(tau, d0, value, slope):
    # Cubic x(t) = d0 t + q t^2 + c t^3 with x(tau) = value, x'(tau) = slope.
    a = value - tau * d0
    b = slope - d0
    c = (tau * b - 2.0 * a) / tau ** 3
    q = (3.0 * a - tau * b) / tau ** 2
    return q, c


def fit_keyframe_spline(traj, knot_times) -> SplinePath:
    """Per-keyframe cubic Hermite interpolation of ``traj`` at ``knot_times``.

    Position is C1 and rotation C0 (with continuous body rate) at every knot,
    so both boundary constraints vanish; acceleration jumps at the knots.
    """
    knot_times = np.asarray(knot_times, dtype=float)
    P, R, V, _, W = truth_arrays(traj, knot_times)
    segments = []
    for j in range(1, len(knot_times)):
        tau = knot_times[j - 1] - knot_times[j]
        qp, cp = _hermite(tau, V[j], P[j - 1] - P[j], V[j - 1])
        phi_end = so3.log(R[j].T @ R[j - 1])
        rate_end = so3.right_jacobian_inv(phi_end) @ W[j - 1]
        qr, cr = _hermite(tau, W[j], phi_end, rate_end)
        segments.append(SplineSegment(anchor_time=knot_times[j], anchor_position=P[j], anchor_rotation=R[j],
                                      t_prev=tau, lin_r=W[j], quad_p=qp, quad_r=qr, cub_p=cp, cub_r=cr))
    return SplinePath(P[0], segments)


def keyframe_times(duration, keyframe_rate, start=0.0):
    n = int(np.floor((duration - start) * keyframe_rate + 1e-9))
    return start + np.arange(n + 1) / keyframe_rate


def imu_times(duration, imu_rate, start=0.0):
    n = int(np.floor((duration - start) * imu_rate + 1e-9))
    return start + np.arange(n + 1) / imu_rate


def simulation_trajectory(traj: AnalyticTrajectory, cfg: SimConfig):
    """The trajectory the simulator actually samples (spline-wrapped if configured)."""
    if cfg.spline_exact and traj.kind != "static":
        return fit_keyframe_spline(traj, keyframe_times(traj.duration, cfg.keyframe_rate))
    return traj


def _imu_disturbances(cfg: SimConfig, n):
    # Draw order is part of the determinism contract: walks first, then noise.
    rng = np.random.default_rng(cfg.seed)
    step = np.sqrt(1.0 / cfg.imu_rate)
    walk_a = rng.standard_normal((n, 3)) * cfg.accel_walk * step
    walk_g = rng.standard_normal((n, 3)) * cfg.gyro_walk * step
    walk_a[0] = walk_g[0] = 0.0
    bias_a = np.asarray(cfg.accel_bias, dtype=float) + np.cumsum(walk_a, axis=0)
    bias_g = np.asarray(cfg.gyro_bias, dtype=float) + np.cumsum(walk_g, axis=0)
    noise_a = rng.standard_normal((n, 3)) * cfg.accel_noise * np.sqrt(cfg.imu_rate)
    noise_g = rng.standard_normal((n, 3)) * cfg.gyro_noise * np.sqrt(cfg.imu_rate)
    return bias_a, bias_g, noise_a, noise_g


def generate_imu(traj, cfg: SimConfig) -> list[ImuSample]:
    """IMU stream at ``cfg.imu_rate``; deterministic for a given seed.

    accel = R_ic R(t)^T (a(t) + g) + b_a(t) + n_a,  gyro = R_ic w(t) + b_g(t) + n_g
    """
    t0, t1 = time_range(traj)
    times = imu_times(t1, cfg.imu_rate, start=t0)
    _, R, _, A, W = truth_arrays(traj, times)
    bias_a, bias_g, noise_a, noise_g = _imu_disturbances(cfg, len(times))
    specific = np.einsum("nji,nj->ni", R, A + cfg.gravity)
    accel = specific @ cfg.R_ic.T + bias_a + noise_a
    gyro = W @ cfg.R_ic.T + bias_g + noise_g
    return [ImuSample(float(times[k]), accel[k], gyro[k]) for k in range(len(times))]


def true_biases(traj, cfg: SimConfig, times):
    """Bias values the simulator used at ``times`` (snapped to the IMU grid)."""
    t0, t1 = time_range(traj)
    grid = imu_times(t1, cfg.imu_rate, start=t0)
    bias_a, bias_g, _, _ = _imu_disturbances(cfg, len(grid))
    idx = np.clip(np.searchsorted(grid, np.asarray(times) - 1e-9), 0, len(grid) - 1)
    return bias_a[idx], bias_g[idx]


def generate_observations(traj, cfg: SimConfig) -> list[PoseObservation]:
    """Keyframe-rate poses with positions multiplied by ``observation_scale``."""
    t0, t1 = time_range(traj)
    times = keyframe_times(t1, cfg.keyframe_rate, start=t0)
    P, R, _, _, _ = truth_arrays(traj, times)
    # Separate stream from the IMU noise so both can be regenerated independently.
    rng = np.random.default_rng([cfg.seed, 1])
    dp = rng.standard_normal(P.shape) * cfg.observation_position_noise
    dr = rng.standard_normal(P.shape) * cfg.observation_rotation_noise
    pos_sigma = max(cfg.observation_position_noise, POSITION_SIGMA_FLOOR)
    rot_sigma = max(cfg.observation_rotation_noise, ROTATION_SIGMA_FLOOR)
    Rn = R @ so3.exp(dr)
    return [PoseObservation(float(times[k]), cfg.observation_scale * P[k] + dp[k], Rn[k], pos_sigma, rot_sigma)
            for k in range(len(times))]


def ground_truth(traj, cfg: SimConfig) -> Trajectory:
    """Ground truth on the IMU grid."""
    t0, t1 = time_range(traj)
    times = imu_times(t1, cfg.imu_rate, start=t0)
    P, R, _, _, _ = truth_arrays(traj, times)
    return Trajectory(times, P, R)


_TRAJ_FIELDS = {f.name for f in fields(AnalyticTrajectory)}
_SIM_FIELDS = {f.name for f in fields(SimConfig)}
_VECTOR_FIELDS = {"amplitude", "frequency", "origin", "static_rotation", "accel_bias", "gyro_bias"}


def load_sim_config(path):
    """Read an (AnalyticTrajectory, SimConfig) pair from one key-value file."""
    return sim_config_from_values(read_keyvalue(path))


def sim_config_from_values(values: dict):
    traj_kw, sim_kw = {}, {}
    for key in values:
        name = key.lower()
        if name == "r_ic":
            entries = get_floats(values, key)
            if len(entries) != 9:
                raise ConfigError("R_ic needs 9 row-major entries")
            sim_kw["R_ic"] = np.array(entries).reshape(3, 3)
            continue
        target = traj_kw if name in _TRAJ_FIELDS else sim_kw if name in _SIM_FIELDS else None
        if target is None:
            raise ConfigError(f"unknown simulation key {key!r}")
        if name == "kind":
            target[name] = values[key].strip()
        elif name in ("excitation", "spline_exact"):
            target[name] = get_bool(values, key, False)
        elif name == "seed":
            target[name] = int(get_float(values, key))
        elif name in _VECTOR_FIELDS:
            target[name] = tuple(get_floats(values, key))
        else:
            target[name] = get_float(values, key)
    return AnalyticTrajectory(**traj_kw), SimConfig(**sim_kw)


def config_values(traj: AnalyticTrajectory, cfg: SimConfig) -> dict:
    """Inverse of :func:`sim_config_from_values`, for config echo in reports."""
    out = {}
    for obj in (traj, cfg):
        for f in fields(obj):
            v = getattr(obj, f.name)
            if isinstance(v, np.ndarray):
                v = [float(x) for x in v.ravel()]
            elif isinstance(v, tuple):
                v = [float(x) for x in v]
            elif isinstance(v, (np.floating, np.integer)):
                v = v.item()
            out[f.name] = v
    return out
