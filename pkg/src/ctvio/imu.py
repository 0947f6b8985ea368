"""IMU measurement synthesis from spline derivatives, and the IMU energy."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import so3
from .config import get_float, get_floats, read_keyvalue
from .errors import ConfigError, TimestampMismatch
from .spline import SplineSegment, rotation_coordinate, world_acceleration, body_angular_velocity

GRAVITY_MAGNITUDE = 9.8

# EuRoC (ADIS16448) datasheet values, used when a config omits them.
EUROC_ACCEL_NOISE = 2.0e-3  # m/s^2/sqrt(Hz)
EUROC_GYRO_NOISE = 1.6968e-4  # rad/s/sqrt(Hz)
EUROC_ACCEL_WALK = 3.0e-3  # m/s^3/sqrt(Hz)
EUROC_GYRO_WALK = 1.9393e-5  # rad/s^2/sqrt(Hz)


@dataclass(frozen=True)
class ImuSample:
    timestamp: float
    accel: np.ndarray
    gyro: np.ndarray


def _zero3():
    return np.zeros(3)


@dataclass
class ImuBias:
    accel_bias: np.ndarray = field(default_factory=_zero3)
    gyro_bias: np.ndarray = field(default_factory=_zero3)

    def __post_init__(self):
        self.accel_bias = np.asarray(self.accel_bias, dtype=float).reshape(3)
        self.gyro_bias = np.asarray(self.gyro_bias, dtype=float).reshape(3)

    def as_vector(self):
        return np.concatenate([self.accel_bias, self.gyro_bias])

    def copy(self):
        return ImuBias(self.accel_bias.copy(), self.gyro_bias.copy())


@dataclass(frozen=True)
class GravityParams:
    roll: float = 0.0
    pitch: float = 0.0


@dataclass
class ImuCalibration:
    """Camera-to-IMU rotation and noise model.

    Noise terms are continuous-time densities: white noise in unit/sqrt(Hz)
    and bias random walk in unit/s/sqrt(Hz). Per-sample standard deviation is
    ``noise * sqrt(rate_hz)``.
    """

    R_ic: np.ndarray = field(default_factory=lambda: np.eye(3))
    accel_noise: float = EUROC_ACCEL_NOISE
    gyro_noise: float = EUROC_GYRO_NOISE
    accel_walk: float = EUROC_ACCEL_WALK
    gyro_walk: float = EUROC_GYRO_WALK
    rate_hz: float = 200.0

    def __post_init__(self):
        self.R_ic = np.asarray(self.R_ic, dtype=float)
        if self.R_ic.shape != (3, 3) or abs(np.linalg.det(self.R_ic) - 1.0) > 1e-6:
            raise ConfigError("R_ic must be a 3x3 rotation matrix")
        for name in ("accel_noise", "gyro_noise", "accel_walk", "gyro_walk", "rate_hz"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be positive")

    def noise_weights(self) -> np.ndarray:
        """Diagonal of the per-sample inverse covariance, accel block first."""
        va = self.accel_noise ** 2 * self.rate_hz
        vg = self.gyro_noise ** 2 * self.rate_hz
        return np.array([1 / va] * 3 + [1 / vg] * 3)

    def bias_weights(self, dt: float) -> np.ndarray:
        """Diagonal inverse covariance of the bias change over ``dt`` seconds."""
        va = self.accel_walk ** 2 * dt
        vg = self.gyro_walk ** 2 * dt
        return np.array([1 / va] * 3 + [1 / vg] * 3)


def read_sensor_config(path) -> ImuCalibration:
    """Load an :class:`ImuCalibration` from a key-value file.

    ``R_ic`` is either nine row-major matrix entries or a ``w x y z`` quaternion.
    """
    return sensor_config_from_values(read_keyvalue(path))


def sensor_config_from_values(values: dict) -> ImuCalibration:
    R_ic = np.eye(3)
    if "r_ic" in values:
        entries = get_floats(values, "r_ic")
        if len(entries) == 9:
            R_ic = np.array(entries).reshape(3, 3)
        elif len(entries) == 4:
            q = np.array(entries)
            if abs(np.linalg.norm(q) - 1.0) > 1e-3:
                raise ConfigError("R_ic quaternion is not unit norm")
            R_ic = so3.from_quat_wxyz(q / np.linalg.norm(q))
        else:
            raise ConfigError(f"R_ic needs 9 or 4 entries, got {len(entries)}")
    return ImuCalibration(
        R_ic=R_ic,
        accel_noise=get_float(values, "accel_noise", EUROC_ACCEL_NOISE),
        gyro_noise=get_float(values, "gyro_noise", EUROC_GYRO_NOISE),
        accel_walk=get_float(values, "accel_walk", EUROC_ACCEL_WALK),
        gyro_walk=get_float(values, "gyro_walk", EUROC_GYRO_WALK),
        rate_hz=get_float(values, "rate_hz", 200.0),
    )


def gravity_vector(g: GravityParams, magnitude: float = GRAVITY_MAGNITUDE) -> np.ndarray:
    r, p = g.roll, g.pitch
    return magnitude * np.array([-np.sin(p) * np.cos(r), np.sin(r), -np.cos(p) * np.cos(r)])


def gravity_jacobian(g: GravityParams, magnitude: float = GRAVITY_MAGNITUDE) -> np.ndarray:
    """``(3, 2)`` derivative of :func:`gravity_vector` w.r.t. (roll, pitch)."""
    r, p = g.roll, g.pitch
    sr, cr, sp, cp = np.sin(r), np.cos(r), np.sin(p), np.cos(p)
    return magnitude * np.array([[sp * sr, -cp * cr], [cr, 0.0], [cp * sr, sp * cr]])


def synthesize_accel(seg: SplineSegment, t, scale: float, g: GravityParams, bias: ImuBias,
                     calib: ImuCalibration, gravity_magnitude: float = GRAVITY_MAGNITUDE) -> np.ndarray:
    """Accelerometer reading predicted at local time(s) ``t``."""
    R_t = seg.anchor_rotation @ so3.exp(rotation_coordinate(seg, t))
    v = scale * world_acceleration(seg, t) + gravity_vector(g, gravity_magnitude)
    body = np.einsum("...ji,...j->...i", R_t, v)
    return body @ calib.R_ic.T + bias.accel_bias


def synthesize_gyro(seg: SplineSegment, t, bias: ImuBias, calib: ImuCalibration) -> np.ndarray:
    return body_angular_velocity(seg, t) @ calib.R_ic.T + bias.gyro_bias


def imu_residual(sample: ImuSample, predicted_accel, predicted_gyro, predicted_time=None) -> np.ndarray:
    """Prediction minus measurement, accelerometer block first."""
    if predicted_time is not None and abs(predicted_time - sample.timestamp) > 1e-6:
        raise TimestampMismatch(f"prediction at {predicted_time} vs sample at {sample.timestamp}")
    return np.concatenate([np.asarray(predicted_accel) - sample.accel, np.asarray(predicted_gyro) - sample.gyro])


def bias_residual(bias_j: ImuBias, bias_prev: ImuBias) -> np.ndarray:
    return bias_j.as_vector() - bias_prev.as_vector()


def weighted_imu_energy(imu_residuals, calib: ImuCalibration, bias_residuals=(), bias_intervals=()) -> float:
    """Sum of ``e^T W_n e`` over samples plus ``e^T W_b e`` over bias pairs.

    Accumulation runs in input order so repeated calls are bit-identical.
    """
    e = np.asarray(imu_residuals, dtype=float).reshape(-1, 6)
    total = float(np.sum(e * e * calib.noise_weights()))
    for eb, dt in zip(bias_residuals, bias_intervals):
        eb = np.asarray(eb, dtype=float)
        total += float(np.sum(eb * eb * calib.bias_weights(dt)))
    return total


def stack_samples(samples):
    """``(t, accel, gyro)`` arrays from a sequence of :class:`ImuSample`."""
    if not samples:
        return np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3))
    t = np.array([s.timestamp for s in samples])
    acc = np.array([s.accel for s in samples])
    gyr = np.array([s.gyro for s in samples])
    return t, acc, gyr
