"""Linear initialization of gravity, the shared spline and (scale, gyro bias)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import so3
from ..errors import InsufficientSamples, SingularVandermonde, UnobservableScale
from ..imu import GRAVITY_MAGNITUDE, GravityParams, gravity_vector
from ..spline import SplineSegment, body_angular_velocity, rotation_coordinate, world_acceleration

GRAVITY_INIT_SAMPLES = 40
MIN_BIAS_SCALE_SAMPLES = 10
VANDERMONDE_COND_MAX = 1e12
SCALE_COND_MAX = 1e8


def initialize_gravity(accel, R_ic=None, rotation=None, count: int = GRAVITY_INIT_SAMPLES) -> GravityParams:
    """Roll/pitch aligning modeled gravity with the mean of the first ``count`` readings.

    ``accel`` is an ``(n, 3)`` array of accelerometer readings (IMU frame);
    ``rotation`` is the camera-to-world rotation during those samples.
    """
    accel = np.asarray(accel, dtype=float).reshape(-1, 3)
    if len(accel) < count:
        raise InsufficientSamples(f"gravity initialization needs {count} samples, got {len(accel)}")
    R_ic = np.eye(3) if R_ic is None else np.asarray(R_ic)
    rotation = np.eye(3) if rotation is None else np.asarray(rotation)
    mean = accel[:count].mean(axis=0)
    d = rotation @ R_ic.T @ mean
    norm = np.linalg.norm(d)
    if norm == 0.0:
        raise InsufficientSamples("mean accelerometer reading is zero")
    u = d / norm
    roll = float(np.arcsin(np.clip(u[1], -1.0, 1.0)))
    pitch = 0.0 if np.hypot(u[0], u[2]) < 1e-12 else float(np.arctan2(-u[0], -u[2]))
    return GravityParams(roll, pitch)


@dataclass
class SplineFit:
    """One cubic through four keyframes, re-expanded about each of them."""

    times: np.ndarray
    position_coeffs: np.ndarray  # rows: constant, linear, quadratic, cubic (about the last keyframe)
    rotation_coeffs: np.ndarray  # rows: linear, quadratic, cubic (relative to the last rotation)

    @property
    def lin_p(self):
        return self.position_coeffs[1]

    def local(self, k):
        """Coefficients about keyframe ``k``: dict with lin_p plus SplineSegment fields."""
        tk = self.times[k] - self.times[-1]
        _, l, q, c = self.position_coeffs
        lr, qr, cr = self.rotation_coeffs
        return {
            "lin_p": l + 2 * q * tk + 3 * c * tk ** 2,
            "quad_p": q + 3 * c * tk,
            "cub_p": c.copy(),
            "lin_r": lr + 2 * qr * tk + 3 * cr * tk ** 2,
            "quad_r": qr + 3 * cr * tk,
            "cub_r": cr.copy(),
        }


def initialize_spline(times, positions, rotations) -> SplineFit:
    """Fit a shared cubic exactly through four keyframe poses.

    Positions solve a 4x4 Vandermonde system in time relative to the last
    keyframe; rotations solve for the polynomial in the log of each rotation
    relative to the last one.
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    rotations = np.asarray(rotations, dtype=float).reshape(-1, 3, 3)
    if len(times) != 4 or len(positions) != 4 or len(rotations) != 4:
        raise ValueError("initialize_spline needs exactly four keyframes")
    tau = times - times[-1]
    V = np.vander(tau, 4, increasing=True)
    if not np.isfinite(np.linalg.cond(V)) or np.linalg.cond(V) > VANDERMONDE_COND_MAX:
        raise SingularVandermonde("keyframe timestamps too close for a cubic fit")
    pc = np.linalg.solve(V, positions)
    phis = so3.log(np.einsum("ji,njk->nik", rotations[-1], rotations[:3]))
    rc = np.linalg.solve(V[:3, 1:], phis)
    return SplineFit(times, pc, rc)


def segment_from_fit(fit: SplineFit, k: int, position, rotation) -> SplineSegment:
    coeffs = fit.local(k)
    coeffs.pop("lin_p")
    return SplineSegment(fit.times[k], position, rotation, fit.times[k - 1] - fit.times[k], **coeffs)


@dataclass
class BiasScaleResult:
    scale: float
    gyro_bias: np.ndarray
    residual_rms: float
    condition: float


def initialize_bias_scale(segments, gravity: GravityParams, R_ic=None,
                          magnitude: float = GRAVITY_MAGNITUDE) -> BiasScaleResult:
    """Linear least squares for (scale, gyro bias) with the accel bias at zero.

    ``segments`` is a sequence of ``(SplineSegment, t_local, accel, gyro)``.
    """
    R_ic = np.eye(3) if R_ic is None else np.asarray(R_ic)
    g = gravity_vector(gravity, magnitude)
    rows_u, rhs_a, rhs_g = [], [], []
    for seg, t, acc, gyr in segments:
        t = np.asarray(t, dtype=float)
        if len(t) == 0:
            continue
        R_t = seg.anchor_rotation @ so3.exp(rotation_coordinate(seg, t))
        to_imu = np.einsum("ij,nkj->nik", R_ic, R_t)  # R_ic R(t)^T
        rows_u.append(np.einsum("nij,nj->ni", to_imu, world_acceleration(seg, t)))
        rhs_a.append(np.asarray(acc) - to_imu @ g)
        rhs_g.append(np.asarray(gyr) - body_angular_velocity(seg, t) @ R_ic.T)
    n = sum(len(u) for u in rows_u)
    if n < MIN_BIAS_SCALE_SAMPLES:
        raise InsufficientSamples(f"bias/scale initialization needs {MIN_BIAS_SCALE_SAMPLES} samples, got {n}")
    u = np.concatenate(rows_u)
    ra = np.concatenate(rhs_a)
    rg = np.concatenate(rhs_g)
    # Normal equations decouple: scale from accel rows, gyro bias from gyro rows.
    suu = float(np.sum(u * u))
    normal = np.array([suu, n])
    cond = np.inf if suu == 0.0 else max(normal) / min(normal)
    if cond > SCALE_COND_MAX:
        raise UnobservableScale(f"insufficient acceleration excitation (condition {cond:.3e})")
    scale = float(np.sum(u * ra)) / suu
    if not scale > 0.0:
        raise UnobservableScale(f"non-positive scale estimate {scale:.3e}")
    bg = rg.mean(axis=0)
    res = np.concatenate([(scale * u - ra).ravel(), (rg - bg).ravel()])
    return BiasScaleResult(scale, bg, float(np.sqrt(np.mean(res ** 2))), float(cond))
