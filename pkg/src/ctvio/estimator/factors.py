"""Residuals and analytic Jacobians of every term in the window energy.

Jacobians are taken w.r.t. the tangent layout of :mod:`.state`: keyframe
blocks are 27 columns wide, the IMU term additionally has the 3 global
columns (log scale, roll, pitch) in front.
"""
from __future__ import annotations

import numpy as np

from .. import so3
from ..imu import gravity_jacobian, gravity_vector
from .state import BA, BG, CP, CR, GLOBAL_DIM, KF_DIM, LR, POS, QP, QR, ROT, ImuSegment, KeyframeState

_I3 = np.eye(3)


def imu_segment(kf: KeyframeState, scale, gravity, seg: ImuSegment, R_ic, magnitude, jacobian=True):
    """Residuals ``(n, 6)`` and optionally Jacobians ``(n, 6, 30)`` for one segment."""
    t = seg.t_local
    t2 = t * t
    t3 = t2 * t
    phi = t[:, None] * kf.lin_r + t2[:, None] * kf.quad_r + t3[:, None] * kf.cub_r
    E = so3.exp(phi)
    aw = 2.0 * kf.quad_p + 6.0 * t[:, None] * kf.cub_p
    g = gravity_vector(gravity, magnitude)
    u = (scale * aw + g) @ kf.rotation  # R_j^T v, row-wise
    w = np.einsum("nji,nj->ni", E, u)  # E^T u
    omega = kf.lin_r + 2.0 * t[:, None] * kf.quad_r + 3.0 * t2[:, None] * kf.cub_r
    r = np.empty((len(t), 6))
    r[:, :3] = w @ R_ic.T + kf.bias.accel_bias - seg.accel
    r[:, 3:] = omega @ R_ic.T + kf.bias.gyro_bias - seg.gyro
    if not jacobian:
        return r

    n = len(t)
    J = np.zeros((n, 6, GLOBAL_DIM + KF_DIM))
    o = GLOBAL_DIM
    RE = np.einsum("ij,nkj->nik", R_ic, E)  # R_ic E^T
    M = RE @ kf.rotation.T  # world -> IMU at time t
    J[:, :3, 0] = np.einsum("nij,nj->ni", M, scale * aw)
    J[:, :3, 1:3] = M @ gravity_jacobian(gravity, magnitude)
    J[:, :3, o + ROT:o + ROT + 3] = RE @ so3.skew(u)
    J[:, :3, o + BA:o + BA + 3] = _I3
    K = R_ic @ so3.skew(w) @ so3.right_jacobian(phi)
    J[:, :3, o + LR:o + LR + 3] = K * t[:, None, None]
    J[:, :3, o + QR:o + QR + 3] = K * t2[:, None, None]
    J[:, :3, o + CR:o + CR + 3] = K * t3[:, None, None]
    J[:, :3, o + QP:o + QP + 3] = 2.0 * scale * M
    J[:, :3, o + CP:o + CP + 3] = (6.0 * scale) * t[:, None, None] * M
    J[:, 3:, o + BG:o + BG + 3] = _I3
    J[:, 3:, o + LR:o + LR + 3] = R_ic
    J[:, 3:, o + QR:o + QR + 3] = 2.0 * t[:, None, None] * R_ic
    J[:, 3:, o + CR:o + CR + 3] = 3.0 * t2[:, None, None] * R_ic
    return r, J


def bias_factor(kf_prev: KeyframeState, kf: KeyframeState, jacobian=True):
    """``b_j - b_{j-1}`` with Jacobians w.r.t. (prev, current) keyframe blocks."""
    r = kf.bias.as_vector() - kf_prev.bias.as_vector()
    if not jacobian:
        return r
    Jp = np.zeros((6, KF_DIM))
    Jc = np.zeros((6, KF_DIM))
    Jc[:, BA:BA + 6] = np.eye(6)
    Jp[:, BA:BA + 6] = -np.eye(6)
    return r, Jp, Jc


def pose_factor(kf: KeyframeState, jacobian=True):
    """Position and rotation residual against the keyframe's observation."""
    obs = kf.observation
    rr = so3.log(obs.rotation.T @ kf.rotation)
    r = np.concatenate([kf.position - obs.position, rr])
    if not jacobian:
        return r
    J = np.zeros((6, KF_DIM))
    J[:3, POS:POS + 3] = _I3
    J[3:, ROT:ROT + 3] = so3.right_jacobian_inv(rr)
    return r, J


def pose_weights(kf: KeyframeState):
    obs = kf.observation
    return np.array([obs.position_sigma ** -2] * 3 + [obs.rotation_sigma ** -2] * 3)


def rotation_constraint(kf_prev: KeyframeState, kf: KeyframeState, jacobian=True):
    """``log(R_{j-1}^T R_j exp(phi_j(t_prev)))`` and its Jacobians."""
    tau = kf_prev.timestamp - kf.timestamp
    phi = tau * kf.lin_r + tau ** 2 * kf.quad_r + tau ** 3 * kf.cub_r
    E = so3.exp(phi)
    M = kf_prev.rotation.T @ kf.rotation @ E
    c = so3.log(M)
    if not jacobian:
        return c
    Jinv = so3.right_jacobian_inv(c)
    Jp = np.zeros((3, KF_DIM))
    Jc = np.zeros((3, KF_DIM))
    Jp[:, ROT:ROT + 3] = -Jinv @ M.T
    Jc[:, ROT:ROT + 3] = Jinv @ E.T
    K = Jinv @ so3.right_jacobian(phi)
    Jc[:, LR:LR + 3] = K * tau
    Jc[:, QR:QR + 3] = K * tau ** 2
    Jc[:, CR:CR + 3] = K * tau ** 3
    return c, Jp, Jc


def velocity_constraint(kf_prev: KeyframeState, kf: KeyframeState, kf_next: KeyframeState, jacobian=True):
    """Position-velocity continuity at ``kf`` with ``lin_p`` eliminated on both sides."""
    t1 = kf_prev.timestamp - kf.timestamp
    t2 = kf.timestamp - kf_next.timestamp
    left = (kf_prev.position - kf.position) / t1 - t1 * kf.quad_p - t1 ** 2 * kf.cub_p
    right = (kf.position - kf_next.position) / t2 + t2 * kf_next.quad_p + 2.0 * t2 ** 2 * kf_next.cub_p
    c = left - right
    if not jacobian:
        return c
    Jp = np.zeros((3, KF_DIM))
    Jc = np.zeros((3, KF_DIM))
    Jn = np.zeros((3, KF_DIM))
    Jp[:, POS:POS + 3] = _I3 / t1
    Jc[:, POS:POS + 3] = -_I3 / t1 - _I3 / t2
    Jc[:, QP:QP + 3] = -t1 * _I3
    Jc[:, CP:CP + 3] = -t1 ** 2 * _I3
    Jn[:, POS:POS + 3] = _I3 / t2
    Jn[:, QP:QP + 3] = -t2 * _I3
    Jn[:, CP:CP + 3] = -2.0 * t2 ** 2 * _I3
    return c, Jp, Jc, Jn
