"""Analytic Jacobians of every residual and constraint against central differences."""
from __future__ import annotations

import numpy as np
import pytest

from conftest import random_keyframe
from ctvio import so3
from ctvio.estimator import factors
from ctvio.estimator.state import KF_DIM, ImuSegment
from ctvio.imu import GravityParams
from ctvio.types import PoseObservation

H = 1e-6
TOL = 1e-5


def fd_keyframe(f, kf):
    r0 = np.ravel(f(kf))
    J = np.zeros((len(r0), KF_DIM))
    for i in range(KF_DIM):
        d = np.zeros(KF_DIM)
        d[i] = H
        J[:, i] = (np.ravel(f(kf.retract(d))) - np.ravel(f(kf.retract(-d)))) / (2 * H)
    return J


def entry_error(J, J_fd):
    """Largest per-entry relative error, with a unit floor on the magnitude."""
    return float(np.max(np.abs(J - J_fd) / np.maximum(np.abs(J_fd), 1.0)))


def random_case(rng):
    a, b, c = (random_keyframe(rng, t) for t in (-0.2, 0.0, 0.2))
    b.observation = PoseObservation(0.0, rng.normal(size=3), so3.exp(rng.normal(size=3)))
    seg = ImuSegment(np.linspace(-0.195, 0.0, 40), rng.normal(size=(40, 3)), rng.normal(size=(40, 3)), -0.2)
    R_ic = so3.exp(rng.normal(size=3))
    s = float(np.exp(0.3 * rng.normal()))
    g = GravityParams(*(0.5 * rng.normal(size=2)))
    return a, b, c, seg, R_ic, s, g


def jacobian_errors(rng, n=50):
    worst = {"imu": 0.0, "imu_globals": 0.0, "bias": 0.0, "pose": 0.0, "c_r": 0.0, "c_v": 0.0}
    for _ in range(n):
        a, b, c, seg, R_ic, s, g = random_case(rng)
        r, J = factors.imu_segment(b, s, g, seg, R_ic, 9.8)
        J_fd = fd_keyframe(lambda k: factors.imu_segment(k, s, g, seg, R_ic, 9.8, jacobian=False), b)
        worst["imu"] = max(worst["imu"], entry_error(J[:, :, 3:].reshape(-1, KF_DIM), J_fd))

        def f_glob(ls, roll, pitch):
            return factors.imu_segment(b, s * np.exp(ls), GravityParams(g.roll + roll, g.pitch + pitch), seg,
                                       R_ic, 9.8, jacobian=False).ravel()
        Jg = np.column_stack([(f_glob(*(H * e)) - f_glob(*(-H * e))) / (2 * H) for e in np.eye(3)])
        worst["imu_globals"] = max(worst["imu_globals"], entry_error(J[:, :, :3].reshape(-1, 3), Jg))

        _, Jp, Jc = factors.bias_factor(a, b)
        worst["bias"] = max(worst["bias"],
                            entry_error(Jp, fd_keyframe(lambda k: factors.bias_factor(k, b, jacobian=False), a)),
                            entry_error(Jc, fd_keyframe(lambda k: factors.bias_factor(a, k, jacobian=False), b)))

        _, Jpose = factors.pose_factor(b)
        worst["pose"] = max(worst["pose"],
                            entry_error(Jpose, fd_keyframe(lambda k: factors.pose_factor(k, jacobian=False), b)))

        _, Jp, Jc = factors.rotation_constraint(a, b)
        worst["c_r"] = max(worst["c_r"],
                           entry_error(Jp, fd_keyframe(lambda k: factors.rotation_constraint(k, b, jacobian=False), a)),
                           entry_error(Jc, fd_keyframe(lambda k: factors.rotation_constraint(a, k, jacobian=False), b)))

        _, Jp, Jc, Jn = factors.velocity_constraint(a, b, c)
        worst["c_v"] = max(
            worst["c_v"],
            entry_error(Jp, fd_keyframe(lambda k: factors.velocity_constraint(k, b, c, jacobian=False), a)),
            entry_error(Jc, fd_keyframe(lambda k: factors.velocity_constraint(a, k, c, jacobian=False), b)),
            entry_error(Jn, fd_keyframe(lambda k: factors.velocity_constraint(a, b, k, jacobian=False), c)))
    return worst


@pytest.mark.parametrize("term", ["imu", "imu_globals", "bias", "pose", "c_r", "c_v"])
def test_jacobian_matches_finite_differences(term):
    worst = jacobian_errors(np.random.default_rng(2024), n=10)
    assert worst[term] < TOL


def test_factor_residuals_match_spline_module(rng):
    from ctvio import spline
    a, b, c, *_ = random_case(rng)
    seg_b = b.segment(a.timestamp - b.timestamp)
    seg_c = c.segment(b.timestamp - c.timestamp)
    assert np.allclose(factors.rotation_constraint(a, b, jacobian=False),
                       spline.rotation_constraint(seg_b, a.rotation), atol=1e-13)
    assert np.allclose(factors.velocity_constraint(a, b, c, jacobian=False),
                       spline.velocity_constraint(seg_b, seg_c, a.position, c.position), atol=1e-12)


def test_imu_factor_matches_imu_model(rng):
    from ctvio.imu import ImuBias, ImuCalibration, synthesize_accel, synthesize_gyro
    _, b, _, seg, R_ic, s, g = random_case(rng)
    calib = ImuCalibration(R_ic=R_ic)
    r = factors.imu_segment(b, s, g, seg, R_ic, 9.8, jacobian=False)
    sp = b.segment(seg.t_prev)
    pred_a = synthesize_accel(sp, seg.t_local, s, g, ImuBias(b.bias.accel_bias), calib)
    pred_g = synthesize_gyro(sp, seg.t_local, ImuBias(gyro_bias=b.bias.gyro_bias), calib)
    assert np.allclose(r[:, :3], pred_a - seg.accel, atol=1e-12)
    assert np.allclose(r[:, 3:], pred_g - seg.gyro, atol=1e-12)
