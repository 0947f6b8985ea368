from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctvio import so3
from ctvio.errors import AngleNearPi

finite = st.floats(-3.0, 3.0, allow_nan=False)
vec3 = arrays(np.float64, 3, elements=finite)


def test_skew_zero_and_unit():
    assert np.array_equal(so3.skew([0, 0, 0]), np.zeros((3, 3)))
    assert np.array_equal(so3.skew([1, 0, 0]), [[0, 0, 0], [0, 0, -1], [0, 1, 0]])


@given(vec3, vec3)
def test_skew_is_cross_product(v, w):
    S = so3.skew(v)
    assert np.allclose(S, -S.T, atol=0)
    assert np.allclose(S @ w, np.cross(v, w), atol=1e-15 * (1 + np.abs(v).max() * np.abs(w).max()))


def test_exp_identity_and_quarter_turn():
    assert np.array_equal(so3.exp(np.zeros(3)), np.eye(3))
    R = so3.exp([0, 0, np.pi / 2])
    assert np.allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_exp_tiny_angle_matches_series(rng):
    for _ in range(20):
        phi = rng.normal(size=3)
        phi *= 1e-9 / np.linalg.norm(phi)
        K = so3.skew(phi)
        series = np.eye(3)
        term = np.eye(3)
        for k in range(1, 10):
            term = term @ K / k
            series = series + term
        assert np.max(np.abs(so3.exp(phi) - series)) < 1e-14


def test_exp_matches_matrix_exponential(rng):
    for _ in range(50):
        phi = rng.normal(size=3)
        assert np.allclose(so3.exp(phi), scipy.linalg.expm(so3.skew(phi)), atol=1e-13)


def test_log_identity_and_roundtrip():
    assert np.array_equal(so3.log(np.eye(3)), np.zeros(3))
    phi = np.array([0.1, -0.2, 0.3])
    assert np.allclose(so3.log(so3.exp(phi)), phi, atol=1e-12)


def test_log_matches_eigen_axis(rng):
    for _ in range(50):
        R = so3.rot_z(rng.uniform(-2, 2)) @ so3.rot_y(rng.uniform(-1, 1)) @ so3.rot_x(rng.uniform(-2, 2))
        angle = np.arccos(np.clip((np.trace(R) - 1) / 2, -1, 1))
        w, V = np.linalg.eig(R)
        axis = np.real(V[:, np.argmin(np.abs(w - 1))])
        # orient the axis consistently with the antisymmetric part
        if axis @ so3.vee(R - R.T) < 0:
            axis = -axis
        assert np.allclose(so3.log(R), angle * axis, atol=1e-9)


def test_log_near_pi_raises():
    with pytest.raises(AngleNearPi):
        so3.log(so3.exp([0, 0, np.pi - 1e-8]))


@settings(max_examples=200)
@given(vec3)
def test_log_exp_roundtrip_property(phi):
    n = np.linalg.norm(phi)
    if n > 3.0:
        phi = phi * 3.0 / n
    assert np.max(np.abs(so3.log(so3.exp(phi)) - phi)) < 1e-10


def test_exp_of_log_near_pi_branch():
    phi = np.array([0.0, 3.1, 0.05])
    assert np.allclose(so3.log(so3.exp(phi)), phi, atol=1e-10)


def test_right_and_left_jacobians_directional_derivative(rng):
    h = 1e-6
    for _ in range(100):
        phi = rng.normal(size=3)
        d = rng.normal(size=3)
        R = so3.exp(phi)
        fd = (so3.log(R.T @ so3.exp(phi + h * d)) - so3.log(R.T @ so3.exp(phi - h * d))) / (2 * h)
        an = so3.right_jacobian(phi) @ d
        assert np.linalg.norm(fd - an) <= 1e-6 * max(np.linalg.norm(an), 1.0)
        fd_l = (so3.log(so3.exp(phi + h * d) @ R.T) - so3.log(so3.exp(phi - h * d) @ R.T)) / (2 * h)
        an_l = so3.left_jacobian(phi) @ d
        assert np.linalg.norm(fd_l - an_l) <= 1e-6 * max(np.linalg.norm(an_l), 1.0)


@pytest.mark.parametrize("scale", [1e-8, 1e-3, 1.0, 2.5])
def test_right_jacobian_inverse(rng, scale):
    phi = rng.normal(size=3)
    phi *= scale / np.linalg.norm(phi)
    assert np.allclose(so3.right_jacobian(phi) @ so3.right_jacobian_inv(phi), np.eye(3), atol=1e-12)


def test_composition_associative(rng):
    for _ in range(50):
        A, B, C = (so3.exp(rng.normal(size=3)) for _ in range(3))
        assert np.max(np.abs((A @ B) @ C - A @ (B @ C))) < 1e-12


def test_long_composition_stays_orthonormal(rng):
    R = np.eye(3)
    for _ in range(1000):
        R = so3.compose(R, so3.exp(rng.normal(size=3)))
    assert np.max(np.abs(R @ R.T - np.eye(3))) < 1e-9
    assert abs(np.linalg.det(R) - 1.0) < 1e-9


def test_quaternion_boundary_roundtrip(rng):
    for _ in range(20):
        R = so3.exp(rng.normal(size=3))
        x, y, z, w = so3.to_quat_xyzw(R)
        assert w >= 0
        assert np.allclose(so3.from_quat_wxyz([w, x, y, z]), R, atol=1e-14)


def test_batched_exp_log(rng):
    phis = rng.uniform(-1.5, 1.5, size=(7, 3))
    Rs = so3.exp(phis)
    assert Rs.shape == (7, 3, 3)
    assert np.allclose(so3.log(Rs), phis, atol=1e-10)
