"""Rotation group helpers.

Rotations are plain ``(3, 3)`` float arrays everywhere in the package;
quaternions only appear at file boundaries (:func:`from_quat_wxyz`,
:func:`to_quat_xyzw`). Every function broadcasts over leading axes, so a
stack of ``n`` tangent vectors ``(n, 3)`` maps to ``(n, 3, 3)`` matrices.

Tangent perturbations are applied on the right: ``R <- R @ exp(delta)``.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

from .errors import AngleNearPi

SMALL_ANGLE = 1e-5
NEAR_PI_MARGIN = 1e-6

_EYE = np.eye(3)


def skew(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def vee(m):
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def _angle(phi):
    theta2 = np.einsum("...i,...i->...", phi, phi)
    return theta2, np.sqrt(theta2)


def _safe(theta, small):
    # Avoids 0/0 in the large-angle branch; those lanes are overwritten.
    return np.where(small, 1.0, theta)


def exp(phi):
    """Rodrigues' formula, with a second-order series for tiny angles."""
    phi = np.asarray(phi, dtype=float)
    theta2, theta = _angle(phi)
    small = theta < SMALL_ANGLE
    t = _safe(theta, small)
    a = np.where(small, 1.0 - theta2 / 6.0, np.sin(t) / t)
    b = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(t)) / (t * t))
    K = skew(phi)
    return _EYE + a[..., None, None] * K + b[..., None, None] * (K @ K)


def log(R):
    """Inverse of :func:`exp` for angles below ``pi - 1e-6``.

    Raises :class:`AngleNearPi` when any input is within the margin of a
    half turn, where the axis sign is ambiguous.
    """
    R = np.asarray(R, dtype=float)
    lead = R.shape[:-2]
    R = R.reshape(-1, 3, 3)
    w = vee(R - np.swapaxes(R, -1, -2))
    cos_t = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    sin_t = 0.5 * np.linalg.norm(w, axis=-1)
    theta = np.arctan2(sin_t, cos_t)
    if np.any(theta > np.pi - NEAR_PI_MARGIN):
        raise AngleNearPi(f"rotation angle {np.max(theta):.9f} is within {NEAR_PI_MARGIN} of pi")
    small = theta < SMALL_ANGLE
    t = _safe(theta, small)
    scale = np.where(small, 0.5 + theta * theta / 12.0, t / (2.0 * np.where(small, 1.0, np.sin(t))))
    phi = scale[:, None] * w

    near = theta > 3.0
    if np.any(near):
        # sin(theta) is tiny here; recover the axis from the symmetric part.
        Rn, th, wn = R[near], theta[near], w[near]
        ct = np.cos(th)
        B = 0.5 * (Rn + np.swapaxes(Rn, -1, -2)) - ct[:, None, None] * _EYE
        B /= (1.0 - ct)[:, None, None]
        k = np.argmax(np.einsum("nii->ni", B), axis=1)
        col = B[np.arange(len(k)), :, k]
        axis = col / np.linalg.norm(col, axis=1, keepdims=True)
        sign = np.where(np.einsum("ni,ni->n", axis, wn) < 0.0, -1.0, 1.0)
        phi[near] = (sign * th)[:, None] * axis
    return phi.reshape(lead + (3,))


def right_jacobian(phi):
    """``exp(phi + d) ~= exp(phi) @ exp(right_jacobian(phi) @ d)``."""
    phi = np.asarray(phi, dtype=float)
    theta2, theta = _angle(phi)
    small = theta < SMALL_ANGLE
    t = _safe(theta, small)
    a = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(t)) / (t * t))
    b = np.where(small, 1.0 / 6.0 - theta2 / 120.0, (t - np.sin(t)) / (t * t * t))
    K = skew(phi)
    return _EYE - a[..., None, None] * K + b[..., None, None] * (K @ K)


def right_jacobian_inv(phi):
    phi = np.asarray(phi, dtype=float)
    theta2, theta = _angle(phi)
    small = theta < SMALL_ANGLE
    t = _safe(theta, small)
    st = np.where(small, 1.0, np.sin(t))
    c = np.where(small, 1.0 / 12.0 + theta2 / 720.0, 1.0 / (t * t) - (1.0 + np.cos(t)) / (2.0 * t * st))
    K = skew(phi)
    return _EYE + 0.5 * K + c[..., None, None] * (K @ K)


def left_jacobian(phi):
    """``exp(phi + d) ~= exp(left_jacobian(phi) @ d) @ exp(phi)``."""
    return right_jacobian(-np.asarray(phi, dtype=float))


def normalize(R):
    """Project onto SO(3) (closest rotation in Frobenius norm)."""
    U, _, Vt = np.linalg.svd(R)
    d = np.sign(np.linalg.det(U @ Vt))
    U = U.copy()
    U[..., :, 2] *= d[..., None] if np.ndim(d) else d
    return U @ Vt


def compose(*rotations):
    out = _EYE
    for R in rotations:
        out = out @ R
    return normalize(out)


def angle(R):
    """Rotation angle in radians, robust near zero."""
    return np.linalg.norm(log(R), axis=-1)


def from_quat_wxyz(q):
    q = np.asarray(q, dtype=float)
    return _ScipyRotation.from_quat(np.concatenate([q[..., 1:], q[..., :1]], axis=-1)).as_matrix()


def to_quat_xyzw(R):
    """Unit quaternion with a non-negative scalar part."""
    q = _ScipyRotation.from_matrix(R).as_quat()
    flip = q[..., 3:4] < 0.0
    return np.where(flip, -q, q)


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
