"""Assembly of the linearized window problem (H, b, A, c) and energy evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyInterval
from ..imu import ImuCalibration
from . import factors
from .state import GLOBAL_DIM, KF_DIM, COEFF_BLOCKS, ImuSegment, SolverConfig, WindowState


class Layout:
    """Maps ``(kid, offset)`` to rows of the full and the active tangent vector."""

    def __init__(self, state: WindowState, segments: dict, cfg: SolverConfig):
        self.kids = [kf.kid for kf in state.keyframes]
        self.base = {kid: GLOBAL_DIM + KF_DIM * i for i, kid in enumerate(self.kids)}
        self.base[-1] = 0
        self.full_dim = GLOBAL_DIM + KF_DIM * len(self.kids)
        mask = np.zeros(self.full_dim, dtype=bool)
        mask[0] = True
        mask[1:3] = cfg.estimate_roll_pitch
        for i, kf in enumerate(state.keyframes):
            base = self.base[kf.kid]
            mask[base:base + COEFF_BLOCKS[0]] = True
            if i > 0 or kf.kid in segments:
                mask[base + COEFF_BLOCKS[0]:base + KF_DIM] = True
        self.mask = mask
        self.active = np.flatnonzero(mask)
        self.position = np.full(self.full_dim, -1)
        self.position[self.active] = np.arange(len(self.active))

    @property
    def dim(self):
        return len(self.active)

    def full_index(self, kid, offset):
        return self.base[kid] + offset

    def block(self, kid):
        return slice(self.base[kid], self.base[kid] + KF_DIM)

    def slot(self, full_index):
        """Inverse of :meth:`full_index`."""
        if full_index < GLOBAL_DIM:
            return (-1, int(full_index))
        i, off = divmod(int(full_index) - GLOBAL_DIM, KF_DIM)
        return (self.kids[i], off)


@dataclass
class WindowProblem:
    H: np.ndarray
    b: np.ndarray
    A: np.ndarray
    c: np.ndarray
    energy: float
    layout: Layout
    constraint_keys: list
    parts: dict = field(default_factory=dict)


def constraint_list(state: WindowState, involving=None):
    """``(key, indices)`` of active constraints; keys are ``('r'|'v', kid)``."""
    kfs = state.keyframes
    out = []
    for j in range(1, len(kfs)):
        ids = (kfs[j - 1].kid, kfs[j].kid)
        if involving is None or involving in ids:
            out.append((("r", kfs[j].kid), (j - 1, j)))
    for j in range(1, len(kfs) - 1):
        ids = (kfs[j - 1].kid, kfs[j].kid, kfs[j + 1].kid)
        if involving is None or involving in ids:
            out.append((("v", kfs[j].kid), (j - 1, j, j + 1)))
    return out


def check_segments(state: WindowState, segments: dict):
    for kf in state.keyframes[1:]:
        seg = segments.get(kf.kid)
        if seg is None or len(seg) == 0:
            raise EmptyInterval(f"no IMU samples in the interval ending at t={kf.timestamp:.6f}")


def _prior_delta(state: WindowState, prior):
    deltas = {-1: state.global_vector() - prior.anchor_globals}
    for kf in state.keyframes:
        if kf.kid in prior.anchor_keyframes:
            deltas[kf.kid] = kf.local_difference(prior.anchor_keyframes[kf.kid])
    return np.array([deltas[kid][off] for kid, off in prior.slots])


def _cached(state, key, fej, compute):
    if fej and key in state.fej:
        return state.fej[key]
    value = compute()
    if fej:
        state.fej[key] = value
    return value


def _imu_terms(state, segments, cfg, calib, kf_filter=None):
    lam = cfg.imu_weight
    wn = calib.noise_weights()
    for i, kf in enumerate(state.keyframes):
        seg = segments.get(kf.kid)
        if seg is None or len(seg) == 0 or (kf_filter is not None and kf.kid != kf_filter):
            continue
        yield i, kf, seg, lam * wn


def evaluate(state: WindowState, segments: dict, cfg: SolverConfig, calib: ImuCalibration):
    """Total energy, its parts and the stacked constraint residuals."""
    lam = cfg.imu_weight
    kfs = state.keyframes
    parts = {"pose": 0.0, "imu": 0.0, "bias": 0.0, "prior": 0.0}
    for kf in kfs:
        if kf.observation is not None:
            r = factors.pose_factor(kf, jacobian=False)
            parts["pose"] += float(r @ (factors.pose_weights(kf) * r))
    for _, kf, seg, w in _imu_terms(state, segments, cfg, calib):
        r = factors.imu_segment(kf, state.scale, state.gravity, seg, calib.R_ic, cfg.gravity_magnitude,
                                jacobian=False)
        parts["imu"] += float(np.sum(r * r * w))
    for a, b in zip(kfs[:-1], kfs[1:]):
        r = factors.bias_factor(a, b, jacobian=False)
        parts["bias"] += lam * float(r @ (calib.bias_weights(b.timestamp - a.timestamp) * r))
    if state.prior is not None:
        p = state.prior
        d = _prior_delta(state, p)
        parts["prior"] = float(p.e0 + 2.0 * p.g @ d + d @ p.H @ d)
    c = []
    for key, idx in constraint_list(state):
        if key[0] == "r":
            c.append(factors.rotation_constraint(kfs[idx[0]], kfs[idx[1]], jacobian=False))
        else:
            c.append(factors.velocity_constraint(*(kfs[i] for i in idx), jacobian=False))
    c = np.concatenate(c) if c else np.zeros(0)
    return sum(parts.values()), parts, c


def build_window_problem(state: WindowState, segments: dict, cfg: SolverConfig, calib: ImuCalibration,
                         involving=None) -> WindowProblem:
    """Gauss-Newton system over the active variables.

    With ``involving`` set to a keyframe id, only terms touching that keyframe
    (plus the whole prior) are assembled; this is the marginalization input.
    """
    check_segments(state, segments)
    layout = Layout(state, segments, cfg)
    kfs = state.keyframes
    fej = cfg.fej_enabled
    lam = cfg.imu_weight
    N = layout.full_dim
    H = np.zeros((N, N))
    b = np.zeros(N)
    parts = {"pose": 0.0, "imu": 0.0, "bias": 0.0, "prior": 0.0}

    def add(blocks, J, W, r):
        # blocks: list of (full slice), J columns concatenated in the same order
        idx = np.concatenate([np.arange(s.start, s.stop) for s in blocks])
        JW = J.T * W
        H[np.ix_(idx, idx)] += JW @ J
        b[idx] += JW @ r

    for kf in kfs:
        if kf.observation is None or (involving is not None and kf.kid != involving):
            continue
        r = factors.pose_factor(kf, jacobian=False)
        J = _cached(state, ("pose", kf.kid), fej, lambda: factors.pose_factor(kf)[1])
        W = factors.pose_weights(kf)
        add([layout.block(kf.kid)], J, W, r)
        parts["pose"] += float(r @ (W * r))

    for i, kf, seg, w in _imu_terms(state, segments, cfg, calib, involving):
        key = ("imu", kf.kid)
        if fej and key in state.fej:
            r = factors.imu_segment(kf, state.scale, state.gravity, seg, calib.R_ic, cfg.gravity_magnitude,
                                    jacobian=False)
            Jf, Hb = state.fej[key]
        else:
            r, J = factors.imu_segment(kf, state.scale, state.gravity, seg, calib.R_ic, cfg.gravity_magnitude)
            Jf = J.reshape(-1, J.shape[-1])
            Hb = (Jf.T * np.tile(w, len(seg))) @ Jf
            if fej:
                state.fej[key] = (Jf, Hb)
        rw = (r * w).reshape(-1)
        idx = np.concatenate([np.arange(GLOBAL_DIM), np.arange(layout.base[kf.kid], layout.base[kf.kid] + KF_DIM)])
        H[np.ix_(idx, idx)] += Hb
        b[idx] += Jf.T @ rw
        parts["imu"] += float(r.reshape(-1) @ rw)

    for a, kb in zip(kfs[:-1], kfs[1:]):
        if involving is not None and involving not in (a.kid, kb.kid):
            continue
        r = factors.bias_factor(a, kb, jacobian=False)
        Jp, Jc = _cached(state, ("bias", a.kid, kb.kid), fej, lambda: factors.bias_factor(a, kb)[1:])
        W = lam * calib.bias_weights(kb.timestamp - a.timestamp)
        add([layout.block(a.kid), layout.block(kb.kid)], np.hstack([Jp, Jc]), W, r)
        parts["bias"] += float(r @ (W * r))

    if state.prior is not None:
        p = state.prior
        d = _prior_delta(state, p)
        idx = np.array([layout.full_index(kid, off) for kid, off in p.slots], dtype=int)
        H[np.ix_(idx, idx)] += p.H
        b[idx] += p.g + p.H @ d
        parts["prior"] = float(p.e0 + 2.0 * p.g @ d + d @ p.H @ d)

    keys, A_rows, c_rows = [], [], []
    for key, ids in constraint_list(state, involving):
        kk = [kfs[i] for i in ids]
        A_row = np.zeros((3, N))
        if key[0] == "r":
            c = factors.rotation_constraint(*kk, jacobian=False)
            blocks = _cached(state, ("cr", kk[1].kid), fej, lambda: factors.rotation_constraint(*kk)[1:])
        else:
            c = factors.velocity_constraint(*kk, jacobian=False)
            blocks = _cached(state, ("cv", kk[1].kid), fej, lambda: factors.velocity_constraint(*kk)[1:])
        for kf, Jb in zip(kk, blocks):
            A_row[:, layout.block(kf.kid)] += Jb
        keys.append(key)
        A_rows.append(A_row)
        c_rows.append(c)
    A = np.vstack(A_rows) if A_rows else np.zeros((0, N))
    cvec = np.concatenate(c_rows) if c_rows else np.zeros(0)

    act = layout.active
    return WindowProblem(H[np.ix_(act, act)], b[act], A[:, act], cvec, sum(parts.values()), layout, keys, parts)
