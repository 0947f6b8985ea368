"""Per-keyframe cubic pose splines.

Segment ``j`` covers the interval ``(t_{j-1}, t_j]`` and runs on a local clock
that is zero at keyframe ``j`` and negative toward keyframe ``j-1``::

    p(t) = p_j + t*lin_p + t^2*quad_p + t^3*cub_p
    R(t) = R_j @ exp(t*lin_r + t^2*quad_r + t^3*cub_r)

The linear position coefficient is never stored; :func:`derive_lin_p` recovers
it from the previous keyframe position so that ``p(t_prev) = p_{j-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import so3
from .errors import DegenerateInterval

MIN_INTERVAL = 1e-6


def _vec(x=None):
    return np.zeros(3) if x is None else np.asarray(x, dtype=float).reshape(3)


@dataclass
class SplineSegment:
    anchor_time: float
    anchor_position: np.ndarray
    anchor_rotation: np.ndarray
    t_prev: float
    lin_r: np.ndarray = field(default_factory=_vec)
    quad_p: np.ndarray = field(default_factory=_vec)
    quad_r: np.ndarray = field(default_factory=_vec)
    cub_p: np.ndarray = field(default_factory=_vec)
    cub_r: np.ndarray = field(default_factory=_vec)

    def __post_init__(self):
        self.anchor_position = _vec(self.anchor_position)
        self.anchor_rotation = np.asarray(self.anchor_rotation, dtype=float)
        for name in ("lin_r", "quad_p", "quad_r", "cub_p", "cub_r"):
            setattr(self, name, _vec(getattr(self, name)))
        if not self.t_prev < 0.0:
            raise DegenerateInterval(f"t_prev must be negative, got {self.t_prev}")

    def copy(self, **changes):
        return replace(self, **changes)


def _check_interval(t_prev):
    if abs(t_prev) < MIN_INTERVAL:
        raise DegenerateInterval(f"keyframe interval {t_prev!r} s is below {MIN_INTERVAL} s")


def _powers(t):
    t = np.asarray(t, dtype=float)
    return t[..., None], (t * t)[..., None], (t * t * t)[..., None]


def derive_lin_p(seg: SplineSegment, prev_position) -> np.ndarray:
    """Linear position coefficient that closes the segment on ``prev_position``."""
    tp = seg.t_prev
    _check_interval(tp)
    prev_position = _vec(prev_position)
    return (prev_position - seg.anchor_position) / tp - tp * seg.quad_p - tp * tp * seg.cub_p


def eval_position(seg: SplineSegment, lin_p, t) -> np.ndarray:
    t1, t2, t3 = _powers(t)
    return seg.anchor_position + t1 * _vec(lin_p) + t2 * seg.quad_p + t3 * seg.cub_p


def eval_velocity(seg: SplineSegment, lin_p, t) -> np.ndarray:
    t1, t2, _ = _powers(t)
    return _vec(lin_p) + 2.0 * t1 * seg.quad_p + 3.0 * t2 * seg.cub_p


def rotation_coordinate(seg: SplineSegment, t) -> np.ndarray:
    """Tangent-space polynomial ``t*lin_r + t^2*quad_r + t^3*cub_r``."""
    t1, t2, t3 = _powers(t)
    return t1 * seg.lin_r + t2 * seg.quad_r + t3 * seg.cub_r


def eval_rotation(seg: SplineSegment, t) -> np.ndarray:
    return seg.anchor_rotation @ so3.exp(rotation_coordinate(seg, t))


def world_acceleration(seg: SplineSegment, t) -> np.ndarray:
    """Second time derivative of the position polynomial (unscaled, gravity free)."""
    t1, _, _ = _powers(t)
    return 2.0 * seg.quad_p + 6.0 * t1 * seg.cub_p


def body_angular_velocity(seg: SplineSegment, t) -> np.ndarray:
    # Derivative of the tangent coordinate, without the right-Jacobian factor.
    t1, t2, _ = _powers(t)
    return seg.lin_r + 2.0 * t1 * seg.quad_r + 3.0 * t2 * seg.cub_r


def rotation_constraint(seg_j: SplineSegment, prev_rotation) -> np.ndarray:
    """``log(R_{j-1}^T R_j exp(phi(t_prev)))``; zero iff the rotation closes."""
    M = np.asarray(prev_rotation).T @ eval_rotation(seg_j, seg_j.t_prev)
    return so3.log(M)


def velocity_constraint(seg_j: SplineSegment, seg_j1: SplineSegment, prev_position, next_position,
                        t_j=None) -> np.ndarray:
    """Mismatch between the keyframe-``j`` velocity implied by both adjacent segments.

    ``seg_j1`` is the segment anchored at keyframe ``j+1``; ``t_j`` defaults to
    its ``t_prev`` (time of keyframe ``j`` on that segment's clock).
    """
    t1 = seg_j.t_prev
    t2 = seg_j1.t_prev if t_j is None else float(t_j)
    _check_interval(t1)
    _check_interval(t2)
    p_prev, p_j, p_next = _vec(prev_position), seg_j.anchor_position, _vec(next_position)
    return ((p_prev - p_j) / t1 - t1 * seg_j.quad_p - t1 * t1 * seg_j.cub_p
            - (p_j - p_next) / t2 - t2 * seg_j1.quad_p - 2.0 * t2 * t2 * seg_j1.cub_p)


@dataclass(frozen=True)
class SplineSample:
    position: np.ndarray
    rotation: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    body_angular_velocity: np.ndarray
    extrapolated: bool


class SplinePath:
    """A chain of keyframe segments evaluated on absolute timestamps.

    ``segments[k]`` ends at ``times[k + 1]``; keyframe 0 (at ``first_position``)
    has no segment of its own. Evaluation outside ``[times[0], times[-1]]``
    extrapolates the nearest segment and sets ``extrapolated`` on the sample.
    """

    def __init__(self, first_position, segments):
        self.segments = list(segments)
        if not self.segments:
            raise ValueError("a spline path needs at least one segment")
        first = self.segments[0]
        self.times = np.array([first.anchor_time + first.t_prev] + [s.anchor_time for s in self.segments])
        if np.any(np.diff(self.times) < MIN_INTERVAL):
            raise DegenerateInterval("keyframe times must be strictly increasing")
        self._lin_p = []
        prev = _vec(first_position)
        for seg in self.segments:
            self._lin_p.append(derive_lin_p(seg, prev))
            prev = seg.anchor_position

    @property
    def duration(self):
        return self.times[-1] - self.times[0]

    def locate(self, t):
        """Segment index and local time for absolute time ``t``."""
        k = int(np.searchsorted(self.times, t, side="left")) - 1
        k = min(max(k, 0), len(self.segments) - 1)
        return k, t - self.segments[k].anchor_time

    def lin_p(self, k):
        return self._lin_p[k]

    def sample(self, t) -> SplineSample:
        out = self.sample_many(np.array([t], dtype=float))
        return SplineSample(*(x[0] for x in out[:5]), extrapolated=bool(out[5][0]))

    def sample_many(self, t):
        """Vectorized :meth:`sample`: tuple of stacked arrays in field order."""
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self.times, t, side="left") - 1, 0, len(self.segments) - 1)
        segs = self.segments
        anchor_t = np.array([s.anchor_time for s in segs])[k]
        tl = (t - anchor_t)[:, None]
        P = np.array([s.anchor_position for s in segs])[k]
        R = np.array([s.anchor_rotation for s in segs])[k]
        lp = np.array(self._lin_p)[k]
        qp = np.array([s.quad_p for s in segs])[k]
        cp = np.array([s.cub_p for s in segs])[k]
        lr = np.array([s.lin_r for s in segs])[k]
        qr = np.array([s.quad_r for s in segs])[k]
        cr = np.array([s.cub_r for s in segs])[k]
        position = P + tl * lp + tl ** 2 * qp + tl ** 3 * cp
        velocity = lp + 2.0 * tl * qp + 3.0 * tl ** 2 * cp
        acceleration = 2.0 * qp + 6.0 * tl * cp
        rotation = R @ so3.exp(tl * lr + tl ** 2 * qr + tl ** 3 * cr)
        omega = lr + 2.0 * tl * qr + 3.0 * tl ** 2 * cr
        extrapolated = (t < self.times[0]) | (t > self.times[-1])
        return position, rotation, velocity, acceleration, omega, extrapolated
