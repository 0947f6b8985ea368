"""Optimization state: keyframes, globals, multipliers, prior and FEJ cache."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .. import so3
from ..imu import GRAVITY_MAGNITUDE, GravityParams, ImuBias
from ..spline import SplineSegment
from ..types import PoseObservation

# Per-keyframe tangent layout (27 entries).
POS, ROT, BA, BG, LR, QP, QR, CP, CR = (3 * k for k in range(9))
KF_DIM = 27
COEFF_BLOCKS = (LR, QP, QR, CP, CR)
# Global block: log(scale), gravity roll, gravity pitch.
LOG_SCALE, ROLL, PITCH = 0, 1, 2
GLOBAL_DIM = 3

DEFAULT_WINDOW = 7

_kid_counter = itertools.count()


def _vec(x=None):
    return np.zeros(3) if x is None else np.array(x, dtype=float).reshape(3)


@dataclass
class KeyframeState:
    timestamp: float
    position: np.ndarray
    rotation: np.ndarray
    bias: ImuBias = field(default_factory=ImuBias)
    lin_r: np.ndarray = field(default_factory=_vec)
    quad_p: np.ndarray = field(default_factory=_vec)
    quad_r: np.ndarray = field(default_factory=_vec)
    cub_p: np.ndarray = field(default_factory=_vec)
    cub_r: np.ndarray = field(default_factory=_vec)
    observation: PoseObservation | None = None
    kid: int = field(default_factory=lambda: next(_kid_counter))

    def __post_init__(self):
        self.position = _vec(self.position)
        self.rotation = np.array(self.rotation, dtype=float)
        for name in ("lin_r", "quad_p", "quad_r", "cub_p", "cub_r"):
            setattr(self, name, _vec(getattr(self, name)))

    @property
    def rotation_phi(self):
        return so3.log(self.rotation)

    def coefficients(self):
        return {name: getattr(self, name) for name in ("lin_r", "quad_p", "quad_r", "cub_p", "cub_r")}

    def segment(self, t_prev: float) -> SplineSegment:
        return SplineSegment(self.timestamp, self.position, self.rotation, t_prev, **self.coefficients())

    def copy(self):
        return KeyframeState(self.timestamp, self.position.copy(), self.rotation.copy(), self.bias.copy(),
                             self.lin_r.copy(), self.quad_p.copy(), self.quad_r.copy(), self.cub_p.copy(),
                             self.cub_r.copy(), self.observation, self.kid)

    def retract(self, delta):
        """Copy with a 27-vector tangent increment applied (rotation on the right)."""
        out = self.copy()
        out.position = self.position + delta[POS:POS + 3]
        out.rotation = so3.normalize(self.rotation @ so3.exp(delta[ROT:ROT + 3]))
        out.bias = ImuBias(self.bias.accel_bias + delta[BA:BA + 3], self.bias.gyro_bias + delta[BG:BG + 3])
        for off, name in zip(COEFF_BLOCKS, ("lin_r", "quad_p", "quad_r", "cub_p", "cub_r")):
            setattr(out, name, getattr(self, name) + delta[off:off + 3])
        return out

    def local_difference(self, anchor: "KeyframeState"):
        """27-vector ``self (-) anchor`` matching :meth:`retract`."""
        d = np.empty(KF_DIM)
        d[POS:POS + 3] = self.position - anchor.position
        d[ROT:ROT + 3] = so3.log(anchor.rotation.T @ self.rotation)
        d[BA:BA + 3] = self.bias.accel_bias - anchor.bias.accel_bias
        d[BG:BG + 3] = self.bias.gyro_bias - anchor.bias.gyro_bias
        for off, name in zip(COEFF_BLOCKS, ("lin_r", "quad_p", "quad_r", "cub_p", "cub_r")):
            d[off:off + 3] = getattr(self, name) - getattr(anchor, name)
        return d


@dataclass
class ImuSegment:
    """IMU samples binned to the segment ending at one keyframe."""

    t_local: np.ndarray
    accel: np.ndarray
    gyro: np.ndarray
    t_prev: float

    def __len__(self):
        return len(self.t_local)


@dataclass
class SolverConfig:
    imu_weight: float = 6.0
    window_size: int = DEFAULT_WINDOW
    max_iterations: int = 12
    initial_damping: float = 1e-6
    min_damping: float = 1e-12
    damping_factor: float = 10.0
    max_damping_retries: int = 12
    energy_rtol: float = 1e-8
    step_tol: float = 1e-10
    constraint_tol: float = 1e-10
    estimate_roll_pitch: bool = True
    fej_enabled: bool = True
    gravity_magnitude: float = GRAVITY_MAGNITUDE
    bias_bound: float = 1.0

    def __post_init__(self):
        if not self.imu_weight >= 0.0:
            raise ValueError("imu_weight must be non-negative")
        if self.window_size < 2:
            raise ValueError("window_size must be at least 2")


@dataclass
class MarginalPrior:
    """Quadratic ``e0 + 2 g.d + d.H.d`` in tangent offsets ``d`` from an anchor.

    ``slots`` names each row as ``(kid, offset)``; ``kid == -1`` is the global block.
    """

    slots: list
    H: np.ndarray
    g: np.ndarray
    e0: float
    anchor_keyframes: dict
    anchor_globals: np.ndarray

    def kids(self):
        return {k for k, _ in self.slots if k >= 0}


@dataclass
class WindowState:
    scale: float
    gravity: GravityParams
    keyframes: list
    multipliers: dict = field(default_factory=dict)
    prior: MarginalPrior | None = None
    fej: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.scale > 0.0:
            raise ValueError("scale must be positive")

    def global_vector(self):
        return np.array([np.log(self.scale), self.gravity.roll, self.gravity.pitch])

    def copy(self):
        return WindowState(self.scale, self.gravity, [kf.copy() for kf in self.keyframes],
                           dict(self.multipliers), self.prior, self.fej)

    def index_of(self, kid):
        for i, kf in enumerate(self.keyframes):
            if kf.kid == kid:
                return i
        raise KeyError(kid)

    def segment(self, i) -> SplineSegment:
        """Spline segment anchored at keyframe ``i`` (needs a predecessor)."""
        kf = self.keyframes[i]
        return kf.segment(self.keyframes[i - 1].timestamp - kf.timestamp)
