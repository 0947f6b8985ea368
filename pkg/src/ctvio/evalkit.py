"""Trajectory association, rigid/similarity alignment and ATE RMSE."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, NoMatches
from .types import Trajectory

DEFAULT_MAX_DT = 0.01
_COLLINEAR_RTOL = 1e-10


@dataclass
class Pairs:
    """Matched positions: ``est[k]`` was recorded at ``times[k]``, ``gt[k]`` is its partner."""

    est: np.ndarray
    gt: np.ndarray
    times: np.ndarray = field(default=None)

    def __post_init__(self):
        self.est = np.asarray(self.est, dtype=float).reshape(-1, 3)
        self.gt = np.asarray(self.gt, dtype=float).reshape(-1, 3)
        if self.times is None:
            self.times = np.arange(len(self.est), dtype=float)
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        if not (len(self.est) == len(self.gt) == len(self.times)):
            raise ValueError("pair arrays differ in length")

    def __len__(self):
        return len(self.est)


@dataclass(frozen=True)
class Alignment:
    """``p_gt ~ scale * rotation @ p_est + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("alignment scale must be positive")

    def apply(self, points):
        return self.scale * np.asarray(points) @ self.rotation.T + self.translation

    @classmethod
    def identity(cls):
        return cls()


def associate(est: Trajectory, gt: Trajectory, max_dt: float = DEFAULT_MAX_DT) -> Pairs:
    """Pair each estimate with its nearest ground-truth timestamp within ``max_dt``.

    Ties go to the earlier ground-truth sample.
    """
    if len(est) == 0 or len(gt) == 0:
        raise NoMatches("cannot associate an empty trajectory")
    hi = np.clip(np.searchsorted(gt.times, est.times), 0, len(gt) - 1)
    lo = np.clip(hi - 1, 0, len(gt) - 1)
    use_lo = np.abs(gt.times[lo] - est.times) <= np.abs(gt.times[hi] - est.times)
    j = np.where(use_lo, lo, hi)
    ok = np.abs(gt.times[j] - est.times) <= max_dt
    if not np.any(ok):
        raise NoMatches(f"no timestamps within {max_dt} s")
    return Pairs(est.positions[ok], gt.positions[j[ok]], est.times[ok])


def align(pairs: Pairs, mode: str = "se3") -> Alignment:
    """Closed-form least-squares alignment of estimates onto ground truth (Umeyama)."""
    if mode not in ("se3", "sim3"):
        raise ValueError(f"unknown alignment mode {mode!r}")
    if len(pairs) < 3:
        raise DegenerateGeometry(f"need at least 3 pairs, got {len(pairs)}")
    mu_e = pairs.est.mean(axis=0)
    mu_g = pairs.gt.mean(axis=0)
    de = pairs.est - mu_e
    dg = pairs.gt - mu_g
    for pts in (de, dg):
        sv = np.linalg.svd(pts, compute_uv=False)
        if sv[1] <= _COLLINEAR_RTOL * max(sv[0], 1e-300):
            raise DegenerateGeometry("points are collinear")
    cov = dg.T @ de / len(pairs)
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    if mode == "sim3":
        var_e = np.mean(np.sum(de ** 2, axis=1))
        s = float(np.sum(D * np.diag(S)) / var_e)
    else:
        s = 1.0
    t = mu_g - s * R @ mu_e
    return Alignment(R, t, s)


def ate_rmse(pairs: Pairs, alignment: Alignment | None = None) -> float:
    """Root mean square position error after applying ``alignment`` (identity if None)."""
    if len(pairs) == 0:
        raise ValueError("no pairs")
    est = pairs.est if alignment is None else alignment.apply(pairs.est)
    return float(np.sqrt(np.mean(np.sum((est - pairs.gt) ** 2, axis=1))))


def evaluate(est: Trajectory, gt: Trajectory, mode: str = "se3", max_dt: float = DEFAULT_MAX_DT):
    """``(rmse, alignment, pairs)`` for one estimate against ground truth."""
    pairs = associate(est, gt, max_dt)
    alignment = align(pairs, mode)
    return ate_rmse(pairs, alignment), alignment, pairs
