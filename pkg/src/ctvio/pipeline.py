"""End-to-end runs: feed a sequence through the estimator and collect results."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .estimator import KeyframeState, SlidingWindowEstimator, SolverConfig
from .imu import GravityParams, ImuBias, ImuCalibration
from .sim import AnalyticTrajectory, SimConfig, simulation_trajectory, true_biases, truth_arrays
from .spline import SplinePath
from .types import PoseObservation, Trajectory


@dataclass
class RunResult:
    trajectory: Trajectory
    scale: float
    gravity: GravityParams
    reports: list
    wall_time: float
    windows: list = field(default_factory=list)
    solve_times: list = field(default_factory=list)

    @property
    def max_constraint(self):
        return max((r.constraint_max for r in self.reports), default=0.0)

    @property
    def iterations(self):
        return [r.iterations for r in self.reports]


def truth_guess(traj: AnalyticTrajectory, sim_cfg: SimConfig):
    """``(guess, globals)`` placing every keyframe at the simulated truth.

    Positions and position coefficients are expressed in the observation
    frame (multiplied by the observation scale); the metric scale is its
    inverse.
    """
    path = simulation_trajectory(traj, sim_cfg)
    k = sim_cfg.observation_scale

    def guess(t):
        ba, bg = true_biases(traj, sim_cfg, np.array([t]))
        P, R, _, _, _ = truth_arrays(path, np.array([t]))
        kf = KeyframeState(t, k * P[0], R[0], ImuBias(ba[0], bg[0]))
        if isinstance(path, SplinePath):
            j = int(np.argmin(np.abs(path.times - t)))
            if j > 0 and abs(path.times[j] - t) < 1e-9:
                seg = path.segments[j - 1]
                kf.lin_r, kf.quad_r, kf.cub_r = seg.lin_r.copy(), seg.quad_r.copy(), seg.cub_r.copy()
                kf.quad_p, kf.cub_p = k * seg.quad_p, k * seg.cub_p
        return kf

    return guess, (1.0 / k, GravityParams(sim_cfg.gravity_roll, sim_cfg.gravity_pitch))


def run_sequence(imu_t, imu_acc, imu_gyr, observations: list[PoseObservation], calib: ImuCalibration,
                 cfg: SolverConfig | None = None, guess=None, initial_globals=None,
                 keep_windows: bool = False) -> RunResult:
    """Run the sliding-window estimator over a whole sequence.

    IMU samples are fed up to each observation's timestamp before the
    observation itself, mimicking online arrival.
    """
    est = SlidingWindowEstimator(calib, cfg, guess=guess, initial_globals=initial_globals)
    imu_t = np.asarray(imu_t, dtype=float)
    imu_acc = np.asarray(imu_acc, dtype=float)
    imu_gyr = np.asarray(imu_gyr, dtype=float)
    windows = []
    solve_times = []
    start = time.perf_counter()
    k = 0
    for obs in observations:
        j = int(np.searchsorted(imu_t, obs.timestamp + 1e-9, side="right"))
        if j > k:
            est.add_imu(imu_t[k:j], imu_acc[k:j], imu_gyr[k:j])
            k = j
        n_reports = len(est.reports)
        tic = time.perf_counter()
        est.add_observation(obs)
        if len(est.reports) > n_reports:
            solve_times.append(time.perf_counter() - tic)
        if keep_windows and est.state is not None:
            windows.append(est.state)
    state = est.state
    scale = state.scale if state is not None else float("nan")
    gravity = state.gravity if state is not None else GravityParams()
    traj = est.finish()
    return RunResult(traj, scale, gravity, est.reports, time.perf_counter() - start, windows,
                     solve_times)
