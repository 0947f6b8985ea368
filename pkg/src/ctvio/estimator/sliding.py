"""Streaming estimator: initialization, per-keyframe optimization and sliding."""
from __future__ import annotations

import logging
from dataclasses import replace
from typing import Callable

import numpy as np

from ..errors import CtvioError, InitFailure
from ..imu import ImuBias, ImuCalibration
from ..types import PoseObservation, Trajectory
from .init import initialize_bias_scale, initialize_gravity, initialize_spline, segment_from_fit
from .state import KeyframeState, SolverConfig, WindowState
from .window import add_keyframe, make_segment, marginalize_oldest, optimize_window

log = logging.getLogger(__name__)

INIT_KEYFRAMES = 4


class SlidingWindowEstimator:
    """Consumes IMU samples and keyframe pose observations in time order.

    ``guess``, when given, maps a keyframe timestamp to a :class:`KeyframeState`
    used instead of the observation-based initial value; ``initial_globals``
    then supplies ``(scale, GravityParams)`` and replaces the linear
    initialization.
    """

    def __init__(self, calib: ImuCalibration, cfg: SolverConfig | None = None,
                 guess: Callable[[float], KeyframeState] | None = None, initial_globals=None):
        self.calib = calib
        self.cfg = cfg or SolverConfig()
        self.guess = guess
        self.initial_globals = initial_globals
        self.state: WindowState | None = None
        self.segments: dict = {}
        self.reports = []
        self._imu_t = []
        self._imu_a = []
        self._imu_g = []
        self._pending: list[PoseObservation] = []
        self._last_time = -np.inf
        self._out_t, self._out_p, self._out_R = [], [], []

    # -- input -------------------------------------------------------------
    def add_imu(self, t, accel, gyro):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        self._imu_t.extend(t.tolist())
        self._imu_a.extend(np.asarray(accel, dtype=float).reshape(-1, 3))
        self._imu_g.extend(np.asarray(gyro, dtype=float).reshape(-1, 3))

    def _take_imu(self, t0, t1):
        t = np.asarray(self._imu_t)
        sel = (t > t0) & (t <= t1)
        return t[sel], np.asarray(self._imu_a)[sel], np.asarray(self._imu_g)[sel]

    def _drop_imu_before(self, t0):
        k = int(np.searchsorted(np.asarray(self._imu_t), t0, side="right"))
        del self._imu_t[:k], self._imu_a[:k], self._imu_g[:k]

    def add_observation(self, obs: PoseObservation):
        if obs.timestamp <= self._last_time:
            raise ValueError("observations must arrive in increasing time order")
        self._last_time = obs.timestamp
        if self.state is None:
            self._pending.append(obs)
            if len(self._pending) == INIT_KEYFRAMES:
                self._initialize()
            return
        prev = self.state.keyframes[-1].timestamp
        seg = make_segment(*self._take_imu(prev, obs.timestamp), prev, obs.timestamp)
        guess = self.guess(obs.timestamp) if self.guess else None
        if len(self.state.keyframes) >= self.cfg.window_size:
            self._record(self.state.keyframes[0])
            self.state, self.segments = marginalize_oldest(self.state, self.segments, self.cfg, self.calib)
            self._drop_imu_before(self.state.keyframes[0].timestamp)
        self.state, self.segments = add_keyframe(self.state, self.segments, obs, seg, guess)
        self._optimize()

    # -- internals ---------------------------------------------------------
    def _optimize(self, cfg: SolverConfig | None = None):
        self.state, report = optimize_window(self.state, self.segments, cfg or self.cfg, self.calib)
        self.reports.append(report)
        log.debug("window at t=%.3f: %d iterations, E=%.3e, |c|=%.1e", self.state.keyframes[-1].timestamp,
                  report.iterations, report.energy_final, report.constraint_max)

    def _initialize(self):
        obs = self._pending
        times = np.array([o.timestamp for o in obs])
        segments = {}
        if self.guess is not None:
            kfs = [self.guess(t) for t in times]
            for kf, o in zip(kfs, obs):
                kf.observation = o
            scale, gravity = self.initial_globals
        else:
            kfs, scale, gravity = self._linear_init(obs, times)
        for k in range(1, INIT_KEYFRAMES):
            segments[kfs[k].kid] = make_segment(*self._take_imu(times[k - 1], times[k]), times[k - 1], times[k])
        self.state = WindowState(scale, gravity, kfs)
        self.segments = segments
        self._pending = []
        self._drop_imu_before(times[0])
        # Jacobians are only frozen once initialization has converged: the
        # first estimates would otherwise be the rough linear solution.
        self._optimize(replace(self.cfg, fej_enabled=False))
        self.state.fej = {}

    def _linear_init(self, obs, times):
        t_all = np.asarray(self._imu_t)
        a_all = np.asarray(self._imu_a).reshape(-1, 3)
        try:
            gravity = initialize_gravity(a_all[t_all <= times[-1]], self.calib.R_ic, obs[0].rotation)
        except CtvioError as exc:
            raise InitFailure("gravity", exc) from exc
        try:
            fit = initialize_spline(times, [o.position for o in obs], [o.rotation for o in obs])
        except CtvioError as exc:
            raise InitFailure("spline", exc) from exc
        inputs = []
        for k in range(1, INIT_KEYFRAMES):
            t, a, g = self._take_imu(times[k - 1], times[k])
            inputs.append((segment_from_fit(fit, k, obs[k].position, obs[k].rotation), t - times[k], a, g))
        try:
            bs = initialize_bias_scale(inputs, gravity, self.calib.R_ic, self.cfg.gravity_magnitude)
        except CtvioError as exc:
            raise InitFailure("bias-scale", exc) from exc
        log.info("initialized scale=%.4f roll=%.4f pitch=%.4f", bs.scale, gravity.roll, gravity.pitch)
        kfs = []
        for k, o in enumerate(obs):
            coeffs = fit.local(k)
            coeffs.pop("lin_p")
            kfs.append(KeyframeState(o.timestamp, o.position, o.rotation, ImuBias(np.zeros(3), bs.gyro_bias),
                                     observation=o, **coeffs))
        return kfs, bs.scale, gravity

    def _record(self, kf: KeyframeState):
        self._out_t.append(kf.timestamp)
        self._out_p.append(self.state.scale * kf.position)
        self._out_R.append(kf.rotation.copy())

    # -- output ------------------------------------------------------------
    def finish(self) -> Trajectory:
        """Flush the window and return the metric keyframe trajectory."""
        if self.state is not None:
            for kf in self.state.keyframes:
                self._record(kf)
            self.state = None
        return self.trajectory()

    def trajectory(self) -> Trajectory:
        if not self._out_t:
            return Trajectory.empty()
        return Trajectory(self._out_t, self._out_p, self._out_R)
