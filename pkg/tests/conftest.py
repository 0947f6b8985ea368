from __future__ import annotations

import numpy as np
import pytest

from ctvio import so3, sim
from ctvio.estimator import KeyframeState, WindowState, make_segment
from ctvio.imu import ImuBias, ImuCalibration, stack_samples
from ctvio.pipeline import truth_guess


def random_keyframe(rng, t, observation=None):
    return KeyframeState(t, rng.normal(size=3), so3.exp(rng.normal(size=3)),
                         ImuBias(rng.normal(size=3) * 0.1, rng.normal(size=3) * 0.01),
                         rng.normal(size=3), rng.normal(size=3), rng.normal(size=3) * 0.5,
                         rng.normal(size=3), rng.normal(size=3) * 0.5, observation=observation)


class SimScene:
    """A short simulated sequence plus helpers to build windows at the truth."""

    def __init__(self, traj, cfg, calib=None):
        self.traj, self.cfg = traj, cfg
        self.path = sim.simulation_trajectory(traj, cfg)
        self.imu = sim.generate_imu(self.path, cfg)
        self.obs = sim.generate_observations(self.path, cfg)
        self.t, self.acc, self.gyr = stack_samples(self.imu)
        self.calib = calib or ImuCalibration()
        self.guess, self.globals = truth_guess(traj, cfg)

    def segment(self, k):
        t0, t1 = self.obs[k - 1].timestamp, self.obs[k].timestamp
        sel = (self.t > t0) & (self.t <= t1)
        return make_segment(self.t[sel], self.acc[sel], self.gyr[sel], t0, t1)

    def window(self, first, size, with_observations=True):
        kfs, segs = [], {}
        for k in range(first, first + size):
            kf = self.guess(self.obs[k].timestamp)
            kf.observation = self.obs[k] if with_observations else None
            kfs.append(kf)
            if k > first:
                segs[kf.kid] = self.segment(k)
        scale, gravity = self.globals
        return WindowState(scale, gravity, kfs), segs


@pytest.fixture(scope="session")
def circle_scene():
    traj = sim.AnalyticTrajectory(kind="circle", duration=8.0, z_amplitude=0.3, z_rate=1.3)
    return SimScene(traj, sim.SimConfig())


@pytest.fixture(scope="session")
def noisy_scene():
    traj = sim.AnalyticTrajectory(kind="circle", duration=8.0, z_amplitude=0.3, z_rate=1.3)
    cfg = sim.SimConfig(accel_noise=2e-3 / np.sqrt(200), gyro_noise=1.7e-4 / np.sqrt(200),
                        observation_position_noise=1e-3, observation_rotation_noise=1e-3, seed=3)
    return SimScene(traj, cfg, ImuCalibration(accel_noise=cfg.accel_noise, gyro_noise=cfg.gyro_noise))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one (criterion, status, detail) entry per acceptance criterion, printed at the end of the run
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
