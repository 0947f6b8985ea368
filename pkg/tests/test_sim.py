from __future__ import annotations

import numpy as np
import pytest

from ctvio import sim, so3
from ctvio.errors import ConfigError, OutOfRange
from ctvio.imu import GravityParams, ImuBias, ImuCalibration, stack_samples, synthesize_accel, synthesize_gyro
from ctvio.spline import SplinePath


@pytest.mark.parametrize("kind", sim.KINDS)
def test_velocity_and_acceleration_match_finite_differences(kind, rng):
    traj = sim.AnalyticTrajectory(kind=kind, duration=10.0, z_amplitude=0.2, z_rate=1.1, excitation=True)
    h = 1e-5
    for t in rng.uniform(0.1, 9.9, 30):
        p0, _, v, a, _ = sim.truth_arrays(traj, np.array([t - h, t, t + h]))
        assert np.max(np.abs((p0[2] - p0[0]) / (2 * h) - v[1])) < 1e-6
        assert np.max(np.abs((v[2] - v[0]) / (2 * h) - a[1])) < 1e-5


@pytest.mark.parametrize("kind", ["circle", "sinusoid-3d", "figure-eight"])
def test_body_rate_matches_rotation_derivative(kind, rng):
    traj = sim.AnalyticTrajectory(kind=kind, duration=10.0, excitation=True)
    h = 1e-5
    for t in rng.uniform(0.1, 9.9, 30):
        _, R, _, _, W = sim.truth_arrays(traj, np.array([t - h, t, t + h]))
        fd = so3.log(R[0].T @ R[2]) / (2 * h)
        assert np.max(np.abs(fd - W[1])) < 1e-6


def test_static_trajectory():
    traj = sim.AnalyticTrajectory(kind="static", duration=5.0, static_rotation=(0.1, 0.2, 0.3))
    s = sim.sample_truth(traj, 3.3)
    assert np.allclose(s.rotation, so3.exp([0.1, 0.2, 0.3]))
    for x in (s.velocity, s.acceleration, s.body_angular_velocity):
        assert np.array_equal(x, np.zeros(3))


@pytest.mark.parametrize("ramp", [0.0, 1.5])
def test_circle_centripetal_acceleration(ramp, rng):
    traj = sim.AnalyticTrajectory(kind="circle", radius=1.0, rate=1.0, ramp_duration=ramp, duration=20.0)
    for t in rng.uniform(ramp + 0.01, 20.0, 10):
        assert abs(np.linalg.norm(sim.sample_truth(traj, t).acceleration) - 1.0) < 1e-12


def test_ramp_starts_from_rest():
    traj = sim.AnalyticTrajectory(kind="circle", duration=5.0)
    s = sim.sample_truth(traj, 0.0)
    assert np.allclose(s.velocity, 0, atol=1e-15) and np.allclose(s.acceleration, 0, atol=1e-15)


def test_out_of_range():
    with pytest.raises(OutOfRange):
        sim.sample_truth(sim.AnalyticTrajectory(duration=2.0), 2.5)


def test_config_validation():
    with pytest.raises(ConfigError):
        sim.SimConfig(keyframe_rate=300.0)
    with pytest.raises(ConfigError):
        sim.SimConfig(imu_rate=0.0)
    with pytest.raises(ValueError):
        sim.AnalyticTrajectory(kind="spiral")


def test_static_imu_reads_gravity():
    traj = sim.AnalyticTrajectory(kind="static", duration=2.0)
    R_ic = so3.exp([0.1, -0.3, 0.2])
    cfg = sim.SimConfig(R_ic=R_ic)
    _, acc, gyr = stack_samples(sim.generate_imu(traj, cfg))
    assert np.allclose(acc, R_ic @ [0, 0, -9.8], atol=1e-14)
    assert np.array_equal(gyr, np.zeros_like(gyr))


def test_static_gyro_is_pure_noise():
    traj = sim.AnalyticTrajectory(kind="static", duration=20.0)
    cfg = sim.SimConfig(gyro_noise=1e-3)
    _, _, gyr = stack_samples(sim.generate_imu(traj, cfg))
    assert abs(gyr.mean()) < 5e-4
    assert abs(gyr.std() / (1e-3 * np.sqrt(200)) - 1) < 0.05


def test_imu_deterministic_per_seed():
    traj = sim.AnalyticTrajectory(duration=3.0)
    cfg = sim.SimConfig(accel_noise=1e-3, gyro_noise=1e-4, accel_walk=1e-3, gyro_walk=1e-5, seed=7)
    a = stack_samples(sim.generate_imu(traj, cfg))
    b = stack_samples(sim.generate_imu(traj, cfg))
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    cfg.seed = 8
    c = stack_samples(sim.generate_imu(traj, cfg))
    assert not np.array_equal(a[1], c[1])


def test_spline_wrapped_closure(circle_scene):
    """Feeding simulated samples back through the IMU model at the true state leaves < 1e-9 residuals."""
    path = circle_scene.path
    assert isinstance(path, SplinePath)
    calib = ImuCalibration()
    worst = 0.0
    for s in circle_scene.imu[1:]:
        k, tl = path.locate(s.timestamp)
        seg = path.segments[k]
        a = synthesize_accel(seg, tl, 1.0, GravityParams(), ImuBias(), calib)
        g = synthesize_gyro(seg, tl, ImuBias(), calib)
        worst = max(worst, np.max(np.abs(a - s.accel)), np.max(np.abs(g - s.gyro)))
    assert worst < 1e-9


def test_frame_consistency_recovers_world_acceleration():
    traj = sim.AnalyticTrajectory(kind="sinusoid-3d", duration=4.0)
    R_ic = so3.exp([0.02, 0.3, -0.1])
    cfg = sim.SimConfig(R_ic=R_ic, accel_bias=(0.05, -0.02, 0.01), gravity_roll=0.1, gravity_pitch=-0.05)
    t, acc, _ = stack_samples(sim.generate_imu(traj, cfg))
    _, R, _, A, _ = sim.truth_arrays(traj, t)
    body = (acc - np.array(cfg.accel_bias)) @ R_ic
    world = np.einsum("nij,nj->ni", R, body) - cfg.gravity
    assert np.max(np.abs(world - A)) < 1e-12


def test_fit_keyframe_spline_interpolates():
    traj = sim.AnalyticTrajectory(duration=4.0, excitation=True)
    knots = sim.keyframe_times(4.0, 5.0)
    path = sim.fit_keyframe_spline(traj, knots)
    P, R, V, _, _ = sim.truth_arrays(traj, knots)
    Ps, Rs, Vs = path.sample_many(knots)[:3]
    assert np.max(np.abs(P - Ps)) < 1e-12
    assert np.max(np.abs(R - Rs)) < 1e-12
    assert np.max(np.abs(V - Vs)) < 1e-10


def test_observations_scale_and_timing():
    traj = sim.AnalyticTrajectory(duration=3.0)
    obs1 = sim.generate_observations(traj, sim.SimConfig())
    obs_half = sim.generate_observations(traj, sim.SimConfig(observation_scale=0.5))
    assert [o.timestamp for o in obs1] == list(np.arange(16) / 5.0)
    P, R, _, _, _ = sim.truth_arrays(traj, [o.timestamp for o in obs1])
    assert np.array_equal(np.array([o.position for o in obs1]), P)
    assert np.array_equal(np.array([o.rotation for o in obs1]), R)
    assert np.array_equal(np.array([o.position for o in obs_half]), 0.5 * P)


def test_observation_noise_statistics():
    traj = sim.AnalyticTrajectory(duration=2000.0, ramp_duration=0.0)
    cfg = sim.SimConfig(observation_position_noise=0.01, observation_rotation_noise=0.002, seed=4)
    obs = sim.generate_observations(traj, cfg)
    times = [o.timestamp for o in obs]
    P, R, _, _, _ = sim.truth_arrays(traj, times)
    dp = np.array([o.position for o in obs]) - P
    dr = so3.log(np.einsum("nji,njk->nik", R, np.array([o.rotation for o in obs])))
    assert len(obs) >= 10_000
    assert abs(dp.std() / 0.01 - 1) < 0.05
    assert abs(dr.std() / 0.002 - 1) < 0.05
    assert obs[0].position_sigma == 0.01


def test_config_file_roundtrip(tmp_path):
    p = tmp_path / "sim.cfg"
    p.write_text("kind = figure-eight\nduration = 12\nexcitation = yes\naccel_bias = 0.1, 0, 0\n"
                 "observation_scale = 0.5\nseed = 9\n")
    traj, cfg = sim.load_sim_config(p)
    assert traj.kind == "figure-eight" and traj.duration == 12.0 and traj.excitation
    assert cfg.accel_bias == (0.1, 0.0, 0.0) and cfg.observation_scale == 0.5 and cfg.seed == 9
    t2, c2 = sim.sim_config_from_values({k: str(v) if not isinstance(v, list) else " ".join(map(str, v))
                                         for k, v in sim.config_values(traj, cfg).items() if k != "R_ic"})
    assert t2 == traj and c2.seed == cfg.seed and c2.accel_bias == cfg.accel_bias
    p.write_text("bogus = 1\n")
    with pytest.raises(ConfigError):
        sim.load_sim_config(p)
