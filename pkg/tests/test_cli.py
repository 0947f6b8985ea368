from __future__ import annotations

import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ctvio import cli, dataset, sim, so3
from ctvio.errors import InitFailure
from ctvio.imu import stack_samples

DATA = Path(__file__).parent / "data"
CIRCLE = "kind = circle\nduration = 8\nz_amplitude = 0.3\nz_rate = 1.3\nobservation_scale = 0.5\nseed = 1\n"


def eval_output(*args, **kw):
    buf = io.StringIO()
    rmse = cli.cmd_eval(*args, stream=buf, **kw)
    return rmse, buf.getvalue()


@pytest.fixture(scope="module")
def circle_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("circle")
    (root / "sim.cfg").write_text(CIRCLE)
    assert cli.main(["simulate", str(root / "sim.cfg"), str(root / "data")]) == 0
    assert cli.main(["run", str(root / "data"), str(root / "out")]) == 0
    return root


def test_simulate_is_deterministic(tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text(CIRCLE.replace("duration = 8", "duration = 3") + "accel_noise = 1e-3\n")
    cli.cmd_simulate(cfg, tmp_path / "a")
    cli.cmd_simulate(cfg, tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 5
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    cli.cmd_simulate(cfg, tmp_path / "c", seed=2)
    assert (tmp_path / "c" / dataset.IMU_PATH).read_bytes() != (tmp_path / "a" / dataset.IMU_PATH).read_bytes()


def test_simulated_files_reingest_losslessly(tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text("kind = sinusoid-3d\nduration = 3\naccel_noise = 1e-3\ngyro_noise = 1e-4\n"
                   "observation_position_noise = 0.01\nseed = 5\n")
    cli.cmd_simulate(cfg, tmp_path / "d")
    traj, scfg = sim.load_sim_config(cfg)
    path = sim.simulation_trajectory(traj, scfg)
    t, acc, gyr = stack_samples(sim.generate_imu(path, scfg))
    bundle = dataset.load_sequence(tmp_path / "d")
    t2, acc2, gyr2 = bundle.imu_arrays()
    assert np.max(np.abs(t2 - (t - t[0]))) < 1e-9
    assert np.array_equal(acc, acc2) and np.array_equal(gyr, gyr2)
    obs = sim.generate_observations(path, scfg)
    assert len(bundle.observations) == len(obs)
    for a, b in zip(obs, bundle.observations):
        assert abs(a.timestamp - t[0] - b.timestamp) < 1e-9
        assert np.array_equal(a.position, b.position) and np.allclose(a.rotation, b.rotation, atol=1e-15)
    gt = sim.ground_truth(path, scfg)
    assert np.array_equal(gt.positions, bundle.groundtruth.positions)
    assert np.allclose(gt.rotations, bundle.groundtruth.rotations, atol=1e-15)


def test_static_gyro_columns_are_noise(tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text("kind = static\nduration = 5\ngyro_noise = 1e-3\nseed = 2\n")
    cli.cmd_simulate(cfg, tmp_path / "s")
    _, gyro, _ = dataset.read_imu_table(tmp_path / "s" / dataset.IMU_PATH)
    assert abs(gyro.mean()) < 3 * 1e-3 * np.sqrt(200) / np.sqrt(gyro.size)
    assert abs(gyro.std() / (1e-3 * np.sqrt(200)) - 1) < 0.05


def test_run_recovers_scale(circle_run):
    report = json.loads((circle_run / "out" / "report.json").read_text())
    assert abs(report["scale"] - 2.0) < 1e-3
    assert report["ate_rmse"] < 1e-3
    assert report["constraint_max"] < 1e-8
    assert report["config"]["imu_weight"] == 6.0
    assert (circle_run / "out" / "trajectory.txt").exists()
    assert "solve_ms_median" in json.loads((circle_run / "out" / "timing.json").read_text())


def test_run_report_is_reproducible(circle_run):
    out2 = circle_run / "out2"
    assert cli.main(["run", str(circle_run / "data"), str(out2)]) == 0
    for name in ("report.json", "report.txt", "trajectory.txt"):
        assert (circle_run / "out" / name).read_bytes() == (out2 / name).read_bytes()


def test_static_dataset_fails_init(tmp_path, capsys):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text("kind = static\nduration = 5\n")
    cli.cmd_simulate(cfg, tmp_path / "s")
    with pytest.raises(InitFailure):
        cli.cmd_run(tmp_path / "s", None, tmp_path / "o1")
    assert cli.main(["run", str(tmp_path / "s"), str(tmp_path / "o2")]) == cli.EXIT_DATA
    assert "[init:" in capsys.readouterr().err
    assert not (tmp_path / "o1").exists() and not (tmp_path / "o2").exists()


def test_eval_against_itself(circle_run):
    traj = circle_run / "out" / "trajectory.txt"
    rmse, text = eval_output(traj, traj, "se3")
    assert rmse < 1e-12
    assert text.splitlines()[0] == "ATE RMSE: 0.000000 m"


def test_eval_sim3_on_scaled_copy(tmp_path, rng):
    gt = dataset.Trajectory(np.arange(30) * 0.1, rng.normal(size=(30, 3)), so3.exp(rng.normal(size=(30, 3))))
    est = dataset.Trajectory(gt.times, 0.5 * gt.positions, gt.rotations)
    dataset.save_trajectory(gt, tmp_path / "gt.txt")
    dataset.save_trajectory(est, tmp_path / "est.txt")
    _, text = eval_output(tmp_path / "est.txt", tmp_path / "gt.txt", "sim3")
    lines = text.splitlines()
    assert lines[0] == "ATE RMSE: 0.000000 m"
    assert "scale: 2.000000" in lines


def test_eval_fixture_oracle():
    # the optimal rigid alignment is the identity; every point is 0.125 m off
    rmse, text = eval_output(DATA / "eval_est.txt", DATA / "eval_gt.txt", "se3")
    assert abs(rmse - 0.125) < 1e-9
    assert text.splitlines()[0] == "ATE RMSE: 0.125000 m"


def test_eval_degenerate_exits_nonzero(tmp_path, capsys):
    p = tmp_path / "line.txt"
    p.write_text("".join(f"{k * 0.1:.9f} {k} 0 0 0 0 0 1\n" for k in range(5)))
    assert cli.main(["eval", str(p), str(p)]) == cli.EXIT_DATA
    assert "[data]" in capsys.readouterr().err


def test_config_errors_exit_2(circle_run, tmp_path):
    bad = tmp_path / "run.cfg"
    bad.write_text("no_such_key = 1\n")
    assert cli.main(["run", str(circle_run / "data"), str(tmp_path / "o"), "--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["run", str(circle_run / "data"), str(tmp_path / "o"), "--imu-weight", "-1"]) == cli.EXIT_CONFIG
    assert not (tmp_path / "o").exists()


def test_missing_dataset_exits_3(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope"), str(tmp_path / "o")]) == cli.EXIT_DATA


def test_data_root_env(circle_run, monkeypatch, tmp_path):
    monkeypatch.setenv(dataset.DATA_ROOT_ENV, str(circle_run))
    monkeypatch.chdir(tmp_path)
    assert dataset.resolve_dataset("data") == circle_run / "data"


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "ctvio.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("ctvio ")
