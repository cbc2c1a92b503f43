import json

import numpy as np
import pytest
from hypothesis import given

from conftest import rot_vec, sim_run
from lidar_imu_init import __version__, cli, io
from lidar_imu_init.manifold import so3_exp
from lidar_imu_init.pipeline import PipelineConfig
from lidar_imu_init.preprocess import ImuData
from lidar_imu_init.simulator import SimulationConfig


@given(rot_vec())
def test_quaternion_roundtrip(r):
    R = so3_exp(r)
    q = io.matrix_to_quat(R)
    assert q[0, 0] >= 0.0 and np.isclose(np.linalg.norm(q), 1.0)
    assert np.allclose(io.quat_to_matrix(q)[0], R, atol=1e-12)


def test_quaternion_known_values():
    half = np.sqrt(0.5)
    Rz = io.quat_to_matrix([half, 0.0, 0.0, half])[0]
    assert np.allclose(Rz, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-12)
    with pytest.raises(ValueError):
        io.quat_to_matrix([1.0, 0.1, 0.0, 0.0])


def test_csv_roundtrip_is_lossless(tmp_path):
    imu, odom = sim_run(seed=0, noisy=True, duration=5.0)[2:]
    io.write_imu_csv(tmp_path / "imu.csv", imu)
    io.write_odom_csv(tmp_path / "odom.csv", odom)
    imu2, odom2 = io.read_imu_csv(tmp_path / "imu.csv"), io.read_odom_csv(tmp_path / "odom.csv")
    for a, b in ((imu.t, imu2.t), (imu.gyro, imu2.gyro), (imu.acc, imu2.acc), (odom.p, odom2.p),
                 (odom.v, odom2.v), (odom.w, odom2.w)):
        assert np.array_equal(a, b)
    assert np.allclose(odom.R, odom2.R, atol=1e-14)
    assert (tmp_path / "imu.csv").read_text().splitlines()[0] == "t,wx,wy,wz,ax,ay,az"


def test_csv_rejects_bad_input(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,0\n")
    with pytest.raises(ValueError, match="header"):
        io.read_imu_csv(bad)
    bad.write_text("t,wx,wy,wz,ax,ay,az\n")
    with pytest.raises(ValueError):
        io.read_imu_csv(bad)
    bad.write_text("t,wx,wy,wz,ax,ay,az\n0,0,0,nan,0,0,0\n")
    with pytest.raises(ValueError, match="non-finite"):
        io.read_imu_csv(bad)


def test_dumps_is_plain_sorted_json():
    text = io.dumps({"b": np.float64(1.5), "a": np.arange(3), "c": np.bool_(True), "d": float("nan")})
    assert text.endswith("\n")
    assert list(json.loads(text)) == ["a", "b", "c", "d"]
    assert json.loads(text) == {"a": [0, 1, 2], "b": 1.5, "c": True, "d": None}


def test_config_file_format(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nsub-frames = 5   ; inline\nrefine_dt = false\nfreq_low=0.1\n")
    assert io.read_config_file(path) == {"sub_frames": "5", "refine_dt": "false", "freq_low": "0.1"}
    path.write_text("[section]\nx = 1\n")
    with pytest.raises(ValueError):
        io.read_config_file(path)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert cli.main(["simulate", "--out-dir", str(out), "--seed", "3", "--t-offset", "0.1"]) == 0
    return out


def test_simulate_writes_inputs_and_truth(data_dir):
    truth = json.loads((data_dir / "truth.json").read_text())
    assert truth["simulation"]["seed"] == 3 and truth["simulation"]["t_offset"] == 0.1
    assert truth["version"] == __version__
    imu = io.read_imu_csv(data_dir / "imu.csv")
    assert len(imu) == pytest.approx(40 * 200, abs=2)


def calibrate(data_dir, out, *extra):
    return cli.main(["calibrate", "--imu", str(data_dir / "imu.csv"), "--odom", str(data_dir / "odom.csv"),
                     "--out", str(out), *extra])


def test_calibrate_recovers_truth_from_files(data_dir, tmp_path):
    assert calibrate(data_dir, tmp_path / "r.json") == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    truth = json.loads((data_dir / "truth.json").read_text())["truth"]
    assert rep["status"] == "ok" and rep["version"] == __version__
    assert abs(rep["t_offset"] - truth["t_offset"]) < 3e-3
    assert abs(rep["t_offset"] - (rep["d_star"] * rep["period"] + rep["dt"])) <= 1e-12
    assert np.linalg.norm(np.array(rep["p_LI"]) - truth["p_LI"]) < 0.01
    assert set(rep["units"]) >= {"t_offset", "R_IL", "p_LI", "b_w", "b_a", "gravity"}
    assert rep["config"] == json.loads(io.dumps(PipelineConfig().to_dict()))


def test_calibrate_reports_are_byte_identical(data_dir, tmp_path):
    calibrate(data_dir, tmp_path / "a.json")
    calibrate(data_dir, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_precedence_defaults_file_flags(data_dir, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("rot_max_iter = 7\nstep_tol = 1e-7\n")
    calibrate(data_dir, tmp_path / "f.json", "--config", str(cfg))
    calibrate(data_dir, tmp_path / "g.json", "--config", str(cfg), "--rot-max-iter", "9")
    f = json.loads((tmp_path / "f.json").read_text())["config"]
    g = json.loads((tmp_path / "g.json").read_text())["config"]
    assert f["rot_max_iter"] == 7 and f["step_tol"] == 1e-7
    assert g["rot_max_iter"] == 9 and g["step_tol"] == 1e-7
    assert f["trans_max_iter"] == PipelineConfig().trans_max_iter


def test_unknown_config_key_fails(data_dir, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("no_such_key = 1\n")
    assert calibrate(data_dir, tmp_path / "x.json", "--config", str(cfg)) == 1


def test_no_refine_flag_gives_integer_offset(data_dir, tmp_path):
    assert calibrate(data_dir, tmp_path / "n.json", "--no-refine-dt") == 0
    rep = json.loads((tmp_path / "n.json").read_text())
    assert rep["dt"] == 0.0 and rep["t_offset"] == rep["d_star"] * rep["period"]


@pytest.fixture(scope="module")
def single_axis_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("single")
    assert cli.main(["simulate", "--out-dir", str(out), "--single-axis", "0,0,1", "--seed", "1"]) == 0
    return out


def test_insufficient_excitation_exit_code(single_axis_dir, tmp_path):
    assert calibrate(single_axis_dir, tmp_path / "s.json") == 2
    rep = json.loads((tmp_path / "s.json").read_text())
    assert rep["status"] == "insufficient_excitation" and "R_IL" not in rep
    assert rep["excitation"]["verdict"] != "sufficient"
    args = ["assess", "--imu", str(single_axis_dir / "imu.csv"), "--odom", str(single_axis_dir / "odom.csv"),
            "--out", str(tmp_path / "a.json")]
    assert cli.main(args) == 2


def test_assess_sufficient(data_dir, tmp_path):
    args = ["assess", "--imu", str(data_dir / "imu.csv"), "--odom", str(data_dir / "odom.csv"),
            "--out", str(tmp_path / "a.json")]
    assert cli.main(args) == 0
    assert json.loads((tmp_path / "a.json").read_text())["excitation"]["verdict"] == "sufficient"


def test_failures_exit_one(data_dir, tmp_path):
    assert cli.main(["calibrate", "--imu", str(tmp_path / "missing.csv"), "--odom",
                     str(data_dir / "odom.csv")]) == 1
    # disjoint spans surface as a stage failure with a report naming the stage
    imu = io.read_imu_csv(data_dir / "imu.csv")
    io.write_imu_csv(tmp_path / "late.csv", ImuData(imu.t + 1000.0, imu.gyro, imu.acc))
    out = tmp_path / "fail.json"
    rc = cli.main(["calibrate", "--imu", str(tmp_path / "late.csv"), "--odom", str(data_dir / "odom.csv"),
                   "--out", str(out)])
    assert rc == 1
    rep = json.loads(out.read_text())
    assert rep["status"] == "failed" and rep["stage"] == "preprocess"


def test_bad_flag_value_exits_one(data_dir, tmp_path):
    assert calibrate(data_dir, tmp_path / "x.json", "--sub-frames", "0") == 1


def test_lo_sim_verb(tmp_path):
    out = tmp_path / "lo.json"
    assert cli.main(["lo-sim", "--lo-duration", "1.0", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())["lo_sim"]
    assert doc["sub_frames"] == 3 and doc["n_scans"] == 11
    assert doc["compensated"]["mean_point_to_plane_m"] < doc["uncompensated"]["mean_point_to_plane_m"]
    assert cli.main(["lo-sim", "--lo-duration", "1.0", "--lo-diverge-pos", "1e-9", "--out", str(out)]) == 1


def test_simulation_config_roundtrips_through_file(tmp_path):
    cfg = SimulationConfig(seed=5, single_axis=(1.0, 0.0, 0.0), noise=False)
    path = tmp_path / "s.cfg"
    path.write_text("".join(f"{k} = {','.join(map(str, v)) if isinstance(v, list) else v}\n"
                            for k, v in cfg.to_dict().items()))
    assert SimulationConfig.from_mapping(io.read_config_file(path)) == cfg
