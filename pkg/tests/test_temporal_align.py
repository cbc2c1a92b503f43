import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import finite_vec, make_rig, rot_vec, sim_run
from lidar_imu_init import simulator as sim
from lidar_imu_init.manifold import so3_exp
from lidar_imu_init.pipeline import PipelineConfig, prepare
from lidar_imu_init.temporal_align import cross_correlate, default_d_range, magnitude_series


# brisk handheld waving; the slow default band flattens the correlation peak
WAVING = (0.2, 1.0)


def waving_run(seed, t_offset, noisy, duration=40.0):
    spec = sim.random_trajectory(duration, seed=seed, freq_band=WAVING)
    rig = make_rig(t_offset, noisy)
    return sim.synth_imu(spec, rig, seed), sim.synth_odometry(spec, rig, seed)


def coarse(imu, odom, bias=None):
    lidar, imu_k, _, period = prepare(imu, odom, PipelineConfig())
    w_I = imu_k.w if bias is None else imu_k.w + bias
    return cross_correlate(magnitude_series(w_I), magnitude_series(lidar.w), default_d_range(period), period)


def test_magnitude_examples():
    assert np.allclose(magnitude_series([[3.0, 4.0, 0.0]]), [5.0])
    assert np.array_equal(magnitude_series(np.zeros((4, 3))), np.zeros(4))
    with pytest.raises(ValueError):
        magnitude_series(np.zeros((0, 3)))


@given(rot_vec(), st.integers(0, 2**31))
def test_magnitude_rotation_invariant(r, seed):
    x = np.random.default_rng(seed).normal(size=(30, 3))
    assert np.allclose(magnitude_series(x @ so3_exp(r).T), magnitude_series(x), atol=1e-12)


def test_identical_sequences(rng):
    m = np.abs(rng.normal(size=200))
    out = cross_correlate(m, m, (-20, 20), 0.1)
    assert out.d_star == 0
    assert out.offset_seconds == 0.0


def test_constructed_shift(rng):
    lidar = 1.0 + np.abs(np.sin(np.arange(200) / 7.0)) + 0.3 * rng.random(200)
    imu = np.concatenate([rng.random(3), lidar])[:200]  # imu[k + 3] = lidar[k]
    out = cross_correlate(imu, lidar, (-20, 20), 0.1)
    assert out.d_star == 3
    assert abs(out.offset_seconds - 0.3) < 1e-12
    assert out.correlation_profile[out.shifts == 3][0] == out.correlation_peak
    assert out.correlation_peak == np.max(out.correlation_profile)


def test_ties_go_to_smallest_shift():
    out = cross_correlate(np.ones(50), np.ones(50), (-5, 5))
    assert out.d_star == 0
    out = cross_correlate(np.ones(50), np.ones(50), (2, 5))
    assert out.d_star == 2


def test_errors():
    with pytest.raises(ValueError):
        cross_correlate(np.zeros(10), np.ones(10), (-2, 2))
    with pytest.raises(ValueError):
        cross_correlate(np.ones(10), np.ones(10), (20, 30))
    with pytest.raises(ValueError):
        cross_correlate(np.ones(10), np.ones(10), (3, 1))


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.integers(0, 2**31))
def test_scaling_leaves_argmax(a, b, seed):
    rng = np.random.default_rng(seed)
    lidar = np.abs(rng.normal(size=100))
    imu = np.roll(lidar, 4) + 0.1 * np.abs(rng.normal(size=100))
    base = cross_correlate(imu, lidar, (-10, 10)).d_star
    assert cross_correlate(a * imu, b * lidar, (-10, 10)).d_star == base


def test_offset_seconds_consistent():
    _, _, imu, odom = sim_run(seed=1, t_offset=0.3, noisy=True)
    out = coarse(imu, odom)
    assert abs(out.offset_seconds - out.d_star * 0.1) < 1e-12


def test_half_second_offset_across_seeds():
    hits = sum(coarse(*waving_run(s, 0.5, True)).d_star == 5 for s in range(20))
    assert hits >= 19


_BIAS_RUN = waving_run(3, 0.5, True)


@given(finite_vec(3, -1.0, 1.0).filter(lambda v: np.linalg.norm(v) > 1e-9), st.floats(0.0, 0.05))
def test_small_gyro_bias_moves_shift_by_at_most_one(direction, norm):
    imu, odom = _BIAS_RUN
    base = coarse(imu, odom).d_star
    bias = norm * direction / np.linalg.norm(direction)
    assert abs(coarse(imu, odom, bias).d_star - base) <= 1


@settings(max_examples=200)
@given(st.floats(-1.0, 1.0), st.integers(0, 50))
def test_residual_offset_within_one_and_a_half_periods(t_offset, seed):
    out = coarse(*waving_run(seed, t_offset, False))
    assert abs(t_offset - out.d_star * 0.1) <= 0.05 + 0.1


@pytest.mark.xfail(strict=True, reason="on 20 s of data the overlap-normalized peak can sit at the search edge")
def test_residual_offset_short_sequence_edge_lock():
    out = coarse(*waving_run(16, 0.140625, False, duration=20.0))
    assert abs(0.140625 - out.d_star * 0.1) <= 0.05 + 0.1
