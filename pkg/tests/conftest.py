import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lidar_imu_init import simulator as sim

settings.register_profile(
    "default",
    max_examples=200,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# rig used throughout: near-180 deg yaw, lever arm of the handheld case
R_TRUE = sim.euler_zyx(0.0, np.radians(-2.0), np.radians(178.0))
P_LI_TRUE = np.array([0.12, 0.0, 0.11])
B_W_TRUE = np.array([0.01, -0.02, 0.005])
B_A_TRUE = np.array([0.05, -0.03, 0.02])
G_TRUE = sim.tilted_gravity(np.radians(3.0), np.radians(-2.0))


def finite_vec(n=3, lo=-3.0, hi=3.0):
    return arrays(np.float64, n, elements=st.floats(lo, hi, allow_nan=False, allow_infinity=False))


def rot_vec(max_norm=np.pi - 1e-3):
    """3-vectors with norm below ``max_norm``."""
    return finite_vec().map(lambda v: v if np.linalg.norm(v) < max_norm else v * (0.999 * max_norm / np.linalg.norm(v)))


def make_rig(t_offset=0.1, noisy=False, R_IL=None, p_LI=None, b_w=None, b_a=None, gravity=None):
    R = R_TRUE if R_IL is None else R_IL
    p = P_LI_TRUE if p_LI is None else np.asarray(p_LI, dtype=float)
    rig = sim.SensorRig(
        R_IL=R,
        p_IL=-R @ p,
        b_w=B_W_TRUE if b_w is None else b_w,
        b_a=B_A_TRUE if b_a is None else b_a,
        gravity=G_TRUE if gravity is None else gravity,
        t_offset=t_offset,
    )
    return rig.with_noise() if noisy else rig


@functools.lru_cache(maxsize=None)
def sim_run(seed=0, t_offset=0.1, noisy=False, single_axis=None, duration=40.0):
    """Cached (spec, rig, imu, odom) for one simulated sequence."""
    if single_axis is None:
        spec = sim.random_trajectory(duration, seed=seed)
    else:
        spec = sim.single_axis_trajectory(single_axis, duration, seed=seed)
    rig = make_rig(t_offset, noisy)
    return spec, rig, sim.synth_imu(spec, rig, seed), sim.synth_odometry(spec, rig, seed)


def gravity_angle(g1, g2):
    c = np.dot(g1, g2) / (np.linalg.norm(g1) * np.linalg.norm(g2))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run whatever the capture mode
ACCEPTANCE_LINES: dict[int, str] = {}


def acceptance_line(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[n])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
