"""Ground-truth oracle: analytic trajectories, IMU/odometry synthesis, plane-world scans.

Orientation is ``R(t) = Exp(r(t))`` and position ``p(t)``, with ``r`` and
``p`` per-axis sums of sinusoids, so every derivative is closed form. The
IMU is rigidly attached with lever arm ``p_LI`` (IMU origin in the LiDAR
frame) and rotation ``R_IL``; IMU timestamps are the true sampling times
plus ``t_offset``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .cv_odometry import PlaneLandmark, Scan
from .manifold import so3_exp, so3_exp_batch, skew_batch
from .preprocess import ImuData, OdomData

GRAVITY = 9.81
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SinusoidSum:
    """Per-axis sums ``sum_j amp[i, j] * sin(2 pi freq[i, j] t + phase[i, j])``."""

    amp: np.ndarray
    freq: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        for name in ("amp", "freq", "phase"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3, -1))

    @classmethod
    def zero(cls) -> "SinusoidSum":
        return cls(np.zeros((3, 1)), np.zeros((3, 1)), np.zeros((3, 1)))

    def eval(self, t: np.ndarray):
        """Value and first two derivatives, each of shape ``(N, 3)``."""
        w = TWO_PI * self.freq  # (3, K)
        arg = w[None] * t[:, None, None] + self.phase[None]
        s, c = np.sin(arg), np.cos(arg)
        x = np.sum(self.amp * s, axis=-1)
        dx = np.sum(self.amp * w * c, axis=-1)
        ddx = -np.sum(self.amp * w**2 * s, axis=-1)
        return x, dx, ddx


@dataclass(frozen=True)
class TrajectorySpec:
    position: SinusoidSum
    rotation: SinusoidSum
    duration: float
    seed: int = 0

    @classmethod
    def stationary(cls, duration: float = 10.0, seed: int = 0) -> "TrajectorySpec":
        return cls(SinusoidSum.zero(), SinusoidSum.zero(), duration, seed)


@dataclass
class TrajectorySample:
    t: np.ndarray
    R: np.ndarray
    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    w: np.ndarray
    alpha: np.ndarray

    def __getitem__(self, i):
        return TrajectorySample(self.t[i], self.R[i], self.p[i], self.v[i], self.a[i], self.w[i], self.alpha[i])


def _jr_coeffs(theta2):
    """``A = (1-cos)/th^2``, ``B = (th - sin)/th^3`` and ``A'/th``, ``B'/th``."""
    th = np.sqrt(theta2)
    small = th < 1e-2
    ts = np.where(small, 1.0, th)
    sn, cs = np.sin(ts), np.cos(ts)
    A = np.where(small, 0.5 - theta2 / 24 + theta2**2 / 720, (1 - cs) / ts**2)
    B = np.where(small, 1 / 6 - theta2 / 120 + theta2**2 / 5040, (ts - sn) / ts**3)
    dA = np.where(small, -1 / 12 + theta2 / 180, (ts * sn - 2 * (1 - cs)) / ts**4)
    dB = np.where(small, -1 / 60 + theta2 / 1260, (1 - cs) / ts**4 - 3 * (ts - sn) / ts**5)
    return A, B, dA, dB


def eval_trajectory(spec: TrajectorySpec, t) -> TrajectorySample:
    """Pose and derivatives at times ``t`` (scalar or array) in ``[0, duration]``.

    Body rate is ``w = Jr(r) r'`` (equal to ``vee(R^T R')``) and its
    derivative is differentiated in closed form.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    eps = 1e-9 * max(1.0, spec.duration)
    if np.any(t < -eps) or np.any(t > spec.duration + eps):
        raise ValueError(f"time outside trajectory span [0, {spec.duration}]")
    p, v, a = spec.position.eval(t)
    r, dr, ddr = spec.rotation.eval(t)
    A, B, dA, dB = _jr_coeffs(np.einsum("ni,ni->n", r, r))
    rd = np.einsum("ni,ni->n", r, dr)
    c1 = np.cross(r, dr)
    c2 = np.cross(r, c1)
    w = dr - A[:, None] * c1 + B[:, None] * c2
    alpha = (
        ddr
        - (dA * rd)[:, None] * c1
        - A[:, None] * np.cross(r, ddr)
        + (dB * rd)[:, None] * c2
        + B[:, None] * (np.cross(dr, c1) + np.cross(r, np.cross(r, ddr)))
    )
    return TrajectorySample(t, so3_exp_batch(r), p, v, a, w, alpha)


def random_trajectory(
    duration: float = 40.0,
    seed: int = 0,
    peak_rate: float = 1.5,
    peak_acc: float = 1.5,
    freq_band=(0.05, 0.25),
    n_terms=(2, 4),
    rot_axes=(0, 1, 2),
) -> TrajectorySpec:
    """Handheld-style multi-axis waving: 2-4 sinusoids per axis.

    Amplitudes are scaled so each active axis peaks near ``peak_rate``
    (rotation rate) and ``peak_acc`` (linear acceleration).
    """
    rng = np.random.default_rng(seed)
    K = int(n_terms[1])

    def make(peak, order, axes):
        amp = np.zeros((3, K))
        freq = rng.uniform(*freq_band, size=(3, K))
        phase = rng.uniform(0, TWO_PI, size=(3, K))
        for i in axes:
            k = int(rng.integers(n_terms[0], n_terms[1] + 1))
            raw = rng.uniform(0.5, 1.0, size=k)
            # bound of the derivative peak: sum |A| (2 pi f)^order
            scale = peak / np.sum(raw * (TWO_PI * freq[i, :k]) ** order)
            amp[i, :k] = raw * scale
        return SinusoidSum(amp, freq, phase)

    return TrajectorySpec(make(peak_acc, 2, (0, 1, 2)), make(peak_rate, 1, rot_axes), duration, seed)


def single_axis_trajectory(
    axis=(0.0, 0.0, 1.0),
    duration: float = 40.0,
    seed: int = 0,
    peak_rate: float = 1.5,
    peak_acc: float = 1.5,
    freq_band=(0.05, 0.25),
) -> TrajectorySpec:
    """Rotation about one fixed axis only; translation stays 3-axis."""
    base = random_trajectory(duration, seed, peak_rate, peak_acc, freq_band, rot_axes=(0,))
    u = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    amp = np.outer(u, base.rotation.amp[0])
    freq = np.tile(base.rotation.freq[0], (3, 1))
    phase = np.tile(base.rotation.phase[0], (3, 1))
    return replace(base, rotation=SinusoidSum(amp, freq, phase))


@dataclass(frozen=True)
class SensorRig:
    R_IL: np.ndarray = field(default_factory=lambda: np.eye(3))
    p_IL: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_w: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -GRAVITY]))
    t_offset: float = 0.0
    imu_rate: float = 200.0
    odom_rate: float = 10.0
    gyro_sigma: float = 0.0
    acc_sigma: float = 0.0
    odom_rot_sigma: float = 0.0
    odom_pos_sigma: float = 0.0
    odom_vel_sigma: float = 0.0
    odom_w_sigma: float = 0.0

    def __post_init__(self):
        for name in ("R_IL", "p_IL", "b_w", "b_a", "gravity"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.imu_rate <= 0 or self.odom_rate <= 0:
            raise ValueError("sensor rates must be positive")
        if abs(np.linalg.norm(self.gravity) - GRAVITY) > 1e-9:
            raise ValueError("gravity magnitude must be 9.81")

    @property
    def p_LI(self) -> np.ndarray:
        return -self.R_IL.T @ self.p_IL

    def with_noise(
        self,
        gyro: float = 0.005,
        acc: float = 0.05,
        odom_w: float = 0.01,
        odom_vel: float = 0.01,
        odom_rot: float = 0.002,
        odom_pos: float = 0.005,
    ) -> "SensorRig":
        """Copy with the default "realistic" noise levels."""
        return replace(
            self,
            gyro_sigma=gyro,
            acc_sigma=acc,
            odom_w_sigma=odom_w,
            odom_vel_sigma=odom_vel,
            odom_rot_sigma=odom_rot,
            odom_pos_sigma=odom_pos,
        )

    def noiseless(self) -> "SensorRig":
        return replace(self, gyro_sigma=0.0, acc_sigma=0.0, odom_rot_sigma=0.0, odom_pos_sigma=0.0,
                       odom_vel_sigma=0.0, odom_w_sigma=0.0)


def tilted_gravity(roll: float, pitch: float) -> np.ndarray:
    return so3_exp([roll, pitch, 0.0]) @ np.array([0.0, 0.0, -GRAVITY])


def _rngs(seed: int):
    imu_ss, odom_ss, scan_ss = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(imu_ss), np.random.default_rng(odom_ss), np.random.default_rng(scan_ss)


def imu_truth(spec: TrajectorySpec, rig: SensorRig, t) -> tuple[np.ndarray, np.ndarray]:
    """Noise- and bias-free IMU angular rate and specific force at true times ``t``."""
    s = eval_trajectory(spec, t)
    W = skew_batch(s.w)
    M = W @ W + skew_batch(s.alpha)
    a_body = np.einsum("nji,nj->ni", s.R, s.a - rig.gravity) + M @ rig.p_LI
    return s.w @ rig.R_IL.T, a_body @ rig.R_IL.T


def synth_imu(spec: TrajectorySpec, rig: SensorRig, seed: int | None = None) -> ImuData:
    """IMU samples with bias and Gaussian noise, stamped ``true time + t_offset``."""
    rng = _rngs(spec.seed if seed is None else seed)[0]
    n = int(np.floor(spec.duration * rig.imu_rate + 1e-9)) + 1
    t_true = np.arange(n) / rig.imu_rate
    w, a = imu_truth(spec, rig, t_true)
    gyro = w + rig.b_w + rig.gyro_sigma * rng.standard_normal(w.shape)
    acc = a + rig.b_a + rig.acc_sigma * rng.standard_normal(a.shape)
    return ImuData(t_true + rig.t_offset, gyro, acc)


def synth_odometry(spec: TrajectorySpec, rig: SensorRig, seed: int | None = None) -> OdomData:
    """Trajectory sampled at the odometry rate; attitude noise is a right perturbation."""
    rng = _rngs(spec.seed if seed is None else seed)[1]
    n = int(np.floor(spec.duration * rig.odom_rate + 1e-9)) + 1
    t = np.arange(n) / rig.odom_rate
    s = eval_trajectory(spec, t)
    R = s.R
    if rig.odom_rot_sigma > 0:
        R = R @ so3_exp_batch(rig.odom_rot_sigma * rng.standard_normal((n, 3)))
    p = s.p + rig.odom_pos_sigma * rng.standard_normal((n, 3))
    v = s.v + rig.odom_vel_sigma * rng.standard_normal((n, 3))
    w = s.w + rig.odom_w_sigma * rng.standard_normal((n, 3))
    return OdomData(t, R, p, v, w)


# -- plane world ---------------------------------------------------------------


def gen_plane_world(n_planes: int = 6, seed: int = 0, tilt: float = 0.2, dist=(4.0, 10.0)) -> list[PlaneLandmark]:
    """Room-like set of planes with outward normals around the origin.

    The first six planes are perturbed box walls; extra planes have random
    normals.
    """
    rng = np.random.default_rng(seed)
    base = [np.eye(3)[i] * s for i in range(3) for s in (1.0, -1.0)]
    planes = []
    for i in range(n_planes):
        if i < 6:
            n = so3_exp(tilt * rng.uniform(-1, 1, 3)) @ base[i]
        else:
            n = rng.standard_normal(3)
        planes.append(PlaneLandmark(n, rng.uniform(*dist)))
    return planes


def raycast_scan(
    world: list[PlaneLandmark],
    spec: TrajectorySpec,
    t_start: float,
    t_end: float,
    n_points: int,
    seed: int = 0,
    range_sigma: float = 0.0,
) -> Scan:
    """Points on the world planes seen from the moving sensor.

    Each point gets a timestamp uniform in ``(t_start, t_end]``, is expressed
    in the body frame at that instant and carries its generating plane.
    Planes are visited round-robin so each one is observed.
    """
    rng = np.random.default_rng(seed)
    rho = t_end - rng.uniform(0.0, 1.0, n_points) * (t_end - t_start)
    rho = np.clip(rho, np.nextafter(t_start, np.inf), t_end)
    s = eval_trajectory(spec, rho)
    which = np.arange(n_points) % len(world)
    normals = np.stack([world[i].normal for i in which])
    offsets = np.array([world[i].offset for i in which])
    gap = offsets - np.einsum("ni,ni->n", normals, s.p)
    # rejection-sample ray directions that hit the plane at a usable incidence
    dirs = np.zeros((n_points, 3))
    todo = np.arange(n_points)
    while len(todo):
        d = rng.standard_normal((len(todo), 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        cos = np.einsum("ni,ni->n", normals[todo], d) * np.sign(gap[todo])
        hit = cos > 0.2
        dirs[todo[hit]] = d[hit]
        todo = todo[~hit]
    length = gap / np.einsum("ni,ni->n", normals, dirs)
    if range_sigma > 0:
        length = length + range_sigma * rng.standard_normal(n_points)
    pts = np.einsum("nji,nj->ni", s.R, length[:, None] * dirs)
    return Scan(pts, rho, normals, offsets, t_start, t_end)


def euler_zyx(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """``Rz(yaw) Ry(pitch) Rx(roll)``, angles in radians."""
    return so3_exp([0.0, 0.0, yaw]) @ so3_exp([0.0, pitch, 0.0]) @ so3_exp([roll, 0.0, 0.0])


@dataclass
class SimulationConfig:
    """Flat description of one simulated calibration run (``simulate`` verb)."""

    seed: int = 0
    duration: float = 40.0
    imu_rate: float = 200.0
    odom_rate: float = 10.0
    t_offset: float = 0.1
    rpy_deg: tuple = (0.0, -2.0, 178.0)  # R_IL as roll, pitch, yaw
    p_LI: tuple = (0.12, 0.0, 0.11)
    b_w: tuple = (0.01, -0.02, 0.005)
    b_a: tuple = (0.05, -0.03, 0.02)
    gravity_roll_deg: float = 3.0
    gravity_pitch_deg: float = -2.0
    noise: bool = True
    single_axis: tuple = ()  # empty: 3-axis waving; else the fixed rotation axis
    peak_rate: float = 1.5
    peak_acc: float = 1.5
    freq_low: float = 0.05
    freq_high: float = 0.25

    def __post_init__(self):
        if self.duration <= 0 or not 0 < self.freq_low <= self.freq_high:
            raise ValueError("duration and frequency band must be positive")
        for name in ("rpy_deg", "p_LI", "b_w", "b_a"):
            if len(getattr(self, name)) != 3:
                raise ValueError(f"{name} needs three components")
        if self.single_axis and len(self.single_axis) != 3:
            raise ValueError("single_axis needs three components")

    @classmethod
    def from_mapping(cls, values: dict, strict: bool = True) -> "SimulationConfig":
        from .config import from_mapping

        return from_mapping(cls, values, strict)

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def build(self) -> tuple[TrajectorySpec, SensorRig]:
        band = (self.freq_low, self.freq_high)
        if self.single_axis:
            spec = single_axis_trajectory(self.single_axis, self.duration, self.seed, self.peak_rate,
                                          self.peak_acc, band)
        else:
            spec = random_trajectory(self.duration, self.seed, self.peak_rate, self.peak_acc, band)
        R_IL = euler_zyx(*np.radians(self.rpy_deg))
        rig = SensorRig(
            R_IL=R_IL,
            p_IL=-R_IL @ np.asarray(self.p_LI, dtype=float),
            b_w=np.asarray(self.b_w, dtype=float),
            b_a=np.asarray(self.b_a, dtype=float),
            gravity=tilted_gravity(np.radians(self.gravity_roll_deg), np.radians(self.gravity_pitch_deg)),
            t_offset=self.t_offset,
            imu_rate=self.imu_rate,
            odom_rate=self.odom_rate,
        )
        return spec, rig.with_noise() if self.noise else rig

    def generate(self) -> tuple[ImuData, OdomData, dict]:
        """IMU and odometry streams plus a truth record."""
        spec, rig = self.build()
        truth = {
            "t_offset": rig.t_offset,
            "R_IL": rig.R_IL,
            "p_IL": rig.p_IL,
            "p_LI": rig.p_LI,
            "b_w": rig.b_w,
            "b_a": rig.b_a,
            "gravity": rig.gravity,
        }
        return synth_imu(spec, rig, self.seed), synth_odometry(spec, rig, self.seed), truth
