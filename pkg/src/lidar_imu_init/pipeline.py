"""End-to-end initialization: preprocess, coarse offset, rotation and translation solves."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import excitation as exc
from .config import from_mapping
from .preprocess import (
    ImuData,
    OdomData,
    build_imu_derived,
    build_lidar_derived,
    downsample_interpolate,
    check_uniform,
    repair_gaps,
)
from .spatial_calib import (
    aligned_from_resample,
    align_imu,
    resample_shifted,
    solve_rot_bias_dt,
    solve_trans_bias_gravity,
)
from .temporal_align import cross_correlate, magnitude_series

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    odom_cutoff: float = 2.0
    imu_cutoff: float = 10.0
    filter_order: int = 4
    d_range_seconds: float = 2.0
    rot_max_iter: int = 50
    trans_max_iter: int = 50
    step_tol: float = 1e-8
    rot_threshold: float = exc.ROT_THRESHOLD
    trans_threshold: float = exc.TRANS_THRESHOLD
    refine_dt: bool = True
    offset_passes: int = 2
    realign: str = "resample"
    force: bool = False
    loss: str = "squared"
    # plane-world odometry simulation
    sub_frames: int = 3
    meas_sigma: float = 0.02
    process_vel: float = 0.1
    process_omega: float = 0.1
    lo_max_iter: int = 10
    lo_tol: float = 1e-6
    lo_duration: float = 5.0
    lo_scan_rate: float = 10.0
    lo_points: int = 300
    lo_planes: int = 6
    lo_seed: int = 0
    lo_peak_rate: float = 1.5
    lo_peak_acc: float = 2.0
    lo_freq_low: float = 0.3
    lo_freq_high: float = 1.0
    lo_range_sigma: float = 0.0
    lo_diverge_pos: float = 1.0

    def __post_init__(self):
        positive = ("odom_cutoff", "imu_cutoff", "filter_order", "d_range_seconds", "rot_max_iter",
                    "trans_max_iter", "step_tol", "offset_passes", "sub_frames", "lo_max_iter", "lo_tol",
                    "lo_duration", "lo_scan_rate", "lo_points", "lo_planes", "lo_diverge_pos")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"config value {name} must be positive")
        if not 0 < self.lo_freq_low <= self.lo_freq_high:
            raise ValueError("lo_freq_low must be positive and not above lo_freq_high")
        if min(self.rot_threshold, self.trans_threshold, self.meas_sigma, self.lo_range_sigma,
               self.lo_peak_rate, self.lo_peak_acc) < 0:
            raise ValueError("thresholds and noise levels must be nonnegative")
        if self.loss not in ("squared", "huber"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.realign not in ("resample", "formula"):
            raise ValueError(f"unknown realign mode {self.realign!r}")

    @classmethod
    def from_mapping(cls, values: dict, strict: bool = True) -> "PipelineConfig":
        return from_mapping(cls, values, strict)

    def to_dict(self) -> dict:
        return asdict(self)


class StageError(RuntimeError):
    """A pipeline stage failed; ``partial`` holds what was computed before it."""

    def __init__(self, stage: str, cause: Exception, partial: dict):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.partial = partial


@dataclass
class CalibrationResult:
    status: str  # "ok" or "insufficient_excitation"
    excitation: exc.ExcitationReport
    period: float
    d_star: int | None = None
    dt: float | None = None
    R_IL: np.ndarray | None = None
    p_IL: np.ndarray | None = None
    p_LI: np.ndarray | None = None
    b_w: np.ndarray | None = None
    b_a: np.ndarray | None = None
    gravity: np.ndarray | None = None
    coarse_d_star: int | None = None
    coarse_peak: float | None = None
    stages: dict = field(default_factory=dict)
    span: tuple[float, float] | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def t_offset(self) -> float | None:
        if self.d_star is None:
            return None
        return self.d_star * self.period + (self.dt or 0.0)


def _stage(name, partial, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as e:  # noqa: BLE001 - re-raised with stage context
        raise StageError(name, e, partial) from e


def _uniform(t, *arrays):
    try:
        check_uniform(t)
        return (t, *arrays)
    except ValueError:
        segs = repair_gaps(t, *arrays)
        return max(segs, key=lambda s: len(s[0]))


def prepare(imu: ImuData, odom: OdomData, cfg: PipelineConfig):
    """Derived LiDAR and odometry-rate IMU sequences on one shared index grid.

    Returns ``(lidar, imu_k, imu_full, period)``; ``imu_full`` is the filtered
    IMU-rate series kept for re-sampling at refined offsets.
    """
    t, R, p, v, w = _uniform(odom.t, odom.R, odom.p, odom.v, odom.w)
    if len(t) != len(odom.t):
        from .manifold import project_to_so3

        R = np.stack([project_to_so3(M) for M in R])
    odom = OdomData(t, R, p, v, w)
    ti, g, a = _uniform(imu.t, imu.gyro, imu.acc)
    imu = ImuData(ti, g, a)

    lidar = build_lidar_derived(odom, cfg.odom_cutoff, cfg.filter_order)
    imu_full = build_imu_derived(imu, cfg.imu_cutoff, cfg.filter_order)
    imu_k = downsample_interpolate(imu_full, lidar.t)
    keep = np.isin(lidar.t, imu_k.t)
    lidar = lidar.select(np.flatnonzero(keep))
    period = check_uniform(lidar.t)
    return lidar, imu_k, imu_full, period


def run_initialization(imu: ImuData, odom: OdomData, cfg: PipelineConfig | None = None) -> CalibrationResult:
    """Full initialization on accumulated data.

    Returns a result with ``status == "insufficient_excitation"`` (and only
    the excitation report filled in) unless the motion passes the
    excitation thresholds or ``cfg.force`` is set.

    Raises:
        StageError: naming the failing stage, with partial results attached.
    """
    cfg = cfg or PipelineConfig()
    partial: dict = {}
    lidar, imu_k, imu_full, period = _stage("preprocess", partial, prepare, imu, odom, cfg)
    partial.update(lidar=lidar, imu=imu_k, period=period)

    report = exc.assess_sequences(
        lidar.w, lidar.alpha, rot_threshold=cfg.rot_threshold, trans_threshold=cfg.trans_threshold
    )
    partial["excitation"] = report
    span = (float(lidar.t[0]), float(lidar.t[-1]))
    if not report.sufficient and not cfg.force:
        return CalibrationResult("insufficient_excitation", report, period, span=span)

    n = int(round(cfg.d_range_seconds / period))
    coarse = _stage(
        "temporal_align",
        partial,
        cross_correlate,
        magnitude_series(imu_k.w),
        magnitude_series(lidar.w),
        (-n, n),
        period,
    )
    partial["coarse"] = coarse

    rot_kw = dict(refine_dt=cfg.refine_dt, max_iter=cfg.rot_max_iter, step_tol=cfg.step_tol, loss=cfg.loss)
    rot = _stage("rotation", partial, solve_rot_bias_dt, lidar, imu_k, coarse.d_star, period, **rot_kw)
    offset = coarse.d_star * period + rot.dt
    passes = cfg.offset_passes if cfg.refine_dt else 1
    for _ in range(passes - 1):
        # re-sample the IMU at the current estimate and solve for what is left
        idx, imu_s = _stage("rotation", partial, resample_shifted, imu_full, lidar.t, offset)
        rot = _stage("rotation", partial, solve_rot_bias_dt, lidar.select(idx), imu_s, 0, period, **rot_kw)
        offset += rot.dt
    d_star = int(round(offset / period))
    rot.dt = offset - d_star * period
    partial["rotation"] = rot

    if cfg.realign == "resample":
        aligned = _stage("align", partial, aligned_from_resample, imu_full, lidar.t, offset)
    else:
        aligned = _stage("align", partial, align_imu, imu_k, d_star, rot.dt, period, len(lidar))
    trans = _stage(
        "translation",
        partial,
        solve_trans_bias_gravity,
        lidar,
        aligned,
        rot,
        max_iter=cfg.trans_max_iter,
        step_tol=cfg.step_tol,
        check_excitation=not cfg.force,
        loss=cfg.loss,
    )

    return CalibrationResult(
        status="ok",
        excitation=report,
        period=period,
        d_star=d_star,
        dt=rot.dt,
        R_IL=rot.R_IL,
        p_IL=trans.p_IL,
        p_LI=trans.p_LI,
        b_w=rot.b_w,
        b_a=trans.b_a,
        gravity=trans.gravity,
        coarse_d_star=coarse.d_star,
        coarse_peak=coarse.correlation_peak,
        stages={
            "rotation": {"cost": rot.final_cost, "iterations": rot.iterations,
                         "converged": rot.converged, "pairs": rot.n_pairs},
            "translation": {"cost": trans.final_cost, "iterations": trans.iterations,
                            "converged": trans.converged, "pairs": trans.n_pairs,
                            "trimmed": aligned.trimmed},
        },
        span=span,
    )


# -- plane-world odometry run --------------------------------------------------


@dataclass
class LoRunMetrics:
    compensate: bool
    pos_rmse: float
    rot_rmse: float  # rad
    mean_residual: float  # m, mean |point-to-plane| after each update
    steps: int
    diverged_at: int | None = None
    pos_errors: np.ndarray = field(default=None, repr=False)
    rot_errors: np.ndarray = field(default=None, repr=False)

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    def to_dict(self) -> dict:
        return {
            "compensate": self.compensate,
            "pos_rmse_m": self.pos_rmse,
            "rot_rmse_rad": self.rot_rmse,
            "mean_point_to_plane_m": self.mean_residual,
            "steps": self.steps,
            "diverged_at": self.diverged_at,
        }


@dataclass
class LoSimResult:
    compensated: LoRunMetrics
    uncompensated: LoRunMetrics
    sub_frames: int
    scan_times: np.ndarray = field(repr=False)

    @property
    def diverged(self) -> bool:
        return self.compensated.diverged or self.uncompensated.diverged

    def to_dict(self) -> dict:
        return {
            "sub_frames": self.sub_frames,
            "n_scans": int(len(self.scan_times)),
            "compensated": self.compensated.to_dict(),
            "uncompensated": self.uncompensated.to_dict(),
        }


def lo_trajectory(cfg: PipelineConfig):
    from . import simulator as sim

    return sim.random_trajectory(
        cfg.lo_duration,
        seed=cfg.lo_seed,
        peak_rate=cfg.lo_peak_rate,
        peak_acc=cfg.lo_peak_acc,
        freq_band=(cfg.lo_freq_low, cfg.lo_freq_high),
    )


def _true_state(spec, t):
    from .cv_odometry import CvState
    from .simulator import eval_trajectory

    s = eval_trajectory(spec, np.array([t]))
    return CvState(s.R[0], s.p[0], s.v[0], s.w[0])


def _run_filter(spec, world, cfg, scan_times, compensate) -> LoRunMetrics:
    from .cv_odometry import CvOdometry, ProcessNoise, split_scan
    from .manifold import so3_log
    from .simulator import raycast_scan

    odo = CvOdometry(
        _true_state(spec, scan_times[0]),
        1e-6 * np.eye(12),
        scan_times[0],
        ProcessNoise(cfg.process_vel, cfg.process_omega),
        cfg.meas_sigma,
        cfg.lo_max_iter,
        cfg.lo_tol,
        compensate,
    )
    pos_err, rot_err, resid = [], [], []
    diverged_at = None
    for i, (t0, t1) in enumerate(zip(scan_times[:-1], scan_times[1:])):
        # same scan for both runs: seeded by index only
        scan = raycast_scan(world, spec, t0, t1, cfg.lo_points, seed=cfg.lo_seed * 100003 + i,
                            range_sigma=cfg.lo_range_sigma)
        subs, bounds = split_scan(scan, cfg.sub_frames)
        ok = True
        for sub, tb in zip(subs, bounds[1:]):
            if len(sub) == 0:
                continue
            try:
                res = odo.step(sub, tb)
            except (np.linalg.LinAlgError, ValueError):
                ok = False
                break
            resid.append(np.abs(res.residuals))
        truth = _true_state(spec, t1)
        if ok and np.all(np.isfinite(odo.P)) and np.all(np.isfinite(odo.x.p)):
            pe = float(np.linalg.norm(odo.x.p - truth.p))
            try:
                re = float(np.linalg.norm(so3_log(truth.R.T @ odo.x.R)))
            except ValueError:
                ok = False
        else:
            ok = False
        if not ok or pe > cfg.lo_diverge_pos:
            diverged_at = i
            logger.warning("filter diverged at scan %d (compensate=%s)", i, compensate)
            break
        pos_err.append(pe)
        rot_err.append(re)
    pos_err, rot_err = np.array(pos_err), np.array(rot_err)
    rms = lambda e: float(np.sqrt(np.mean(e**2))) if len(e) else float("nan")  # noqa: E731
    return LoRunMetrics(
        compensate=compensate,
        pos_rmse=rms(pos_err),
        rot_rmse=rms(rot_err),
        mean_residual=float(np.mean(np.concatenate(resid))) if resid else float("nan"),
        steps=len(pos_err),
        diverged_at=diverged_at,
        pos_errors=pos_err,
        rot_errors=rot_err,
    )


def run_lo_sim(cfg: PipelineConfig | None = None, spec=None) -> LoSimResult:
    """Constant-velocity odometry over ray-cast plane-world scans.

    Runs the filter twice on identical scans, with and without motion
    compensation, starting from the true state. Pose errors are taken at
    every full-scan end so runs with different ``sub_frames`` are comparable.
    A run that produces non-finite values or drifts further than
    ``lo_diverge_pos`` metres stops there and records the scan index in
    ``diverged_at``.
    """
    from .simulator import gen_plane_world

    cfg = cfg or PipelineConfig()
    spec = spec or lo_trajectory(cfg)
    world = gen_plane_world(cfg.lo_planes, seed=cfg.lo_seed)
    n = int(round(spec.duration * cfg.lo_scan_rate))
    scan_times = np.arange(n + 1) / cfg.lo_scan_rate
    return LoSimResult(
        _run_filter(spec, world, cfg, scan_times, True),
        _run_filter(spec, world, cfg, scan_times, False),
        cfg.sub_frames,
        scan_times,
    )
