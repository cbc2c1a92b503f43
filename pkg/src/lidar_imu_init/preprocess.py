"""Noise attenuation, differentiation and co-timestamping of IMU / odometry streams."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .manifold import is_rotation

logger = logging.getLogger(__name__)

UNIFORM_TOL = 0.01


@dataclass
class ImuData:
    """Raw IMU stream: timestamps ``(N,)``, gyro ``(N, 3)`` rad/s, accel ``(N, 3)`` m/s^2."""

    t: np.ndarray
    gyro: np.ndarray
    acc: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.gyro = np.asarray(self.gyro, dtype=float).reshape(-1, 3)
        self.acc = np.asarray(self.acc, dtype=float).reshape(-1, 3)
        if not (len(self.t) == len(self.gyro) == len(self.acc)):
            raise ValueError("IMU arrays must share one length")
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("IMU timestamps must be strictly increasing")

    def __len__(self):
        return len(self.t)

    def select(self, idx) -> "ImuData":
        return ImuData(self.t[idx], self.gyro[idx], self.acc[idx])


@dataclass
class OdomData:
    """LiDAR odometry output: attitude ``(N, 3, 3)``, position, global velocity, body rate."""

    t: np.ndarray
    R: np.ndarray
    p: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.R = np.asarray(self.R, dtype=float).reshape(-1, 3, 3)
        self.p = np.asarray(self.p, dtype=float).reshape(-1, 3)
        self.v = np.asarray(self.v, dtype=float).reshape(-1, 3)
        self.w = np.asarray(self.w, dtype=float).reshape(-1, 3)
        n = len(self.t)
        if not all(len(a) == n for a in (self.R, self.p, self.v, self.w)):
            raise ValueError("odometry arrays must share one length")
        if n > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("odometry timestamps must be strictly increasing")

    def __len__(self):
        return len(self.t)

    def select(self, idx) -> "OdomData":
        return OdomData(self.t[idx], self.R[idx], self.p[idx], self.v[idx], self.w[idx])

    def validate_rotations(self, tol: float = 1e-6) -> None:
        for i, R in enumerate(self.R):
            if not is_rotation(R, tol):
                raise ValueError(f"odometry attitude {i} is not a rotation")


@dataclass
class LidarDerived:
    t: np.ndarray
    w: np.ndarray  # body angular velocity
    v: np.ndarray  # global linear velocity
    alpha: np.ndarray  # body angular acceleration
    a: np.ndarray  # global linear acceleration
    R: np.ndarray  # global attitude

    def __len__(self):
        return len(self.t)

    def select(self, idx) -> "LidarDerived":
        return LidarDerived(self.t[idx], self.w[idx], self.v[idx], self.alpha[idx], self.a[idx], self.R[idx])


@dataclass
class ImuDerived:
    t: np.ndarray
    w: np.ndarray
    a: np.ndarray
    alpha: np.ndarray
    dropped: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return len(self.t)

    def select(self, idx) -> "ImuDerived":
        return ImuDerived(self.t[idx], self.w[idx], self.a[idx], self.alpha[idx])


def nominal_period(t) -> float:
    return float(np.median(np.diff(np.asarray(t, dtype=float))))


def check_uniform(t, tol: float = UNIFORM_TOL) -> float:
    """Return the nominal period, raising if any step deviates by more than ``tol``."""
    t = np.asarray(t, dtype=float)
    if len(t) < 2:
        raise ValueError("need at least two timestamps")
    dt = np.diff(t)
    h = float(np.median(dt))
    if h <= 0 or np.max(np.abs(dt - h)) > tol * h:
        raise ValueError(f"non-uniform sampling beyond {tol:.0%} of the nominal period {h:g} s")
    return h


def repair_gaps(t, *series, tol: float = UNIFORM_TOL):
    """Fill isolated dropped samples by linear interpolation; split at larger gaps.

    Returns a list of ``(t, *series)`` segments, each uniformly sampled.
    """
    t = np.asarray(t, dtype=float)
    series = [np.asarray(s, dtype=float) for s in series]
    h = nominal_period(t)
    dt = np.diff(t)
    steps = np.rint(dt / h)
    ok = np.abs(dt - steps * h) <= tol * h * np.maximum(steps, 1)
    breaks = np.flatnonzero(~ok | (steps > 2) | (steps < 1)) + 1
    segments = []
    for lo, hi in zip(np.r_[0, breaks], np.r_[breaks, len(t)]):
        ts = t[lo:hi]
        parts = [s[lo:hi] for s in series]
        if len(ts) >= 2 and np.any(np.rint(np.diff(ts) / h) == 2):
            n = int(np.rint((ts[-1] - ts[0]) / h)) + 1
            tu = ts[0] + h * np.arange(n)
            parts = [_interp_rows(tu, ts, s) for s in parts]
            logger.info("repaired %d dropped samples", n - len(ts))
            ts = tu
        segments.append((ts, *parts))
    if len(segments) > 1:
        logger.warning("stream split into %d segments at large gaps", len(segments))
    return segments


def _interp_rows(tq, t, x):
    x = np.asarray(x)
    flat = x.reshape(len(t), -1)
    out = np.column_stack([np.interp(tq, t, flat[:, j]) for j in range(flat.shape[1])])
    return out.reshape((len(tq),) + x.shape[1:])


def zero_phase_lowpass(t, x, cutoff: float, order: int = 4) -> np.ndarray:
    """Forward-backward Butterworth low-pass with odd reflection padding.

    The series is extended by ``3 * order`` samples at each end, filtered
    forward and backward starting from the steady state of the first
    sample, and trimmed back to the input length.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    n = x.shape[0]
    pad = 3 * order
    if n <= pad:
        raise ValueError(f"sequence of length {n} too short for order {order} (need > {pad})")
    h = check_uniform(t)
    fs = 1.0 / h
    if not 0 < cutoff < fs / 2:
        raise ValueError(f"cutoff {cutoff} Hz must lie in (0, {fs / 2}) Hz")
    b, a = signal.butter(order, cutoff, btype="low", fs=fs)
    zi = signal.lfilter_zi(b, a)
    y = np.empty_like(x)
    for j in range(x.shape[1]):
        col = x[:, j]
        ext = np.concatenate([2 * col[0] - col[pad:0:-1], col, 2 * col[-1] - col[-2:-pad - 2:-1]])
        fwd, _ = signal.lfilter(b, a, ext, zi=zi * ext[0])
        bwd, _ = signal.lfilter(b, a, fwd[::-1], zi=zi * fwd[-1])
        y[:, j] = bwd[::-1][pad:-pad]
    return y[:, 0] if squeeze else y


def central_difference(x, t) -> np.ndarray:
    """Non-causal derivative with one-sided differences at the two endpoints."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float).reshape(-1)
    if len(t) < 3 or x.shape[0] != len(t):
        raise ValueError("central_difference needs at least 3 co-indexed samples")
    if np.any(np.diff(t) <= 0):
        raise ValueError("timestamps must be strictly increasing (no duplicates)")
    tt = t.reshape((-1,) + (1,) * (x.ndim - 1))
    d = np.empty_like(x)
    d[1:-1] = (x[2:] - x[:-2]) / (tt[2:] - tt[:-2])
    d[0] = (x[1] - x[0]) / (tt[1] - tt[0])
    d[-1] = (x[-1] - x[-2]) / (tt[-1] - tt[-2])
    return d


def downsample_interpolate(imu: ImuDerived, odom_times) -> ImuDerived:
    """Linearly interpolate IMU-rate series at odometry timestamps.

    Odometry times outside the IMU span are dropped and listed in
    ``result.dropped``.
    """
    tq = np.asarray(odom_times, dtype=float).reshape(-1)
    inside = (tq >= imu.t[0]) & (tq <= imu.t[-1])
    if not np.any(inside):
        raise ValueError("odometry and IMU time spans do not overlap")
    tk = tq[inside]
    out = ImuDerived(
        tk,
        _interp_rows(tk, imu.t, imu.w),
        _interp_rows(tk, imu.t, imu.a),
        _interp_rows(tk, imu.t, imu.alpha),
        dropped=tq[~inside],
    )
    if len(out.dropped):
        logger.debug("dropped %d odometry times outside the IMU span", len(out.dropped))
    return out


def build_lidar_derived(odom: OdomData, cutoff: float = 2.0, order: int = 4) -> LidarDerived:
    """Filtered body rate and global velocity plus their central differences."""
    if len(odom) < 3:
        raise ValueError("need at least 3 odometry samples")
    w = zero_phase_lowpass(odom.t, odom.w, cutoff, order)
    v = zero_phase_lowpass(odom.t, odom.v, cutoff, order)
    return LidarDerived(
        t=odom.t.copy(),
        w=w,
        v=v,
        alpha=central_difference(w, odom.t),
        a=central_difference(v, odom.t),
        R=odom.R.copy(),
    )


def build_imu_derived(imu: ImuData, cutoff: float = 10.0, order: int = 4) -> ImuDerived:
    """Filtered gyro and accelerometer plus angular acceleration from the filtered gyro."""
    if len(imu) < 3:
        raise ValueError("need at least 3 IMU samples")
    w = zero_phase_lowpass(imu.t, imu.gyro, cutoff, order)
    a = zero_phase_lowpass(imu.t, imu.acc, cutoff, order)
    return ImuDerived(imu.t.copy(), w, a, central_difference(w, imu.t))
