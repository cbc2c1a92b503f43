"""Coarse time-offset estimation by cross-correlating angular-rate magnitudes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CoarseOffset:
    d_star: int
    offset_seconds: float
    correlation_peak: float
    shifts: np.ndarray
    correlation_profile: np.ndarray


def magnitude_series(series) -> np.ndarray:
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise ValueError("empty series")
    return np.linalg.norm(series.reshape(len(series), -1), axis=1)


def default_d_range(period: float, seconds: float = 2.0) -> tuple[int, int]:
    n = int(round(seconds / period))
    return -n, n


def cross_correlate(imu_mag, lidar_mag, d_range, period: float = 1.0) -> CoarseOffset:
    """Find ``d*`` maximizing the overlap-normalized sum of ``|w_I[k+d]| * |w_L[k]|``.

    Both inputs are indexed on the same odometry-rate grid. Candidates with
    no overlap are skipped; ties go to the smallest ``|d|``.
    """
    imu_mag = np.asarray(imu_mag, dtype=float).reshape(-1)
    lidar_mag = np.asarray(lidar_mag, dtype=float).reshape(-1)
    if not np.any(imu_mag) or not np.any(lidar_mag):
        raise ValueError("all-zero angular rate: no excitation to correlate")
    lo, hi = int(d_range[0]), int(d_range[1])
    if lo > hi:
        raise ValueError("empty shift range")
    n_imu, n_lidar = len(imu_mag), len(lidar_mag)
    shifts = np.arange(lo, hi + 1)
    profile = np.full(len(shifts), -np.inf)
    for i, d in enumerate(shifts):
        # lidar index k valid when 0 <= k < n_lidar and 0 <= k + d < n_imu
        k0, k1 = max(0, -d), min(n_lidar, n_imu - d)
        if k1 - k0 <= 0:
            continue
        profile[i] = float(imu_mag[k0 + d:k1 + d] @ lidar_mag[k0:k1]) / (k1 - k0)
    if not np.any(np.isfinite(profile)):
        raise ValueError("no candidate shift overlaps the two sequences")
    best = np.max(profile)
    ties = shifts[profile == best]
    d_star = int(ties[np.argmin(np.abs(ties))])
    return CoarseOffset(
        d_star=d_star,
        offset_seconds=d_star * period,
        correlation_peak=float(best),
        shifts=shifts,
        correlation_profile=profile,
    )
