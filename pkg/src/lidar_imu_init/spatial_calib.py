"""Extrinsic, bias, residual time offset and gravity refinement solves.

Two stages, both least squares over odometry-rate samples:

1. rotation stage: ``R_IL w_L + b_w = w_I[k+d] + dt * alpha_I[k+d]`` over
   ``(R_IL, b_w, dt)``;
2. translation stage, with the LiDAR as the reference frame::

       R_IL^T (a_I - b_a) = R_GL^T (a_GL - g) + ([w_L]^2 + [alpha_L]) p_LI

   over ``(p_LI, b_a, g)`` with ``|g|`` fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .manifold import skew, skew_batch, so3_exp
from .preprocess import ImuDerived, LidarDerived, downsample_interpolate
from .solver import SolverDivergence, SolverResult, damped_gauss_newton, huber_weights

logger = logging.getLogger(__name__)

GRAVITY = 9.81
MIN_PAIRS = 30


class InsufficientExcitation(ValueError):
    pass


@dataclass
class RotTimeSolution:
    R_IL: np.ndarray
    b_w: np.ndarray
    dt: float
    final_cost: float
    iterations: int
    converged: bool
    n_pairs: int


@dataclass
class TransGravSolution:
    p_LI: np.ndarray
    p_IL: np.ndarray
    b_a: np.ndarray
    gravity: np.ndarray
    final_cost: float
    iterations: int
    converged: bool
    n_pairs: int


@dataclass
class AlignedImu:
    lidar_index: np.ndarray
    w: np.ndarray
    a: np.ndarray
    trimmed: int

    def __len__(self):
        return len(self.lidar_index)


# -- rotation / gyro bias / residual offset ----------------------------------


def _rot_pairs(n_lidar: int, n_imu: int, d: int) -> np.ndarray:
    k0, k1 = max(0, -d), min(n_lidar, n_imu - d)
    return np.arange(k0, max(k0, k1))


def rot_time_residuals(params, w_L, w_I, alpha_I):
    """Stacked residuals ``R w_L + b - w_I - dt alpha_I`` and their Jacobian.

    ``params = (R, b, dt)``; the tangent is ``[dtheta (right), db, d dt]``.
    """
    R, b, dt = params
    Rw = w_L @ R.T
    r = (Rw + b - w_I - dt * alpha_I).reshape(-1)
    n = len(w_L)
    J = np.zeros((n, 3, 7))
    J[:, :, 0:3] = -R @ skew_batch(w_L)
    J[:, :, 3:6] = np.eye(3)
    J[:, :, 6] = -alpha_I
    return r, J.reshape(3 * n, 7)


def retract_rot_time(params, step, dt_bound: float = np.inf):
    R, b, dt = params
    lim = dt_bound * (1.0 - 1e-9)
    return R @ so3_exp(step[0:3]), b + step[3:6], float(np.clip(dt + step[6], -lim, lim))


def solve_rot_bias_dt(
    lidar: LidarDerived,
    imu: ImuDerived,
    d_star: int,
    period: float,
    refine_dt: bool = True,
    max_iter: int = 50,
    step_tol: float = 1e-8,
    loss: str = "squared",
) -> RotTimeSolution:
    """Rotation extrinsic, gyro bias and sub-period offset from aligned angular rates.

    Starts from ``(I, 0, 0)``. With ``refine_dt=False`` the residual offset is
    held at zero.
    """
    k = _rot_pairs(len(lidar), len(imu), d_star)
    if len(k) < MIN_PAIRS:
        raise ValueError(f"only {len(k)} co-indexed pairs after shifting by {d_star} (need {MIN_PAIRS})")
    w_L = lidar.w[k]
    w_I = imu.w[k + d_star]
    alpha_I = imu.alpha[k + d_star]

    if refine_dt:
        fn = lambda x: rot_time_residuals(x, w_L, w_I, alpha_I)  # noqa: E731
    else:

        def fn(x):
            r, J = rot_time_residuals(x, w_L, w_I, alpha_I)
            J = J.copy()
            J[:, 6] = 0.0
            return r, J

    res = damped_gauss_newton(
        fn,
        (np.eye(3), np.zeros(3), 0.0),
        lambda x, s: retract_rot_time(x, s, period),
        max_iter=max_iter,
        step_tol=step_tol,
        weight_fn=huber_weights(3) if loss == "huber" else None,
    )
    R, b, dt = res.x
    return RotTimeSolution(R, b, float(dt), res.cost, res.iterations, res.converged, len(k))


# -- IMU realignment ----------------------------------------------------------


def align_imu(imu: ImuDerived, d_star: int, dt: float, period: float, n_lidar: int | None = None) -> AlignedImu:
    """Shift the odometry-rate IMU series by ``d_star`` samples plus ``dt`` seconds.

    Angular rate uses the first-order expansion ``w + dt * alpha``;
    acceleration interpolates linearly towards the next sample.
    """
    if abs(dt) >= period:
        raise ValueError(f"|dt| = {abs(dt)} must be smaller than the odometry period {period}")
    n_imu = len(imu)
    if n_lidar is None:
        n_lidar = n_imu
    k0, k1 = max(0, -d_star), min(n_lidar, n_imu - 1 - d_star)
    k = np.arange(k0, max(k0, k1))
    j = k + d_star
    w = imu.w[j] + dt * imu.alpha[j]
    a = imu.a[j] + (dt / period) * (imu.a[j + 1] - imu.a[j])
    return AlignedImu(k, w, a, trimmed=n_lidar - len(k))


def resample_shifted(imu_full: ImuDerived, t_lidar, offset: float) -> tuple[np.ndarray, ImuDerived]:
    """Interpolate the full-rate IMU series at ``t_k + offset``.

    Returns the LiDAR indices whose shifted time falls inside the IMU span and
    the IMU series at those times. Unlike :func:`align_imu` the error does not
    grow with the sub-period part of the offset, since the interpolation runs
    on the IMU's own sample grid.
    """
    tq = np.asarray(t_lidar, dtype=float) + offset
    idx = np.flatnonzero((tq >= imu_full.t[0]) & (tq <= imu_full.t[-1]))
    if len(idx) < MIN_PAIRS:
        raise ValueError(f"only {len(idx)} samples overlap after shifting by {offset:.4f} s")
    return idx, downsample_interpolate(imu_full, tq[idx])


def aligned_from_resample(imu_full: ImuDerived, t_lidar, offset: float) -> AlignedImu:
    idx, s = resample_shifted(imu_full, t_lidar, offset)
    return AlignedImu(idx, s.w, s.a, trimmed=len(t_lidar) - len(idx))


# -- translation / accel bias / gravity ----------------------------------------


def lidar_body_accel(a_G, R_GL, g) -> np.ndarray:
    """LiDAR acceleration in its own body frame: ``R^T (a_G - g)``; batched over rows."""
    a_G = np.asarray(a_G, dtype=float)
    R_GL = np.asarray(R_GL, dtype=float)
    if R_GL.ndim == 2:
        return R_GL.T @ (a_G - g)
    return np.einsum("nji,nj->ni", R_GL, a_G - g)


def gravity_basis(g) -> np.ndarray:
    """Deterministic orthonormal ``3x2`` basis of the plane orthogonal to ``g``."""
    u = np.asarray(g, dtype=float) / np.linalg.norm(g)
    e = np.eye(3)[int(np.argmin(np.abs(u)))]
    b1 = np.cross(u, e)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(u, b1)
    return np.column_stack([b1, b2])


MAX_GRAVITY_STEP = 0.3


def retract_gravity(g, delta, norm: float = GRAVITY) -> np.ndarray:
    """Rotate ``g`` by the tangent step ``delta`` (rad) and restore its norm."""
    g_new = so3_exp(gravity_basis(g) @ delta) @ g
    return norm * g_new / np.linalg.norm(g_new)


def translation_regressor(w_L, alpha_L) -> np.ndarray:
    """Per-sample ``[w]^2 + [alpha]`` blocks, shape ``(N, 3, 3)``."""
    W = skew_batch(w_L)
    return W @ W + skew_batch(alpha_L)


def trans_grav_residuals(params, R_IL, a_I, a_G, R_GL, M):
    """Residuals ``R_IL^T (a_I - b_a) - R_GL^T (a_G - g) - M p`` and Jacobian.

    ``params = (p_LI, b_a, g)``; tangent ``[dp, db, dg (2)]``.
    """
    p, b, g = params
    a_L = lidar_body_accel(a_G, R_GL, g)
    r = (a_I - b) @ R_IL - a_L - np.einsum("nij,j->ni", M, p)
    n = len(a_I)
    J = np.zeros((n, 3, 8))
    J[:, :, 0:3] = -M
    J[:, :, 3:6] = -R_IL.T
    dg = -skew(g) @ gravity_basis(g)
    J[:, :, 6:8] = np.einsum("nji,jk->nik", R_GL, dg)
    return r.reshape(-1), J.reshape(3 * n, 8)


def retract_trans_grav(params, step, norm: float = GRAVITY, max_angle: float = MAX_GRAVITY_STEP):
    """Apply ``[dp, db, dg]``; the whole step is shortened so ``g`` turns at most ``max_angle``."""
    p, b, g = params
    turn = np.linalg.norm(step[6:8])
    if turn > max_angle:
        step = step * (max_angle / turn)
    return p + step[0:3], b + step[3:6], retract_gravity(g, step[6:8], norm)


def solve_trans_bias_gravity(
    lidar: LidarDerived,
    aligned: AlignedImu,
    rot: RotTimeSolution,
    max_iter: int = 50,
    step_tol: float = 1e-8,
    min_singular: float = 1e-8,
    check_excitation: bool = True,
    loss: str = "squared",
    g0=(0.0, 0.0, GRAVITY),
    second_start: bool = True,
) -> TransGravSolution:
    """Lever arm, accelerometer bias and gravity with ``|g| = 9.81``.

    Starts from ``(0, 0, 9.81 e3)``. A quadratic cost restricted to the
    gravity sphere can hold a second local minimum near the antipode of the
    true vector (where a large ``b_a`` compensates), so with
    ``second_start`` the solve is repeated from ``-g0`` and the lower-cost
    solution is kept. Raises :class:`InsufficientExcitation`
    when the normalized smallest singular value of the translation
    regressor's Gram matrix is below ``min_singular``.
    """
    k = aligned.lidar_index
    if len(k) < MIN_PAIRS:
        raise ValueError(f"only {len(k)} aligned samples (need {MIN_PAIRS})")
    M = translation_regressor(lidar.w[k], lidar.alpha[k])
    if check_excitation:
        gram = np.einsum("nji,njk->ik", M, M)
        s_min = np.linalg.svd(gram, compute_uv=False)[-1] / len(k)
        if s_min < min_singular:
            raise InsufficientExcitation(
                f"translation regressor near-singular (normalized sigma_min {s_min:.3g})"
            )
    R_IL = rot.R_IL
    a_I, a_G, R_GL = aligned.a, lidar.a[k], lidar.R[k]

    fn = lambda x: trans_grav_residuals(x, R_IL, a_I, a_G, R_GL, M)  # noqa: E731
    weight_fn = huber_weights(3) if loss == "huber" else None
    g0 = GRAVITY * np.asarray(g0, dtype=float) / np.linalg.norm(g0)
    res: SolverResult | None = None
    failure = None
    starts = (g0, -g0) if second_start else (g0,)
    for g_init in starts:
        try:
            cand = damped_gauss_newton(
                fn,
                (np.zeros(3), np.zeros(3), g_init),
                retract_trans_grav,
                max_iter=max_iter,
                step_tol=step_tol,
                weight_fn=weight_fn,
            )
        except SolverDivergence as e:
            failure = e
            continue
        if res is None or cand.cost < res.cost:
            res = cand
    if res is None:
        raise failure
    p, b, g = res.x
    return TransGravSolution(
        p_LI=p,
        p_IL=-R_IL @ p,
        b_a=b,
        gravity=g,
        final_cost=res.cost,
        iterations=res.iterations,
        converged=res.converged,
        n_pairs=len(k),
    )
