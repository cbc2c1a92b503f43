"""Constant-velocity LiDAR odometry filter (error-state iterated Kalman filter).

State ``x = (R, p, v, w)``: attitude and position of the LiDAR in the global
frame, linear velocity in the global frame and angular velocity in the LiDAR
body frame. The 12-dim error state is ordered (rotation, position, velocity,
angular velocity).

The measurement model is a point-to-plane distance against known world
planes; the association of each point to its plane is supplied by the
caller (in tests and ``run_lo_sim`` it comes from the simulator).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .manifold import (
    boxminus,
    boxplus,
    skew_batch,
    so3_exp,
    so3_exp_batch,
    so3_right_jacobian,
    so3_right_jacobian_batch,
)

logger = logging.getLogger(__name__)

DIM = 12
ROT, POS, VEL, OMG = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12)


@dataclass(frozen=True)
class CvState:
    R: np.ndarray
    p: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float).reshape(3, 3))
        for name in ("p", "v", "w"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "CvState":
        return cls(np.eye(3), np.zeros(3), np.zeros(3), np.zeros(3))

    def as_manifold(self):
        return self.R, np.concatenate([self.p, self.v, self.w])

    @classmethod
    def from_manifold(cls, x) -> "CvState":
        R, a = x
        return cls(R, a[0:3], a[3:6], a[6:9])

    def plus(self, delta) -> "CvState":
        return CvState.from_manifold(boxplus(self.as_manifold(), delta))

    def minus(self, other: "CvState") -> np.ndarray:
        return boxminus(self.as_manifold(), other.as_manifold())


@dataclass(frozen=True)
class ProcessNoise:
    """Continuous-time random-walk densities for velocity and angular velocity.

    ``vel`` in (m/s)^2/s and ``omega`` in (rad/s)^2/s, per axis.
    """

    vel: float = 0.1
    omega: float = 0.1

    def __post_init__(self):
        if self.vel < 0 or self.omega < 0:
            raise ValueError("process noise densities must be nonnegative")

    def discrete(self, dt: float) -> np.ndarray:
        # F_w carries a factor dt on each side, so Q_d = q / dt gives q * dt growth
        return np.diag([self.vel] * 3 + [self.omega] * 3) / dt


@dataclass(frozen=True)
class PlaneLandmark:
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError("plane normal must be nonzero")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "offset", float(self.offset))

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.normal - self.offset


@dataclass
class Scan:
    """Timed points in their sampling frames with optional plane association.

    ``points`` is ``(N, 3)`` in the body frame at each point's own timestamp;
    ``times`` holds the per-point timestamps; ``normals``/``offsets`` describe
    the associated world plane of each point.
    """

    points: np.ndarray
    times: np.ndarray
    normals: np.ndarray | None = None
    offsets: np.ndarray | None = None
    t_start: float | None = None
    t_end: float | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        if self.points.shape[0] != self.times.shape[0]:
            raise ValueError("points and times must have equal length")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            self.offsets = np.asarray(self.offsets, dtype=float).reshape(-1)
        if len(self.times):
            if self.t_start is None:
                self.t_start = float(self.times.min())
            if self.t_end is None:
                self.t_end = float(self.times.max())

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, mask, t_start=None, t_end=None) -> "Scan":
        return Scan(
            self.points[mask],
            self.times[mask],
            None if self.normals is None else self.normals[mask],
            None if self.offsets is None else self.offsets[mask],
            t_start,
            t_end,
        )


def transition_jacobians(x: CvState, dt: float, exact: bool = True):
    """Error-state transition Jacobians ``(F_x, F_w)`` of the CV model.

    With ``exact=False`` the rotation/angular-velocity block is the
    first-order ``I * dt``; the default uses ``Jr(w dt) dt``, which is the
    true derivative of the propagation and agrees with the former to
    first order in ``w dt``.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    F_x = np.eye(DIM)
    F_x[ROT, ROT] = so3_exp(-x.w * dt)
    F_x[ROT, OMG] = (so3_right_jacobian(x.w * dt) if exact else np.eye(3)) * dt
    F_x[POS, VEL] = np.eye(3) * dt
    F_w = np.zeros((DIM, 6))
    F_w[VEL, 0:3] = np.eye(3) * dt
    F_w[OMG, 3:6] = np.eye(3) * dt
    return F_x, F_w


def propagate_state(x: CvState, dt: float) -> CvState:
    return CvState(x.R @ so3_exp(x.w * dt), x.p + x.v * dt, x.v, x.w)


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def predict(x: CvState, P: np.ndarray, dt: float, Q: ProcessNoise):
    """State prediction ``x [+] dt f(x, 0)`` and covariance propagation."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    F_x, F_w = transition_jacobians(x, dt)
    P_new = F_x @ P @ F_x.T + F_w @ Q.discrete(dt) @ F_w.T
    return propagate_state(x, dt), symmetrize(P_new)


def compensate_points(x: CvState, points, times, t_end: float) -> np.ndarray:
    """Project per-point measurements into the scan-end frame ``L_{k+1}``.

    Uses the CV relative transform ``R = Exp(-w dt_j)``,
    ``p = -R_G^T v dt_j`` with ``dt_j = t_end - rho_j``.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    times = np.asarray(times, dtype=float).reshape(-1)
    dtj = t_end - times
    if np.any(dtj < -1e-12):
        raise ValueError("point timestamp later than scan end")
    rel = so3_exp_batch(-dtj[:, None] * x.w)
    shift = -(x.R.T @ x.v)
    return np.einsum("nij,nj->ni", rel, points) + dtj[:, None] * shift


def compensate_point(x: CvState, point, rho: float, t_end: float) -> np.ndarray:
    return compensate_points(x, point, [rho], t_end)[0]


def split_scan(scan: Scan, n: int):
    """Partition a scan into ``n`` sub-scans of equal duration.

    Returns ``(sub_scans, boundaries)`` where ``boundaries`` has ``n + 1``
    timestamps and sub-scan ``i`` covers ``(boundaries[i], boundaries[i+1]]``
    (the first one also includes its left edge).
    """
    if n < 1:
        raise ValueError(f"sub-frame count must be >= 1, got {n}")
    if len(scan) == 0:
        raise ValueError("cannot split an empty scan")
    t0 = scan.t_start if scan.t_start is not None else float(scan.times.min())
    t1 = scan.t_end if scan.t_end is not None else float(scan.times.max())
    bounds = np.linspace(t0, t1, n + 1)
    # searchsorted(side="left") maps rho in (b_i, b_{i+1}] to bin i
    idx = np.clip(np.searchsorted(bounds, scan.times, side="left") - 1, 0, n - 1)
    subs = [scan.subset(idx == i, bounds[i], bounds[i + 1]) for i in range(n)]
    return subs, bounds


def _residuals_and_jacobian(x: CvState, scan: Scan, t_end: float, compensate: bool):
    dtj = (t_end - scan.times) if compensate else np.zeros(len(scan))
    E = so3_exp_batch(-dtj[:, None] * x.w)
    Ep = np.einsum("nij,nj->ni", E, scan.points)
    world = Ep @ x.R.T + x.p - dtj[:, None] * x.v
    n = scan.normals
    z = np.einsum("ni,ni->n", n, world) - scan.offsets

    H = np.zeros((len(scan), DIM))
    nR = n @ x.R  # rows n^T R
    # d world / d rot = -R [E p]x
    H[:, ROT] = -np.einsum("ni,nij->nj", nR, skew_batch(Ep))
    H[:, POS] = n
    H[:, VEL] = -dtj[:, None] * n
    if compensate:
        # d world / d w = R E [p]x Jr(-w dt_j) dt_j
        nRE = np.einsum("ni,nij->nj", nR, E)
        tmp = np.einsum("ni,nij->nj", nRE, skew_batch(scan.points))
        Jr = so3_right_jacobian_batch(-dtj[:, None] * x.w)
        H[:, OMG] = np.einsum("ni,nij->nj", tmp, Jr) * dtj[:, None]
    return z, H


@dataclass
class UpdateResult:
    state: CvState
    P: np.ndarray
    converged: bool
    iterations: int
    residuals: np.ndarray = field(repr=False)


def _pinv_psd(S, scale, rcond=1e-12):
    """Pseudo-inverse of a PSD matrix; eigenvalues below ``rcond * max(lambda_max, scale)`` are dropped.

    ``scale`` keeps a collapsed (roundoff-only) prior covariance from being
    inverted as if it carried information.
    """
    w, V = np.linalg.eigh(S)
    cut = rcond * max(float(w[-1]), scale)
    inv = np.zeros_like(w)
    keep = w > cut
    inv[keep] = 1.0 / w[keep]
    return (V * inv) @ V.T


def iterated_update(
    x_pred: CvState,
    P_pred: np.ndarray,
    scan: Scan,
    t_end: float | None = None,
    meas_sigma: float = 0.02,
    max_iter: int = 10,
    tol: float = 1e-6,
    compensate: bool = True,
) -> UpdateResult:
    """Iterated error-state Kalman update with point-to-plane residuals.

    Points are re-compensated with the refreshed state at every iteration.
    """
    if len(scan) == 0 or scan.normals is None:
        raise ValueError("iterated_update needs a non-empty list of plane associations")
    if t_end is None:
        t_end = scan.t_end
    var = meas_sigma**2
    x = x_pred
    converged = False
    it = 0
    K = H = None
    P_proj = P_pred
    for it in range(1, max_iter + 1):
        z, H = _residuals_and_jacobian(x, scan, t_end, compensate)
        e = x.minus(x_pred)
        J_inv = np.eye(DIM)
        J_inv[ROT, ROT] = so3_right_jacobian(e[ROT])
        P_proj = J_inv @ P_pred @ J_inv.T
        S = H @ P_proj @ H.T + var * np.eye(len(z))
        PHt = P_proj @ H.T
        if var > 0.0:
            K = np.linalg.solve(S, PHt.T).T
        else:
            K = PHt @ _pinv_psd(S, np.sum(H * H) / len(z))
        delta = -K @ z - (np.eye(DIM) - K @ H) @ (J_inv @ e)
        x = x.plus(delta)
        if np.linalg.norm(delta) < tol:
            converged = True
            break
    z, H = _residuals_and_jacobian(x, scan, t_end, compensate)
    P_new = symmetrize((np.eye(DIM) - K @ H) @ P_proj)
    return UpdateResult(x, P_new, converged, it, z)


class CvOdometry:
    """Sequential filter driving predict / update over incoming sub-scans."""

    def __init__(
        self,
        x0: CvState,
        P0: np.ndarray,
        t0: float,
        Q: ProcessNoise | None = None,
        meas_sigma: float = 0.02,
        max_iter: int = 10,
        tol: float = 1e-6,
        compensate: bool = True,
    ):
        self.x = x0
        self.P = np.array(P0, dtype=float)
        self.t = float(t0)
        self.Q = Q or ProcessNoise()
        self.meas_sigma = meas_sigma
        self.max_iter = max_iter
        self.tol = tol
        self.compensate = compensate

    def step(self, scan: Scan, t_end: float) -> UpdateResult:
        dt = t_end - self.t
        x_pred, P_pred = predict(self.x, self.P, dt, self.Q)
        res = iterated_update(
            x_pred, P_pred, scan, t_end, self.meas_sigma, self.max_iter, self.tol, self.compensate
        )
        self.x, self.P, self.t = res.state, res.P, t_end
        return res
