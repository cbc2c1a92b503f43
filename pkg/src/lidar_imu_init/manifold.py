"""SO(3) primitives and the boxplus/boxminus operations on SO(3) x R^n.

A manifold point is a pair ``(R, a)`` where ``R`` is a 3x3 rotation matrix
and ``a`` is a flat vector holding the Euclidean factors. Tangent deltas are
flat vectors ``[r, b]`` with the rotation part first.
"""

from __future__ import annotations

import numpy as np

SMALL_ANGLE = 1e-8
ORTHONORMAL_TOL = 1e-6


def skew(v) -> np.ndarray:
    """Hat operator: ``skew(v) @ u == np.cross(v, u)``."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def skew_batch(v: np.ndarray) -> np.ndarray:
    """Hat operator applied row-wise to an ``(N, 3)`` array."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee(M) -> np.ndarray:
    """Inverse of :func:`skew` (uses the antisymmetric part of ``M``)."""
    M = np.asarray(M, dtype=float)
    return 0.5 * np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])


def so3_exp(r) -> np.ndarray:
    """Exponential map R^3 -> SO(3) via Rodrigues' formula.

    Below ``SMALL_ANGLE`` the coefficients are replaced by their
    second-order Taylor expansions.
    """
    r = np.asarray(r, dtype=float).reshape(3)
    theta2 = float(r @ r)
    theta = np.sqrt(theta2)
    K = skew(r)
    if theta < SMALL_ANGLE:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    return np.eye(3) + a * K + b * (K @ K)


def so3_exp_batch(r: np.ndarray) -> np.ndarray:
    """Vectorized :func:`so3_exp` over an ``(N, 3)`` array."""
    r = np.asarray(r, dtype=float)
    theta2 = np.einsum("...i,...i->...", r, r)
    theta = np.sqrt(theta2)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    K = skew_batch(r)
    return np.eye(3) + a[..., None, None] * K + b[..., None, None] * (K @ K)


def orthonormality_residual(R) -> float:
    R = np.asarray(R, dtype=float)
    return float(np.max(np.abs(R @ R.T - np.eye(3))))


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return orthonormality_residual(R) <= tol and abs(np.linalg.det(R) - 1.0) <= tol


def so3_log(R) -> np.ndarray:
    """Logarithm map SO(3) -> R^3 with ``||r|| <= pi``.

    Raises:
        ValueError: if ``R`` is not orthonormal to within 1e-6 or has
            negative determinant.
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {R.shape}")
    if orthonormality_residual(R) > ORTHONORMAL_TOL or np.linalg.det(R) < 0:
        raise ValueError("so3_log: input is not a rotation matrix")

    cos_theta = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    w = vee(R)  # sin(theta) * axis
    sin_theta = np.linalg.norm(w)

    if cos_theta > 0.0:
        # sin is the well-conditioned ingredient away from pi
        theta = np.arctan2(sin_theta, cos_theta)
        if theta < SMALL_ANGLE:
            return w * (1.0 + theta**2 / 6.0)
        return w * (theta / sin_theta)

    theta = np.arctan2(sin_theta, cos_theta)
    # near pi: axis from the symmetric part, largest diagonal first
    S = 0.5 * (R + R.T) - cos_theta * np.eye(3)
    i = int(np.argmax(np.diag(S)))
    axis = S[i] / np.sqrt(max(S[i, i], 1e-300))
    axis /= np.linalg.norm(axis)
    # resolve the sign using the antisymmetric part
    if axis @ w < 0.0:
        axis = -axis
    return axis * theta


def so3_right_jacobian(r) -> np.ndarray:
    """Right Jacobian: ``Exp(r + d) ~= Exp(r) Exp(Jr(r) d)``."""
    r = np.asarray(r, dtype=float).reshape(3)
    theta2 = float(r @ r)
    theta = np.sqrt(theta2)
    K = skew(r)
    if theta < 1e-5:
        a = 0.5 - theta2 / 24.0
        b = 1.0 / 6.0 - theta2 / 120.0
    else:
        a = (1.0 - np.cos(theta)) / theta2
        b = (theta - np.sin(theta)) / (theta2 * theta)
    return np.eye(3) - a * K + b * (K @ K)


def so3_right_jacobian_batch(r: np.ndarray) -> np.ndarray:
    """Vectorized :func:`so3_right_jacobian` over an ``(N, 3)`` array."""
    r = np.asarray(r, dtype=float)
    theta2 = np.einsum("...i,...i->...", r, r)
    theta = np.sqrt(theta2)
    small = theta < 1e-5
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    b = np.where(small, 1.0 / 6.0 - theta2 / 120.0, (safe - np.sin(safe)) / safe**3)
    K = skew_batch(r)
    return np.eye(3) - a[..., None, None] * K + b[..., None, None] * (K @ K)


def so3_right_jacobian_inv(r) -> np.ndarray:
    """Inverse of :func:`so3_right_jacobian`."""
    r = np.asarray(r, dtype=float).reshape(3)
    theta2 = float(r @ r)
    theta = np.sqrt(theta2)
    K = skew(r)
    if theta < 1e-5:
        c = 1.0 / 12.0 + theta2 / 720.0
    else:
        c = 1.0 / theta2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) + 0.5 * K + c * (K @ K)


def project_to_so3(M) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def rotation_angle_deg(R_a, R_b) -> float:
    """Geodesic distance between two rotations in degrees."""
    return float(np.degrees(np.linalg.norm(so3_log(project_to_so3(R_a.T @ R_b)))))


def _split(x):
    R, a = x
    return np.asarray(R, dtype=float), np.asarray(a, dtype=float).reshape(-1)


def boxplus(x, u):
    """``(R, a) [+] (r, b) = (R Exp(r), a + b)``."""
    R, a = _split(x)
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != 3 + a.size:
        raise ValueError(f"tangent size {u.size} does not match manifold size {3 + a.size}")
    return R @ so3_exp(u[:3]), a + u[3:]


def boxminus(x1, x2) -> np.ndarray:
    """``(R1, a) [-] (R2, b) = (Log(R2^T R1), a - b)``."""
    R1, a = _split(x1)
    R2, b = _split(x2)
    if a.size != b.size:
        raise ValueError(f"manifold sizes differ: {a.size} vs {b.size}")
    return np.concatenate([so3_log(project_to_so3(R2.T @ R1)), a - b])
