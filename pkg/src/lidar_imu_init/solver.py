"""Small dense damped Gauss-Newton solver with a user-supplied retraction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np


class SolverDivergence(RuntimeError):
    """Damping gave up; ``result`` is the last accepted iterate and its history."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


@dataclass
class SolverResult:
    x: Any
    cost: float
    iterations: int
    converged: bool
    cost_history: list = field(default_factory=list)
    lam: float = 0.0


def damped_gauss_newton(
    residual_fn: Callable[[Any], tuple[np.ndarray, np.ndarray]],
    x0: Any,
    retract: Callable[[Any, np.ndarray], Any],
    max_iter: int = 50,
    step_tol: float = 1e-8,
    lam0: float = 1e-4,
    lam_down: float = 0.3,
    lam_up: float = 3.0,
    max_retries: int = 5,
    weight_fn: Callable[[np.ndarray], np.ndarray] | None = None,
) -> SolverResult:
    """Minimize ``sum(r(x)**2)`` by Levenberg-damped Gauss-Newton steps.

    ``residual_fn(x)`` returns the stacked residual vector and its Jacobian
    with respect to the local tangent coordinates at ``x``; ``retract(x, d)``
    applies a tangent step. ``weight_fn`` optionally maps residuals to
    per-entry IRLS weights (robust losses).

    Raises:
        SolverDivergence: when ``max_retries`` consecutive damped retries all
            increase the cost.
    """
    x = x0
    r, J = residual_fn(x)
    w = weight_fn(r) if weight_fn is not None else None
    cost = _cost(r, w)
    history = [cost]
    lam = lam0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if w is None:
            A, g = J.T @ J, J.T @ r
        else:
            A, g = J.T @ (w[:, None] * J), J.T @ (w * r)
        accepted = False
        for _ in range(max_retries):
            step = -np.linalg.solve(A + lam * np.eye(A.shape[0]), g)
            x_new = retract(x, step)
            r_new, J_new = residual_fn(x_new)
            cost_new = _cost(r_new, w)
            if cost_new <= cost:
                accepted = True
                break
            lam *= lam_up
        if not accepted:
            if np.linalg.norm(step) < step_tol or cost_new - cost <= 1e-12 * cost + 1e-30:
                # numerically at the minimum: rejections are roundoff only
                converged = True
                break
            raise SolverDivergence(f"cost increased on {max_retries} consecutive damped retries",
                                   SolverResult(x, cost, it - 1, False, history, lam))
        x, r, J = x_new, r_new, J_new
        lam = max(lam * lam_down, 1e-12)
        if weight_fn is not None:
            w = weight_fn(r)
            cost_new = _cost(r, w)
        cost = cost_new
        history.append(cost)
        if np.linalg.norm(step) < step_tol:
            converged = True
            break
    return SolverResult(x, float(_cost(r, w)), it, converged, history, lam)


def _cost(r, w=None) -> float:
    return float(r @ r) if w is None else float(r @ (w * r))


def huber_weights(dim: int, scale: float | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """IRLS weights for a Huber loss on per-sample residual norms.

    Residuals are grouped in blocks of ``dim``. The default scale is three
    times the MAD-based sigma of the block norms.
    """

    def weights(r: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(r.reshape(-1, dim), axis=1)
        c = scale
        if c is None:
            mad = np.median(np.abs(norms - np.median(norms)))
            c = 3.0 * 1.4826 * mad
        if c <= 0:
            return np.ones_like(r)
        wb = np.where(norms <= c, 1.0, c / np.maximum(norms, 1e-300))
        return np.repeat(wb, dim)

    return weights
