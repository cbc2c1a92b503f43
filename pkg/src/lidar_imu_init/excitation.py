"""Excitation assessment from the rotation and translation Jacobian Gram matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifold import skew_batch

ROT_THRESHOLD = 0.1
TRANS_THRESHOLD = 0.25
DEGENERATE_EPS = 1e-12


@dataclass
class ExcitationReport:
    rot_gram: np.ndarray
    trans_gram: np.ndarray
    rot_singular_values: np.ndarray
    trans_singular_values: np.ndarray
    n_samples: int
    sufficient: bool
    weakest_rot_axis: np.ndarray
    weakest_trans_axis: np.ndarray
    rot_degenerate: bool
    trans_degenerate: bool
    rot_threshold: float
    trans_threshold: float

    @property
    def verdict(self) -> str:
        return "sufficient" if self.sufficient else "insufficient"

    @property
    def rot_score(self) -> float:
        return float(self.rot_singular_values[-1] / max(self.n_samples, 1))

    @property
    def trans_score(self) -> float:
        return float(self.trans_singular_values[-1] / max(self.n_samples, 1))

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "n_samples": self.n_samples,
            "rot_gram": self.rot_gram.tolist(),
            "trans_gram": self.trans_gram.tolist(),
            "rot_singular_values": self.rot_singular_values.tolist(),
            "trans_singular_values": self.trans_singular_values.tolist(),
            "rot_score_normalized": self.rot_score,
            "trans_score_normalized": self.trans_score,
            "rot_threshold": self.rot_threshold,
            "trans_threshold": self.trans_threshold,
            "weakest_rot_axis": self.weakest_rot_axis.tolist(),
            "weakest_trans_axis": self.weakest_trans_axis.tolist(),
            "rot_degenerate": self.rot_degenerate,
            "trans_degenerate": self.trans_degenerate,
        }


def rotation_gram(w_L) -> np.ndarray:
    """``sum_k [w_k]^T [w_k]``; the extrinsic rotation factor of each row block cancels."""
    W = skew_batch(np.asarray(w_L, dtype=float).reshape(-1, 3))
    return np.einsum("nji,njk->ik", W, W)


def translation_gram(w_L, alpha_L) -> np.ndarray:
    """``sum_k M_k^T M_k`` with ``M_k = [w_k]^2 + [alpha_k]``."""
    w_L = np.asarray(w_L, dtype=float).reshape(-1, 3)
    alpha_L = np.asarray(alpha_L, dtype=float).reshape(-1, 3)
    if len(w_L) != len(alpha_L):
        raise ValueError("angular velocity and acceleration sequences differ in length")
    W = skew_batch(w_L)
    M = W @ W + skew_batch(alpha_L)
    return np.einsum("nji,njk->ik", M, M)


def _spectrum(G):
    U, s, _ = np.linalg.svd(0.5 * (G + G.T))
    axis = U[:, -1]
    # fix the sign so the axis is reproducible
    i = int(np.argmax(np.abs(axis)))
    if axis[i] < 0:
        axis = -axis
    return s, axis


def assess(
    rot_gram,
    trans_gram,
    n_samples: int,
    rot_threshold: float = ROT_THRESHOLD,
    trans_threshold: float = TRANS_THRESHOLD,
) -> ExcitationReport:
    """Sufficient iff both normalized smallest singular values exceed their thresholds."""
    rot_gram = np.asarray(rot_gram, dtype=float)
    trans_gram = np.asarray(trans_gram, dtype=float)
    s_r, ax_r = _spectrum(rot_gram)
    s_t, ax_t = _spectrum(trans_gram)
    n = max(int(n_samples), 1)
    rot_deg = s_r[0] <= DEGENERATE_EPS
    trans_deg = s_t[0] <= DEGENERATE_EPS
    sufficient = (
        n_samples > 0 and s_r[-1] / n >= rot_threshold and s_t[-1] / n >= trans_threshold
    )
    return ExcitationReport(
        rot_gram=rot_gram,
        trans_gram=trans_gram,
        rot_singular_values=s_r,
        trans_singular_values=s_t,
        n_samples=int(n_samples),
        sufficient=bool(sufficient),
        weakest_rot_axis=ax_r,
        weakest_trans_axis=ax_t,
        rot_degenerate=bool(rot_deg),
        trans_degenerate=bool(trans_deg),
        rot_threshold=rot_threshold,
        trans_threshold=trans_threshold,
    )


def assess_sequences(w_L, alpha_L, **thresholds) -> ExcitationReport:
    w_L = np.asarray(w_L, dtype=float).reshape(-1, 3)
    return assess(rotation_gram(w_L), translation_gram(w_L, alpha_L), len(w_L), **thresholds)


class ExcitationAccumulator:
    """Running Gram sums, re-assessed over the whole accumulated window."""

    def __init__(self, rot_threshold: float = ROT_THRESHOLD, trans_threshold: float = TRANS_THRESHOLD):
        self.rot_threshold = rot_threshold
        self.trans_threshold = trans_threshold
        self._rot = np.zeros((3, 3))
        self._trans = np.zeros((3, 3))
        self._n = 0

    def add(self, w_L, alpha_L) -> None:
        w_L = np.asarray(w_L, dtype=float).reshape(-1, 3)
        self._rot += rotation_gram(w_L)
        self._trans += translation_gram(w_L, alpha_L)
        self._n += len(w_L)

    def snapshot(self) -> ExcitationReport:
        return assess(self._rot.copy(), self._trans.copy(), self._n, self.rot_threshold, self.trans_threshold)
