"""Proximal operators for the two regularizers: entrywise l1 and nuclear norm."""

from __future__ import annotations

import numpy as np

__all__ = ["RANK_EPS", "soft_threshold", "singular_value_threshold"]

# Shrunk singular values at or below this count as exactly zero for rank
# reporting, keeping rank_after deterministic.
RANK_EPS = 1e-12


def soft_threshold(M, tau: float) -> np.ndarray:
    """Entrywise shrinkage sign(x) * max(|x| - tau, 0), the prox of tau*||.||_1."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    M = np.asarray(M, dtype=float)
    return np.sign(M) * np.maximum(np.abs(M) - tau, 0.0)


def _shrink_svd(M: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Shared core: returns the reassembled matrix and the kept (shrunk)
    singular values."""
    U, sv, Vt = np.linalg.svd(M, full_matrices=False)
    shrunk = np.maximum(sv - tau, 0.0)
    keep = shrunk > RANK_EPS
    kept = shrunk[keep]
    if kept.size == 0:
        return np.zeros_like(M), kept
    return (U[:, keep] * kept) @ Vt[keep], kept


def singular_value_threshold(M, tau: float) -> tuple[np.ndarray, int]:
    """Shrink singular values by tau, the prox of tau*||.||_*.

    Returns the reassembled matrix and the number of singular values that
    survive the shrinkage. SVD failures propagate as
    ``numpy.linalg.LinAlgError``.
    """
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    M = np.asarray(M, dtype=float)
    out, kept = _shrink_svd(M, tau)
    return out, int(kept.size)
