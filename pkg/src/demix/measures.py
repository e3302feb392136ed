"""Conditioning measures of a demixing instance.

Four incoherence quantities relate the low-rank factors (U, V), the
dictionary R, and the sparse support:

* ``mu``        worst-case fraction of a dictionary-sparse matrix's energy
                captured by the low-rank subspace,
* ``gamma_ur``  alignment of dictionary columns with the column space of U,
* ``gamma_v``   largest squared row norm of V,
* ``xi``        largest absolute entry of R' U V'.

Dictionary conditioning is reported as frame bounds (tight singular-value
bounds) when d <= n and as a restricted isometry constant of order k when
d > n; the exact constant is combinatorial, so a Monte Carlo lower bound is
returned (and flagged) when enumeration is too large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, islice

import numpy as np
import scipy.linalg

from .errors import DegenerateSupportError
from .model import DemixInstance, GroundTruth, SupportSet

__all__ = [
    "RIC_EXACT_LIMIT",
    "IncoherenceReport",
    "frame_bounds",
    "estimate_ric",
    "incoherence_mu",
    "gamma_ur",
    "gamma_v",
    "xi_value",
    "full_report",
]

# Exact restricted-isometry enumeration refuses above this many supports.
RIC_EXACT_LIMIT = 10**6
_RIC_CHUNK = 32768
_DEGENERACY_RTOL = 1e-12


@dataclass(frozen=True)
class IncoherenceReport:
    """All conditioning quantities for one instance.

    Exactly one of the (f_lower, f_upper) pair and (ric_delta, ric_exact, k)
    triple is populated, depending on the regime; the other side is None.
    """

    mu: float
    gamma_ur: float
    gamma_v: float
    xi: float
    regime: str  # "thin" (d <= n) or "fat" (d > n)
    f_lower: float | None = None
    f_upper: float | None = None
    ric_delta: float | None = None
    ric_exact: bool | None = None
    k: int | None = None


def frame_bounds(R) -> tuple[float, float]:
    """Tightest constants (F_L, F_U) with F_L ||v||^2 <= ||Rv||^2 <= F_U ||v||^2.

    These are the extreme squared singular values of R. When d > n the map
    has a nontrivial kernel and F_L = 0 is returned.
    """
    R = np.asarray(R, dtype=float)
    sv = np.linalg.svd(R, compute_uv=False)
    f_upper = float(sv[0] ** 2)
    f_lower = float(sv[-1] ** 2) if R.shape[1] <= R.shape[0] else 0.0
    return f_lower, f_upper


def _ric_of_grams(grams: np.ndarray) -> float:
    """max over stacked k x k Gram matrices of max(eig_max - 1, 1 - eig_min)."""
    eigs = np.linalg.eigvalsh(grams)
    return float(np.maximum(eigs[:, -1] - 1.0, 1.0 - eigs[:, 0]).max())


def estimate_ric(
    R,
    k: int,
    mode: str = "exact",
    samples: int = 1000,
    seed: int = 0,
) -> tuple[float, bool]:
    """Restricted isometry constant of order k.

    ``mode="exact"`` enumerates every k-column submatrix and is refused when
    there are more than ``RIC_EXACT_LIMIT`` of them; ``mode="monte_carlo"``
    samples supports uniformly and returns a lower bound. The second element
    of the result is True only for the exact value.
    """
    R = np.asarray(R, dtype=float)
    d = R.shape[1]
    if not 1 <= k <= d:
        raise ValueError(f"k must lie in [1, {d}], got {k}")
    G = R.T @ R
    if mode == "exact":
        total = math.comb(d, k)
        if total > RIC_EXACT_LIMIT:
            raise ValueError(
                f"exact enumeration needs {total} supports (> {RIC_EXACT_LIMIT}); "
                "use mode='monte_carlo'"
            )
        delta = 0.0
        it = combinations(range(d), k)
        while True:
            chunk = np.array(list(islice(it, _RIC_CHUNK)), dtype=np.intp)
            if chunk.size == 0:
                break
            grams = G[chunk[:, :, None], chunk[:, None, :]]
            delta = max(delta, _ric_of_grams(grams))
        return delta, True
    if mode == "monte_carlo":
        if samples < 1:
            raise ValueError("samples must be positive")
        rng = np.random.default_rng(seed)
        delta = 0.0
        remaining = samples
        while remaining > 0:
            batch = min(remaining, _RIC_CHUNK)
            # uniform k-subsets: first k entries of random permutations
            idx = np.argsort(rng.random((batch, d)), axis=1)[:, :k]
            grams = G[idx[:, :, None], idx[:, None, :]]
            delta = max(delta, _ric_of_grams(grams))
            remaining -= batch
        return delta, False
    raise ValueError(f"unknown mode {mode!r}; expected 'exact' or 'monte_carlo'")


def _support_gram_factors(R, U, support: SupportSet):
    """Index the two small Gram factors onto the support coordinates."""
    G = R.T @ R
    if U.shape[1]:
        PU_R = U @ (U.T @ R)
        K = R.T @ PU_R
    else:
        K = np.zeros_like(G)
    ii, jj = support.rows, support.cols
    return G[np.ix_(ii, ii)], K[np.ix_(ii, ii)]


def incoherence_mu(R, U, V, support: SupportSet) -> float:
    """Largest ratio ||P_phi(R H)||_F / ||R H||_F over nonzero H on the support.

    Parametrizing H by its s support coefficients turns this into an s x s
    symmetric-definite generalized eigenproblem, assembled in closed form:
    with G = R'R, K = R'PuR, W = VV', the numerator Gram is
    K o I + (G - K) o W and the denominator Gram is G o I (o meaning entry
    selection onto support coordinate pairs).
    """
    R = np.asarray(R, dtype=float)
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if len(support) == 0:
        raise ValueError("support must be nonempty")
    ii, jj = support.rows, support.cols
    if ii.max() >= R.shape[1] or jj.max() >= V.shape[0]:
        raise ValueError("support index out of range for this instance")
    Gs, Ks = _support_gram_factors(R, U, support)
    same_col = (jj[:, None] == jj[None, :]).astype(float)
    NtN = Gs * same_col
    eig_n = np.linalg.eigvalsh(NtN)
    if eig_n[0] <= _DEGENERACY_RTOL * max(eig_n[-1], 1.0):
        raise DegenerateSupportError(
            "some direction on the support maps to (numerically) zero under R; "
            f"smallest denominator eigenvalue {eig_n[0]:.3e}"
        )
    if U.shape[1]:
        W = V @ V.T
        MtM = Ks * same_col + (Gs - Ks) * W[np.ix_(jj, jj)]
    else:
        return 0.0
    vals = scipy.linalg.eigh(MtM, NtN, eigvals_only=True)
    return float(np.sqrt(max(vals[-1], 0.0)))


def gamma_ur(R, U) -> float:
    """max_i ||Pu R e_i||^2 / ||R e_i||^2 over dictionary columns."""
    R = np.asarray(R, dtype=float)
    U = np.asarray(U, dtype=float)
    col_sq = np.sum(R * R, axis=0)
    if np.any(col_sq == 0.0):
        raise ValueError("dictionary has a zero column")
    if U.shape[1] == 0:
        return 0.0
    proj_sq = np.sum((U.T @ R) ** 2, axis=0)
    return float(np.max(proj_sq / col_sq))


def gamma_v(V, m: int) -> float:
    """max_i ||Pv e_i||^2, the largest squared row norm of V."""
    V = np.asarray(V, dtype=float)
    if V.shape[0] != m:
        raise ValueError(f"V has {V.shape[0]} rows, expected {m}")
    if V.shape[1] == 0:
        return 0.0
    return float(np.max(np.sum(V * V, axis=1)))


def xi_value(R, U, V) -> float:
    """Largest absolute entry of R' U V'."""
    R = np.asarray(R, dtype=float)
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.shape[1] == 0:
        return 0.0
    return float(np.abs((R.T @ U) @ V.T).max())


def default_rip_order(truth: GroundTruth) -> int:
    """Largest column sparsity of the planted coefficients (at least 1)."""
    if truth.s == 0:
        return 1
    counts = np.bincount(truth.support.cols, minlength=truth.m)
    return max(int(counts.max()), 1)


def full_report(
    instance: DemixInstance,
    truth: GroundTruth,
    k: int | None = None,
    ric_samples: int = 2000,
    ric_seed: int = 0,
) -> IncoherenceReport:
    """Measure every conditioning quantity of a planted instance.

    Frame bounds are reported for thin dictionaries (d <= n), a restricted
    isometry constant of order ``k`` for fat ones; ``k`` defaults to the
    largest column sparsity of the planted coefficients. An instance with an
    empty support has mu = 0 by convention (there is no dictionary-sparse
    direction to align).
    """
    R, U, V = instance.R, truth.U, truth.V
    mu = 0.0 if truth.s == 0 else incoherence_mu(R, U, V, truth.support)
    g_ur = gamma_ur(R, U)
    g_v = gamma_v(V, instance.m)
    xi = xi_value(R, U, V)
    if instance.d <= instance.n:
        f_lower, f_upper = frame_bounds(R)
        return IncoherenceReport(
            mu=mu, gamma_ur=g_ur, gamma_v=g_v, xi=xi, regime="thin",
            f_lower=f_lower, f_upper=f_upper,
        )
    k = k if k is not None else default_rip_order(truth)
    if math.comb(instance.d, k) <= RIC_EXACT_LIMIT:
        delta, exact = estimate_ric(R, k, mode="exact")
    else:
        delta, exact = estimate_ric(
            R, k, mode="monte_carlo", samples=ric_samples, seed=ric_seed
        )
    return IncoherenceReport(
        mu=mu, gamma_ur=g_ur, gamma_v=g_v, xi=xi, regime="fat",
        ric_delta=delta, ric_exact=exact, k=k,
    )
