"""Independent oracles and fixture builders shared across the test suite.

Everything here deliberately avoids the production code paths it checks:
dense matrices are materialized entry by entry, Gram systems come from
explicit Kronecker products, and the recovery-condition formulas are
retranscribed in plain scalar form.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from demix import (
    DemixInstance,
    GroundTruth,
    SupportSet,
    TheoryInputs,
    check_assumptions,
    full_report,
)


# ---------------------------------------------------------------------------
# prox oracle


def svt_oracle(M, tau):
    """SVD-shrink reassembly through a different LAPACK driver."""
    U, s, Vt = scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesvd")
    return U @ np.diag(np.maximum(s - tau, 0.0)) @ Vt


# ---------------------------------------------------------------------------
# incoherence oracles


def _phi_apply(Z, U, V):
    # projector formula written out locally
    Pu = U @ U.T
    Pv = V @ V.T
    return Pu @ Z + Z @ Pv - Pu @ Z @ Pv


def mu_dense_matrices(R, U, V, support):
    """Columns of the two nm x s maps, materialized one support cell at a time."""
    n = R.shape[0]
    m = V.shape[0]
    s = len(support)
    M = np.zeros((n * m, s))
    N = np.zeros((n * m, s))
    for col, (i, j) in enumerate(support):
        Z = np.zeros((n, m))
        Z[:, j] = R[:, i]
        N[:, col] = Z.ravel(order="F")
        M[:, col] = _phi_apply(Z, U, V).ravel(order="F")
    return M, N


def mu_dense_oracle(R, U, V, support):
    """Generalized eigenvalue route through the nonsymmetric solver."""
    M, N = mu_dense_matrices(R, U, V, support)
    MtM = M.T @ M
    NtN = N.T @ N
    vals = np.linalg.eigvals(np.linalg.solve(NtN, MtM))
    return math.sqrt(max(float(np.max(vals.real)), 0.0))


def mu_random_search(R, U, V, support, samples=100_000, seed=0):
    """Best ratio over random unit coefficient vectors (a lower bound)."""
    M, N = mu_dense_matrices(R, U, V, support)
    rng = np.random.default_rng(seed)
    best = 0.0
    chunk = 20_000
    done = 0
    while done < samples:
        b = min(chunk, samples - done)
        H = rng.standard_normal((b, len(support)))
        num = np.linalg.norm(H @ M.T, axis=1)
        den = np.linalg.norm(H @ N.T, axis=1)
        ok = den > 0
        if ok.any():
            best = max(best, float(np.max(num[ok] / den[ok])))
        done += b
    return best


def mu_polished_search(R, U, V, support, samples=100_000, seed=0, iters=200):
    """Random search plus generalized power iteration on the oracle matrices."""
    M, N = mu_dense_matrices(R, U, V, support)
    MtM = M.T @ M
    NtN = N.T @ N
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((min(samples, 4096), len(support)))
    num = np.linalg.norm(H @ M.T, axis=1)
    den = np.linalg.norm(H @ N.T, axis=1)
    h = H[int(np.argmax(num / den))]
    solve = scipy.linalg.lu_factor(NtN)
    for _ in range(iters):
        h = scipy.linalg.lu_solve(solve, MtM @ h)
        norm = np.linalg.norm(h)
        if norm == 0:
            break
        h /= norm
    num = float(np.linalg.norm(M @ h))
    den = float(np.linalg.norm(N @ h))
    return num / den if den > 0 else 0.0


# ---------------------------------------------------------------------------
# Gram oracles


def gram_kron_oracle(R, U, V, support):
    """Materialize the full row matrix from an explicit Kronecker product and
    multiply; rows of the d m x n m operator are gathered by support index."""
    d = R.shape[1]
    Pu = U @ U.T if U.shape[1] else np.zeros((R.shape[0], R.shape[0]))
    Pv = V @ V.T if V.shape[1] else np.zeros((V.shape[0], V.shape[0]))
    big = np.kron(np.eye(V.shape[0]) - Pv, R.T @ (np.eye(R.shape[0]) - Pu))
    rows = [i + d * j for i, j in support]
    sub = big[rows]
    return sub @ sub.T


def gram_rowbyrow_oracle(R, U, V, support):
    """Build each support row as vec((I-Pu) r_i e_j' (I-Pv)) and multiply."""
    n = R.shape[0]
    m = V.shape[0]
    Pu = U @ U.T if U.shape[1] else np.zeros((n, n))
    Pv = V @ V.T if V.shape[1] else np.zeros((m, m))
    rows = np.zeros((len(support), n * m))
    for k, (i, j) in enumerate(support):
        Z = np.zeros((n, m))
        Z[:, j] = (np.eye(n) - Pu) @ R[:, i]
        rows[k] = (Z @ (np.eye(m) - Pv)).ravel(order="F")
    return rows @ rows.T


# ---------------------------------------------------------------------------
# recovery-condition reference evaluator (scalar transcription)


def theory_reference(n, m, d, r, s, gamma_ur, gamma_v, mu, xi,
                     f_lower=None, f_upper=None, delta=None, k=None):
    """Independently coded evaluation of every closed-form quantity."""
    thin = d <= n
    if thin:
        lo = f_lower
        hi = f_upper
        cap = d
    else:
        lo = 1.0 - delta
        hi = 1.0 + delta
        cap = k
    base = min(s, cap) + s * gamma_v
    c = hi / 2.0 * ((1.0 + 2.0 * gamma_ur) * base + 2.0 * s * gamma_v) \
        - lo / 2.0 * base
    denom = lo * (1.0 - mu) ** 2 - c
    big_c = math.inf if denom == 0.0 else c / denom
    lam_min = (1.0 + big_c) / (1.0 - big_c) * xi if big_c < 1.0 else math.inf
    lam_max = (math.sqrt(lo) * (1.0 - mu) - math.sqrt(r * hi) * mu) / math.sqrt(s)
    smax = math.inf if r == 0 else (1.0 - mu) ** 2 / 2.0 * m / r
    numer = (1.0 - mu) ** 2 - 2.0 * s * gamma_v
    if s <= min(cap, smax):
        branch = gamma_ur <= numer / (2.0 * s * (1.0 + gamma_v))
    elif cap < s <= smax:
        branch = gamma_ur <= numer / (2.0 * (cap + s * gamma_v))
    else:
        branch = False
    if big_c >= 1.0:
        r_bound = -math.inf
        valid = False
    else:
        ratio = (1.0 + big_c) / (1.0 - big_c)
        if mu == 0.0:
            r_bound = math.inf
        else:
            root = math.sqrt(lo / hi) * (1.0 - mu) / mu \
                - xi / (math.sqrt(hi) * mu) * ratio * math.sqrt(s)
            r_bound = root * abs(root)
        valid = True if xi == 0.0 else (
            math.sqrt(s) <= lo * (1.0 - mu) / xi / ratio
        )
    return {
        "c": c,
        "big_c": big_c,
        "lambda_min": lam_min,
        "lambda_max": lam_max,
        "s_max": smax,
        "branch_holds": branch,
        "denominator_positive": denom > 0.0,
        "r_bound": r_bound,
        "curve_valid": valid,
    }


def random_theory_inputs(rng) -> TheoryInputs:
    """A parameter draw spanning admissible and inadmissible territory."""
    thin = rng.random() < 0.5
    n = int(rng.integers(10, 60))
    m = int(rng.integers(10, 60))
    r = int(rng.integers(1, 6))
    s = int(rng.integers(1, 40))
    mu = float(rng.uniform(0.01, 0.9))
    gamma_ur = float(rng.uniform(0.0, 0.3))
    gamma_v = float(rng.uniform(r / m, min(1.0, r / m + 0.3)))
    xi = float(rng.uniform(0.0, 0.4))
    if thin:
        d = int(rng.integers(1, n + 1))
        f_lower = float(rng.uniform(0.05, 1.0))
        f_upper = f_lower + float(rng.uniform(0.0, 1.5))
        return TheoryInputs(n=n, m=m, d=d, r=r, s=s, gamma_ur=gamma_ur,
                            gamma_v=gamma_v, mu=mu, xi=xi,
                            f_lower=f_lower, f_upper=f_upper)
    d = int(rng.integers(n + 1, 3 * n))
    delta = float(rng.uniform(0.0, 0.9))
    k = int(rng.integers(1, 8))
    return TheoryInputs(n=n, m=m, d=d, r=r, s=s, gamma_ur=gamma_ur,
                        gamma_v=gamma_v, mu=mu, xi=xi, delta=delta, k=k)


# ---------------------------------------------------------------------------
# admissible thin instances (n = m = 20, d = 8, r <= 2, s <= 6)

# (rank, sparsity, support columns); supports sharing rows across columns
_ADMISSIBLE_CONFIGS = (
    (1, 4, 1), (1, 5, 1), (1, 6, 1), (1, 3, 2), (1, 4, 2),
    (2, 1, 1), (2, 2, 1),
)


def _orthonormal_complement_dictionary(rng, n, d, U):
    """Random n x d orthonormal-column dictionary inside the complement of U."""
    comp = np.eye(n) - (U @ U.T if U.shape[1] else 0.0)
    G = comp @ rng.standard_normal((n, d))
    Q, _ = np.linalg.qr(G)
    return Q[:, :d]


def _flat_sign_factors(rng, m, r):
    """Orthonormal m x r factor with every row norm exactly sqrt(r/m)."""
    s1 = rng.choice([-1.0, 1.0], size=m)
    cols = [s1 / math.sqrt(m)]
    if r == 2:
        flip = np.ones(m)
        flip[rng.permutation(m)[: m // 2]] = -1.0
        cols.append(s1 * flip / math.sqrt(m))
    return np.column_stack(cols)


def admissible_thin_instance(seed: int):
    """One structured planted instance whose measured parameters are meant to
    satisfy every recovery hypothesis: dictionary orthogonal to the low-rank
    column space (so gamma_ur = xi = 0), sign-flat right factors (gamma_v at
    its floor r/m), and a support concentrated on few columns (small mu).

    Random unstructured draws at this scale are never admissible; the
    deterministic constants grow with s * gamma_v and overwhelm the
    denominator unless the geometry is arranged this way. Returns
    (instance, truth) without any admissibility guarantee; callers measure
    and filter.
    """
    n = m = 20
    d = 8
    rng = np.random.default_rng(seed)
    r, s, ncols = _ADMISSIBLE_CONFIGS[seed % len(_ADMISSIBLE_CONFIGS)]

    U = np.linalg.qr(rng.standard_normal((n, r)))[0][:, :r]
    V = _flat_sign_factors(rng, m, r)
    R = _orthonormal_complement_dictionary(rng, n, d, U)
    sv = np.sort(rng.uniform(5.0, 15.0, size=r))[::-1]

    cols = rng.choice(m, size=ncols, replace=False)
    per_col = s // ncols
    extra = s - per_col * ncols
    rows = rng.choice(d, size=per_col + (1 if extra else 0), replace=False)
    A0 = np.zeros((d, m))
    placed = 0
    for ci, col in enumerate(cols):
        take = per_col + (1 if ci < extra else 0)
        for row in rows[:take]:
            A0[row, col] = rng.choice([-1.0, 1.0])
            placed += 1
    assert placed == s
    truth = GroundTruth(U, sv, V, A0)
    instance = DemixInstance(truth.x0 + R @ A0, R)
    return instance, truth


def collect_admissible_instances(count: int, start_seed: int = 0, k=None):
    """First ``count`` structured instances whose measured parameters pass
    every hypothesis, with their incoherence and condition reports."""
    out = []
    seed = start_seed
    while len(out) < count:
        instance, truth = admissible_thin_instance(seed)
        seed += 1
        rep = full_report(instance, truth, k=k)
        inputs = TheoryInputs(
            n=instance.n, m=instance.m, d=instance.d, r=truth.r, s=truth.s,
            gamma_ur=rep.gamma_ur, gamma_v=rep.gamma_v, mu=rep.mu, xi=rep.xi,
            f_lower=rep.f_lower, f_upper=rep.f_upper,
        )
        theory = check_assumptions(inputs)
        if theory.admissible and math.isfinite(theory.lambda_min):
            out.append((instance, truth, rep, theory))
        if seed - start_seed > 50 * count:
            raise RuntimeError("admissible instance search did not terminate")
    return out


def support_from_pairs(pairs) -> SupportSet:
    return SupportSet(pairs)
