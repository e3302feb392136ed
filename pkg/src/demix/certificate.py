"""Dual-certificate construction and numerical verification.

For a planted pair (X0 = U diag(S) V', A0 with support Omega) and a weight
lam, the certificate is

    Gamma = U V' + (I - Pu) X (I - Pv),

where X solves the support-restricted linear system that forces the
coefficient-side optimality condition. Writing the linearized operator rows
as row(i, j) = vec((I - Pu) r_i e_j' (I - Pv)), the s x s Gram of the
support rows factors in closed form:

    Gram[(i,j), (i',j')] = [R'(I - Pu)R]_{i,i'} * [I - Pv]_{j,j'},

which this module assembles directly instead of materializing the s x (n m)
row matrix. Four conditions certify optimality of the planted pair:

    C1: P_phi(Gamma) = U V'            C2: P_omega(R' Gamma) = lam sign(A0)
    C3: ||P_phi_perp(Gamma)||_2 < 1    C4: ||P_omega_perp(R' Gamma)||_inf < lam

C1 and C2 hold by construction up to linear-solve accuracy; C3 and C4 are
measured. The companion bound checks (:func:`verify_lemma_bounds`) test the
four proved inequalities relating sigma_min of the support rows, the
right-hand side norms, and the row-l1 norm of the interpolation matrix Q to
the measured incoherence quantities.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import DegenerateSupportError
from .measures import IncoherenceReport
from .model import GroundTruth, SupportSet, project_phi, project_phi_perp
from .theory import TheoryReport

__all__ = [
    "CertificateReport",
    "LemmaFlags",
    "gram_omega",
    "build_certificate",
    "verify_conditions",
    "verify_lemma_bounds",
    "attach_lemma_flags",
    "report_to_text",
]

# C1/C2 residual tolerance used for the pass verdict.
RESIDUAL_TOL = 1e-8
# Gram systems with smaller relative eigenvalue spread count as degenerate.
GRAM_RTOL = 1e-12
# Soft slack for the proved-bound comparisons.
BOUND_SLACK = 1e-9
# Above this many complement rows, the Q row scan samples (flagged).
Q_ROW_CAP = 100_000


@dataclass(frozen=True)
class LemmaFlags:
    """Satisfaction of the four proved bounds (slack ``BOUND_SLACK``).

    ``vacuous`` marks the empty-support case where the quantities do not
    exist and every flag passes by convention.
    """

    sigma_min_ok: bool
    b_norm2_ok: bool
    b_norminf_ok: bool
    q_norm_ok: bool
    vacuous: bool = False

    @property
    def all_hold(self) -> bool:
        return (self.sigma_min_ok and self.b_norm2_ok
                and self.b_norminf_ok and self.q_norm_ok)


@dataclass(frozen=True)
class CertificateReport:
    """Measured certificate quantities for one (instance, lam) pair."""

    lam: float
    c1_residual: float
    c2_residual: float
    c3_value: float
    c4_value: float
    passes: bool
    sigma_min_a_omega: float
    b_omega_norm2: float
    b_omega_norminf: float
    q_norm_inf_inf: float
    q_rows_sampled: bool
    pomega_rtuv_inf: float
    gram_condition: float
    lemma_flags: LemmaFlags | None = None


def _complement_factors(R: np.ndarray, U: np.ndarray, V: np.ndarray):
    """K = R'(I - Pu)R and W = I - Pv, the two small Gram factors."""
    G = R.T @ R
    if U.shape[1]:
        K = G - (R.T @ U) @ (U.T @ R)
    else:
        K = G
    W = np.eye(V.shape[0])
    if V.shape[1]:
        W -= V @ V.T
    return K, W


def gram_omega(R, U, V, support: SupportSet) -> np.ndarray:
    """s x s Gram of the support rows, assembled in closed form."""
    R = np.asarray(R, dtype=float)
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    K, W = _complement_factors(R, U, V)
    ii, jj = support.rows, support.cols
    return K[np.ix_(ii, ii)] * W[np.ix_(jj, jj)]


def _b_omega(R: np.ndarray, truth: GroundTruth, lam: float) -> np.ndarray:
    """Support entries of lam * sign(A0) - P_omega(R' U V')."""
    ii, jj = truth.support.rows, truth.support.cols
    signs = np.sign(truth.A0[ii, jj])
    if truth.r:
        rtuv = (R.T @ truth.U) @ truth.V.T
        return lam * signs - rtuv[ii, jj]
    return lam * signs


def build_certificate(
    R, truth: GroundTruth, lam: float, refine_steps: int = 1
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Construct (Gamma, w, X_cert).

    ``w`` solves Gram w = b on the support by Cholesky factorization with
    ``refine_steps`` rounds of iterative refinement; X_cert scatters w back
    through the dictionary and the two complementary projectors. An empty
    support returns Gamma = U V' with w and X_cert zero-sized/zero.
    """
    R = np.asarray(R, dtype=float)
    U, V = truth.U, truth.V
    n, m = truth.n, truth.m
    uv = U @ V.T if truth.r else np.zeros((n, m))
    if truth.s == 0:
        return uv.copy(), np.zeros(0), np.zeros((n, m))

    gram = gram_omega(R, U, V, truth.support)
    eigs = np.linalg.eigvalsh(gram)
    if eigs[0] <= GRAM_RTOL * max(eigs[-1], 1.0):
        raise DegenerateSupportError(
            f"support Gram is numerically singular: smallest eigenvalue "
            f"{eigs[0]:.3e} against largest {eigs[-1]:.3e}"
        )
    b = _b_omega(R, truth, lam)
    cho = scipy.linalg.cho_factor(gram, check_finite=False)
    w = scipy.linalg.cho_solve(cho, b, check_finite=False)
    for _ in range(max(refine_steps, 0)):
        resid = b - gram @ w
        w = w + scipy.linalg.cho_solve(cho, resid, check_finite=False)

    S = np.zeros((truth.d, m))
    S[truth.support.rows, truth.support.cols] = w
    X_cert = R @ S
    if truth.r:
        X_cert = X_cert - U @ (U.T @ X_cert)
        X_cert = X_cert - (X_cert @ V) @ V.T
    return uv + X_cert, w, X_cert


def verify_conditions(
    R,
    truth: GroundTruth,
    lam: float,
    gamma: np.ndarray,
    q_row_cap: int = Q_ROW_CAP,
    seed: int = 0,
) -> CertificateReport:
    """Measure all four certificate conditions plus the bound ingredients.

    The interpolation matrix Q maps the support rows onto the complement;
    its row-l1 sup norm is exact when the complement has at most
    ``q_row_cap`` rows and otherwise a sampled lower bound (flagged).
    """
    R = np.asarray(R, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    U, V = truth.U, truth.V
    ii, jj = truth.support.rows, truth.support.cols
    uv = U @ V.T if truth.r else np.zeros((truth.n, truth.m))

    c1 = float(np.linalg.norm(project_phi(gamma, U, V) - uv))
    rt_gamma = R.T @ gamma
    signs = np.sign(truth.A0[ii, jj]) if truth.s else np.zeros(0)
    c2 = float(np.linalg.norm(rt_gamma[ii, jj] - lam * signs)) if truth.s else 0.0
    perp = project_phi_perp(gamma, U, V)
    c3 = float(np.linalg.norm(perp, 2)) if perp.size else 0.0
    off = rt_gamma.copy()
    if truth.s:
        off[ii, jj] = 0.0
    c4 = float(np.abs(off).max()) if off.size else 0.0

    rtuv = (R.T @ U) @ V.T if truth.r else np.zeros((truth.d, truth.m))
    pomega_inf = float(np.abs(rtuv[ii, jj]).max()) if truth.s else 0.0

    if truth.s:
        gram = gram_omega(R, U, V, truth.support)
        eigs = np.linalg.eigvalsh(gram)
        if eigs[0] <= GRAM_RTOL * max(eigs[-1], 1.0):
            raise DegenerateSupportError(
                f"support Gram is numerically singular: smallest eigenvalue "
                f"{eigs[0]:.3e} against largest {eigs[-1]:.3e}"
            )
        sigma_min = float(np.sqrt(max(eigs[0], 0.0)))
        gram_cond = float(eigs[-1] / eigs[0])
        b = _b_omega(R, truth, lam)
        b2 = float(np.linalg.norm(b))
        binf = float(np.abs(b).max())
        q_norm, sampled = _q_sup_row_norm(
            R, truth, gram, q_row_cap=q_row_cap, seed=seed
        )
    else:
        sigma_min = float("nan")
        gram_cond = float("nan")
        b2 = 0.0
        binf = 0.0
        q_norm, sampled = 0.0, False

    passes = bool(
        c1 <= RESIDUAL_TOL and c2 <= RESIDUAL_TOL and c3 < 1.0 and c4 < lam
    )
    return CertificateReport(
        lam=float(lam),
        c1_residual=c1,
        c2_residual=c2,
        c3_value=c3,
        c4_value=c4,
        passes=passes,
        sigma_min_a_omega=sigma_min,
        b_omega_norm2=b2,
        b_omega_norminf=binf,
        q_norm_inf_inf=q_norm,
        q_rows_sampled=sampled,
        pomega_rtuv_inf=pomega_inf,
        gram_condition=gram_cond,
    )


def _q_sup_row_norm(
    R: np.ndarray,
    truth: GroundTruth,
    gram: np.ndarray,
    q_row_cap: int,
    seed: int,
) -> tuple[float, bool]:
    """Exact (or sampled, when the complement is huge) max row-l1 norm of
    Q = CrossGram * Gram^{-1}, rows indexed by the complement of the support."""
    d, m = truth.d, truth.m
    mask = np.ones(d * m, dtype=bool)
    mask[truth.support.rows + d * truth.support.cols] = False
    comp = np.flatnonzero(mask)
    if comp.size == 0:
        return 0.0, False
    sampled = comp.size > q_row_cap
    if sampled:
        rng = np.random.default_rng(seed)
        comp = np.sort(rng.choice(comp, size=q_row_cap, replace=False))
    ci = comp % d
    cj = comp // d
    K, W = _complement_factors(R, truth.U, truth.V)
    cross = K[np.ix_(ci, truth.support.rows)] * W[np.ix_(cj, truth.support.cols)]
    cho = scipy.linalg.cho_factor(gram, check_finite=False)
    Q = scipy.linalg.cho_solve(cho, cross.T, check_finite=False).T
    return float(np.abs(Q).sum(axis=1).max()), sampled


def verify_lemma_bounds(
    report: CertificateReport,
    incoherence: IncoherenceReport,
    theory: TheoryReport,
    lam: float,
    r: int,
    s: int,
) -> LemmaFlags:
    """Check the four proved inequalities against measured values.

    With (lo, hi) = (F_L, F_U) thin or (1 - delta, 1 + delta) fat:

    * sigma_min of the support rows >= sqrt(lo) * (1 - mu),
    * ||b||_2 <= lam * sqrt(s) + sqrt(r * hi) * mu,
    * ||b||_inf <= lam + ||P_omega(R'UV')||_inf,
    * row-l1 sup norm of Q <= C.

    All with slack ``BOUND_SLACK``; an empty support is a vacuous pass.
    """
    if s == 0:
        return LemmaFlags(True, True, True, True, vacuous=True)
    if incoherence.regime == "thin":
        lo, hi = incoherence.f_lower, incoherence.f_upper
    else:
        lo, hi = 1.0 - incoherence.ric_delta, 1.0 + incoherence.ric_delta
    mu = incoherence.mu
    sig_ok = report.sigma_min_a_omega >= np.sqrt(lo) * (1.0 - mu) - BOUND_SLACK
    b2_ok = report.b_omega_norm2 <= lam * np.sqrt(s) + np.sqrt(r * hi) * mu + BOUND_SLACK
    binf_ok = report.b_omega_norminf <= lam + report.pomega_rtuv_inf + BOUND_SLACK
    q_ok = report.q_norm_inf_inf <= theory.big_c + BOUND_SLACK
    return LemmaFlags(bool(sig_ok), bool(b2_ok), bool(binf_ok), bool(q_ok))


def attach_lemma_flags(report: CertificateReport, flags: LemmaFlags) -> CertificateReport:
    return replace(report, lemma_flags=flags)


def report_to_text(report: CertificateReport) -> str:
    """Serialize as flat "name = value" lines (golden-file friendly)."""
    pairs = [
        ("lam", report.lam),
        ("c1_residual", report.c1_residual),
        ("c2_residual", report.c2_residual),
        ("c3_value", report.c3_value),
        ("c4_value", report.c4_value),
        ("passes", report.passes),
        ("sigma_min_a_omega", report.sigma_min_a_omega),
        ("b_omega_norm2", report.b_omega_norm2),
        ("b_omega_norminf", report.b_omega_norminf),
        ("q_norm_inf_inf", report.q_norm_inf_inf),
        ("q_rows_sampled", report.q_rows_sampled),
        ("pomega_rtuv_inf", report.pomega_rtuv_inf),
        ("gram_condition", report.gram_condition),
    ]
    if report.lemma_flags is not None:
        f = report.lemma_flags
        pairs += [
            ("lemma_sigma_min_ok", f.sigma_min_ok),
            ("lemma_b_norm2_ok", f.b_norm2_ok),
            ("lemma_b_norminf_ok", f.b_norminf_ok),
            ("lemma_q_norm_ok", f.q_norm_ok),
            ("lemma_vacuous", f.vacuous),
        ]
    lines = []
    for name, value in pairs:
        if isinstance(value, bool):
            lines.append(f"{name} = {'true' if value else 'false'}")
        else:
            lines.append(f"{name} = {float(value)!r}")
    return "\n".join(lines) + "\n"
