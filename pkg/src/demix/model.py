"""Core data types, subspace projectors, and plain-text matrix I/O.

The demixing model is Y = X + R A with Y (n x m) observed, R (n x d) a known
dictionary with unit-norm columns, X low rank, and A sparse. Two families of
linear subspaces drive everything downstream: the tangent-style space of
matrices sharing row or column space with the low-rank component (projected
by :func:`project_phi` / :func:`project_phi_perp`), and the space of
coefficient matrices with a fixed support (projected by
:func:`project_omega`).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import MatrixParseError

__all__ = [
    "COLUMN_NORM_TOL",
    "ORTHONORMALITY_TOL",
    "SupportSet",
    "DemixInstance",
    "GroundTruth",
    "project_phi",
    "project_phi_perp",
    "project_omega",
    "read_matrix",
    "write_matrix",
]

COLUMN_NORM_TOL = 1e-9
ORTHONORMALITY_TOL = 1e-10


def _as_matrix(M, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got ndim={M.ndim}")
    return M


def _frozen(M: np.ndarray) -> np.ndarray:
    out = np.array(M, dtype=float, order="C")
    out.setflags(write=False)
    return out


class SupportSet:
    """Duplicate-free list of (row, col) index pairs, kept sorted
    lexicographically so that every consumer iterates in the same order."""

    __slots__ = ("pairs", "rows", "cols")

    def __init__(self, pairs):
        pts = [(int(i), int(j)) for i, j in pairs]
        for i, j in pts:
            if i < 0 or j < 0:
                raise ValueError(f"negative support index ({i}, {j})")
        pts.sort()
        for a, b in zip(pts, pts[1:]):
            if a == b:
                raise ValueError(f"duplicate support entry {a}")
        self.pairs = tuple(pts)
        self.rows = _frozen_index([i for i, _ in pts])
        self.cols = _frozen_index([j for _, j in pts])

    @classmethod
    def from_matrix(cls, A) -> "SupportSet":
        """Support of the exact nonzero pattern of A."""
        i, j = np.nonzero(np.asarray(A))
        return cls(zip(i.tolist(), j.tolist()))

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __eq__(self, other):
        return isinstance(other, SupportSet) and self.pairs == other.pairs

    def __hash__(self):
        return hash(self.pairs)

    def __repr__(self):
        return f"SupportSet(size={len(self.pairs)})"


def _frozen_index(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.intp)
    arr.setflags(write=False)
    return arr


class DemixInstance:
    """Observed matrix Y plus the dictionary R.

    Columns of R must have unit Euclidean norm (within ``COLUMN_NORM_TOL``)
    unless ``allow_unnormalized=True`` is passed; frame-bound experiments
    legitimately use unnormalized dictionaries.
    """

    __slots__ = ("Y", "R", "n", "m", "d")

    def __init__(self, Y, R, allow_unnormalized: bool = False):
        Y = _as_matrix(Y, "Y")
        R = _as_matrix(R, "R")
        if Y.shape[0] != R.shape[0]:
            raise ValueError(
                f"Y has {Y.shape[0]} rows but R has {R.shape[0]}; they must agree"
            )
        if min(Y.shape) < 1 or R.shape[1] < 1:
            raise ValueError("Y and R must be nonempty")
        if not allow_unnormalized:
            norms = np.linalg.norm(R, axis=0)
            worst = int(np.argmax(np.abs(norms - 1.0)))
            if abs(norms[worst] - 1.0) > COLUMN_NORM_TOL:
                raise ValueError(
                    f"dictionary column {worst} has norm {norms[worst]!r}, "
                    f"expected 1 within {COLUMN_NORM_TOL:g} "
                    "(pass allow_unnormalized=True to bypass)"
                )
        self.Y = _frozen(Y)
        self.R = _frozen(R)
        self.n, self.m = Y.shape
        self.d = R.shape[1]

    def __repr__(self):
        return f"DemixInstance(n={self.n}, m={self.m}, d={self.d})"


class GroundTruth:
    """Planted decomposition: X0 = U diag(S) V' and sparse coefficients A0.

    U and V carry orthonormal columns; the nonzero pattern of A0 must be
    exactly ``support``.
    """

    __slots__ = ("U", "S", "V", "A0", "support", "r", "s")

    def __init__(self, U, S, V, A0, support: SupportSet | None = None):
        U = _as_matrix(U, "U")
        V = _as_matrix(V, "V")
        A0 = _as_matrix(A0, "A0")
        S = np.asarray(S, dtype=float).ravel()
        r = U.shape[1]
        if V.shape[1] != r or S.shape[0] != r:
            raise ValueError("U, S, V disagree on the rank")
        if r > min(U.shape[0], V.shape[0]):
            raise ValueError("rank exceeds min(n, m)")
        if r and not np.all(S > 0):
            raise ValueError("singular values must be positive")
        for name, Q in (("U", U), ("V", V)):
            gap = np.abs(Q.T @ Q - np.eye(r)).max() if r else 0.0
            if gap > ORTHONORMALITY_TOL:
                raise ValueError(f"{name} columns not orthonormal (deviation {gap:.2e})")
        if support is None:
            support = SupportSet.from_matrix(A0)
        actual = SupportSet.from_matrix(A0)
        if actual != support:
            raise ValueError("nonzero pattern of A0 does not match the support set")
        if len(support) > A0.shape[0] * A0.shape[1]:
            raise ValueError("support larger than the coefficient matrix")
        self.U = _frozen(U)
        self.S = _frozen(S.reshape(-1))
        self.V = _frozen(V)
        self.A0 = _frozen(A0)
        self.support = support
        self.r = r
        self.s = len(support)

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def m(self) -> int:
        return self.V.shape[0]

    @property
    def d(self) -> int:
        return self.A0.shape[0]

    @property
    def x0(self) -> np.ndarray:
        """Low-rank component reassembled from its factors."""
        return (self.U * self.S) @ self.V.T

    def __repr__(self):
        return f"GroundTruth(n={self.n}, m={self.m}, d={self.d}, r={self.r}, s={self.s})"


def _check_factor_dims(M: np.ndarray, U: np.ndarray, V: np.ndarray) -> None:
    if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
        raise ValueError("U and V must be 2-d with the same column count")
    if M.shape != (U.shape[0], V.shape[0]):
        raise ValueError(
            f"matrix shape {M.shape} does not match factor shapes "
            f"({U.shape[0]}, {V.shape[0]})"
        )


def project_phi(M, U, V) -> np.ndarray:
    """Project onto matrices sharing column space with U or row space with V.

    P(M) = Pu M + M Pv - Pu M Pv with Pu = U U', Pv = V V'.
    """
    M = _as_matrix(M, "M")
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    _check_factor_dims(M, U, V)
    if U.shape[1] == 0:
        return np.zeros_like(M)
    UtM = U.T @ M
    MV = M @ V
    return U @ UtM + MV @ V.T - U @ (UtM @ V) @ V.T


def project_phi_perp(M, U, V) -> np.ndarray:
    """Complementary projector: (I - Pu) M (I - Pv)."""
    M = _as_matrix(M, "M")
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    _check_factor_dims(M, U, V)
    if U.shape[1] == 0:
        return M.copy()
    T = M - U @ (U.T @ M)
    return T - (T @ V) @ V.T


def project_omega(H, support: SupportSet) -> np.ndarray:
    """Zero all entries of H outside the support."""
    H = _as_matrix(H, "H")
    out = np.zeros_like(H)
    if len(support) == 0:
        return out
    if support.rows.max() >= H.shape[0] or support.cols.max() >= H.shape[1]:
        raise ValueError(
            f"support index out of range for a {H.shape[0]}x{H.shape[1]} matrix"
        )
    out[support.rows, support.cols] = H[support.rows, support.cols]
    return out


def write_matrix(M, path) -> None:
    """Write a matrix as text: a "rows cols" header line, then one line per
    row of whitespace-separated floats at full round-trip precision."""
    M = _as_matrix(M, "matrix")
    lines = [f"{M.shape[0]} {M.shape[1]}"]
    for row in M:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    """Inverse of :func:`write_matrix`. Raises :class:`MatrixParseError`
    naming the offending line on malformed input."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise MatrixParseError(f"{path}: line 1: empty file or blank header")
    header = lines[0].split()
    if len(header) != 2:
        raise MatrixParseError(
            f"{path}: line 1: expected header '<rows> <cols>', got {lines[0]!r}"
        )
    try:
        rows, cols = int(header[0]), int(header[1])
    except ValueError:
        raise MatrixParseError(
            f"{path}: line 1: non-integer header token in {lines[0]!r}"
        ) from None
    if rows < 1 or cols < 1:
        raise MatrixParseError(f"{path}: line 1: dimensions must be positive")
    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != rows:
        raise MatrixParseError(
            f"{path}: line {len(body) + 2 if len(body) < rows else rows + 2}: "
            f"expected {rows} data rows, found {len(body)}"
        )
    out = np.empty((rows, cols), dtype=float)
    for k, line in enumerate(body):
        tokens = line.split()
        lineno = k + 2
        if len(tokens) != cols:
            raise MatrixParseError(
                f"{path}: line {lineno}: expected {cols} values, got {len(tokens)}"
            )
        try:
            out[k] = [float(t) for t in tokens]
        except ValueError:
            bad = next(t for t in tokens if not _is_float(t))
            raise MatrixParseError(
                f"{path}: line {lineno}: non-numeric token {bad!r}"
            ) from None
    return out


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False
