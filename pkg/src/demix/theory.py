"""Deterministic recovery conditions: the admissible weight interval
[lambda_min, lambda_max], the sparsity ceiling s_max, the incoherence
assumptions, and the rank-vs-sparsity boundary curve.

Two regimes share one set of formulas: thin dictionaries (d <= n) are
conditioned by frame bounds (F_L, F_U); fat ones (d > n) by a restricted
isometry constant delta of order k, substituting (1 - delta, 1 + delta) for
(F_L, F_U) and k for d. Inadmissible parameter sets never raise; they come
back as flagged reports so a sweep can pass through them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

__all__ = [
    "TheoryInputs",
    "TheoryReport",
    "CurvePoint",
    "c_constant",
    "big_c_and_lambda_min",
    "lambda_max",
    "s_max",
    "check_assumptions",
    "rank_sparsity_curve",
]


@dataclass(frozen=True)
class TheoryInputs:
    """Dimensions, sparsity/rank, and measured conditioning quantities.

    Thin inputs (d <= n) must carry frame bounds; fat inputs must carry
    (delta, k). ``alpha`` and ``c1`` only feed advisory dimension checks.
    """

    n: int
    m: int
    d: int
    r: int
    s: int
    gamma_ur: float
    gamma_v: float
    mu: float
    xi: float
    k: int | None = None
    f_lower: float | None = None
    f_upper: float | None = None
    delta: float | None = None
    alpha: float = 1.0 + 1e-9
    c1: float = 1.0

    def __post_init__(self):
        if min(self.n, self.m, self.d) < 1:
            raise ValueError("dimensions must be positive")
        if self.r < 0 or self.s < 0:
            raise ValueError("rank and sparsity must be nonnegative")
        if not 0.0 <= self.mu <= 1.0 + 1e-9:
            raise ValueError(f"mu out of range: {self.mu}")
        for name in ("gamma_ur", "gamma_v", "xi"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.thin:
            if self.f_lower is None or self.f_upper is None:
                raise ValueError("thin inputs (d <= n) require frame bounds")
        else:
            if self.delta is None:
                raise ValueError("fat inputs (d > n) require a RIC delta")
            if self.k is None or self.k < 1:
                raise ValueError("fat inputs (d > n) require a RIP order k >= 1")

    @property
    def thin(self) -> bool:
        return self.d <= self.n

    @property
    def regime(self) -> str:
        return "thin" if self.thin else "fat"


@dataclass(frozen=True)
class TheoryReport:
    """Outcome of :func:`check_assumptions`.

    ``a2_holds`` is the thin-regime incoherence assumption, ``a3_holds`` the
    fat-regime one; whichever does not apply is None. ``advisory_flags``
    lists side conditions that failed without affecting admissibility.
    """

    c: float
    big_c: float
    lambda_min: float
    lambda_max: float
    s_max: float
    regime: str
    a1_holds: bool
    a2_holds: bool | None
    a3_holds: bool | None
    denominator_positive: bool
    admissible: bool
    advisory_flags: tuple[str, ...]


class CurvePoint(NamedTuple):
    s: int
    r_bound: float
    valid: bool


def _regime_bounds(inputs: TheoryInputs) -> tuple[float, float]:
    """(lo, hi) = (F_L, F_U) thin, (1 - delta, 1 + delta) fat."""
    if inputs.thin:
        return float(inputs.f_lower), float(inputs.f_upper)
    return 1.0 - float(inputs.delta), 1.0 + float(inputs.delta)


def c_constant(inputs: TheoryInputs) -> float:
    """Coupling constant: with M = min(s, d or k) + s*gamma_v,

        c = hi/2 * ((1 + 2*gamma_ur) * M + 2*s*gamma_v) - lo/2 * M.
    """
    lo, hi = _regime_bounds(inputs)
    cap = inputs.d if inputs.thin else inputs.k
    base = min(inputs.s, cap) + inputs.s * inputs.gamma_v
    return (hi / 2.0) * ((1.0 + 2.0 * inputs.gamma_ur) * base
                         + 2.0 * inputs.s * inputs.gamma_v) - (lo / 2.0) * base


def big_c_and_lambda_min(inputs: TheoryInputs) -> tuple[float, float, bool]:
    """C = c / (lo * (1 - mu)^2 - c) and lambda_min = (1 + C)/(1 - C) * xi.

    The denominator sign is reported, never assumed. C >= 1 makes lambda_min
    the +inf sentinel; C < 1 (including negative C from a nonpositive
    denominator) still yields a numeric lambda_min for diagnostic use.
    """
    c = c_constant(inputs)
    lo, _ = _regime_bounds(inputs)
    denom = lo * (1.0 - inputs.mu) ** 2 - c
    if denom == 0.0:
        big_c = math.inf
    else:
        big_c = c / denom
    denominator_positive = denom > 0.0
    if big_c < 1.0:
        lam_min = (1.0 + big_c) / (1.0 - big_c) * inputs.xi
    else:
        lam_min = math.inf
    return big_c, lam_min, denominator_positive


def lambda_max(inputs: TheoryInputs) -> float:
    """(sqrt(lo) * (1 - mu) - sqrt(r * hi) * mu) / sqrt(s); may be negative."""
    if inputs.s < 1:
        raise ValueError("lambda_max requires s >= 1")
    lo, hi = _regime_bounds(inputs)
    return (math.sqrt(lo) * (1.0 - inputs.mu)
            - math.sqrt(inputs.r * hi) * inputs.mu) / math.sqrt(inputs.s)


def s_max(inputs: TheoryInputs) -> float:
    """Sparsity ceiling (1 - mu)^2 / 2 * m / r (infinite for r = 0)."""
    if inputs.r == 0:
        return math.inf
    return (1.0 - inputs.mu) ** 2 / 2.0 * inputs.m / inputs.r


def _incoherence_assumption(inputs: TheoryInputs, cap: int, ceil: float) -> bool:
    """Branchwise bound on gamma_ur; False when s exceeds the ceiling."""
    s, gv = inputs.s, inputs.gamma_v
    num = (1.0 - inputs.mu) ** 2 - 2.0 * s * gv
    if s <= min(cap, ceil):
        return inputs.gamma_ur <= num / (2.0 * s * (1.0 + gv))
    if cap < s <= ceil:
        return inputs.gamma_ur <= num / (2.0 * (cap + s * gv))
    return False


def check_assumptions(inputs: TheoryInputs) -> TheoryReport:
    """Evaluate every recovery hypothesis and aggregate admissibility.

    Admissible means: the branch assumption for the regime holds, the C
    denominator is positive with 0 <= C < 1, and lambda_min <= lambda_max.
    Advisory flags record soft side conditions (s < m, d <= m/(alpha r),
    the thin-case condition F_L <= 1/(1 - mu)^2, and the fat-case dimension
    bound n > c1 * k * log d) without vetoing admissibility.
    """
    if inputs.s < 1:
        raise ValueError("check_assumptions requires s >= 1")
    c = c_constant(inputs)
    big_c, lam_min, denom_pos = big_c_and_lambda_min(inputs)
    lam_max = lambda_max(inputs)
    smax = s_max(inputs)
    cap = inputs.d if inputs.thin else inputs.k
    branch = _incoherence_assumption(inputs, cap, smax)
    a1 = lam_min <= lam_max
    c_in_range = 0.0 <= big_c < 1.0

    advisory: list[str] = []
    if inputs.s >= inputs.m:
        advisory.append("s >= m")
    if inputs.r > 0 and inputs.d > inputs.m / (inputs.alpha * inputs.r):
        advisory.append("d > m / (alpha * r)")
    if inputs.thin:
        limit = math.inf if inputs.mu >= 1.0 else 1.0 / (1.0 - inputs.mu) ** 2
        if inputs.f_lower > limit:
            advisory.append("f_lower > 1 / (1 - mu)^2")
        hypothesis = inputs.f_lower > 0.0
    else:
        if not inputs.n > inputs.c1 * inputs.k * math.log(inputs.d):
            advisory.append("n <= c1 * k * log(d)")
        hypothesis = True  # delta and k presence already enforced by the type

    admissible = bool(branch and a1 and denom_pos and c_in_range and hypothesis)
    return TheoryReport(
        c=c,
        big_c=big_c,
        lambda_min=lam_min,
        lambda_max=lam_max,
        s_max=smax,
        regime=inputs.regime,
        a1_holds=bool(a1),
        a2_holds=bool(branch) if inputs.thin else None,
        a3_holds=bool(branch) if not inputs.thin else None,
        denominator_positive=bool(denom_pos),
        admissible=admissible,
        advisory_flags=tuple(advisory),
    )


def rank_sparsity_curve(inputs: TheoryInputs, s_grid) -> list[CurvePoint]:
    """Largest admissible rank as a function of sparsity.

    C depends on s through c, so it is recomputed at every grid point. For
    mu > 0 and C < 1 the bound is the signed square of

        sqrt(lo / hi) * (1 - mu) / mu - xi / (sqrt(hi) * mu) * (1+C)/(1-C) * sqrt(s);

    the signed square (negative when the expression is negative) makes
    "r <= r_bound" equivalent to lambda_min <= lambda_max at every point,
    including past the boundary where the plain square would spuriously
    admit small ranks. mu = 0 reports an unbounded rank (+inf); C >= 1
    reports -inf (no rank is admissible). The ``valid`` flag is the
    published side condition sqrt(s) <= lo_raw * (1 - mu) / xi * (1-C)/(1+C)
    with lo_raw = F_L thin, (1 - delta) fat.
    """
    lo, hi = _regime_bounds(inputs)
    out: list[CurvePoint] = []
    for s in s_grid:
        s = int(s)
        if s < 0:
            raise ValueError("curve sparsity values must be nonnegative")
        at_s = replace(inputs, s=s)
        big_c, _, _ = big_c_and_lambda_min(at_s)
        if big_c >= 1.0:
            out.append(CurvePoint(s, -math.inf, False))
            continue
        ratio = (1.0 - big_c) / (1.0 + big_c) if big_c != -1.0 else math.inf
        if inputs.xi == 0.0:
            valid = True
        else:
            valid = math.sqrt(s) <= lo * (1.0 - inputs.mu) / inputs.xi * ratio
        if inputs.mu == 0.0:
            out.append(CurvePoint(s, math.inf, valid))
            continue
        root = (math.sqrt(lo / hi) * (1.0 - inputs.mu) / inputs.mu
                - inputs.xi / (math.sqrt(hi) * inputs.mu)
                * (1.0 + big_c) / (1.0 - big_c) * math.sqrt(s))
        out.append(CurvePoint(s, root * abs(root), bool(valid)))
    return out
