"""Accelerated proximal gradient solver for the convex demixing program

    minimize ||X||_* + lam * ||A||_1   subject to   Y = X + R A.

The equality constraint is handled by a smoothed quadratic penalty with
continuation: at smoothing level mu the solver runs accelerated proximal
gradient steps on

    ||X||_* + lam * ||A||_1 + ||Y - X - R A||_F^2 / (2 mu),

and mu decays geometrically from ``mu0_factor * sigma_max(Y)`` down to a
floor of ``mu_min_factor * sigma_max(Y)``, one decay per outer iteration.
The gradient of the smooth part is Lipschitz with constant
(1 + sigma_max(R)^2) / mu, so the step size is mu / (1 + sigma_max(R)^2)
and the mu cancels out of the gradient step; only the prox thresholds
shrink with mu. A momentum restart guards against the objective increasing
between accelerated steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .model import DemixInstance
from .prox import _shrink_svd, soft_threshold

__all__ = [
    "SolverConfig",
    "SolveReport",
    "TraceRecord",
    "default_lambda",
    "lipschitz_constant",
    "solve_demix",
]

# Triggers a momentum restart when the smoothed objective increases by more
# than this between consecutive accelerated steps.
RESTART_SLACK = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Solver parameters.

    ``lam`` is the l1 weight of the objective; when None the solver uses
    ``default_lambda`` for the instance at hand. The remaining fields control
    the smoothing continuation and the stopping tests.
    """

    lam: float | None = None
    mu0_factor: float = 0.99
    eta: float = 0.9
    mu_min_factor: float = 1e-9
    max_iters: int = 2000
    tol_feas: float = 1e-7
    tol_step: float = 1e-8

    def __post_init__(self):
        if self.lam is not None and not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not 0 < self.eta < 1:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        for name in ("mu0_factor", "mu_min_factor", "tol_feas", "tol_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True)
class TraceRecord:
    """One per-iteration snapshot of the smoothed solve."""

    iteration: int
    mu: float
    smoothed_objective: float
    feas_residual: float
    restarted: bool


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Result of :func:`solve_demix`."""

    X_hat: np.ndarray
    A_hat: np.ndarray
    iterations: int
    feas_residual: float
    objective: float
    converged: bool
    lam: float
    trace: tuple[TraceRecord, ...] | None = field(default=None, repr=False)


def default_lambda(n: int, m: int) -> float:
    """Fallback l1 weight 1 / sqrt(max(n, m)) used when none is given."""
    return float(1.0 / np.sqrt(max(n, m)))


def lipschitz_constant(R) -> float:
    """Gradient Lipschitz constant 1 + sigma_max(R)^2 of the stacked map
    (X, A) -> X + R A, computed from a dense SVD."""
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.size == 0:
        raise ValueError("R must be a nonempty 2-d array")
    smax = np.linalg.svd(R, compute_uv=False)[0]
    return 1.0 + float(smax) ** 2


def solve_demix(
    instance: DemixInstance,
    config: SolverConfig | None = None,
    collect_trace: bool = False,
) -> SolveReport:
    """Run the smoothed-penalty APG with continuation on one instance.

    Non-convergence within ``max_iters`` is not an error: the report carries
    ``converged=False`` alongside the achieved feasibility residual.
    Non-finite iterates raise :class:`NumericalError`.
    """
    if config is None:
        config = SolverConfig()
    Y, R = instance.Y, instance.R
    n, m, d = instance.n, instance.m, instance.d
    lam = config.lam if config.lam is not None else default_lambda(n, m)

    norm_y = float(np.linalg.norm(Y))
    if norm_y == 0.0:
        # Y = 0 is solved exactly by the zero pair.
        return SolveReport(
            X_hat=np.zeros((n, m)),
            A_hat=np.zeros((d, m)),
            iterations=0,
            feas_residual=0.0,
            objective=0.0,
            converged=True,
            lam=lam,
            trace=() if collect_trace else None,
        )

    sigma_y = float(np.linalg.svd(Y, compute_uv=False)[0])
    L = lipschitz_constant(R)
    mu = config.mu0_factor * sigma_y
    mu_min = config.mu_min_factor * sigma_y
    inv_l = 1.0 / L

    X = np.zeros((n, m))
    A = np.zeros((d, m))
    RA = np.zeros((n, m))
    X_prev, A_prev, RA_prev = X, A, RA
    t = 1.0
    t_prev = 1.0
    # (nuclear norm, l1 norm, squared infeasibility) of the previous iterate,
    # so the previous objective can be re-evaluated at the current mu.
    prev_parts: tuple[float, float, float] | None = None
    trace: list[TraceRecord] = []

    feas = float(np.linalg.norm(Y - X - RA)) / norm_y
    iterations = 0
    converged = False
    nuclear = 0.0

    for iterations in range(1, config.max_iters + 1):
        beta = (t_prev - 1.0) / t
        X_acc = X + beta * (X - X_prev)
        A_acc = A + beta * (A - A_prev)
        RA_acc = RA + beta * (RA - RA_prev)

        E = X_acc + RA_acc - Y
        step = mu * inv_l
        X_new, kept = _shrink_svd(X_acc - E * inv_l, step)
        A_new = soft_threshold(A_acc - (R.T @ E) * inv_l, lam * step)
        RA_new = R @ A_new

        nuclear = float(kept.sum())
        l1 = float(np.abs(A_new).sum())
        feas_sq = float(np.linalg.norm(Y - X_new - RA_new) ** 2)
        smoothed = nuclear + lam * l1 + feas_sq / (2.0 * mu)
        if not np.isfinite(smoothed):
            raise NumericalError(
                f"non-finite objective at iteration {iterations} (lam={lam})"
            )

        restarted = False
        if prev_parts is not None:
            prev_at_mu = prev_parts[0] + lam * prev_parts[1] + prev_parts[2] / (2.0 * mu)
            if smoothed > prev_at_mu + RESTART_SLACK:
                restarted = True

        step_change = np.sqrt(
            np.linalg.norm(X_new - X) ** 2 + np.linalg.norm(A_new - A) ** 2
        )
        iterate_size = max(
            1.0, np.sqrt(np.linalg.norm(X_new) ** 2 + np.linalg.norm(A_new) ** 2)
        )

        X_prev, A_prev, RA_prev = X, A, RA
        X, A, RA = X_new, A_new, RA_new
        prev_parts = (nuclear, l1, feas_sq)
        if restarted:
            t = 1.0
            t_prev = 1.0
            X_prev, A_prev, RA_prev = X, A, RA
        else:
            t_prev = t
            t = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0

        feas = float(np.sqrt(feas_sq)) / norm_y
        if collect_trace:
            trace.append(TraceRecord(iterations, mu, smoothed, feas, restarted))

        if feas <= config.tol_feas and step_change / iterate_size <= config.tol_step:
            converged = True
            break
        mu = max(config.eta * mu, mu_min)

    objective = nuclear + lam * float(np.abs(A).sum())
    return SolveReport(
        X_hat=X,
        A_hat=A,
        iterations=iterations,
        feas_residual=feas,
        objective=objective,
        converged=converged,
        lam=lam,
        trace=tuple(trace) if collect_trace else None,
    )
