"""Convex demixing of a low-rank plus dictionary-sparse superposition.

Observed data Y = X + R A is split back into its components by nuclear-norm
plus l1 minimization. The package bundles the solver, the incoherence and
dictionary-conditioning measures that govern recoverability, evaluation of
the deterministic recovery conditions, numerical dual-certificate
verification, and a reproducible phase-transition experiment harness with a
``demix`` command-line front end.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateSupportError,
    DemixError,
    MatrixParseError,
    NumericalError,
)
from .model import (
    DemixInstance,
    GroundTruth,
    SupportSet,
    project_omega,
    project_phi,
    project_phi_perp,
    read_matrix,
    write_matrix,
)
from .prox import singular_value_threshold, soft_threshold
from .solver import (
    SolveReport,
    SolverConfig,
    default_lambda,
    lipschitz_constant,
    solve_demix,
)
from .measures import (
    IncoherenceReport,
    estimate_ric,
    frame_bounds,
    full_report,
    gamma_ur,
    gamma_v,
    incoherence_mu,
    xi_value,
)
from .theory import (
    CurvePoint,
    TheoryInputs,
    TheoryReport,
    big_c_and_lambda_min,
    c_constant,
    check_assumptions,
    lambda_max,
    rank_sparsity_curve,
    s_max,
)
from .certificate import (
    CertificateReport,
    LemmaFlags,
    build_certificate,
    gram_omega,
    report_to_text,
    verify_conditions,
    verify_lemma_bounds,
)
from .experiments import (
    CellStats,
    GenSpec,
    GridSpec,
    LambdaPolicy,
    PhaseGrid,
    emit_curve_csv,
    emit_grid_csv,
    emit_heatmap,
    evaluate_success,
    generate_instance,
    mix_seed,
    run_phase_grid,
)

__all__ = [name for name in dir() if not name.startswith("_")]
