"""Sparse possibilistic c-means clustering toolkit.

Clusters are found by alternating two exact minimisation steps: a per-point
membership solve (a two-branch update with a bisection root-finder, driving
distant points' memberships exactly to zero) and a weighted-mean update of
each cluster representative.  A convergence monitor checks every guarantee
the iteration is supposed to deliver: strict per-iteration cost descent,
bounded trajectories, gradient stationarity at termination, and positive
definiteness of the cost's second-derivative matrix at the fixed point.
"""

from .core import (
    DataSet,
    MembershipMatrix,
    ModelState,
    PointClusterTerm,
    cluster_costs,
    point_term_cost,
    squared_distances,
    total_cost,
)
from .driver import (
    ActiveSet,
    ActiveSetEmptyError,
    DedupResult,
    IterationTrace,
    RunResult,
    SolverConfig,
    StepMetrics,
    deduplicate,
    run,
    run_pcm2,
    spcm_step,
    update_theta,
)
from .initialization import (
    DegenerateDataError,
    FcmConfig,
    InitReport,
    activation_bound,
    compute_gammas,
    compute_lambda,
    compute_mu,
    default_K,
    initialize,
    radius_bound,
    run_fcm,
    validate_K,
)
from .membership import (
    ClusterSolverContext,
    InvalidParameterError,
    build_context,
    f_value,
    pcm2_membership,
    radius_squared,
    solve_membership,
    solve_membership_batch,
    solve_membership_by_radius,
)
from .monitor import (
    FixedPointReport,
    MonitorSettings,
    assemble_hessian,
    check_fixed_point,
    epsilon_bound,
    gradient_residual,
    weighted_cauchy_schwarz_holds,
)

__version__ = "0.1.0"

__all__ = [
    "DataSet",
    "ModelState",
    "MembershipMatrix",
    "PointClusterTerm",
    "point_term_cost",
    "total_cost",
    "cluster_costs",
    "squared_distances",
    "ClusterSolverContext",
    "InvalidParameterError",
    "build_context",
    "f_value",
    "solve_membership",
    "solve_membership_batch",
    "solve_membership_by_radius",
    "pcm2_membership",
    "radius_squared",
    "DegenerateDataError",
    "FcmConfig",
    "InitReport",
    "run_fcm",
    "compute_gammas",
    "compute_lambda",
    "compute_mu",
    "radius_bound",
    "activation_bound",
    "default_K",
    "validate_K",
    "initialize",
    "ActiveSet",
    "ActiveSetEmptyError",
    "DedupResult",
    "IterationTrace",
    "RunResult",
    "SolverConfig",
    "StepMetrics",
    "update_theta",
    "spcm_step",
    "run",
    "run_pcm2",
    "deduplicate",
    "MonitorSettings",
    "FixedPointReport",
    "gradient_residual",
    "assemble_hessian",
    "epsilon_bound",
    "check_fixed_point",
    "weighted_cauchy_schwarz_holds",
    "__version__",
]
