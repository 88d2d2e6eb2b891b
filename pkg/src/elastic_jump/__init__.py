"""Reflected diffusions with local-time-triggered interior restarts.

Simulation (pathwise Euler-Skorokhod with restart clocks), spectral solvers
for the associated nonlocal Robin heat problem, invariant densities, trace
process symbols on the half-line, and narrow-neck escape experiments.
"""

__version__ = "0.1.0"

from .geometry import (
    Interval,
    Disk,
    HalfLine,
    HalfSpace2D,
    Dumbbell,
    DumbbellParams,
    AmbiguousProjection,
    NotOnBoundary,
)
from .measures import (
    PointMass,
    FiniteMixtureOfPointMasses,
    UniformOnBall,
    TruncatedGaussian,
    DensityOnGrid,
    LaplaceExponent,
    UnsupportedDomain,
    QuadratureNotConverged,
    sample_restart,
    integrate,
    laplace_exponent,
)
from .sde import (
    PathRecord,
    JumpClock,
    EstimatorResult,
    OccupationHistogram,
    StepTooLarge,
    GridTooCoarse,
    step_reflected,
    simulate_path,
    semigroup_estimate,
    elastic_functional,
    boundary_condition_residual,
    occupation_histogram,
    jump_statistics,
)
from .spectral import (
    SpectralBasis,
    CoefficientSet,
    CtSolution,
    RootBracketingFailed,
    HorizonExceeded,
    TailNotResolved,
    robin_eigenbasis_interval,
    robin_eigenbasis_disk,
    project_coefficients,
    solve_volterra,
    evaluate_solution,
    closed_form_transform,
    numerical_transform,
    laplace_check,
)
from .invariant import (
    GreenFunction,
    InvariantDensity,
    green_interval,
    invariant_density,
    s_identity,
    domain_suite,
    stationarity_residual,
    long_run_distance,
)
from .trace import (
    GridField,
    FirstPassageSample,
    ExponentEstimate,
    DtnComparison,
    InsufficientLevel,
    AliasingDetected,
    simulate_halfline,
    first_passage_ensemble,
    first_passage_from_paths,
    inverse_local_time_exponent,
    local_time_calibration,
    psi_prediction,
    sample_field,
    poisson_extension,
    dtn_compare,
    dtn_pairing,
)
from .escape import (
    EscapeConfig,
    MfptEstimate,
    RenewalRow,
    CensoringDominates,
    mfpt_reflected,
    mfpt_jump,
    renewal_bound,
    sup_mfpt_jump,
    bound_from,
)

__all__ = [
    "Interval",
    "Disk",
    "HalfLine",
    "HalfSpace2D",
    "Dumbbell",
    "DumbbellParams",
    "AmbiguousProjection",
    "NotOnBoundary",
    "PointMass",
    "FiniteMixtureOfPointMasses",
    "UniformOnBall",
    "TruncatedGaussian",
    "DensityOnGrid",
    "LaplaceExponent",
    "UnsupportedDomain",
    "QuadratureNotConverged",
    "sample_restart",
    "integrate",
    "laplace_exponent",
    "PathRecord",
    "JumpClock",
    "EstimatorResult",
    "OccupationHistogram",
    "StepTooLarge",
    "GridTooCoarse",
    "step_reflected",
    "simulate_path",
    "semigroup_estimate",
    "elastic_functional",
    "boundary_condition_residual",
    "occupation_histogram",
    "jump_statistics",
    "SpectralBasis",
    "CoefficientSet",
    "CtSolution",
    "RootBracketingFailed",
    "HorizonExceeded",
    "TailNotResolved",
    "robin_eigenbasis_interval",
    "robin_eigenbasis_disk",
    "project_coefficients",
    "solve_volterra",
    "evaluate_solution",
    "closed_form_transform",
    "numerical_transform",
    "laplace_check",
    "GreenFunction",
    "InvariantDensity",
    "green_interval",
    "invariant_density",
    "s_identity",
    "domain_suite",
    "stationarity_residual",
    "long_run_distance",
    "GridField",
    "FirstPassageSample",
    "ExponentEstimate",
    "DtnComparison",
    "InsufficientLevel",
    "AliasingDetected",
    "simulate_halfline",
    "first_passage_ensemble",
    "first_passage_from_paths",
    "inverse_local_time_exponent",
    "local_time_calibration",
    "psi_prediction",
    "sample_field",
    "poisson_extension",
    "dtn_compare",
    "dtn_pairing",
    "EscapeConfig",
    "MfptEstimate",
    "RenewalRow",
    "CensoringDominates",
    "mfpt_reflected",
    "mfpt_jump",
    "renewal_bound",
    "sup_mfpt_jump",
    "bound_from",
]
