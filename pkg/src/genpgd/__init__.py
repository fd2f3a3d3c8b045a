"""genpgd: projected gradient descent over the range of a generative network.

The package solves inverse problems of the form "minimize F(x) subject to x
in Range(G)" for a feedforward generator G, plus a variant that adds a sparse
deviation in an orthonormal basis.  It ships the projection oracles, the
solvers, empirical estimators for the curvature and incoherence constants
that govern the convergence theory, and a small experiment harness with a
CLI (``genpgd gen|solve|sweep|report|estimate``).
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ContractError,
    DivergenceError,
    GenpgdError,
    NumericError,
)
from .generator import (
    Activation,
    GeneratorNetwork,
    Layer,
    forward,
    forward_batch,
    load_network,
    make_linear_generator,
    make_random_generator,
    network_from_json,
    network_to_json,
    save_network,
    vjp,
)
from .objective import (
    CurvatureEstimate,
    DiameterGammaEstimate,
    Objective,
    RegularityEstimates,
    curvature_ratio,
    estimate_diameter_gamma,
    estimate_incoherence,
    estimate_rsc_rss,
    gradient,
    latent_pair_sampler,
    minkowski_curvature,
    objective_from_json,
    objective_to_json,
    subspace_curvature,
    subspace_incoherence,
    sum_pair_sampler,
    value,
)
from .projection import (
    OrthoBasis,
    ProjectionConfig,
    ProjectionResult,
    hard_threshold,
    hard_threshold_coeffs,
    project,
    project_linear,
)
from .harness import (
    ExperimentConfig,
    GeneratorSpec,
    ProblemInstance,
    ProblemSpec,
    SolveSummary,
    SweepSpec,
    build_objective,
    emit_report,
    estimate_regularity,
    gen_problem,
    load_problem,
    run_solve,
    run_sweep,
    save_problem,
)
from .solver import (
    ContractionReport,
    IterationRecord,
    IterationTrace,
    SolverConfig,
    contraction_report,
    default_step_size,
    epsilon_pgd,
    myopic_contraction_factor,
    myopic_contraction_factor_strict,
    myopic_pgd,
    pgd_contraction_factor,
    pgd_contraction_factor_alt,
    trace_from_csv,
    trace_to_csv,
)

__all__ = [
    "__version__",
    "ConfigError",
    "ContractError",
    "DivergenceError",
    "GenpgdError",
    "NumericError",
    "Activation",
    "GeneratorNetwork",
    "Layer",
    "forward",
    "forward_batch",
    "load_network",
    "make_linear_generator",
    "make_random_generator",
    "network_from_json",
    "network_to_json",
    "save_network",
    "vjp",
    "CurvatureEstimate",
    "DiameterGammaEstimate",
    "Objective",
    "RegularityEstimates",
    "curvature_ratio",
    "estimate_diameter_gamma",
    "estimate_incoherence",
    "estimate_rsc_rss",
    "gradient",
    "latent_pair_sampler",
    "minkowski_curvature",
    "objective_from_json",
    "objective_to_json",
    "subspace_curvature",
    "subspace_incoherence",
    "sum_pair_sampler",
    "value",
    "OrthoBasis",
    "ProjectionConfig",
    "ProjectionResult",
    "hard_threshold",
    "hard_threshold_coeffs",
    "project",
    "project_linear",
    "ExperimentConfig",
    "GeneratorSpec",
    "ProblemInstance",
    "ProblemSpec",
    "SolveSummary",
    "SweepSpec",
    "build_objective",
    "emit_report",
    "estimate_regularity",
    "gen_problem",
    "load_problem",
    "run_solve",
    "run_sweep",
    "save_problem",
    "ContractionReport",
    "IterationRecord",
    "IterationTrace",
    "SolverConfig",
    "contraction_report",
    "default_step_size",
    "epsilon_pgd",
    "myopic_contraction_factor",
    "myopic_contraction_factor_strict",
    "myopic_pgd",
    "pgd_contraction_factor",
    "pgd_contraction_factor_alt",
    "trace_from_csv",
    "trace_to_csv",
]
