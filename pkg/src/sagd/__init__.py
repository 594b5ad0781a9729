"""Second-moment analysis of stochastic accelerated gradient descent.

The package covers the full pipeline for least-squares SAGD on random
inputs with known moments: simulating single and coupled chains, evolving
the exact second moment of the coupling difference through the associated
contraction matrix, spectral and pseudospectral diagnostics of that matrix
(including its per-coordinate block reduction), constrained hyperparameter
tuning, and an experiment harness that reproduces the published
empirical-vs-theoretical decay-rate tables.
"""

__version__ = "0.1.0"

from .chains import (
    ChainRun,
    ChainState,
    CoupledTrajectory,
    Theta,
    build_A_matrix,
    run_chain,
    run_coupled_chains,
    run_coupled_ensemble,
    sagd_step,
    sgd_step,
)
from .contraction import (
    ContractionMatrix,
    SecondMomentState,
    build_contraction_matrix,
    evolve_second_moment,
    initial_second_moment,
    mc_estimate_Mn,
    reconstruct_Mn,
    w2_upper_bound,
)
from .errors import ArgumentError, ConsistencyError, DivergenceError, FitError
from .harness import (
    BENCHMARK_THETAS,
    EmpiricalModel,
    ExperimentConfig,
    FitResult,
    RateRow,
    RealizableRun,
    emit_results,
    fit_exponential_rate,
    ingest_dataset,
    rate_summary,
    run_realizable,
    run_table,
)
from .moments import (
    GaussianSampler,
    LabelModel,
    MomentSpec,
    TwoPointSampler,
    UniformSampler,
    check_declared_moments,
    fourth_moment_transform,
    load_model,
    make_custom_model,
    make_gaussian_model,
    make_uniform_rademacher_model,
    noise_second_moment,
    rotate_model,
    sample_input,
    save_model,
    strong_growth_lower_bound,
)
from .spectral import (
    PowerBoundCheck,
    SpectralReport,
    build_J_blocks,
    jblock_mixing_bound,
    jblock_reduction,
    perturbation_bound_check,
    power_norm_bound_check,
    pseudospectral_radius,
    pseudospectrum_grid,
    spectral_radius,
    spectral_report,
)
from .tuner import TuneConfig, TuneResult, preset_theta, tune

__all__ = [
    "__version__",
    # moments
    "MomentSpec",
    "LabelModel",
    "GaussianSampler",
    "UniformSampler",
    "TwoPointSampler",
    "make_gaussian_model",
    "make_uniform_rademacher_model",
    "make_custom_model",
    "rotate_model",
    "sample_input",
    "fourth_moment_transform",
    "noise_second_moment",
    "strong_growth_lower_bound",
    "check_declared_moments",
    "save_model",
    "load_model",
    # chains
    "Theta",
    "ChainState",
    "ChainRun",
    "CoupledTrajectory",
    "sgd_step",
    "sagd_step",
    "build_A_matrix",
    "run_chain",
    "run_coupled_chains",
    "run_coupled_ensemble",
    # contraction
    "ContractionMatrix",
    "SecondMomentState",
    "initial_second_moment",
    "build_contraction_matrix",
    "evolve_second_moment",
    "reconstruct_Mn",
    "mc_estimate_Mn",
    "w2_upper_bound",
    # spectral
    "SpectralReport",
    "PowerBoundCheck",
    "spectral_radius",
    "pseudospectral_radius",
    "spectral_report",
    "build_J_blocks",
    "jblock_reduction",
    "jblock_mixing_bound",
    "power_norm_bound_check",
    "perturbation_bound_check",
    "pseudospectrum_grid",
    # tuner
    "TuneConfig",
    "TuneResult",
    "tune",
    "preset_theta",
    # harness
    "FitResult",
    "fit_exponential_rate",
    "RateRow",
    "rate_summary",
    "run_table",
    "RealizableRun",
    "run_realizable",
    "EmpiricalModel",
    "ingest_dataset",
    "emit_results",
    "ExperimentConfig",
    "BENCHMARK_THETAS",
    # errors
    "ArgumentError",
    "ConsistencyError",
    "DivergenceError",
    "FitError",
]
