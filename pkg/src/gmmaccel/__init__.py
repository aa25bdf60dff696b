"""Gaussian mixture fitting with adaptive EM and guarded Anderson acceleration.

The package provides:

- plain EM and a line-search EM baseline at fixed component count,
- adaptive EM that removes unsupported components while fitting,
- a guarded Anderson-accelerated adaptive solver (positivity rollback,
  cheap monotonicity control, periodic restarts) and its unguarded
  counterpart kept as a failure demonstrator,
- gap-statistic K-means initialization,
- a scikit-learn style estimator and a benchmark CLI (``gmmaccel``).
"""

from .accelerated import (
    AccelCounters,
    AcceleratedOutcome,
    fit_accelerated_em,
    solution_choice_series,
)
from .adaptive import (
    AdaptiveStepOutcome,
    adaptive_m_step,
    final_conservative_step,
    fit_adaptive_em,
)
from .anderson import (
    AndersonState,
    ParameterVector,
    aa_iterate,
    fit_naive_aa_em,
    flatten,
    gamma_to_alpha,
    lambda_schedule_update,
    restart,
    solve_regularized_ls,
    unflatten,
)
from .bench import (
    BenchReport,
    BenchSuite,
    compute_reduction_factors,
    export_trace,
    read_trace_csv,
    run_benchmark,
)
from .dataset import WeightedDataset, load_dataset_csv, save_dataset_csv
from .em import (
    FitConfig,
    FitTrace,
    Responsibilities,
    RestartMode,
    SolutionChoice,
    e_step,
    e_step_with_loglik,
    fit_em,
    m_step_standard,
)
from .estimator import AdaptiveGaussianMixture
from .exceptions import (
    AllComponentsKilledError,
    DegenerateComponentError,
    GmmError,
    InvalidInputError,
    NumericalFailureError,
)
from .initialization import (
    GapStatReport,
    InitConfig,
    KMeansResult,
    gap_statistic,
    gs_kmeans_init,
    kmeans_init,
    kmeans_pp_seed,
    weighted_kmeans,
)
from .line_search import LineSearchStep, els_step, fit_els_em
from .model import (
    GaussianComponent,
    MixtureModel,
    MomentSummary,
    data_moments,
    gaussian_log_density,
    load_model_json,
    log_likelihood,
    mixture_log_density,
    mixture_moments,
    penalized_log_likelihood,
    save_model_json,
)
from .scores import (
    ScoreVector,
    exact_monotonicity_test,
    score_covariances,
    score_means,
    score_vector,
    score_weights,
    taylor_monotonicity_test,
)
from .synthetic import SyntheticSpec, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "AccelCounters",
    "AcceleratedOutcome",
    "AdaptiveGaussianMixture",
    "AdaptiveStepOutcome",
    "AllComponentsKilledError",
    "AndersonState",
    "BenchReport",
    "BenchSuite",
    "DegenerateComponentError",
    "FitConfig",
    "FitTrace",
    "GapStatReport",
    "GaussianComponent",
    "GmmError",
    "InitConfig",
    "InvalidInputError",
    "KMeansResult",
    "LineSearchStep",
    "MixtureModel",
    "MomentSummary",
    "NumericalFailureError",
    "ParameterVector",
    "Responsibilities",
    "RestartMode",
    "ScoreVector",
    "SolutionChoice",
    "SyntheticSpec",
    "WeightedDataset",
    "aa_iterate",
    "adaptive_m_step",
    "compute_reduction_factors",
    "data_moments",
    "e_step",
    "e_step_with_loglik",
    "els_step",
    "exact_monotonicity_test",
    "export_trace",
    "final_conservative_step",
    "fit_accelerated_em",
    "fit_adaptive_em",
    "fit_els_em",
    "fit_em",
    "fit_naive_aa_em",
    "flatten",
    "gamma_to_alpha",
    "gap_statistic",
    "gaussian_log_density",
    "generate_synthetic",
    "gs_kmeans_init",
    "kmeans_init",
    "kmeans_pp_seed",
    "lambda_schedule_update",
    "load_dataset_csv",
    "load_model_json",
    "log_likelihood",
    "m_step_standard",
    "mixture_log_density",
    "mixture_moments",
    "penalized_log_likelihood",
    "read_trace_csv",
    "restart",
    "run_benchmark",
    "save_dataset_csv",
    "save_model_json",
    "score_covariances",
    "score_means",
    "score_vector",
    "score_weights",
    "solution_choice_series",
    "solve_regularized_ls",
    "taylor_monotonicity_test",
    "unflatten",
    "weighted_kmeans",
]
