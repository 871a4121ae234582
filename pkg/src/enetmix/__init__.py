"""Global surrogate explanation of black-box classifiers.

Fits a truncated Dirichlet-process mixture of linear regressions whose
coefficients carry multiple Bayesian elastic-net priors to (sample,
prediction) pairs from any black-box model, then reads local
explanations, global per-class patterns, and pathological-sample masks
off the fitted surrogate.
"""

from .errors import (
    AdapterError,
    ConfigError,
    DegenerateTruncationError,
    EmptyMaskError,
    EmptyModelError,
    EnetmixError,
    IngestionError,
    NonPositiveDefiniteError,
    NumericalCollapseError,
    ParameterDomainError,
    PersistenceError,
    ResponseDomainError,
    ShapeError,
)
from .explain import (
    Explanation,
    Pattern,
    SurrogateModel,
    assign_components,
    craft_pathological,
    export_heatmap,
    fit_surrogate,
    global_patterns,
    local_explanation,
    pattern_similarity,
    predict,
    rmse,
)
from .io_cli import (
    RunConfig,
    cli_main,
    load_config,
    load_dataset,
    persist_chain,
    persist_explanations,
    persist_model,
    persist_patterns,
    restore_chain,
    restore_model,
    restore_patterns,
    subprocess_adapter,
)
from .model import (
    ChainState,
    Dataset,
    Hyperparameters,
    PosteriorChain,
    Standardization,
    inverse_logit,
    logit_transform,
    standardize_features,
    stick_breaking,
    sticks_from_weights,
)
from .relabel import Relabeling, relabel_chain
from .rngdist import RandomSource
from .sampler import SweepDiagnostics, mixture_loglik, run_chain

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "ChainState",
    "ConfigError",
    "Dataset",
    "DegenerateTruncationError",
    "EmptyMaskError",
    "EmptyModelError",
    "EnetmixError",
    "Explanation",
    "Hyperparameters",
    "IngestionError",
    "NonPositiveDefiniteError",
    "NumericalCollapseError",
    "ParameterDomainError",
    "Pattern",
    "PersistenceError",
    "PosteriorChain",
    "RandomSource",
    "Relabeling",
    "ResponseDomainError",
    "RunConfig",
    "ShapeError",
    "Standardization",
    "SurrogateModel",
    "SweepDiagnostics",
    "assign_components",
    "cli_main",
    "craft_pathological",
    "export_heatmap",
    "fit_surrogate",
    "global_patterns",
    "inverse_logit",
    "load_config",
    "load_dataset",
    "local_explanation",
    "logit_transform",
    "mixture_loglik",
    "pattern_similarity",
    "persist_chain",
    "persist_explanations",
    "persist_model",
    "persist_patterns",
    "predict",
    "relabel_chain",
    "restore_chain",
    "restore_model",
    "restore_patterns",
    "rmse",
    "run_chain",
    "standardize_features",
    "stick_breaking",
    "sticks_from_weights",
    "subprocess_adapter",
]
