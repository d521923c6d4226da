"""adham: interpretable additive-hazards mixture survival modeling.

The model explains each patient's hazard as a mixture over latent subgroups,
where every subgroup distributes its risk across individual covariates and
each covariate drives a shared population-level hazard curve. Training,
subgroup refinement, survival prediction, censoring-aware metrics, and a
command-line pipeline live in the submodules re-exported here.
"""

from .data import (
    DataError,
    Dataset,
    FoldSplit,
    StandardizationStats,
    load_csv,
    quantile_horizons,
    split_folds,
    standardize,
)
from .metrics import (
    CensoringEstimate,
    EvaluationReport,
    SurvivalCurve,
    auroc,
    brier,
    c_index,
    evaluate,
    individual_survival,
    individual_survival_decomposition,
    km_censoring,
    population_survival,
)
from .model import (
    AdhamModel,
    FitResult,
    HazardNet,
    NumericalError,
    TrainConfig,
    fit,
    mc_loglik,
    mc_loglik_d,
    regularizer,
    sample_dataset,
)
from .refinement import (
    RefinementPlan,
    apply_merge,
    combine_clusters,
    correlation_matrix,
)
from .serialize import MODEL_FORMAT_VERSION, load_model, model_hash, save_model

__version__ = "0.1.0"

__all__ = [
    "AdhamModel",
    "CensoringEstimate",
    "DataError",
    "Dataset",
    "EvaluationReport",
    "FitResult",
    "FoldSplit",
    "HazardNet",
    "MODEL_FORMAT_VERSION",
    "NumericalError",
    "RefinementPlan",
    "StandardizationStats",
    "SurvivalCurve",
    "TrainConfig",
    "apply_merge",
    "auroc",
    "brier",
    "c_index",
    "combine_clusters",
    "correlation_matrix",
    "evaluate",
    "fit",
    "individual_survival",
    "individual_survival_decomposition",
    "km_censoring",
    "load_csv",
    "load_model",
    "mc_loglik",
    "mc_loglik_d",
    "model_hash",
    "population_survival",
    "quantile_horizons",
    "regularizer",
    "sample_dataset",
    "save_model",
    "split_folds",
    "standardize",
    "__version__",
]
