"""Model-agnostic text explainability with a cross-domain evaluation harness."""

from .anchor import AnchorConfig, AnchorResult, estimate_precision, find_anchor, kl_bernoulli_bounds
from .classifier import (
    BaselineConfig,
    ProbVector,
    TrainedModel,
    classify,
    fit_baseline,
    load_model,
    predict_proba,
    save_model,
)
from .corpus import (
    Corpus,
    Label,
    LevelSplit,
    Sample,
    TokenizerConfig,
    build_level_split,
    load_corpus,
    tokenize,
)
from .harness import ExperimentSpec, SyntheticSpec, run_experiment, score_explainers, select_battery
from .metrics import classification_report, confusion, report, roc_auc
from .perturbation import (
    InterpretableInstance,
    PerturbationConfig,
    decompose,
    proximity,
    realize,
    sample_masks,
)
from .remote import remote_predictor
from .shapley import ShapConfig, brute_force_shapley, shap_explain, shap_kernel_weight
from .surrogate import eli5_explain, fit_weighted_linear, lime_explain, surrogate_fidelity
from .synthetic import generate_synthetic_corpora

__version__ = "0.1.0"

__all__ = [
    "AnchorConfig",
    "AnchorResult",
    "BaselineConfig",
    "Corpus",
    "ExperimentSpec",
    "InterpretableInstance",
    "Label",
    "LevelSplit",
    "PerturbationConfig",
    "ProbVector",
    "Sample",
    "ShapConfig",
    "SyntheticSpec",
    "TokenizerConfig",
    "TrainedModel",
    "brute_force_shapley",
    "build_level_split",
    "classification_report",
    "classify",
    "confusion",
    "decompose",
    "eli5_explain",
    "estimate_precision",
    "find_anchor",
    "fit_baseline",
    "fit_weighted_linear",
    "generate_synthetic_corpora",
    "kl_bernoulli_bounds",
    "lime_explain",
    "load_corpus",
    "load_model",
    "predict_proba",
    "proximity",
    "realize",
    "remote_predictor",
    "report",
    "roc_auc",
    "run_experiment",
    "sample_masks",
    "save_model",
    "score_explainers",
    "select_battery",
    "shap_explain",
    "shap_kernel_weight",
    "surrogate_fidelity",
    "tokenize",
]
