"""Univariate-guided sparse regression with pairwise interactions."""

from .core import (AllColumnsConstant, Dataset, DegenerateFeature, DimensionMismatch,
                   StandardizedDesign, UniPairsError, destandardize, standardize)
from .glm import Binomial, Cox, Gaussian, get_family
from .pipelines import (InteractionModel, fit, fit_unipairs, fit_unipairs_2stage,
                        model_from_json, model_to_json, predict, predict_response)
from .simulate import SimulationSpec, evaluate, generate, lasso_baseline, run_grid
from .solver import LassoProblem, cross_validate, lasso_path, solve
from .tripletscan import HierarchyMode, eligible_pairs, log_gap_select, scan
from .unilasso import unilasso_fit
from .univariate import uni_fit_loo

__version__ = "0.1.0"

__all__ = [
    "AllColumnsConstant", "Binomial", "Cox", "Dataset", "DegenerateFeature",
    "DimensionMismatch", "Gaussian", "HierarchyMode", "InteractionModel", "LassoProblem",
    "SimulationSpec", "StandardizedDesign", "UniPairsError", "cross_validate", "destandardize",
    "eligible_pairs", "evaluate", "fit", "fit_unipairs", "fit_unipairs_2stage", "generate",
    "get_family", "lasso_baseline", "lasso_path", "log_gap_select", "model_from_json",
    "model_to_json", "predict", "predict_response", "run_grid", "scan", "solve",
    "standardize", "uni_fit_loo", "unilasso_fit",
]
