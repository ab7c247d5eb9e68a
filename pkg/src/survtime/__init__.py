"""Survival models and time-dependent, model-agnostic explanations."""
from .data import (
    Encoding,
    FeatureGroup,
    StepFunction,
    SurvivalDataset,
    TimeGrid,
    eval_step,
    load_dataset,
    make_time_grid,
    permute_features,
    replace_feature,
)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Encoding", "FeatureGroup", "StepFunction", "SurvivalDataset", "TimeGrid",
    "eval_step", "load_dataset", "make_time_grid", "permute_features", "replace_feature",
]
