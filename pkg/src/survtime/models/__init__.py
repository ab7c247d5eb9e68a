from .base import ConstantModel, KaplanMeierModel, ModelError, RandomRiskModel, SurvivalModel
from .cox import (
    CoxFitDiagnostics,
    CoxModel,
    NotConvergedError,
    SingularMatrixError,
    breslow_baseline,
    fit_coxph,
)
from .forest import ForestConfig, ForestModel, SurvivalTree, best_split, fit_survival_forest
from .io import load_model, model_from_json, model_to_json, save_model
from .nonparametric import fit_censoring_km, fit_kaplan_meier, fit_nelson_aalen


def coxph_predict_survival(model: CoxModel, x, grid):
    return model.predict_survival_function(x, grid)


def forest_predict_survival(model: ForestModel, x, grid):
    return model.predict_survival_function(x, grid)


__all__ = [
    "ConstantModel", "CoxFitDiagnostics", "CoxModel", "ForestConfig", "ForestModel",
    "KaplanMeierModel", "ModelError", "NotConvergedError", "RandomRiskModel",
    "SingularMatrixError", "SurvivalModel", "SurvivalTree", "best_split",
    "breslow_baseline", "coxph_predict_survival", "fit_censoring_km", "fit_coxph",
    "fit_kaplan_meier", "fit_nelson_aalen", "fit_survival_forest",
    "forest_predict_survival", "load_model", "model_from_json", "model_to_json",
    "save_model",
]
