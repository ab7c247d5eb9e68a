from .curves import ExplanationCurveSet, ShapAttribution, render_svg
from .effects import default_z_values, ice_t, pdp_t, predict
from .importance import (
    gpfi_t,
    local_attributions,
    permutation_losses,
    permutation_seeds,
    pfi_t,
    sfi_t,
)
from .shap import coalition_values, exact_shapley, select_background, survshap_t

__all__ = [
    "ExplanationCurveSet", "ShapAttribution", "coalition_values", "default_z_values",
    "exact_shapley", "gpfi_t", "ice_t", "local_attributions", "pdp_t",
    "permutation_losses", "permutation_seeds", "pfi_t", "predict", "render_svg",
    "select_background", "sfi_t", "survshap_t",
]
