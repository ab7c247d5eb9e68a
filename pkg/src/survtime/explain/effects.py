"""Time-dependent individual conditional expectation and partial dependence."""
from __future__ import annotations

import numpy as np

from ..data import BINARY, CATEGORICAL, SurvivalDataset, TimeGrid, replace_feature
from .curves import ExplanationCurveSet

N_QUANTILES = 11


def predict(model, X, grid: TimeGrid, output: str = "survival") -> np.ndarray:
    """Model output f_t on a batch: survival or cumulative hazard."""
    if output == "survival":
        return model.predict_survival(X, grid)
    if output == "cumhazard":
        return model.predict_cumhazard(X, grid)
    raise ValueError(f"unknown output {output!r}; use 'survival' or 'cumhazard'")


def default_z_values(ds: SurvivalDataset, j: int) -> np.ndarray:
    """(0, 1) for binary and one-hot columns, else 11 deciles of the column."""
    if ds.feature_kinds[j] in (BINARY, CATEGORICAL):
        return np.array([0.0, 1.0])
    return np.unique(np.quantile(ds.features[:, j], np.linspace(0, 1, N_QUANTILES)))


def _z_label(z: float) -> str:
    return f"{float(z):.6g}"


def _resolve(ds, j):
    if ds is None:
        if not isinstance(j, (int, np.integer)):
            raise ValueError("feature names need a dataset to resolve against")
        return int(j)
    return ds.feature_index(j)


def ice_t(model, x, j, z_values=None, grid: TimeGrid = None, ds: SurvivalDataset | None = None,
          output: str = "survival", observation_id=None) -> ExplanationCurveSet:
    """One curve t -> f_t(x with feature j set to z) per value z.

    ``z_values`` defaults to :func:`default_z_values` over ``ds``.
    """
    if grid is None:
        raise ValueError("a time grid is required")
    x = np.asarray(x, dtype=float).ravel()
    j = _resolve(ds, j)
    if not 0 <= j < x.size:
        raise IndexError(f"feature index {j} out of range for p={x.size}")
    if z_values is None:
        if ds is None:
            raise ValueError("z_values or a dataset for default values is required")
        z_values = default_z_values(ds, j)
    z_values = np.asarray(z_values, dtype=float).ravel()
    if z_values.size == 0:
        raise ValueError("z_values must not be empty")
    rows = np.vstack([replace_feature(x, j, z) for z in z_values])
    preds = predict(model, rows, grid, output)
    curves = {_z_label(z): preds[k] for k, z in enumerate(z_values)}
    name = ds.feature_names[j] if ds is not None else f"x{j}"
    prov = {"method": "ice", "feature": name, "feature_index": j, "observation": observation_id,
            "z_values": z_values.tolist(), "output": output, "model": getattr(model, "kind", None)}
    return ExplanationCurveSet(grid, curves, "ice", provenance=prov)


def ice_matrix(model, X, j: int, z: float, grid: TimeGrid, output="survival") -> np.ndarray:
    """f_t(x^{j|=z}) for every row of X, shape (n, m)."""
    return predict(model, replace_feature(X, j, z), grid, output)


def pdp_t(model, ds: SurvivalDataset, j, z_values=None, grid: TimeGrid = None,
          output: str = "survival", contrast=None) -> ExplanationCurveSet:
    """Average of the ICE curves over the rows of ``ds``, one curve per z.

    Dispersion is the standard deviation of the n ICE values at each time.
    ``contrast=(a, b)`` adds a curve of the per-observation difference
    f_t(x^{j|=b}) - f_t(x^{j|=a}), averaged with its own spread; binary
    features get ``(0, 1)`` automatically.
    """
    if grid is None:
        raise ValueError("a time grid is required")
    j = ds.feature_index(j)
    if z_values is None:
        z_values = default_z_values(ds, j)
    z_values = np.asarray(z_values, dtype=float).ravel()
    if z_values.size == 0:
        raise ValueError("z_values must not be empty")
    curves, disp = {}, {}
    for z in z_values:
        ice = ice_matrix(model, ds.features, j, z, grid, output)
        curves[_z_label(z)] = ice.mean(axis=0)
        disp[_z_label(z)] = ice.std(axis=0)

    if contrast is None and ds.feature_kinds[j] in (BINARY, CATEGORICAL):
        contrast = (0.0, 1.0)
    if contrast is not None:
        a, b = contrast
        diff = (ice_matrix(model, ds.features, j, b, grid, output)
                - ice_matrix(model, ds.features, j, a, grid, output))
        name = f"diff({_z_label(b)}-{_z_label(a)})"
        curves[name] = diff.mean(axis=0)
        disp[name] = diff.std(axis=0)
    prov = {"method": "pdp", "feature": ds.feature_names[j], "feature_index": j,
            "z_values": z_values.tolist(), "n": ds.n, "dataset": ds.name,
            "contrast": list(contrast) if contrast is not None else None,
            "output": output, "model": getattr(model, "kind", None)}
    return ExplanationCurveSet(grid, curves, "pdp", disp, provenance=prov)
