"""Common model interface and covariate-free reference models."""
from __future__ import annotations

import numpy as np

from ..data import StepFunction, SurvivalDataset, TimeGrid


class ModelError(RuntimeError):
    """A model could not be fitted or used."""


class SurvivalModel:
    """Fitted model that maps observations to survival curves.

    Subclasses implement :meth:`predict_cumhazard` or :meth:`predict_survival`
    on a batch ``X`` of shape (n, p), returning an (n, m) array of values at
    the grid points.
    """

    kind = "abstract"
    n_features: int

    def predict_survival(self, X, grid: TimeGrid) -> np.ndarray:
        return np.exp(-self.predict_cumhazard(X, grid))

    def predict_cumhazard(self, X, grid: TimeGrid) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return -np.log(self.predict_survival(X, grid))

    def predict_survival_function(self, x, grid: TimeGrid) -> StepFunction:
        """Survival curve of one observation, sampled onto ``grid``."""
        values = self.predict_survival(np.atleast_2d(x), grid)[0]
        return StepFunction(grid.points, values, 1.0)

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"dimension mismatch: model expects {self.n_features} features, "
                f"got array of shape {X.shape}"
            )
        return X

    def to_dict(self) -> dict:
        raise NotImplementedError

    @classmethod
    def from_dict(cls, d: dict) -> "SurvivalModel":
        raise NotImplementedError


class KaplanMeierModel(SurvivalModel):
    """Predicts the cohort Kaplan-Meier curve for every observation."""

    kind = "km"

    def __init__(self, curve: StepFunction, n_features: int):
        self.curve = curve
        self.n_features = n_features

    @classmethod
    def fit(cls, ds: SurvivalDataset) -> "KaplanMeierModel":
        from .nonparametric import fit_kaplan_meier

        ds.require_events()
        return cls(fit_kaplan_meier(ds.times, ds.events), ds.p)

    def predict_survival(self, X, grid):
        X = self._check_X(X)
        return np.tile(self.curve.on_grid(grid), (X.shape[0], 1))

    def to_dict(self):
        return {"curve": self.curve.to_dict(), "n_features": self.n_features}

    @classmethod
    def from_dict(cls, d):
        return cls(StepFunction.from_dict(d["curve"]), d["n_features"])


class ConstantModel(SurvivalModel):
    """Predicts S(t) = value for every t on the grid and every observation."""

    kind = "constant"

    def __init__(self, n_features: int, value: float = 0.5):
        if not 0.0 <= value <= 1.0:
            raise ValueError("constant survival must lie in [0, 1]")
        self.n_features = n_features
        self.value = float(value)

    def predict_survival(self, X, grid):
        X = self._check_X(X)
        return np.full((X.shape[0], len(grid)), self.value)

    def to_dict(self):
        return {"n_features": self.n_features, "value": self.value}

    @classmethod
    def from_dict(cls, d):
        return cls(d["n_features"], d["value"])


class RandomRiskModel(SurvivalModel):
    """Cohort Nelson-Aalen baseline scaled by a random per-row risk.

    The risk multipliers ignore the features entirely, so every
    discrimination metric should sit at its chance level. Draws depend only
    on ``seed`` and the batch size, so repeated calls agree.
    """

    kind = "random"

    def __init__(self, baseline: StepFunction, n_features: int, seed: int = 0):
        self.baseline = baseline
        self.n_features = n_features
        self.seed = int(seed)

    @classmethod
    def fit(cls, ds: SurvivalDataset, seed: int = 0) -> "RandomRiskModel":
        from .nonparametric import fit_nelson_aalen

        ds.require_events()
        return cls(fit_nelson_aalen(ds.times, ds.events), ds.p, seed)

    def predict_cumhazard(self, X, grid):
        X = self._check_X(X)
        rng = np.random.default_rng([self.seed, X.shape[0]])
        risk = np.exp(rng.standard_normal(X.shape[0]))
        return risk[:, None] * self.baseline.on_grid(grid)[None, :]

    def to_dict(self):
        return {"baseline": self.baseline.to_dict(), "n_features": self.n_features,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(StepFunction.from_dict(d["baseline"]), d["n_features"], d["seed"])
