"""Cox proportional hazards with Breslow ties, fitted by safeguarded Newton-Raphson."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ..data import Encoding, StepFunction, SurvivalDataset
from .base import ModelError, SurvivalModel


class SingularMatrixError(ModelError):
    pass


class NotConvergedError(ModelError):
    pass


@dataclass
class CoxFitDiagnostics:
    loglik_trace: list[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    gradient_max: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "loglik_trace": list(self.loglik_trace),
            "n_iter": self.n_iter,
            "converged": self.converged,
            "gradient_max": self.gradient_max,
        }


class _RiskSets:
    """Sorted layout shared by every likelihood evaluation of one fit."""

    def __init__(self, Z, times, events):
        order = np.argsort(times, kind="stable")
        self.Z = Z[order]
        self.events = events[order]
        t = times[order]
        uniq, first, inverse = np.unique(t, return_index=True, return_inverse=True)
        self.first = first
        self.inverse = inverse
        self.deaths = np.bincount(inverse, weights=self.events.astype(float), minlength=uniq.size)
        self.event_groups = self.deaths > 0
        self.event_times = uniq[self.event_groups]
        self.z_event_sum = self.Z[self.events].sum(axis=0)

    def evaluate(self, beta, second_order=True):
        Z = self.Z
        eta = Z @ beta
        shift = eta.max()
        w = np.exp(eta - shift)
        s0 = np.cumsum(w[::-1])[::-1][self.first]
        s1 = np.cumsum((w[:, None] * Z)[::-1], axis=0)[::-1][self.first]
        d = self.deaths
        g = self.event_groups
        s0g, s1g, dg = s0[g], s1[g], d[g]
        loglik = float(eta[self.events].sum() - np.sum(dg * (np.log(s0g) + shift)))
        ratio = s1g / s0g[:, None]
        grad = self.z_event_sum - (dg[:, None] * ratio).sum(axis=0)
        if not second_order:
            return loglik, grad, None
        # sum_g d_g S2_g/S0_g == Z' diag(w * c) Z with c_j = sum_{t_g <= T_j} d_g / S0_g
        c = np.cumsum(np.where(g, d / s0, 0.0))[self.inverse]
        info = (Z * (w * c)[:, None]).T @ Z - (ratio * dg[:, None]).T @ ratio
        return loglik, grad, info


def _reference_columns(encoding: Encoding | None) -> list[int]:
    if encoding is None:
        return []
    return [block[0] for block in encoding.categorical_blocks() if len(block) > 1]


class CoxModel(SurvivalModel):
    """Fitted Cox model; predictions are S(t|x) = exp(-H0(t) exp(beta'x))."""

    kind = "coxph"

    def __init__(self, coefficients, baseline_cumhazard: StepFunction, standard_errors=None,
                 diagnostics: CoxFitDiagnostics | None = None, feature_names=None):
        self.coefficients = np.asarray(coefficients, dtype=float)
        self.n_features = self.coefficients.size
        self.baseline_cumhazard = baseline_cumhazard
        if standard_errors is None:
            standard_errors = np.full(self.n_features, np.nan)
        self.standard_errors = np.asarray(standard_errors, dtype=float)
        self.diagnostics = diagnostics or CoxFitDiagnostics(converged=True)
        self.feature_names = list(feature_names or [f"x{j}" for j in range(self.n_features)])

    def linear_predictor(self, X) -> np.ndarray:
        X = self._check_X(X)
        # row-wise reduction keeps each row's value independent of batch size
        return (X * self.coefficients).sum(axis=1)

    def predict_cumhazard(self, X, grid):
        if not self.diagnostics.converged:
            raise NotConvergedError("Cox model did not converge; predictions are unreliable")
        eta = self.linear_predictor(X)
        return np.exp(eta)[:, None] * self.baseline_cumhazard.on_grid(grid)[None, :]

    def summary(self) -> list[dict]:
        """Coefficient table: estimate, standard error, Wald z and p-value."""
        rows = []
        for name, b, se in zip(self.feature_names, self.coefficients, self.standard_errors):
            z = b / se if se > 0 else float("nan")
            p = float(2 * norm.sf(abs(z))) if math.isfinite(z) else float("nan")
            rows.append({"feature": name, "estimate": float(b), "std_error": float(se),
                         "z": float(z), "p_value": p})
        return rows

    def to_dict(self):
        return {
            "coefficients": self.coefficients.tolist(),
            "standard_errors": self.standard_errors.tolist(),
            "baseline_cumhazard": self.baseline_cumhazard.to_dict(),
            "diagnostics": self.diagnostics.to_dict(),
            "feature_names": self.feature_names,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["coefficients"], StepFunction.from_dict(d["baseline_cumhazard"]),
            d["standard_errors"], CoxFitDiagnostics(**d["diagnostics"]), d["feature_names"],
        )


def breslow_baseline(X, times, events, beta) -> StepFunction:
    """Breslow estimate of the baseline cumulative hazard at ``beta``."""
    X = np.asarray(X, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    eta = (X * beta).sum(axis=1)
    shift = eta.max()
    order = np.argsort(times, kind="stable")
    t = times[order]
    w = np.exp(eta[order] - shift)
    uniq, first, inverse = np.unique(t, return_index=True, return_inverse=True)
    deaths = np.bincount(inverse, weights=events[order].astype(float), minlength=uniq.size)
    s0 = np.cumsum(w[::-1])[::-1][first]
    g = deaths > 0
    increments = deaths[g] / s0[g] * math.exp(-shift)
    return StepFunction(uniq[g], np.cumsum(increments), 0.0)


def fit_coxph(ds: SurvivalDataset, max_iter: int = 50, tol: float = 1e-7,
              ties: str = "breslow") -> CoxModel:
    """Maximize the Breslow partial likelihood by Newton-Raphson.

    Features are standardized internally and the coefficients mapped back
    to the original scale. The first level of each one-hot block is the
    reference category: its coefficient is fixed at 0. Newton steps are
    halved while the partial likelihood decreases. Iteration stops when the
    largest gradient component falls below ``tol``, or when two successive
    steps change the log-likelihood by a relative amount below ``tol``
    (gradient stuck at the floating-point floor); running out of iterations leaves
    ``diagnostics.converged`` False and emits a warning.
    """
    if ties != "breslow":
        raise ValueError("only Breslow tie handling is supported")
    ds.require_events()
    X = ds.features
    ref = set(_reference_columns(ds.encoding))
    active = np.array([j for j in range(ds.p) if j not in ref], dtype=int)
    Xa = X[:, active]
    mean = Xa.mean(axis=0)
    sd = Xa.std(axis=0)
    constant = [ds.feature_names[active[k]] for k in np.flatnonzero(sd == 0)]
    if constant:
        raise SingularMatrixError(
            f"singular information matrix: constant feature(s) {', '.join(constant)}"
        )
    Z = (Xa - mean) / sd
    if np.linalg.matrix_rank(Z) < Z.shape[1]:
        raise SingularMatrixError("singular information matrix: features are perfectly collinear")

    rs = _RiskSets(Z, ds.times, ds.events)
    beta = np.zeros(Z.shape[1])
    loglik, grad, info = rs.evaluate(beta)
    diag = CoxFitDiagnostics(loglik_trace=[loglik])
    converged = bool(np.max(np.abs(grad)) < tol) if grad.size else True
    it = 0
    small_steps = 0
    while not converged and it < max_iter:
        it += 1
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise SingularMatrixError("singular information matrix during Newton iteration") from None
        scale = 1.0
        for _ in range(40):
            cand = beta + scale * step
            new_loglik, new_grad, new_info = rs.evaluate(cand)
            if np.isfinite(new_loglik) and new_loglik >= loglik - 1e-12 * abs(loglik):
                break
            scale *= 0.5
        else:
            break
        rel_change = abs(new_loglik - loglik) / max(abs(loglik), 1e-300)
        beta, loglik, grad, info = cand, new_loglik, new_grad, new_info
        diag.loglik_trace.append(loglik)
        # a tiny likelihood change ends the fit only if repeated: the extra
        # Newton step usually drives the gradient below tol as well
        small_steps = small_steps + 1 if rel_change < tol else 0
        converged = bool(np.max(np.abs(grad)) < tol) or small_steps >= 2
    diag.n_iter = it
    diag.converged = converged
    diag.gradient_max = float(np.max(np.abs(grad))) if grad.size else 0.0
    if not converged:
        warnings.warn(f"Cox fit did not converge in {max_iter} iterations", RuntimeWarning)

    try:
        cov_std = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("singular information matrix at the optimum") from None
    coef = np.zeros(ds.p)
    se = np.full(ds.p, np.nan)
    coef[active] = beta / sd
    se[active] = np.sqrt(np.clip(np.diag(cov_std), 0, None)) / sd
    baseline = breslow_baseline(X, ds.times, ds.events, coef)
    return CoxModel(coef, baseline, se, diag, ds.feature_names)
