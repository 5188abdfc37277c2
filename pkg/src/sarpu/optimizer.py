"""Weighted, L2-penalized binary logistic regression fitted by IRLS.

This is the only model family in the package: both the class posterior and
the propensity score are logistic models fitted with :func:`fit`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .errors import DegenerateDataError, InputError

CLIP_LO = 1e-12


@dataclass(frozen=True)
class OptimizerConfig:
    l2: float = 1e-4
    grad_tol: float = 1e-8
    max_iter: int = 1000
    max_halvings: int = 60

    def __post_init__(self):
        if self.l2 < 0 or not np.isfinite(self.l2):
            raise InputError(f"l2 must be finite and >= 0, got {self.l2}")
        if self.grad_tol <= 0:
            raise InputError("grad_tol must be positive")
        if self.max_iter < 1:
            raise InputError("max_iter must be >= 1")


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """Coefficients and an (unpenalized) intercept.

    ``converged`` and ``n_iter`` describe the fit that produced the model and do
    not take part in prediction.
    """

    coef: np.ndarray
    intercept: float
    converged: bool = field(default=True, compare=False)
    n_iter: int = field(default=0, compare=False)

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=float).reshape(-1)
        if not np.all(np.isfinite(coef)) or not np.isfinite(self.intercept):
            raise InputError("logistic model parameters must be finite")
        coef.setflags(write=False)
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "intercept", float(self.intercept))

    @classmethod
    def zeros(cls, n_features: int) -> "LogisticModel":
        return cls(np.zeros(n_features), 0.0)

    @property
    def n_features(self) -> int:
        return self.coef.shape[0]

    @property
    def params(self) -> np.ndarray:
        return np.concatenate(([self.intercept], self.coef))

    def decision_function(self, x) -> np.ndarray:
        x = _as_matrix(x, self.n_features)
        return x @ self.coef + self.intercept

    def predict_proba(self, x) -> np.ndarray:
        return np.clip(expit(self.decision_function(x)), CLIP_LO, 1.0 - CLIP_LO)

    def __eq__(self, other):
        if not isinstance(other, LogisticModel):
            return NotImplemented
        return self.intercept == other.intercept and np.array_equal(self.coef, other.coef)

    __hash__ = None


def _as_matrix(x, n_cols=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        # a 1-D input is a column unless its length matches a multi-feature model
        if n_cols is None or n_cols == 1 or x.size != n_cols:
            x = x.reshape(-1, 1)
        else:
            x = x.reshape(1, -1)
    if x.ndim != 2:
        raise InputError(f"feature matrix must be 2-D, got shape {x.shape}")
    if n_cols is not None and x.shape[1] != n_cols:
        raise InputError(f"expected {n_cols} feature columns, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise InputError("feature matrix contains non-finite values")
    return x


def _with_intercept(x: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((x.shape[0], 1)), x])


def _check_fit_inputs(x, targets, weights):
    x = _as_matrix(x)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    n = x.shape[0]
    if targets.shape[0] != n or weights.shape[0] != n:
        raise InputError(
            f"length mismatch: {n} rows, {targets.shape[0]} targets, {weights.shape[0]} weights"
        )
    if not (np.all(np.isfinite(targets)) and np.all(np.isfinite(weights))):
        raise InputError("targets and weights must be finite")
    if np.any(weights < 0):
        raise InputError("weights must be nonnegative")
    if np.any((targets < 0) | (targets > 1)):
        raise InputError("targets must lie in [0, 1]")
    return x, targets, weights


def penalized_objective(params, xa, targets, weights, l2) -> float:
    """Weighted log-likelihood minus ``l2 * ||coef||^2`` (intercept unpenalized).

    ``xa`` already carries the leading column of ones.
    """
    z = xa @ params
    ll = weights @ (targets * log_expit(z) + (1.0 - targets) * log_expit(-z))
    return float(ll - l2 * params[1:] @ params[1:])


def penalized_gradient(params, xa, targets, weights, l2) -> np.ndarray:
    p = expit(xa @ params)
    g = xa.T @ (weights * (targets - p))
    g[1:] -= 2.0 * l2 * params[1:]
    return g


def _penalized_hessian_neg(params, xa, weights, l2) -> np.ndarray:
    p = expit(xa @ params)
    v = weights * p * (1.0 - p)
    h = (xa * v[:, None]).T @ xa
    idx = np.arange(1, xa.shape[1])
    h[idx, idx] += 2.0 * l2
    return h


def fit(x, targets, weights, config: OptimizerConfig | None = None,
        init: LogisticModel | None = None) -> LogisticModel:
    """Maximize the weighted penalized log-likelihood by Newton steps with halving.

    Targets may be fractional; a row with target ``t`` and weight ``w`` is the
    same as two rows (target 1, weight ``w*t``) and (target 0, weight ``w*(1-t)``).
    Zero-column inputs fit an intercept-only model.
    """
    config = config or OptimizerConfig()
    x, targets, weights = _check_fit_inputs(x, targets, weights)
    if not np.any(weights > 0):
        raise DegenerateDataError("all sample weights are zero")

    keep = weights > 0
    xa = _with_intercept(x[keep])
    t, w = targets[keep], weights[keep]
    params = np.zeros(xa.shape[1]) if init is None else init.params.copy()
    if params.shape[0] != xa.shape[1]:
        raise InputError("warm-start model has the wrong number of features")

    obj = penalized_objective(params, xa, t, w, config.l2)
    grad = penalized_gradient(params, xa, t, w, config.l2)
    converged = False
    it = 0
    while True:
        if np.max(np.abs(grad)) <= config.grad_tol:
            converged = True
            break
        if it >= config.max_iter:
            break
        it += 1
        h = _penalized_hessian_neg(params, xa, w, config.l2)
        try:
            step = np.linalg.solve(h, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(h, grad, rcond=None)[0]
        # objective differences below this are rounding noise, not descent
        noise = 1e-12 * max(1.0, abs(obj))
        scale = 1.0
        for _ in range(config.max_halvings):
            cand = params + scale * step
            cand_obj = penalized_objective(cand, xa, t, w, config.l2)
            if cand_obj >= obj - noise:
                break
            scale *= 0.5
        else:
            # no ascent left at floating-point resolution; keep the best iterate
            break
        params, obj = cand, cand_obj
        grad = penalized_gradient(params, xa, t, w, config.l2)
    return LogisticModel(params[1:], params[0], converged=converged, n_iter=it)


def predict_proba(model: LogisticModel, x) -> np.ndarray:
    return model.predict_proba(x)


def weighted_log_likelihood(model: LogisticModel, x, targets, weights) -> float:
    """Sum of ``w * [t log p + (1-t) log(1-p)]`` on clipped probabilities."""
    x = _as_matrix(x, model.n_features)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if targets.shape[0] != x.shape[0] or weights.shape[0] != x.shape[0]:
        raise InputError("targets/weights length does not match feature rows")
    p = model.predict_proba(x)
    return float(weights @ (targets * np.log(p) + (1.0 - targets) * np.log1p(-p)))
