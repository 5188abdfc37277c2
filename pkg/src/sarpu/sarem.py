"""EM training of a classifier and a propensity model from PU data.

The loop alternates

* an expectation step that turns the current classifier and (decayed)
  propensity predictions into the expected class ``yhat`` of every unlabeled
  row, and
* a maximization step that refits both logistic models on weighted copies of
  the data,

until the propensity predictions on the unlabeled rows stop moving. SCAR,
known-propensity and known-label-frequency learners are configurations of the
same loop; multi-SCAR fits one SCAR learner per propensity stratum.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DegenerateDataError, InputError
from .models import (
    Classifier,
    ConstantPropensity,
    FittedPropensity,
    PropensityModel,
    make_selector,
    select_columns,
)
from .optimizer import CLIP_LO, LogisticModel, OptimizerConfig, _as_matrix, fit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmConfig:
    decay: float = 0.9
    window: int = 10
    slope_threshold: float = 1e-4
    max_iterations: int = 500
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    # refit from the previous iteration's parameters instead of from zeros
    warm_start: bool = False
    # keep every iteration's per-row propensity predictions in the trace
    keep_history: bool = False
    init_c_bounds: tuple[float, float] = (0.01, 1.0)

    def __post_init__(self):
        if not 0.0 < self.decay <= 1.0:
            raise InputError(f"decay must lie in (0, 1], got {self.decay}")
        if self.window < 2:
            raise InputError(f"window must be >= 2, got {self.window}")
        if self.slope_threshold <= 0:
            raise InputError("slope_threshold must be positive")
        if self.max_iterations < 0:
            raise InputError("max_iterations must be >= 0")


# -- variants ---------------------------------------------------------------

@dataclass(frozen=True)
class SAR:
    selector: tuple[int, ...] = ()


@dataclass(frozen=True)
class SCAR:
    @property
    def selector(self) -> tuple[int, ...]:
        return ()


@dataclass(frozen=True)
class SARKnownE:
    propensity: PropensityModel

    @property
    def selector(self) -> tuple[int, ...]:
        return tuple(getattr(self.propensity, "selector", ()))


def SCARKnownC(c: float) -> SARKnownE:
    """Known label frequency: a known propensity that happens to be constant."""
    return SARKnownE(ConstantPropensity(c))


@dataclass(frozen=True)
class MultiSCAR:
    selector: tuple[int, ...]
    min_stratum_size: int = 10


EmVariant = Union[SAR, SCAR, SARKnownE, MultiSCAR]


# -- results ----------------------------------------------------------------

@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    mean_propensity: float
    log_likelihood: float
    observed_log_likelihood: float = float("nan")
    propensity: np.ndarray | None = field(default=None, compare=False, repr=False)


@dataclass
class FitResult:
    classifier: Classifier
    propensity: PropensityModel
    iterations_run: int
    converged: bool
    trace: list[IterationRecord]
    label_rate: float = float("nan")

    def predict_proba(self, x) -> np.ndarray:
        return self.classifier.predict_proba(x)

    def propensity_scores(self, x) -> np.ndarray:
        return self.propensity.scores(x)

    @property
    def label_frequency(self) -> float | None:
        """Estimated ``c`` when the propensity model is a constant, else None."""
        pm = self.propensity
        if isinstance(pm, ConstantPropensity):
            return pm.c
        if isinstance(pm, FittedPropensity) and pm.is_constant:
            return pm.label_frequency
        return None


# -- building blocks --------------------------------------------------------

def _check_labels(s) -> np.ndarray:
    s = np.asarray(s)
    if s.ndim != 1 or not np.all((s == 0) | (s == 1)):
        raise InputError("labels s must be a 1-D binary vector")
    s = s.astype(bool)
    if not s.any():
        raise DegenerateDataError("cannot initialize: no labeled examples")
    if s.all():
        raise DegenerateDataError("cannot initialize: every example is labeled")
    return s


def classifier_training_set(x, s, yhat):
    """Weighted dataset for the classifier refit.

    Labeled rows appear once as positives (weight 1); every unlabeled row
    appears twice, as a positive with weight ``yhat`` and as a negative with
    weight ``1 - yhat``.
    """
    x = _as_matrix(x)
    s = np.asarray(s).astype(bool)
    yhat = np.asarray(yhat, dtype=float)
    n_lab, n_unl = int(s.sum()), int((~s).sum())
    xw = np.vstack([x[s], x[~s], x[~s]])
    yw = np.concatenate([np.ones(n_lab + n_unl), np.zeros(n_unl)])
    w = np.concatenate([np.ones(n_lab), yhat, 1.0 - yhat])
    return xw, yw, w


def propensity_training_set(xe, s, yhat):
    """Labeled rows as target 1 (weight 1), unlabeled rows as target 0 (weight ``yhat``)."""
    xe = _as_matrix(xe)
    s = np.asarray(s).astype(bool)
    yhat = np.asarray(yhat, dtype=float)
    xw = np.vstack([xe[s], xe[~s]])
    tw = np.concatenate([np.ones(int(s.sum())), np.zeros(int((~s).sum()))])
    w = np.concatenate([np.ones(int(s.sum())), yhat])
    return xw, tw, w


def estimate_initial_c(label_probs_unlabeled, bounds=(0.01, 1.0)) -> float:
    """Label frequency that makes the highest-scoring unlabeled row certain."""
    lo, hi = bounds
    return float(np.clip(np.max(label_probs_unlabeled), lo, hi))


def initial_expected_class(s_hat, c: float) -> np.ndarray:
    """Weight ``(1-c)/c * s/(1-s)`` an unlabeled row gets as a positive, clipped to [0, 1]."""
    s_hat = np.asarray(s_hat, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        odds = s_hat / (1.0 - s_hat)
    yhat = (1.0 - c) / c * odds
    return np.clip(np.nan_to_num(yhat, nan=1.0, posinf=1.0), 0.0, 1.0)


def initialize_models(x, s, selector=(), opt: OptimizerConfig | None = None,
                      train_propensity: bool = True, c_bounds=(0.01, 1.0)):
    """SCAR start: estimate ``c``, weight the unlabeled rows, fit both models.

    Returns ``(classifier, propensity)``. With ``train_propensity=False`` the
    propensity is the estimated constant instead of a fitted model.
    """
    opt = opt or OptimizerConfig()
    x = _as_matrix(x)
    s = _check_labels(s)
    selector = make_selector(selector, x.shape[1])

    g = fit(x, s.astype(float), np.ones(len(s)), opt)
    s_hat = g.predict_proba(x[~s])
    c = estimate_initial_c(s_hat, c_bounds)
    yhat = initial_expected_class(s_hat, c)
    clf = Classifier(fit(*classifier_training_set(x, s, yhat), opt))

    if not train_propensity:
        return clf, ConstantPropensity(c)
    xe = x[:, list(selector)]
    n = x.shape[0]
    xw = np.vstack([xe, xe])
    tw = np.concatenate([np.ones(n), np.zeros(n)])
    w = np.concatenate([np.full(n, c), np.full(n, 1.0 - c)])
    return clf, FittedPropensity(fit(xw, tw, w, opt), selector)


def expectation_step(y_f, e_vals, d: float = 1.0) -> np.ndarray:
    """Expected class of unlabeled rows from class posterior and decayed propensity."""
    y_f = np.asarray(y_f, dtype=float)
    e_vals = np.asarray(e_vals, dtype=float)
    if y_f.shape != e_vals.shape:
        raise InputError(f"shape mismatch: {y_f.shape} vs {e_vals.shape}")
    for name, v in (("class posterior", y_f), ("propensity", e_vals)):
        if np.any(~np.isfinite(v)) or np.any((v < 0) | (v > 1)):
            raise InputError(f"{name} values must lie in [0, 1]")
    if not 0.0 <= d <= 1.0:
        raise InputError(f"decay must lie in [0, 1], got {d}")
    s_hat = d * e_vals
    num = y_f * (1.0 - s_hat)
    den = num + (1.0 - y_f)
    out = np.ones_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return np.clip(out, 0.0, 1.0)


def maximization_step(x, selector, s, yhat, opt: OptimizerConfig | None = None,
                      train_propensity: bool = True, init_clf: LogisticModel | None = None,
                      init_e: LogisticModel | None = None):
    """Refit the classifier and (optionally) the propensity model for fixed ``yhat``.

    Returns ``(classifier, propensity)`` where propensity is None when not trained.
    """
    opt = opt or OptimizerConfig()
    x = _as_matrix(x)
    s = np.asarray(s).astype(bool)
    selector = make_selector(selector, x.shape[1])
    yhat = np.asarray(yhat, dtype=float)
    if yhat.shape[0] != int((~s).sum()):
        raise InputError("yhat must have one entry per unlabeled row")
    clf = Classifier(fit(*classifier_training_set(x, s, yhat), opt, init=init_clf))
    if not train_propensity:
        return clf, None
    xe = x[:, list(selector)]
    e = FittedPropensity(fit(*propensity_training_set(xe, s, yhat), opt, init=init_e), selector)
    return clf, e


def expected_log_likelihood(clf: Classifier, pm: PropensityModel, x, s, yhat) -> float:
    """Expected complete-data log-likelihood at the given expected classes."""
    x = _as_matrix(x)
    s = np.asarray(s).astype(bool)
    f = np.clip(clf.predict_proba(x), CLIP_LO, 1.0 - CLIP_LO)
    e = np.clip(pm.scores(x), CLIP_LO, 1.0 - CLIP_LO)
    lab = np.sum(np.log(f[s]) + np.log(e[s]))
    fu, eu = f[~s], e[~s]
    unl = np.sum(yhat * (np.log(fu) + np.log1p(-eu)) + (1.0 - yhat) * np.log1p(-fu))
    return float(lab + unl)


def observed_log_likelihood(clf: Classifier, pm: PropensityModel, x, s, l2: float = 0.0) -> float:
    """Log-likelihood of the observed labels, minus the L2 penalties of fitted models.

    Labeled rows contribute ``log f*e`` and unlabeled rows ``log(1 - f*e)``.
    This is the quantity each undecayed EM iteration cannot decrease.
    """
    x = _as_matrix(x)
    s = np.asarray(s).astype(bool)
    fe = np.clip(clf.predict_proba(x) * pm.scores(x), CLIP_LO, 1.0 - CLIP_LO)
    ll = np.sum(np.log(fe[s])) + np.sum(np.log1p(-fe[~s]))
    penalty = l2 * (clf.model.coef @ clf.model.coef)
    if isinstance(pm, FittedPropensity):
        penalty += l2 * (pm.model.coef @ pm.model.coef)
    return float(ll - penalty)


def slope(values, t: int, n: int):
    """Least-squares slope of ``values[t-n+1 .. t]`` against 0..n-1.

    ``values`` may be 2-D (iterations x rows); one slope per column is returned.
    """
    if n < 2:
        raise InputError(f"window must be >= 2, got {n}")
    v = np.asarray(values, dtype=float)
    if t < n - 1 or t >= v.shape[0]:
        raise InputError(f"need {n} values ending at index {t}, have {v.shape[0]}")
    win = v[t - n + 1:t + 1]
    i = np.arange(n, dtype=float)
    sum_i = i.sum()
    num = n * np.tensordot(i, win, axes=(0, 0)) - sum_i * win.sum(axis=0)
    den = n * (i @ i) - sum_i ** 2
    return num / den


def has_converged(history, t: int, n: int, eps: float) -> bool:
    """Mean absolute slope over rows of the last ``n`` predictions is below ``eps``."""
    h = np.asarray(history, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    if h.shape[1] == 0:
        return True
    return bool(np.mean(np.abs(slope(h, t, n))) < eps)


# -- learners ---------------------------------------------------------------

def fit_sar_em(x, s, variant: EmVariant = SCAR(), config: EmConfig | None = None) -> FitResult:
    """Train a classifier and propensity model with the EM loop.

    ``variant`` picks which propensity model is learned:
    :class:`SAR` (logistic over the selected columns), :class:`SCAR`
    (no propensity attributes, i.e. a constant), or :class:`SARKnownE`
    (given and held fixed).
    """
    config = config or EmConfig()
    if isinstance(variant, MultiSCAR):
        return fit_multi_scar(x, s, variant.selector, config, variant.min_stratum_size)
    x = _as_matrix(x)
    s = _check_labels(s)
    opt = config.optimizer

    known = variant.propensity if isinstance(variant, SARKnownE) else None
    selector = make_selector(variant.selector, x.shape[1])
    clf, e = initialize_models(x, s, selector, opt, train_propensity=known is None,
                               c_bounds=config.init_c_bounds)
    if known is not None:
        e = known
    x_u = x[~s]
    n, eps = config.window, config.slope_threshold
    window = deque(maxlen=n)
    trace: list[IterationRecord] = []
    converged = False

    for t in range(config.max_iterations):
        y_f = clf.predict_proba(x_u)
        yhat = expectation_step(y_f, e.scores(x_u), config.decay)

        init_clf = clf.model if config.warm_start else None
        init_e = e.model if (config.warm_start and known is None) else None
        clf, e_new = maximization_step(x, selector, s, yhat, opt, known is None,
                                       init_clf, init_e)
        if e_new is not None:
            e = e_new

        e_u = e.scores(x_u)
        ll = expected_log_likelihood(clf, e, x, s, yhat)
        obs = observed_log_likelihood(clf, e, x, s, opt.l2)
        # a fixed propensity never moves, so watch the classifier instead
        monitored = e_u if known is None else clf.predict_proba(x_u)
        window.append(monitored)
        trace.append(IterationRecord(t + 1, float(np.mean(e_u)) if e_u.size else float("nan"),
                                     ll, obs, e_u.copy() if config.keep_history else None))
        if len(window) == n and has_converged(np.array(window), n - 1, n, eps):
            converged = True
            break

    log.debug("EM stopped after %d iterations (converged=%s)", len(trace), converged)
    return FitResult(clf, e, len(trace), converged, trace, label_rate=float(s.mean()))


@dataclass
class MultiScarResult:
    """One SCAR learner per propensity stratum, dispatched on the row's stratum."""

    selector: tuple[int, ...]
    strata: dict
    fallback: FitResult
    label_rate: float = float("nan")

    def _dispatch(self, x, attr):
        x = _as_matrix(x)
        out = np.empty(x.shape[0])
        if x.shape[0] == 0:
            return out
        keys, inverse = np.unique(x[:, list(self.selector)], axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        for j, key in enumerate(keys):
            model = self.strata.get(tuple(key.tolist()), self.fallback)
            rows = inverse == j
            out[rows] = getattr(model, attr)(x[rows])
        return out

    def predict_proba(self, x) -> np.ndarray:
        return self._dispatch(x, "predict_proba")

    def propensity_scores(self, x) -> np.ndarray:
        return self._dispatch(x, "propensity_scores")

    @property
    def classifier(self):
        return self

    @property
    def iterations_run(self) -> int:
        return max([r.iterations_run for r in self.strata.values()] + [self.fallback.iterations_run])

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.strata.values()) and self.fallback.converged

    @property
    def trace(self) -> list[IterationRecord]:
        return self.fallback.trace

    @property
    def label_frequency(self) -> float | None:
        return None


def stratum_keys(x, selector) -> list[tuple]:
    xe = select_columns(x, selector)
    return [tuple(k.tolist()) for k in np.unique(xe, axis=0)]


def fit_multi_scar(x, s, selector, config: EmConfig | None = None,
                   min_stratum_size: int = 10) -> MultiScarResult:
    """Independent SCAR learners per assignment of the propensity attributes.

    A stratum with fewer than ``min_stratum_size`` rows, or without both
    labeled and unlabeled rows, uses a SCAR learner fitted on all the data.
    """
    config = config or EmConfig()
    x = _as_matrix(x)
    s = _check_labels(s)
    selector = make_selector(selector, x.shape[1])
    if not selector:
        raise InputError("multi-SCAR needs at least one propensity attribute")

    fallback = fit_sar_em(x, s, SCAR(), config)
    xe = x[:, list(selector)]
    keys, inverse = np.unique(xe, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    strata = {}
    for j, key in enumerate(keys):
        rows = inverse == j
        s_k = s[rows]
        if rows.sum() < min_stratum_size or s_k.all() or not s_k.any():
            log.debug("stratum %s falls back to the global SCAR model", tuple(key))
            continue
        strata[tuple(key.tolist())] = fit_sar_em(x[rows], s_k, SCAR(), config)
    return MultiScarResult(selector, strata, fallback, label_rate=float(s.mean()))
