"""Metrics and the repeated k-fold protocol used to compare PU learners."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, MissingTruthError
from .models import Classifier, make_selector
from .optimizer import fit
from .pu_data import Dataset, LabelMechanism, apply_mechanism, make_folds
from .sarem import SAR, SCAR, EmConfig, MultiSCAR, SARKnownE, SCARKnownC, fit_sar_em

METHODS = ("supervised", "sar", "sar-e", "scar", "scar-c", "multi-scar")
THRESHOLD = 0.5


def f1_score(y_true, y_pred) -> float:
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    if y_true.shape != y_pred.shape:
        raise InputError("y_true and y_pred must have the same length")
    tp = int(np.sum(y_true & y_pred))
    fp = int(np.sum(~y_true & y_pred))
    fn = int(np.sum(y_true & ~y_pred))
    if tp == 0:
        return 0.0
    precision, recall = tp / (tp + fp), tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def abs_prior_error(alpha_hat: float, alpha: float) -> float:
    return abs(float(alpha_hat) - float(alpha))


def propensity_error(e_hat, e_true) -> tuple[float, float]:
    """Mean absolute and mean squared error between two propensity vectors."""
    e_hat = np.asarray(e_hat, dtype=float)
    e_true = np.asarray(e_true, dtype=float)
    if e_hat.shape != e_true.shape:
        raise InputError(f"length mismatch: {e_hat.shape} vs {e_true.shape}")
    d = e_hat - e_true
    return float(np.mean(np.abs(d))), float(np.mean(d * d))


def mean_sd(values) -> tuple[float, float]:
    """Mean and sample standard deviation, ignoring NaN; sd is 0 for one value."""
    v = np.asarray([x for x in values if x is not None and not math.isnan(x)], dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    m = float(v.mean())
    if v.size == 1:
        return m, 0.0
    return m, float(math.sqrt(np.sum((v - m) ** 2) / (v.size - 1)))


@dataclass
class SupervisedModel:
    """Logistic regression trained on the true classes; it has no propensity model."""

    classifier: Classifier
    iterations_run: int = 0
    converged: bool = True
    trace: list = field(default_factory=list)
    label_frequency: None = None

    def predict_proba(self, x):
        return self.classifier.predict_proba(x)


def fit_method(method: str, x, s, y, mechanism: LabelMechanism | None,
               config: EmConfig, selector=None):
    """Train one of :data:`METHODS` on a labeled training portion.

    ``y`` is only used by ``supervised`` and by ``scar-c`` (to compute the
    true label frequency); ``mechanism`` supplies the oracle for ``sar-e``.
    ``selector`` defaults to the mechanism's propensity attributes.
    """
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    x = np.asarray(x, dtype=float)
    if selector is None:
        selector = tuple(getattr(mechanism, "attributes", ()))
    selector = make_selector(selector, x.shape[1])

    if method == "supervised":
        if y is None:
            raise MissingTruthError("the supervised baseline needs ground-truth classes")
        model = fit(x, np.asarray(y, dtype=float), np.ones(len(y)), config.optimizer)
        return SupervisedModel(Classifier(model))
    if method == "sar":
        variant = SAR(selector)
    elif method == "scar":
        variant = SCAR()
    elif method == "multi-scar":
        variant = MultiSCAR(selector)
    elif method == "sar-e":
        if mechanism is None:
            raise InputError("sar-e needs the labeling mechanism")
        variant = SARKnownE(mechanism.oracle())
    else:  # scar-c
        if mechanism is None or y is None:
            raise InputError("scar-c needs the labeling mechanism and ground truth")
        y = np.asarray(y).astype(bool)
        variant = SCARKnownC(float(np.mean(mechanism.propensity(x)[y])))
    return fit_sar_em(x, s, variant, config)


def estimate_prior(model, x, s) -> tuple[float, float]:
    """Return (headline estimate, mean-posterior estimate) of the class prior.

    Models with a constant propensity use ``Pr(s=1) / c``; others fall back to
    the mean posterior over the rows.
    """
    posterior = float(np.mean(model.predict_proba(x)))
    c = getattr(model, "label_frequency", None)
    if c:
        return float(np.clip(np.mean(s) / c, 0.0, 1.0)), posterior
    return posterior, posterior


@dataclass
class CellResult:
    method: str
    seed: int
    fold: int
    f1: float
    abs_prior_error: float
    prior_estimate: float
    prior_posterior: float
    propensity_mae: float | None
    propensity_mse: float | None
    iterations: int
    converged: bool
    trace: list = field(default_factory=list, repr=False)


@dataclass
class MetricReport:
    method: str
    per_fold: list[CellResult]

    def summary(self, metric: str) -> tuple[float, float]:
        return mean_sd(getattr(c, metric) for c in self.per_fold)

    @property
    def f1(self) -> float:
        return self.summary("f1")[0]

    @property
    def abs_prior_error(self) -> float:
        return self.summary("abs_prior_error")[0]

    @property
    def propensity_mae(self) -> float | None:
        m = self.summary("propensity_mae")[0]
        return None if math.isnan(m) else m

    @property
    def propensity_mse(self) -> float | None:
        m = self.summary("propensity_mse")[0]
        return None if math.isnan(m) else m


def label_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(fold), 0x5A4]).generate_state(1)[0])


def run_cell(ds: Dataset, mechanism: LabelMechanism, method: str, config: EmConfig,
             seed: int, fold: int, k: int = 5, selector=None) -> CellResult:
    """Relabel the training folds, fit, and score on the held-out fold."""
    if ds.y is None:
        raise MissingTruthError("cross-validation needs ground-truth classes")
    train, test = make_folds(ds.n_rows, k, seed).split(fold)
    x_tr, y_tr = ds.features[train], ds.y[train]
    s_tr = apply_mechanism(y_tr, x_tr, mechanism, label_seed(seed, fold))
    model = fit_method(method, x_tr, s_tr, y_tr, mechanism, config, selector)

    x_te = ds.features[test]
    y_pred = model.predict_proba(x_te) >= THRESHOLD
    f1 = f1_score(ds.y[test], y_pred)
    prior_hat, prior_post = estimate_prior(model, x_tr, s_tr)
    mae = mse = None
    if hasattr(model, "propensity_scores"):
        mae, mse = propensity_error(model.propensity_scores(x_te), mechanism.propensity(x_te))
    return CellResult(method, seed, fold, f1, abs_prior_error(prior_hat, y_tr.mean()),
                      prior_hat, prior_post, mae, mse, int(model.iterations_run),
                      bool(model.converged), list(model.trace))


def cross_validate(ds: Dataset, mechanism: LabelMechanism, method: str,
                   config: EmConfig | None = None, fold_seeds=(0, 1, 2, 3, 4), k: int = 5,
                   selector=None, jobs: int = 1) -> MetricReport:
    """Every (seed, fold) cell of ``len(fold_seeds)`` k-fold splits, in canonical order."""
    config = config or EmConfig()
    cells = [(seed, fold) for seed in fold_seeds for fold in range(k)]
    args = [(ds, mechanism, method, config, seed, fold, k, selector) for seed, fold in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_cell, *zip(*args)))
    else:
        results = [run_cell(*a) for a in args]
    return MetricReport(method, results)
