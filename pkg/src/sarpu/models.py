"""Classifier and propensity-score models.

A propensity model maps the propensity attributes of a row to the probability
that the row would be labeled if it were positive. Three kinds exist:

* :class:`ConstantPropensity` - the SCAR label frequency ``c``;
* :class:`FittedPropensity` - a logistic model over the selected columns;
* :class:`OraclePropensity` - a known table over binary attribute assignments.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np
from scipy.special import expit

from .errors import InputError, MissingAssignmentError
from .optimizer import LogisticModel, _as_matrix


def make_selector(indices: Sequence[int] = (), n_cols: int | None = None) -> tuple[int, ...]:
    """Validate a list of propensity-attribute column indices.

    An empty selector is the SCAR case.
    """
    sel = tuple(int(i) for i in indices)
    if len(set(sel)) != len(sel):
        raise InputError(f"propensity attribute indices must be unique: {sel}")
    if any(i < 0 for i in sel):
        raise InputError(f"propensity attribute indices must be >= 0: {sel}")
    if n_cols is not None and any(i >= n_cols for i in sel):
        raise InputError(f"propensity attribute index out of range for {n_cols} columns: {sel}")
    return sel


def select_columns(x, selector: Sequence[int]) -> np.ndarray:
    x = _as_matrix(x)
    make_selector(selector, x.shape[1])
    return x[:, list(selector)]


@dataclass(frozen=True)
class ConstantPropensity:
    c: float
    selector: tuple = ()

    def __post_init__(self):
        if not 0.0 < self.c <= 1.0:
            raise InputError(f"label frequency must lie in (0, 1], got {self.c}")

    def scores(self, x) -> np.ndarray:
        return np.full(_as_matrix(x).shape[0], float(self.c))


@dataclass(frozen=True)
class FittedPropensity:
    model: LogisticModel
    selector: tuple[int, ...] = ()

    def scores(self, x) -> np.ndarray:
        return self.model.predict_proba(select_columns(x, self.selector))

    @property
    def is_constant(self) -> bool:
        return not np.any(self.model.coef)

    @property
    def label_frequency(self) -> float:
        """Constant the model collapses to; only meaningful when ``is_constant``."""
        return float(expit(self.model.intercept))


@dataclass(frozen=True)
class OraclePropensity:
    """Known propensity as a finite table over binary attribute assignments."""

    table: Mapping[tuple[int, ...], float]
    selector: tuple[int, ...]
    name: str = "oracle"

    def __post_init__(self):
        object.__setattr__(self, "selector", make_selector(self.selector))
        table = {tuple(int(v) for v in k): float(p) for k, p in dict(self.table).items()}
        for key, p in table.items():
            if len(key) != len(self.selector):
                raise InputError(f"oracle key {key} does not match selector {self.selector}")
            if not 0.0 < p <= 1.0:
                raise InputError(f"oracle propensity for {key} must lie in (0, 1], got {p}")
        object.__setattr__(self, "table", table)

    def scores(self, x) -> np.ndarray:
        xe = select_columns(x, self.selector)
        keys, inverse = np.unique(xe, axis=0, return_inverse=True)
        vals = np.empty(len(keys))
        for j, row in enumerate(keys):
            key = tuple(int(v) for v in row)
            if key not in self.table or not np.array_equal(row, key):
                raise MissingAssignmentError(
                    f"oracle {self.name!r} has no propensity for assignment {tuple(row)}"
                )
            vals[j] = self.table[key]
        return vals[np.asarray(inverse).reshape(-1)]


PropensityModel = Union[ConstantPropensity, FittedPropensity, OraclePropensity]


def one_variable_oracle(attribute: int, c_bar: float, delta_c: float,
                        high_when_set: bool = True) -> OraclePropensity:
    """Propensity ``c_bar +/- delta_c/2`` depending on one binary attribute."""
    hi, lo = c_bar + delta_c / 2.0, c_bar - delta_c / 2.0
    if not (0.0 < lo and hi <= 1.0):
        raise InputError(f"c_bar +/- delta_c/2 must lie in (0, 1]; got [{lo}, {hi}]")
    if not high_when_set:
        hi, lo = lo, hi
    return OraclePropensity({(1,): hi, (0,): lo}, (attribute,), name="one_variable")


def three_variable_oracle(attributes: Sequence[int], p_on: float = 0.9,
                          p_off: float = 0.5) -> OraclePropensity:
    """Product propensity: each attribute contributes ``p_on`` when 1 and ``p_off`` when 0."""
    attributes = make_selector(attributes)
    k = len(attributes)
    table = {}
    for code in range(2 ** k):
        key = tuple((code >> (k - 1 - j)) & 1 for j in range(k))
        on = sum(key)
        table[key] = p_on ** on * p_off ** (k - on)
    return OraclePropensity(table, attributes, name="three_variable")


def propensity_scores(pm: PropensityModel, x) -> np.ndarray:
    return pm.scores(x)


@dataclass(frozen=True)
class Classifier:
    model: LogisticModel

    def predict_proba(self, x) -> np.ndarray:
        return self.model.predict_proba(x)


def class_posterior(clf: Classifier, x) -> np.ndarray:
    return clf.predict_proba(x)


def scale_posterior_scar(label_probs, c: float) -> np.ndarray:
    """Turn Pr(s=1|x) into Pr(y=1|x) by dividing by ``c``; capped at 1."""
    if not 0.0 < c <= 1.0:
        raise InputError(f"label frequency must lie in (0, 1], got {c}")
    return np.minimum(1.0, np.asarray(label_probs, dtype=float) / c)
