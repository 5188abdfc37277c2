"""PU datasets: CSV ingestion, labeling mechanisms, subsampling and folds.

All randomized helpers take an integer ``seed`` and derive their stream from
``(seed, tag)`` with a counter-based generator, so a draw for row ``i`` does
not depend on which other operations ran first.
"""
from __future__ import annotations

import csv
import warnings
import zlib
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.special import expit

from .errors import (
    ConsistencyError,
    InputError,
    MechanismError,
    MissingTruthError,
    ParseError,
    SchemaError,
)
from .models import ConstantPropensity, OraclePropensity, one_variable_oracle, three_variable_oracle


def derive_rng(seed: int, tag: str) -> np.random.Generator:
    """Counter-based generator keyed on ``seed`` and an operation tag."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(tag.encode())])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    s: np.ndarray | None = None
    y: np.ndarray | None = None
    column_names: list[str] = field(default_factory=list)
    name: str = "dataset"

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim != 2:
            raise InputError("features must be a 2-D matrix")
        if not np.all(np.isfinite(x)):
            raise InputError("features must be finite")
        object.__setattr__(self, "features", x)
        n = x.shape[0]
        for attr in ("s", "y"):
            v = getattr(self, attr)
            if v is None:
                continue
            v = np.asarray(v)
            if v.shape != (n,) or not np.all((v == 0) | (v == 1)):
                raise InputError(f"{attr} must be a binary vector of length {n}")
            object.__setattr__(self, attr, v.astype(np.int8))
        if self.s is not None and self.y is not None and np.any(self.s > self.y):
            bad = int(np.flatnonzero(self.s > self.y)[0])
            raise ConsistencyError(f"row {bad} is labeled (s=1) but negative (y=0)")
        names = list(self.column_names) or [f"x{j}" for j in range(x.shape[1])]
        if len(names) != x.shape[1]:
            raise InputError("column_names length does not match feature columns")
        object.__setattr__(self, "column_names", names)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_cols(self) -> int:
        return self.features.shape[1]

    def with_labels(self, s) -> "Dataset":
        return replace(self, s=np.asarray(s))

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return replace(
            self,
            features=self.features[rows],
            s=None if self.s is None else self.s[rows],
            y=None if self.y is None else self.y[rows],
        )

    def column_index(self, col: Union[int, str]) -> int:
        if isinstance(col, str):
            if col not in self.column_names:
                raise SchemaError(f"unknown column {col!r}")
            return self.column_names.index(col)
        col = int(col)
        if not 0 <= col < self.n_cols:
            raise SchemaError(f"column index {col} out of range for {self.n_cols} columns")
        return col


# -- CSV --------------------------------------------------------------------

def _parse_cell(text: str, row: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"row {row}, column {col!r}: cannot parse {text!r} as a number") from None
    if not np.isfinite(v):
        raise ParseError(f"row {row}, column {col!r}: non-finite value {text!r}")
    return v


def load_csv(path, label_column: str | None = "s", truth_column: str | None = "y",
             rescale: bool = False, name: str | None = None) -> Dataset:
    """Read a header-first CSV; every column other than the label columns is a feature.

    Pass ``None`` for a label column the file does not carry. Feature values
    outside [0, 1] trigger a warning unless ``rescale`` min-max scales them.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header row") from None
        rows = [r for r in reader if r]

    for col in (label_column, truth_column):
        if col is not None and col not in header:
            raise SchemaError(f"{path}: missing column {col!r}")
    special = {c for c in (label_column, truth_column) if c is not None}
    feat_cols = [j for j, h in enumerate(header) if h not in special]
    values = np.empty((len(rows), len(header)))
    for i, rec in enumerate(rows, start=2):
        if len(rec) != len(header):
            raise ParseError(f"{path}: row {i} has {len(rec)} cells, header has {len(header)}")
        for j, cell in enumerate(rec):
            values[i - 2, j] = _parse_cell(cell.strip(), i, header[j])

    def binary(col):
        if col is None:
            return None
        v = values[:, header.index(col)]
        if not np.all((v == 0) | (v == 1)):
            bad = int(np.flatnonzero((v != 0) & (v != 1))[0]) + 2
            raise ParseError(f"{path}: row {bad}, column {col!r}: label must be 0 or 1")
        return v.astype(np.int8)

    x = values[:, feat_cols]
    if rescale and x.size:
        lo, hi = x.min(axis=0), x.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        x = (x - lo) / span
    elif x.size and (x.min() < 0 or x.max() > 1):
        warnings.warn(f"{path}: feature values outside [0, 1]; consider rescale=True", stacklevel=2)
    return Dataset(x, binary(label_column), binary(truth_column),
                   [header[j] for j in feat_cols], name or path.stem)


def save_csv(ds: Dataset, path, label_column: str = "s", truth_column: str = "y") -> None:
    header = list(ds.column_names)
    cols = [ds.features[:, j] for j in range(ds.n_cols)]
    if ds.s is not None:
        header.append(label_column)
        cols.append(ds.s)
    if ds.y is not None:
        header.append(truth_column)
        cols.append(ds.y)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n_rows):
            w.writerow([_fmt(c[i]) for c in cols])


def _fmt(v) -> str:
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def bundled_path(name: str = "breast_cancer") -> Path:
    return Path(str(resources.files("sarpu") / "data" / f"{name}.csv"))


def load_breast_cancer() -> Dataset:
    """Original Wisconsin breast cancer data: 683 complete rows, 9 features in [0, 1]."""
    return load_csv(bundled_path("breast_cancer"), label_column=None, truth_column="y",
                    name="breast_cancer")


# -- labeling mechanisms ----------------------------------------------------

def _require_binary(x: np.ndarray, idx: Sequence[int]):
    for j in idx:
        col = x[:, j]
        if not np.all((col == 0) | (col == 1)):
            raise MechanismError(f"propensity attribute {j} is not binary")


@dataclass(frozen=True)
class SCARLabeling:
    c: float
    attributes: tuple = ()

    def __post_init__(self):
        if not 0.0 <= self.c <= 1.0:
            raise MechanismError(f"label frequency must lie in [0, 1], got {self.c}")

    def propensity(self, x) -> np.ndarray:
        return np.full(np.asarray(x).shape[0], float(self.c))

    def oracle(self):
        return ConstantPropensity(self.c)

    def describe(self) -> dict:
        return {"mechanism": "scar", "c": self.c}


@dataclass(frozen=True)
class OneVarSAR:
    attribute: int
    c_bar: float
    delta_c: float

    def __post_init__(self):
        lo, hi = self.c_bar - self.delta_c / 2, self.c_bar + self.delta_c / 2
        if self.delta_c < 0 or lo <= 0 or hi >= 1:
            raise MechanismError(f"c_bar +/- delta_c/2 must lie in (0, 1), got [{lo}, {hi}]")

    @property
    def attributes(self) -> tuple[int, ...]:
        return (self.attribute,)

    def oracle(self) -> OraclePropensity:
        return one_variable_oracle(self.attribute, self.c_bar, self.delta_c)

    def propensity(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        _require_binary(x, self.attributes)
        return self.oracle().scores(x)

    def describe(self) -> dict:
        return {"mechanism": "one_var", "c_bar": self.c_bar, "delta_c": self.delta_c}


@dataclass(frozen=True)
class ThreeVarSAR:
    attributes: tuple[int, ...]
    p_on: float = 0.9
    p_off: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(int(a) for a in self.attributes))
        if len(self.attributes) != 3 or len(set(self.attributes)) != 3:
            raise MechanismError(f"three distinct attributes required, got {self.attributes}")

    def oracle(self) -> OraclePropensity:
        return three_variable_oracle(self.attributes, self.p_on, self.p_off)

    def propensity(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        _require_binary(x, self.attributes)
        freq = x[:, list(self.attributes)].mean(axis=0)
        if np.any((freq < 0.3) | (freq > 0.7)):
            warnings.warn(f"propensity attribute frequencies {np.round(freq, 3)} outside [0.3, 0.7]",
                          stacklevel=2)
        return self.oracle().scores(x)

    def describe(self) -> dict:
        return {"mechanism": "three_var"}


@dataclass(frozen=True)
class CustomOracle:
    model: OraclePropensity

    @property
    def attributes(self) -> tuple[int, ...]:
        return self.model.selector

    def oracle(self) -> OraclePropensity:
        return self.model

    def propensity(self, x) -> np.ndarray:
        return self.model.scores(x)

    def describe(self) -> dict:
        return {"mechanism": "custom"}


LabelMechanism = Union[SCARLabeling, OneVarSAR, ThreeVarSAR, CustomOracle]


def propensity_truth(mech: LabelMechanism, x) -> np.ndarray:
    return mech.propensity(np.asarray(x, dtype=float))


def apply_mechanism(y, x, mech: LabelMechanism, seed: int) -> np.ndarray:
    """Label each positive independently with probability ``e(x_e)``; negatives stay 0."""
    y = np.asarray(y)
    x = np.asarray(x, dtype=float)
    if y.shape != (x.shape[0],):
        raise InputError("y must have one entry per feature row")
    e = propensity_truth(mech, x)
    u = derive_rng(seed, "label").random(x.shape[0])
    return ((u < e) & (y == 1)).astype(np.int8)


def eligible_propensity_attributes(x, lo: float = 0.3, hi: float = 0.7) -> list[int]:
    """Binary columns whose frequency of 1s lies in ``[lo, hi]``."""
    x = np.asarray(x, dtype=float)
    out = []
    for j in range(x.shape[1]):
        col = x[:, j]
        if np.all((col == 0) | (col == 1)) and lo <= col.mean() <= hi:
            out.append(j)
    return out


# -- sampling ---------------------------------------------------------------

def subsample_for_imbalance(ds: Dataset, which_class: int = 1, fraction: float = 0.3,
                            seed: int = 0) -> Dataset:
    """Keep a uniform random ``fraction`` of one class and all of the other."""
    if ds.y is None:
        raise MissingTruthError("subsampling needs ground-truth classes")
    if not 0.0 < fraction <= 1.0:
        raise InputError(f"fraction must lie in (0, 1], got {fraction}")
    members = np.flatnonzero(ds.y == which_class)
    if members.size == 0:
        raise InputError(f"class {which_class} is empty")
    n_keep = int(round(fraction * members.size))
    kept = derive_rng(seed, "subsample").choice(members, size=n_keep, replace=False)
    mask = ds.y != which_class
    mask[kept] = True
    return ds.subset(np.flatnonzero(mask))


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignment: np.ndarray
    seed: int

    def split(self, fold: int):
        test = self.assignment == fold
        return np.flatnonzero(~test), np.flatnonzero(test)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


def make_folds(n_rows: int, k: int = 5, seed: int = 0) -> FoldPlan:
    if k < 2:
        raise InputError(f"need at least 2 folds, got {k}")
    if n_rows < k:
        raise InputError(f"cannot split {n_rows} rows into {k} folds")
    perm = derive_rng(seed, "folds").permutation(n_rows)
    assignment = np.empty(n_rows, dtype=np.int64)
    assignment[perm] = np.arange(n_rows) % k
    return FoldPlan(k, assignment, seed)


def class_prior(ds: Dataset) -> float:
    if ds.y is None:
        raise MissingTruthError("class prior needs ground-truth classes")
    return float(np.mean(ds.y))


def implied_prior(label_rate: float, c: float) -> float:
    """Class prior ``Pr(s=1) / c`` implied by a label frequency, clipped to [0, 1]."""
    if not 0.0 < c <= 1.0:
        raise InputError(f"label frequency must lie in (0, 1], got {c}")
    return float(np.clip(label_rate / c, 0.0, 1.0))


# -- synthetic data ---------------------------------------------------------

def make_synthetic(n_rows: int = 5000, n_features: int = 20, seed: int = 0,
                   weight_scale: float = 1.5, prior: float = 0.5,
                   name: str = "synthetic") -> Dataset:
    """Binary features with a logistic ground truth.

    Feature frequencies are drawn from [0.3, 0.7] so every column is a valid
    propensity attribute. Coefficients are Gaussian with sd ``weight_scale``;
    the intercept is set so the population prior is close to ``prior``.
    """
    rng = derive_rng(seed, "synthetic")
    freq = rng.uniform(0.3, 0.7, n_features)
    x = (rng.random((n_rows, n_features)) < freq).astype(float)
    w = rng.normal(0.0, weight_scale, n_features)
    z = x @ w
    lo, hi = -50.0, 50.0
    for _ in range(100):
        mid = (lo + hi) / 2
        if expit(z + mid).mean() < prior:
            lo = mid
        else:
            hi = mid
    p = expit(z + (lo + hi) / 2)
    y = (rng.random(n_rows) < p).astype(np.int8)
    return Dataset(x, None, y, [f"b{j}" for j in range(n_features)], name)
