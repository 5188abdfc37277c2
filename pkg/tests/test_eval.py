import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sarpu.errors import InputError, MissingTruthError
from sarpu.eval import (
    METHODS,
    abs_prior_error,
    cross_validate,
    estimate_prior,
    f1_score,
    fit_method,
    mean_sd,
    propensity_error,
)
from sarpu.pu_data import Dataset, OneVarSAR, SCARLabeling, apply_mechanism, make_synthetic
from sarpu.sarem import EmConfig

FAST = EmConfig(max_iterations=30)


@pytest.fixture(scope="module")
def tiny():
    return make_synthetic(300, 4, seed=5, name="tiny")


def test_f1_examples():
    assert f1_score([1, 1, 0, 0], [1, 0, 1, 0]) == pytest.approx(0.5)
    assert f1_score([1, 1, 0], [1, 1, 1]) == pytest.approx(0.8)
    assert f1_score([1, 0, 1], [1, 0, 0]) == pytest.approx(2 / 3)
    assert f1_score([0, 0], [0, 0]) == 0.0
    with pytest.raises(InputError):
        f1_score([1], [1, 0])


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=20))
def test_f1_matches_confusion_matrix(pairs):
    counts = {k: 0 for k in itertools.product([True, False], repeat=2)}
    for p in pairs:
        counts[p] += 1
    tp, fn, fp = counts[(True, True)], counts[(True, False)], counts[(False, True)]
    expected = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    y, p = zip(*pairs)
    assert f1_score(y, p) == pytest.approx(expected, abs=1e-12)


def test_prior_error():
    assert abs_prior_error(0.4, 0.35) == pytest.approx(0.05)
    assert abs_prior_error(0.2, 0.2) == 0.0


def test_propensity_error_examples():
    assert propensity_error([0.3, 0.7], [0.3, 0.7]) == (0.0, 0.0)
    mae, mse = propensity_error([0.5] * 3, [0.3] * 3)
    assert (mae, mse) == (pytest.approx(0.2), pytest.approx(0.04))
    mae, mse = propensity_error([0.1, 0.9], [0.2, 0.6])
    assert (mae, mse) == (pytest.approx(0.2), pytest.approx(0.05))
    with pytest.raises(InputError):
        propensity_error([0.1], [0.1, 0.2])


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=40))
def test_mse_at_most_mae(pairs):
    a, b = np.array(pairs).T
    mae, mse = propensity_error(a, b)
    assert mse <= mae + 1e-15


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40))
def test_mean_sd_two_pass(values):
    m = math.fsum(values) / len(values)
    sd = math.sqrt(math.fsum((v - m) ** 2 for v in values) / (len(values) - 1))
    got_m, got_sd = mean_sd(values)
    scale = max(1.0, max(abs(v) for v in values))
    assert abs(got_m - m) <= 1e-12 * scale
    assert abs(got_sd - sd) <= 1e-12 * scale


def test_mean_sd_edge_cases():
    assert mean_sd([3.0]) == (3.0, 0.0)
    assert mean_sd([1.0, None, float("nan"), 3.0])[0] == 2.0
    assert all(math.isnan(v) for v in mean_sd([]))


def test_estimate_prior_uses_label_frequency(tiny):
    s = apply_mechanism(tiny.y, tiny.features, SCARLabeling(0.5), 1)
    model = fit_method("scar", tiny.features, s, tiny.y, SCARLabeling(0.5), FAST)
    headline, posterior = estimate_prior(model, tiny.features, s)
    assert headline == pytest.approx(min(1.0, s.mean() / model.label_frequency))
    assert posterior == pytest.approx(np.mean(model.predict_proba(tiny.features)))


def test_fit_method_dispatch(tiny):
    mech = OneVarSAR(0, 0.5, 0.4)
    s = apply_mechanism(tiny.y, tiny.features, mech, 2)
    for m in METHODS:
        model = fit_method(m, tiny.features, s, tiny.y, mech, FAST)
        p = model.predict_proba(tiny.features)
        assert p.shape == (300,) and np.all((p >= 0) & (p <= 1))
    c_model = fit_method("scar-c", tiny.features, s, tiny.y, mech, FAST)
    assert c_model.label_frequency == pytest.approx(np.mean(mech.propensity(tiny.features)[tiny.y == 1]))
    with pytest.raises(InputError, match="bogus"):
        fit_method("bogus", tiny.features, s, tiny.y, mech, FAST)
    with pytest.raises(MissingTruthError):
        fit_method("supervised", tiny.features, s, None, mech, FAST)


def test_supervised_has_no_propensity_metrics(tiny):
    report = cross_validate(tiny, SCARLabeling(0.5), "supervised", FAST)
    assert len(report.per_fold) == 25
    assert report.propensity_mae is None and report.propensity_mse is None
    assert all(c.propensity_mae is None for c in report.per_fold)
    assert 0 < report.f1 <= 1


def test_cross_validate_deterministic_and_complete(tiny):
    mech = OneVarSAR(1, 0.5, 0.4)
    a = cross_validate(tiny, mech, "sar", FAST)
    b = cross_validate(tiny, mech, "sar", FAST)
    assert [(c.seed, c.fold) for c in a.per_fold] == [(s, f) for s in range(5) for f in range(5)]
    assert [(c.f1, c.propensity_mae, c.iterations) for c in a.per_fold] == \
           [(c.f1, c.propensity_mae, c.iterations) for c in b.per_fold]
    assert a.propensity_mse <= a.propensity_mae


def test_cross_validate_parallel_matches_serial(tiny):
    mech = SCARLabeling(0.6)
    serial = cross_validate(tiny, mech, "scar", FAST, fold_seeds=(0, 1), k=3)
    parallel = cross_validate(tiny, mech, "scar", FAST, fold_seeds=(0, 1), k=3, jobs=2)
    assert [c.f1 for c in serial.per_fold] == [c.f1 for c in parallel.per_fold]


def test_cross_validate_needs_truth(tiny):
    with pytest.raises(MissingTruthError):
        cross_validate(Dataset(tiny.features), SCARLabeling(0.5), "scar", FAST)
