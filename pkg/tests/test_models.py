import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import expit

from sarpu.errors import InputError, MissingAssignmentError
from sarpu.models import (
    Classifier,
    ConstantPropensity,
    FittedPropensity,
    OraclePropensity,
    class_posterior,
    make_selector,
    one_variable_oracle,
    propensity_scores,
    scale_posterior_scar,
    three_variable_oracle,
)
from sarpu.optimizer import LogisticModel, fit


def test_constant_propensity_fills_vector():
    assert propensity_scores(ConstantPropensity(0.3), np.zeros((5, 2))).tolist() == [0.3] * 5


def test_constant_rejects_zero():
    with pytest.raises(InputError):
        ConstantPropensity(0.0)


def test_three_variable_oracle_values():
    e = three_variable_oracle((0, 1, 2))
    x = np.array([[1, 1, 1], [0, 0, 0], [1, 1, 0], [0, 1, 0]], float)
    np.testing.assert_allclose(e.scores(x), [0.729, 0.125, 0.405, 0.225])


def test_one_variable_oracle_values():
    e = one_variable_oracle(0, c_bar=0.3, delta_c=0.2)
    np.testing.assert_allclose(e.scores(np.array([[1.0], [0.0]])), [0.4, 0.2])


def test_oracle_reads_selected_columns_only():
    e = one_variable_oracle(2, 0.5, 0.8)
    x = np.array([[0.3, 0.7, 1.0], [0.9, 0.1, 0.0]])
    np.testing.assert_allclose(e.scores(x), [0.9, 0.1])


def test_oracle_missing_assignment():
    e = OraclePropensity({(1,): 0.5}, (0,))
    with pytest.raises(MissingAssignmentError):
        e.scores(np.array([[0.0]]))
    with pytest.raises(MissingAssignmentError):
        one_variable_oracle(0, 0.5, 0.2).scores(np.array([[0.5]]))


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1)), min_size=1))
def test_three_variable_range(rows):
    v = three_variable_oracle((0, 1, 2)).scores(np.array(rows, float))
    assert np.all((v >= 0.125 - 1e-12) & (v <= 0.729 + 1e-12))


@given(st.floats(0.2, 0.6), st.floats(0, 0.3), st.lists(st.integers(0, 1), min_size=1))
def test_one_variable_range(c_bar, delta_c, col):
    v = one_variable_oracle(0, c_bar, delta_c).scores(np.array(col, float).reshape(-1, 1))
    assert np.all((v >= c_bar - delta_c / 2 - 1e-12) & (v <= c_bar + delta_c / 2 + 1e-12))


@given(st.floats(-6, 6), st.lists(st.floats(0, 1), min_size=2, max_size=20))
def test_zero_coef_fitted_equals_constant(intercept, vals):
    x = np.array(vals).reshape(-1, 2) if len(vals) % 2 == 0 else np.array(vals[:-1]).reshape(-1, 2)
    if x.shape[0] == 0:
        return
    pm = FittedPropensity(LogisticModel(np.zeros(1), intercept), (1,))
    const = ConstantPropensity(float(np.clip(expit(intercept), 1e-12, 1 - 1e-12)))
    np.testing.assert_allclose(pm.scores(x), const.scores(x), rtol=1e-12)
    assert pm.is_constant


def test_row_permutation_commutes(rng):
    x = (rng.random((30, 4)) < 0.5).astype(float)
    perm = rng.permutation(30)
    clf = Classifier(LogisticModel(rng.normal(size=4), 0.2))
    for pm in (three_variable_oracle((0, 1, 3)), FittedPropensity(LogisticModel([1.0, -1.0], 0.1), (2, 3))):
        np.testing.assert_array_equal(pm.scores(x[perm]), pm.scores(x)[perm])
    np.testing.assert_array_equal(class_posterior(clf, x[perm]), class_posterior(clf, x)[perm])


def test_class_posterior_examples(rng):
    x = rng.random((10, 2))
    assert np.all(class_posterior(Classifier(LogisticModel.zeros(2)), x) == 0.5)
    clf = Classifier(fit(x, np.ones(10), np.ones(10)))
    assert np.all(class_posterior(clf, x) > 0.5)
    np.testing.assert_array_equal(class_posterior(clf, x), class_posterior(clf, x))
    with pytest.raises(InputError):
        class_posterior(clf, rng.random((3, 5)))


def test_scale_posterior_scar():
    assert scale_posterior_scar([0.3], 0.3)[0] == 1.0
    assert scale_posterior_scar([0.15], 0.3)[0] == pytest.approx(0.5)
    p = np.array([0.1, 0.4, 0.9])
    np.testing.assert_array_equal(scale_posterior_scar(p, 1.0), p)
    assert scale_posterior_scar([0.5], 0.3)[0] == 1.0
    with pytest.raises(InputError):
        scale_posterior_scar([0.5], 0.0)


def test_selector_validation():
    assert make_selector([]) == ()
    with pytest.raises(InputError):
        make_selector([1, 1])
    with pytest.raises(InputError):
        make_selector([3], n_cols=3)
