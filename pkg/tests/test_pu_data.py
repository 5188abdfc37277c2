import numpy as np
import pytest
from hypothesis import given, strategies as st

from sarpu.errors import (
    ConsistencyError,
    InputError,
    MechanismError,
    MissingTruthError,
    ParseError,
    SchemaError,
)
from sarpu.pu_data import (
    Dataset,
    OneVarSAR,
    SCARLabeling,
    ThreeVarSAR,
    apply_mechanism,
    class_prior,
    eligible_propensity_attributes,
    implied_prior,
    load_breast_cancer,
    load_csv,
    make_folds,
    make_synthetic,
    propensity_truth,
    save_csv,
    subsample_for_imbalance,
)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_small_csv(tmp_path):
    p = _write(tmp_path, "f1,f2,s\n0.1,0.2,1\n0.3,0.4,0\n0.5,0.6,0\n")
    ds = load_csv(p, "s", None)
    assert (ds.n_rows, ds.n_cols) == (3, 2)
    assert ds.column_names == ["f1", "f2"]
    assert ds.s.tolist() == [1, 0, 0]


def test_load_inconsistent_labels(tmp_path):
    p = _write(tmp_path, "f1,s,y\n0.1,1,1\n0.2,1,0\n")
    with pytest.raises(ConsistencyError):
        load_csv(p)


def test_load_missing_column(tmp_path):
    p = _write(tmp_path, "f1,y\n0.1,1\n")
    with pytest.raises(SchemaError, match="'s'"):
        load_csv(p)


def test_load_parse_error_names_location(tmp_path):
    p = _write(tmp_path, "f1,f2,y\n0.1,0.2,1\n0.3,abc,0\n")
    with pytest.raises(ParseError, match=r"row 3, column 'f2'"):
        load_csv(p, None)


def test_load_out_of_range_warns_and_rescales(tmp_path):
    p = _write(tmp_path, "f1,y\n2,1\n4,0\n6,1\n")
    with pytest.warns(UserWarning):
        load_csv(p, None)
    ds = load_csv(p, None, rescale=True)
    assert ds.features[:, 0].tolist() == [0.0, 0.5, 1.0]


def test_roundtrip(tmp_path, rng):
    ds = Dataset(rng.random((6, 2)), np.array([1, 0, 0, 1, 0, 0]), np.array([1, 0, 1, 1, 0, 1]),
                 ["a", "b"])
    save_csv(ds, tmp_path / "o.csv")
    back = load_csv(tmp_path / "o.csv")
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.s, ds.s)
    np.testing.assert_array_equal(back.y, ds.y)


def test_breast_cancer_shape():
    ds = load_breast_cancer()
    assert (ds.n_rows, ds.n_cols) == (683, 9)
    assert class_prior(ds) == pytest.approx(0.350, abs=5e-4)
    assert ds.features.min() >= 0 and ds.features.max() <= 1


def test_scar_extremes(rng):
    y = (rng.random(200) < 0.5).astype(int)
    x = rng.random((200, 2))
    np.testing.assert_array_equal(apply_mechanism(y, x, SCARLabeling(1.0), 3), y)
    assert apply_mechanism(y, x, SCARLabeling(0.0), 3).sum() == 0


def test_three_var_rate_all_ones():
    n = 10_000
    x = np.ones((n, 3))
    s = apply_mechanism(np.ones(n, int), x, ThreeVarSAR((0, 1, 2)), 11)
    sigma = np.sqrt(0.729 * 0.271 / n)
    assert abs(s.mean() - 0.729) <= 3 * sigma


def test_propensity_truth_examples():
    x = np.array([[1.0], [0.0]])
    np.testing.assert_allclose(propensity_truth(OneVarSAR(0, 0.5, 0.8), x), [0.9, 0.1])
    x3 = np.array([[0, 0, 0], [1, 1, 0]], float)
    np.testing.assert_allclose(propensity_truth(ThreeVarSAR((0, 1, 2)), x3), [0.125, 0.405])


def test_mechanism_rejects_non_binary_attribute():
    with pytest.raises(MechanismError):
        propensity_truth(OneVarSAR(0, 0.5, 0.2), np.array([[0.5], [1.0]]))
    with pytest.raises(MechanismError):
        OneVarSAR(0, 0.5, 1.0)


@given(st.integers(0, 2**31 - 1), st.floats(0, 1))
def test_labels_never_exceed_truth(seed, c):
    rng = np.random.default_rng(seed)
    y = (rng.random(50) < 0.5).astype(int)
    x = (rng.random((50, 3)) < 0.5).astype(float)
    for mech in (SCARLabeling(c), ThreeVarSAR((0, 1, 2)), OneVarSAR(1, 0.5, 0.6)):
        assert np.all(apply_mechanism(y, x, mech, seed) <= y)


@pytest.mark.parametrize("c", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_scar_empirical_frequency(c):
    n = 20_000
    s = apply_mechanism(np.ones(n, int), np.zeros((n, 1)), SCARLabeling(c), 5)
    assert abs(s.mean() - c) <= 4 * np.sqrt(c * (1 - c) / n)


def test_per_stratum_rates_match_truth():
    n = 40_000
    rng = np.random.default_rng(2)
    x = (rng.random((n, 3)) < 0.5).astype(float)
    mech = ThreeVarSAR((0, 1, 2))
    s = apply_mechanism(np.ones(n, int), x, mech, 9)
    e = propensity_truth(mech, x)
    for key in np.unique(x, axis=0):
        rows = np.all(x == key, axis=1)
        p = e[rows][0]
        assert abs(s[rows].mean() - p) <= 3 * np.sqrt(p * (1 - p) / rows.sum())


def test_apply_mechanism_is_seeded(rng):
    y = np.ones(100, int)
    x = np.zeros((100, 1))
    a = apply_mechanism(y, x, SCARLabeling(0.5), 4)
    assert np.array_equal(a, apply_mechanism(y, x, SCARLabeling(0.5), 4))
    assert not np.array_equal(a, apply_mechanism(y, x, SCARLabeling(0.5), 5))


def _balanced():
    y = np.array([1] * 1000 + [0] * 1000)
    return Dataset(np.zeros((2000, 1)), None, y)


def test_subsample_positives_and_negatives():
    ds = _balanced()
    pos = subsample_for_imbalance(ds, 1, 0.3, seed=1)
    assert pos.n_rows == 1300
    assert class_prior(pos) == pytest.approx(300 / 1300)
    neg = subsample_for_imbalance(ds, 0, 0.3, seed=1)
    assert class_prior(neg) == pytest.approx(1000 / 1300)
    same = subsample_for_imbalance(ds, 1, 1.0, seed=1)
    np.testing.assert_array_equal(same.y, ds.y)
    with pytest.raises(InputError):
        subsample_for_imbalance(ds, 1, 0.0)


def test_folds():
    plan = make_folds(10, 5, seed=3)
    assert plan.sizes().tolist() == [2] * 5
    assert np.array_equal(plan.assignment, make_folds(10, 5, seed=3).assignment)
    assert sorted(make_folds(11, 5, seed=0).sizes().tolist()) == [2, 2, 2, 2, 3]
    with pytest.raises(InputError):
        make_folds(4, 5)
    train, test = plan.split(0)
    assert sorted(np.concatenate([train, test]).tolist()) == list(range(10))


@given(st.integers(5, 300), st.integers(2, 5), st.integers(0, 1000))
def test_fold_sizes_within_one(n, k, seed):
    sizes = make_folds(n, k, seed).sizes()
    assert sizes.max() - sizes.min() <= 1


def test_priors():
    assert implied_prior(0.15, 0.3) == pytest.approx(0.5)
    assert implied_prior(0.2, 1.0) == pytest.approx(0.2)
    assert implied_prior(0.5, 0.3) == 1.0
    with pytest.raises(InputError):
        implied_prior(0.1, 0.0)
    with pytest.raises(MissingTruthError):
        class_prior(Dataset(np.zeros((2, 1))))
    # Adult-sized class balance: 761 positives in 1000 rows
    ds = Dataset(np.zeros((1000, 1)), None, np.array([1] * 761 + [0] * 239))
    assert class_prior(ds) == pytest.approx(0.761)


def test_eligible_attributes():
    x = np.column_stack([np.r_[np.ones(5), np.zeros(5)], np.r_[np.ones(9), 0], np.linspace(0, 1, 10)])
    assert eligible_propensity_attributes(x) == [0]


def test_synthetic_generator():
    ds = make_synthetic(2000, 20, seed=0)
    assert ds.n_cols == 20
    assert set(np.unique(ds.features)) == {0.0, 1.0}
    assert abs(class_prior(ds) - 0.5) < 0.05
    assert len(eligible_propensity_attributes(ds.features)) >= 15
    assert np.array_equal(ds.features, make_synthetic(2000, 20, seed=0).features)
