import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qkdcoexist.dataset import DatasetBundle, feature_matrix, target_vector
from qkdcoexist.ml import (
    BASELINE,
    KINDS,
    FittedModel,
    ModelSpec,
    Predictor,
    compare_models,
    default_specs,
    fit,
    fit_arrays,
    fit_predictor,
    mse,
    predict,
)
from qkdcoexist.ml.forest import RandomForest
from qkdcoexist.ml.linear import SingularMatrixError, fit_lasso, fit_least_squares, fit_ridge, soft_threshold
from qkdcoexist.ml.neighbors import KNeighbors


def planted(rng, n=50, p=3):
    X = rng.normal(size=(n, p)) * [1.0, 10.0, 0.1][:p] + [0.0, 5.0, -2.0][:p]
    w = np.array([2.0, -0.5, 7.0][:p])
    return X, X @ w + 1.0, w


def test_ls_recovers_line():
    x = np.arange(10.0).reshape(-1, 1)
    model = fit_arrays(ModelSpec("LS"), x, 2 * x[:, 0] + 1)
    w, b = model.coefficients
    assert w[0] == pytest.approx(2.0, abs=1e-6) and b == pytest.approx(1.0, abs=1e-6)


def test_ls_recovers_planted(rng):
    X, y, w = planted(rng)
    got, b = fit_arrays(ModelSpec("LS"), X, y).coefficients
    np.testing.assert_allclose(got, w, atol=1e-6)
    assert b == pytest.approx(1.0, abs=1e-6)


def test_ls_singular_recommends_ridge():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(SingularMatrixError, match="Ridge"):
        fit_least_squares(X, np.array([1.0, 2.0, 3.0]))


def test_ridge_zero_lambda_is_ls(rng):
    X, y, _ = planted(rng)
    y = y + rng.normal(size=len(y))
    ls = fit_arrays(ModelSpec("LS"), X, y)
    ridge = fit_arrays(ModelSpec("Ridge", lam=0.0), X, y)
    np.testing.assert_allclose(ridge.predict_many(X), ls.predict_many(X), atol=1e-6)


def test_ridge_shrinks(rng):
    X, y, _ = planted(rng)
    small = fit_ridge(X - X.mean(0), y, 0.1).coef
    big = fit_ridge(X - X.mean(0), y, 1e4).coef
    assert np.linalg.norm(big) < np.linalg.norm(small)


def test_lasso_large_lambda_zeroes(rng):
    X, y, _ = planted(rng)
    model = fit_arrays(ModelSpec("Lasso", lam=1e6), X, y)
    assert np.all(model.estimator.coef == 0)
    np.testing.assert_allclose(model.predict_many(X), y.mean(), atol=1e-9)


def test_lasso_zero_lambda_matches_ls(rng):
    X, y, _ = planted(rng)
    y = y + rng.normal(size=len(y))
    Xs = (X - X.mean(0)) / X.std(0)
    np.testing.assert_allclose(fit_lasso(Xs, y, 0.0).coef, fit_least_squares(Xs, y).coef, atol=1e-6)


def test_lasso_negative_lambda_rejected():
    with pytest.raises(ValueError):
        fit_lasso(np.eye(3), np.ones(3), -1.0)


@given(st.floats(-10, 10), st.floats(0, 5))
def test_soft_threshold(z, g):
    out = soft_threshold(z, g)
    assert abs(out) == pytest.approx(max(abs(z) - g, 0.0))
    assert out == 0 or np.sign(out) == np.sign(z)


def test_kn_k1_exact_on_training(rng):
    X, y, _ = planted(rng)
    model = fit_arrays(ModelSpec("KN", k=1), X, y)
    assert mse(model.predict_many(X), y) == 0.0


def test_kn_k3_hand_example():
    X = np.array([[0.0], [1.0], [2.0], [10.0]])
    y = np.array([1.0, 2.0, 4.0, 100.0])
    knn = KNeighbors(X, y, k=3)
    # distances from 1.4: 1.4, 0.4, 0.6, 8.6 -> rows 1, 2, 0
    assert knn.predict(np.array([[1.4]]))[0] == pytest.approx((2.0 + 4.0 + 1.0) / 3)


def test_kn_ties_go_to_lowest_index():
    X = np.array([[1.0], [-1.0], [1.0]])
    y = np.array([10.0, 20.0, 30.0])
    assert KNeighbors(X, y, k=1).predict(np.array([[0.0]]))[0] == 10.0
    assert list(KNeighbors(X, y, k=2).neighbours(np.array([0.0]))) == [0, 1]


def test_kn_manhattan():
    knn = KNeighbors(np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([0.0, 1.0]), k=1, metric="manhattan")
    assert knn.distances(np.array([1.0, 0.0])).tolist() == [1.0, 1.0]
    with pytest.raises(ValueError):
        KNeighbors(np.zeros((2, 1)), np.zeros(2), k=1, metric="cosine")


def test_rf_constant_target(rng):
    X = rng.normal(size=(40, 4))
    model = fit_arrays(ModelSpec("RF", n_trees=10), X, np.full(40, 3.25))
    np.testing.assert_array_equal(model.predict_many(rng.normal(size=(10, 4)) * 100), 3.25)


@given(arrays(np.float64, (30, 3), elements=st.floats(-100, 100)), arrays(np.float64, 30, elements=st.floats(-1e3, 1e3)))
def test_rf_within_training_range(X, y):
    forest = RandomForest.fit(X, y, n_trees=5, max_depth=4, max_features=2, seed=0)
    pred = forest.predict(np.vstack([X, X * 3 + 7]))
    assert np.all(pred >= y.min() - 1e-9) and np.all(pred <= y.max() + 1e-9)


def test_rf_row_order_invariant(rng):
    X = rng.normal(size=(60, 3))
    y = X[:, 0] ** 2 + X[:, 1]
    perm = rng.permutation(60)
    a = RandomForest.fit(X, y, 8, 5, 2, seed=3).predict(X)
    b = RandomForest.fit(X[perm], y[perm], 8, 5, 2, seed=3).predict(X)
    np.testing.assert_array_equal(a, b)


def test_rf_learns_step(rng):
    X = rng.uniform(-1, 1, size=(200, 2))
    y = np.where(X[:, 0] > 0, 5.0, -5.0)
    model = fit_arrays(ModelSpec("RF", n_trees=20), X, y)
    assert mse(model.predict_many(X), y) < 0.5


@pytest.mark.parametrize("kind", KINDS)
def test_serialization_round_trip(kind, rng):
    X, y, _ = planted(rng)
    model = fit_arrays(ModelSpec(kind, n_trees=5), X, y + rng.normal(size=len(y)), "noise_rate")
    again = FittedModel.from_dict(json.loads(json.dumps(model.to_dict())))
    np.testing.assert_array_equal(again.predict_many(X), model.predict_many(X))
    assert again.spec == model.spec


def test_standardize_rejects_wrong_dimension(rng):
    X, y, _ = planted(rng)
    model = fit_arrays(ModelSpec("LS"), X, y)
    with pytest.raises(ValueError, match="features"):
        model.predict_many(np.zeros((1, 5)))


def test_fit_rejects_tiny_data():
    with pytest.raises(ValueError):
        fit_arrays(ModelSpec("LS"), np.zeros((1, 2)), np.zeros(1))
    with pytest.raises(ValueError):
        fit(ModelSpec("LS"), [], "skr")


def test_fit_target_selector(bundle):
    train = bundle.training_sets[0]
    by_name = fit(ModelSpec("Ridge"), train, "skr")
    by_callable = fit(ModelSpec("Ridge"), train, lambda i: i.targets[1])
    x = train[0].features
    assert predict(by_name, x) == pytest.approx(predict(by_callable, x))
    with pytest.raises(ValueError):
        fit(ModelSpec("Ridge"), train, "power")


def test_predict_single_vector_only(bundle):
    model = fit(ModelSpec("LS"), bundle.training_sets[0], "qber")
    with pytest.raises(ValueError):
        predict(model, [bundle.training[0].features])


def test_mse_examples():
    assert mse([1, 2], [1, 2]) == 0.0
    assert mse([1, 2], [0, 2]) == 0.5
    with pytest.raises(ValueError):
        mse([1], [1, 2])
    with pytest.raises(ValueError):
        mse([], [])


@given(
    arrays(np.float64, 5, elements=st.floats(-1e3, 1e3)),
    arrays(np.float64, 5, elements=st.floats(-1e3, 1e3)),
    st.floats(-10, 10),
)
def test_mse_scales_quadratically(p, a, c):
    assert mse(c * p, c * a) == pytest.approx(c**2 * mse(p, a), rel=1e-9, abs=1e-9)


def test_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec("SVM")
    with pytest.raises(ValueError):
        ModelSpec("KN", k=0)
    with pytest.raises(ValueError):
        ModelSpec("Ridge", lam=-1.0)
    assert ModelSpec("Ridge").penalty == 1.0 and ModelSpec("Lasso").penalty == 0.01
    assert ModelSpec("RF").max_features == 3


def test_predictor_save_load(bundle, tmp_path):
    p = fit_predictor(ModelSpec("KN"), bundle.training_sets[0])
    p.save(tmp_path / "p.json")
    q = Predictor.load(tmp_path / "p.json")
    x = bundle.validation[0].features
    assert q.predict(x) == p.predict(x) and q.kind == "KN"


def test_comparison_table_shape(bundle):
    small = DatasetBundle(bundle.training_sets[:2], bundle.validation_sets[:2])
    specs = [s if s.kind != "RF" else ModelSpec("RF", n_trees=10) for s in default_specs()]
    table = compare_models(small, specs)
    assert table.models == KINDS + (BASELINE,)
    assert all(len(v) == 2 for m in table.models for v in table.per_set[m].values())
    text = table.format()
    assert len(text.splitlines()) == 2 + 6
    with pytest.raises(ValueError):
        compare_models(small, [ModelSpec("LS"), ModelSpec("LS")])


def test_baseline_row_is_training_mean(bundle):
    small = DatasetBundle(bundle.training_sets[:1], bundle.validation_sets[:1])
    table = compare_models(small, [ModelSpec("LS")])
    yt = target_vector(small.training_sets[0], "skr")
    yv = target_vector(small.validation_sets[0], "skr")
    assert table.per_set[BASELINE]["skr"][0] == pytest.approx(mse(np.full_like(yv, yt.mean()), yv))
    assert feature_matrix(small.validation_sets[0]).shape == (43, 7)
