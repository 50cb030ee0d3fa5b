import warnings

import numpy as np
import pytest

from property_checks import check_cart_oracle
from plam.baselines import (augment, fit_gradient_boosting, fit_ols, fit_pltr, fit_random_forest,
                            fit_tree, ols_coefficients, variable_importance)
from plam.data import Dataset
from plam.errors import DegenerateSplit, RankDeficient
from plam.evaluation import auc
from plam.gam import fit_gam


def frame(X, y, kinds=None):
    return Dataset.from_arrays(np.asarray(X, float), np.asarray(y, float), kinds=kinds)


@pytest.mark.parametrize("p,powers,inter,expect", [(10, 3, True, 75), (10, 1, False, 10), (4, 2, True, 14)])
def test_augment_counts(rng, p, powers, inter, expect):
    d = frame(rng.standard_normal((50, p)), np.zeros(50))
    des = augment(d, powers, inter)
    assert len(des.names) == expect == p * powers + (p * (p - 1) // 2 if inter else 0)
    if powers == 1 and not inter:
        np.testing.assert_array_equal(des.matrix(d), d.X)


def test_augment_binary_excluded_from_powers(rng):
    X = np.column_stack([rng.standard_normal(60), rng.integers(0, 2, 60), rng.standard_normal(60)])
    d = frame(X, np.zeros(60))
    des = augment(d, 3)
    q, p, binaries = 2, 3, 1
    assert len(des.names) == q * 3 + p * (p - 1) // 2 + binaries
    assert "x2^2" not in des.names and "x1:x2" in des.names and "x2:x3" in des.names
    np.testing.assert_allclose(des.matrix(d)[:, des.names.index("x1^3")], X[:, 0] ** 3)


def test_ols_noiseless(rng):
    x = rng.standard_normal(40)
    m = fit_ols(frame(x[:, None], 3 * x - 2))
    assert abs(m.intercept + 2) < 1e-10 and abs(m.coefficients["x1"] - 3) < 1e-10


def test_ols_matches_normal_equations(rng):
    X = rng.standard_normal((20, 5))
    y = rng.standard_normal(20)
    icpt, coef, pinned = ols_coefficients(X, y)
    A = np.column_stack([np.ones(20), X])
    ref = np.linalg.solve(A.T @ A, A.T @ y)
    assert not pinned
    np.testing.assert_allclose(np.r_[icpt, coef], ref, atol=1e-8)


def test_ols_duplicate_pinned(rng):
    X = rng.standard_normal((50, 2))
    y = X @ [1.0, -1.0] + 0.1 * rng.standard_normal(50)
    base = fit_ols(frame(X, y))
    dup = frame(np.column_stack([X, X[:, 0]]), y)
    with pytest.warns(RankDeficient):
        m = fit_ols(dup)
    assert len(m.pinned) == 1 and m.coefficients[m.pinned[0]] == 0.0
    np.testing.assert_allclose(m.predict(dup), base.predict(frame(X, y)), atol=1e-10)


def test_tree_step(rng):
    x = np.sort(rng.uniform(0, 1, 200))
    t = fit_tree(frame(x[:, None], (x > 0.5).astype(float)))
    assert t.depth == 1
    below, above = x[x <= 0.5].max(), x[x > 0.5].min()
    assert below <= t.threshold[0] <= above


def test_tree_constant_target(rng):
    t = fit_tree(frame(rng.standard_normal((30, 2)), np.full(30, 4.2)))
    assert t.n_leaves == 1
    np.testing.assert_allclose(t.predict_matrix(rng.standard_normal((5, 2))), 4.2, atol=1e-12)


def test_tree_matches_enumeration():
    ok, detail = check_cart_oracle(n_instances=10)
    assert ok, detail


def test_tree_classification_leaf_shares(rng):
    X = rng.standard_normal((100, 2))
    y = (X[:, 0] > 0).astype(float)
    t = fit_tree(frame(X, y), task="classification", max_depth=1)
    assert set(np.round(t.predict_matrix(X), 12)) == {0.0, 1.0}
    with pytest.raises(ValueError):
        fit_tree(frame(X, X[:, 0]), task="classification")


def test_forest_reductions(rng):
    X = rng.standard_normal((80, 3))
    y = np.sin(X[:, 0]) + rng.standard_normal(80) * 0.2
    d = frame(X, y)
    f = fit_random_forest(d, B=1, mtry=3, bootstrap=False, min_leaf=5)
    t = fit_tree(d, min_leaf=5)
    np.testing.assert_array_equal(f.predict(d), t.predict(d))
    f = fit_random_forest(d, B=7, seed=3)
    Xt = rng.standard_normal((10, 3))
    manual = np.mean([tr.predict_matrix(Xt) for tr in f.trees], axis=0)
    np.testing.assert_allclose(f.predict_matrix(Xt), manual, atol=1e-12)
    again = fit_random_forest(d, B=7, seed=3)
    np.testing.assert_array_equal(again.predict_matrix(Xt), f.predict_matrix(Xt))


def test_boosting_first_stage_and_monotone_loss(rng):
    X = rng.standard_normal((120, 3))
    y = X[:, 0] ** 2 + X[:, 1] + 0.3 * rng.standard_normal(120)
    d = frame(X, y)
    b = fit_gradient_boosting(d, B=1, learning_rate=1.0, validation_fraction=0)
    t = fit_tree(frame(X, y - y.mean()), max_depth=3)
    np.testing.assert_allclose(b.predict(d), y.mean() + t.predict(d), atol=1e-12)
    b = fit_gradient_boosting(d, B=60, learning_rate=0.1, validation_fraction=0)
    assert np.all(np.diff(b.train_loss) <= 1e-12)
    Xt = rng.standard_normal((10, 3))
    manual = b.init + sum(0.1 * tr.predict_matrix(Xt) for tr in b.trees)
    np.testing.assert_allclose(b.predict_matrix(Xt), manual, atol=1e-12)


def test_boosting_logistic(rng):
    X = rng.standard_normal((200, 2))
    y = (X[:, 0] + 0.3 * rng.standard_normal(200) > 0).astype(float)
    b = fit_gradient_boosting(frame(X, y), B=40, loss="logistic", validation_fraction=0)
    p = b.predict(frame(X, y))
    assert np.all((p > 0) & (p < 1)) and auc(p, y) > 0.95
    assert np.all(np.diff(b.train_loss) <= 1e-12)


def test_early_stopping_refits_on_all_rows(rng):
    X = rng.standard_normal((150, 2))
    y = X[:, 0] + rng.standard_normal(150)
    b = fit_gradient_boosting(frame(X, y), B=80, validation_fraction=0.2, seed=1)
    assert b.B == b.params["stages"] == int(np.argmin(b.valid_loss)) + 1


def test_importance(rng):
    X = rng.standard_normal((200, 3))
    f = fit_random_forest(frame(X, 3 * X[:, 1] + 0.1 * rng.standard_normal(200)), B=20, mtry=3)
    imp = variable_importance(f)
    assert imp[0][0] == "x2" and imp[0][1] > 0.9
    assert abs(sum(s for _, s in imp) - 1) < 1e-9
    assert [s for _, s in imp] == sorted((s for _, s in imp), reverse=True)


def test_importance_symmetric_variables():
    shares = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((200, 2))
        y = X[:, 0] + X[:, 1] + 0.5 * rng.standard_normal(200)
        imp = dict(variable_importance(fit_random_forest(frame(X, y), B=10, mtry=1, seed=seed)))
        shares.append(imp["x1"])
    assert 0.35 <= min(shares) and max(shares) <= 0.65


def test_pltr_perfect_separator_and_constant(rng):
    X = np.column_stack([rng.uniform(-1, 1, 200), rng.standard_normal(200), np.ones(200)])
    y = (X[:, 0] > 0.2).astype(float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = fit_pltr(frame(X, y), k=5, n_cs=10)
    assert auc(m.predict(frame(X, y)), y) == 1.0
    assert "x3" not in m.columns
    assert all("x3" not in r.name for r in m.rules)
    assert m.design(frame(X, y)).shape[1] == len(m.columns) + len(m.univariate) + len(m.bivariate)


def test_pltr_close_to_gam_on_nonlinear_driver():
    rng = np.random.default_rng(11)
    n = 600
    X = rng.standard_normal((n, 3))
    eta = 3 * np.tanh(2 * X[:, 0]) - 1.5 * (X[:, 1] > 0.5) + 0.3 * X[:, 2]
    y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    d = frame(X, y)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pl = fit_pltr(d, k=5, n_cs=10)
        g = fit_gam(d, ["x1", "x2", "x3"], family="linear-probability")
    assert abs(auc(pl.predict(d), y) - auc(g.predict(d), y)) <= 0.02


def test_pltr_needs_binary(rng):
    with pytest.raises(ValueError):
        fit_pltr(frame(rng.standard_normal((30, 2)), rng.standard_normal(30)))
