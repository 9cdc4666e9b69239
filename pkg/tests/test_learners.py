import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridj.errors import EmptyInput, InvalidParams, LengthMismatch, NonNumeric, SchemaMismatch
from hybridj.learners import (
    AUTO, FeatureMatrix, ForestModel, Leaf, Split, fit_additive, fit_forest, fit_tree, mean_shift, predict_proba,
    standardize,
)
from hybridj.learners.tree import IMPURITY_TOL


# -- oracles --------------------------------------------------------------------------


def gini(y):
    if len(y) == 0:
        return 0.0
    _, c = np.unique(y, return_counts=True)
    p = c / len(y)
    return 1.0 - float(np.sum(p * p))


def best_split_impurity(X, y, min_leaf=1):
    """Exhaustive scan of all features and midpoints: lowest weighted child Gini."""
    best = np.inf
    n = len(y)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals, vals[1:]):
            t = (a + b) / 2
            left = X[:, f] <= t
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            imp = (left.sum() * gini(y[left]) + (~left).sum() * gini(y[~left])) / n
            best = min(best, imp)
    return best


def node_rows(tree, X):
    """Row indices reaching each node."""
    out = {}

    def rec(i, rows):
        out[i] = rows
        if tree.feature[i] >= 0:
            go_left = X[rows, tree.feature[i]] <= tree.threshold[i]
            rec(int(tree.left[i]), rows[go_left])
            rec(int(tree.right[i]), rows[~go_left])

    rec(0, np.arange(len(X)))
    return out


def kmeans2(X, seed=0, iters=100):
    rng = np.random.default_rng(seed)
    c = X[rng.choice(len(X), 2, replace=False)]
    for _ in range(iters):
        lab = np.argmin(((X[:, None, :] - c[None]) ** 2).sum(-1), axis=1)
        c = np.array([X[lab == k].mean(0) if np.any(lab == k) else c[k] for k in range(2)])
    return lab


def same_partition(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return all(len(set(b[a == k])) == 1 for k in np.unique(a)) and all(len(set(a[b == k])) == 1 for k in np.unique(b))


# -- trees ----------------------------------------------------------------------------


def test_tree_single_class_is_leaf():
    t = fit_tree(np.array([[1.0], [2.0], [3.0]]), [1, 1, 1])
    assert isinstance(t.root, Leaf)
    assert t.root.prediction == 1


def test_tree_1d_threshold():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = [0, 0, 1, 1]
    t = fit_tree(X, y, max_depth=1)
    assert isinstance(t.root, Split)
    assert 2 <= t.root.threshold < 3
    assert t.root.threshold == 2.5
    assert (t.predict(X) == y).all()
    # Gini oracle: no threshold beats the chosen one
    assert best_split_impurity(X, np.array(y)) == 0.0


def test_tree_xor():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0])
    t = fit_tree(X, y, max_depth=2)
    assert (t.predict(X) == y).all()
    assert t.depth() == 2


def test_tree_tie_breaking_prefers_lowest_feature():
    X = np.array([[0, 0], [0, 0], [1, 1], [1, 1]], dtype=float)
    t = fit_tree(X, [0, 0, 1, 1], max_depth=1)
    assert t.root.feature == 0


def test_leaf_majority_tie_goes_to_smaller_class():
    t = fit_tree(np.array([[1.0], [1.0]]), [3, 1])
    assert t.root.prediction == 1


@pytest.mark.parametrize("seed", range(20))
def test_split_optimality_exhaustive(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(6, 30)), int(rng.integers(1, 4))
    X = rng.integers(0, 5, size=(n, d)).astype(float)
    y = rng.integers(0, 3, size=n)
    min_leaf = int(rng.integers(1, 3))
    t = fit_tree(X, y, min_samples_leaf=min_leaf)
    rows = node_rows(t, X)
    for i, r in rows.items():
        if t.feature[i] < 0:
            continue
        f, thr = t.feature[i], t.threshold[i]
        left = X[r, f] <= thr
        chosen = (left.sum() * gini(y[r][left]) + (~left).sum() * gini(y[r][~left])) / len(r)
        assert chosen <= best_split_impurity(X[r], y[r], min_leaf) + 1e-9
        assert left.sum() >= min_leaf and (~left).sum() >= min_leaf
        # children sample counts add up
        assert t.n_node[t.left[i]] + t.n_node[t.right[i]] == t.n_node[i]


@pytest.mark.parametrize("seed", range(5))
def test_training_accuracy_nondecreasing_in_depth(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(120, 4))
    y = (X[:, 0] + X[:, 1] ** 2 + rng.normal(scale=0.5, size=120) > 0.5).astype(int)
    accs = [np.mean(fit_tree(X, y, max_depth=d).predict(X) == y) for d in range(0, 8)]
    assert all(a <= b + 1e-12 for a, b in zip(accs, accs[1:]))


def test_regression_tree():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    t = fit_tree(X, [1.0, 1.0, 5.0, 5.0], task="regression")
    assert t.root.threshold == 1.5
    assert t.predict(X).tolist() == [1.0, 1.0, 5.0, 5.0]
    flat = fit_tree(X, [0.0, 0.0, 0.0, 0.0], task="regression")
    assert isinstance(flat.root, Leaf) and flat.root.prediction == 0.0


def test_tree_errors():
    with pytest.raises(LengthMismatch):
        fit_tree(np.zeros((3, 1)), [0, 1])
    with pytest.raises(InvalidParams):
        fit_tree(np.zeros((3, 1)), [0, 1, 0], max_depth=-1)
    with pytest.raises(InvalidParams):
        fit_tree(np.zeros((3, 1)), [0, 1, 0], min_samples_leaf=0)
    with pytest.raises(InvalidParams):
        fit_tree(np.zeros((3, 1)), [0, 1, 0], task="ranking")
    with pytest.raises(NonNumeric):
        fit_tree(np.array([["a"], ["b"]], dtype=object), [0, 1])


def test_tree_on_feature_matrix_and_schema_check():
    cols = {"age": [20, 30, 40, 50], "race": ["black", "white", "black", "white"]}
    X = FeatureMatrix(cols)
    t = fit_tree(X, [1, 0, 1, 0])
    assert t.root.feature_name == "race=black"
    assert t.predict(X.transform({"age": [25], "race": ["white"]})).tolist() == [0]
    with pytest.raises(SchemaMismatch):
        t.predict(np.zeros((1, 5)))
    with pytest.raises(SchemaMismatch):
        X.transform({"age": [1]})


def test_feature_matrix_unseen_category_and_missing():
    X = FeatureMatrix({"a": [1.0, None, 3.0], "c": ["x", "y", "x"]})
    assert X.values[1, 0] == 2.0
    Z = X.transform({"a": [0.0], "c": ["zzz"]})
    assert Z.values[0, 1:].tolist() == [0.0, 0.0]


def test_export_text_format():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    t = fit_tree(X, [0, 0, 1, 1], max_depth=1)
    lines = t.export_text().splitlines()
    assert lines[0] == "x0 <= 2.50 | samples=4 | counts=[2, 2] | pred=0"
    assert lines[1] == "    leaf | samples=2 | counts=[2, 0] | pred=0"
    assert lines[2] == "    leaf | samples=2 | counts=[0, 2] | pred=1"


# -- forests --------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(50))
def test_degenerate_forest_equals_cart(seed):
    rng = np.random.default_rng(1000 + seed)
    n, d = int(rng.integers(5, 60)), int(rng.integers(1, 6))
    X = rng.integers(0, 6, size=(n, d)).astype(float)
    y = rng.integers(0, 2, size=n)
    depth = [None, 1, 2, 3][seed % 4]
    forest = fit_forest(X, y, n_trees=1, features_per_split=d, bootstrap=False, max_depth=depth, seed=seed)
    tree = fit_tree(X, y, max_depth=depth)
    Xq = rng.integers(-1, 7, size=(50, d)).astype(float)
    assert (forest.predict(Xq) == tree.predict(Xq)).all()
    leaf_p = tree.predict_proba(Xq)[:, -1]
    assert np.array_equal(predict_proba(forest, Xq), leaf_p)


def test_forest_blobs_beats_threshold():
    rng = np.random.default_rng(3)
    n = 200
    y = rng.integers(0, 2, size=n)
    X = rng.normal(size=(n, 3)) + 5.0 * y[:, None]  # centers 5*sqrt(3) apart, sigma 1
    yt = rng.integers(0, 2, size=n)
    Xt = rng.normal(size=(n, 3)) + 5.0 * yt[:, None]
    forest = fit_forest(X, y, n_trees=50, seed=1)
    acc = np.mean(forest.predict(Xt) == yt)
    # nearest-centroid oracle
    c0, c1 = X[y == 0].mean(0), X[y == 1].mean(0)
    nc = (((Xt - c1) ** 2).sum(1) < ((Xt - c0) ** 2).sum(1)).astype(int)
    assert np.mean(nc == yt) >= 0.95
    assert acc >= 0.95


def test_forest_deterministic():
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(80, 5)), rng.integers(0, 2, 80)
    a = fit_forest(X, y, n_trees=10, seed=7)
    b = fit_forest(X, y, n_trees=10, seed=7)
    c = fit_forest(X, y, n_trees=10, seed=8)
    assert a.tree_seeds == b.tree_seeds
    assert all(np.array_equal(s.threshold, t.threshold) for s, t in zip(a.trees, b.trees))
    assert np.array_equal(a.predict_proba(X), b.predict_proba(X))
    assert a.tree_seeds != c.tree_seeds


def test_forest_vote_fractions():
    X = np.array([[0.0], [1.0]])
    ones = fit_tree(X, [1, 1], classes=(0, 1))
    zeros = fit_tree(X, [0, 0], classes=(0, 1))
    f4 = ForestModel((ones, ones, ones, zeros), "classification", 4, 1, 0, False, (0, 0, 0, 0), (0, 1))
    assert predict_proba(f4, X).tolist() == [0.75, 0.75]
    f1 = ForestModel((ones, ones), "classification", 2, 1, 0, False, (0, 0), (0, 1))
    assert predict_proba(f1, X).tolist() == [1.0, 1.0]


def test_forest_regression_and_errors():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 2))
    y = 2 * X[:, 0]
    f = fit_forest(X, y, n_trees=5, task="regression", seed=0)
    assert np.corrcoef(f.predict(X), y)[0, 1] > 0.9
    with pytest.raises(InvalidParams):
        fit_forest(X, y, n_trees=0)
    with pytest.raises(SchemaMismatch):
        f.predict(np.zeros((2, 3)))


# -- additive model -------------------------------------------------------------------


def test_additive_constant_target():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(100, 3))
    m = fit_additive(X, np.full(100, 4.2))
    assert m.intercept == pytest.approx(4.2)
    for s in m.shapes:
        assert np.all(np.abs(s.values) < 1e-9)


def test_additive_importance_matches_ols_ranking():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(500, 2))
    y = 3 * X[:, 0] + 0 * X[:, 1] + rng.normal(scale=0.01, size=500)
    m = fit_additive(X, y)
    imp = m.feature_importance
    # oracle: least squares on the same data
    coef, *_ = np.linalg.lstsq(np.c_[np.ones(500), X], y, rcond=None)
    assert abs(coef[1]) > 10 * abs(coef[2])
    assert imp["x0"] / imp["x1"] > 10
    assert m.ranked_features() == ["x0", "x1"]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_additive_prediction_decomposes(seed):
    rng = np.random.default_rng(seed)
    cols = {"a": rng.normal(size=60).tolist(), "b": rng.choice(["x", "y", "z"], 60).tolist()}
    y = np.array(cols["a"]) + (np.array(cols["b"]) == "x") * 2.0
    X = FeatureMatrix(cols)
    m = fit_additive(X, y, n_rounds=20)
    contrib = m.contributions(X)
    assert np.allclose(m.predict(X), m.intercept + contrib.sum(1), atol=0, rtol=0)
    # centred shapes: training-mean contribution is zero, so the intercept is mean(pred)
    assert np.allclose(contrib.mean(0), 0, atol=1e-9)
    assert m.intercept == pytest.approx(float(np.mean(m.predict(X))), abs=1e-9)


def test_additive_shapes_csv(tmp_path):
    m = fit_additive(np.array([[0.0], [1.0], [2.0]]), [0.0, 1.0, 2.0], n_rounds=5)
    path = tmp_path / "shapes.csv"
    m.write_shapes_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "feature,bin_low,bin_high,value"
    assert len(lines) == 4


def test_additive_errors():
    with pytest.raises(InvalidParams):
        fit_additive(np.zeros((3, 1)), [0, 1, 2], learning_rate=0)
    with pytest.raises(LengthMismatch):
        fit_additive(np.zeros((3, 1)), [0, 1])


# -- mean shift -----------------------------------------------------------------------


def test_mean_shift_single_point():
    r = mean_shift(np.array([[1.0, 2.0]]))
    assert r.n_modes == 1
    assert r.modes.tolist() == [[1.0, 2.0]]


def test_mean_shift_identical_points():
    r = mean_shift(np.ones((10, 3)), bandwidth=AUTO)
    assert r.n_modes == 1


@pytest.mark.parametrize("seed", range(20))
def test_mean_shift_two_blobs(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(60, 2))
    b = rng.normal(size=(60, 2)) + np.array([10.0, 0.0])
    X = np.vstack([a, b])
    r = mean_shift(X, bandwidth=2.0)
    assert r.n_modes == 2
    assert same_partition(r.assignment, kmeans2(X, seed))


def test_mean_shift_properties():
    rng = np.random.default_rng(5)
    X = np.vstack([rng.normal(size=(40, 2)), rng.normal(size=(40, 2)) + 6])
    r = mean_shift(X, bandwidth=1.5)
    perm = rng.permutation(len(X))
    assert mean_shift(X[perm], bandwidth=1.5).n_modes == r.n_modes
    # every mode lies within bandwidth of some trajectory endpoint
    d = np.sqrt(((r.modes[:, None, :] - r.endpoints[None]) ** 2).sum(-1))
    assert np.all(d.min(1) <= 1.5)


def test_mean_shift_errors():
    with pytest.raises(EmptyInput):
        mean_shift(np.zeros((0, 2)))
    with pytest.raises(NonNumeric):
        mean_shift(np.array([["a"]], dtype=object))


def test_standardize():
    Z = standardize(np.array([[1.0, 5.0], [3.0, 5.0]]))
    assert Z.tolist() == [[-1.0, 0.0], [1.0, 0.0]]
