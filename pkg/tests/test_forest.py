import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sirf.data import DataError, Dataset, default_feature_names
from sirf.forest import (ForestParams, check_weights, dump_forest, fit_forest, gini_importance,
                         load_forest, oob_accuracy, route)

from conftest import leaf_prediction, random_dataset, small_forest, walk_path


def _separable(n=20):
    x = np.linspace(-1, 1, n)
    X = np.column_stack([x, np.random.default_rng(0).standard_normal(n)])
    return Dataset(X, (x >= 0).astype(int), ["a", "b"])


def test_single_split_on_separating_feature():
    d = _separable()
    f = fit_forest(d, None, ForestParams(n_trees=1, mtry=2, bootstrap=False), threads=1)
    t = f.trees[0]
    assert t.n_nodes == 3
    assert t.feature[0] == 0
    assert d.features[:, 0][d.features[:, 0] < 0].max() < t.threshold[0] < 0.06
    leaves = t.leaf_ids
    assert [sorted(t.counts[l]) for l in leaves] == [[0, 10], [0, 10]]
    assert gini_importance(f)[0].tolist() == [1.0, 0.0]


def test_one_hot_weights_force_feature():
    d = random_dataset(3, n=60, p=5)
    w = np.zeros(5)
    w[3] = 1.0
    f = fit_forest(d, w, ForestParams(n_trees=10, mtry=1), threads=1)
    used = np.concatenate([t.feature[t.feature >= 0] for t in f.trees])
    assert used.size > 0 and set(used.tolist()) == {3}


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.lists(st.booleans(), min_size=5, max_size=5).filter(any))
def test_zero_weight_features_never_split(seed, mask):
    d = random_dataset(seed, n=50, p=5)
    w = np.array(mask, dtype=float)
    f = fit_forest(d, w / w.sum(), ForestParams(n_trees=3, mtry=2, seed=seed), threads=1)
    for t in f.trees:
        assert all(mask[j] for j in t.feature[t.feature >= 0])


def test_xor_is_learnable():
    rng = np.random.default_rng(1)
    centers = np.array([[1, 1], [-1, -1], [1, -1], [-1, 1]])
    lab = np.array([1, 1, 0, 0])
    k = rng.integers(0, 4, 400)
    X = centers[k] + 0.3 * rng.standard_normal((400, 2))
    d = Dataset(X, lab[k], ["a", "b"])
    f = fit_forest(d, None, ForestParams(n_trees=50, mtry=2, seed=2), threads=1)
    assert oob_accuracy(f, d) > 0.9


def test_fit_errors():
    d = Dataset(np.zeros((4, 2)), [1, 1, 1, 1], ["a", "b"])
    with pytest.raises(ValueError):
        fit_forest(d, None, ForestParams(n_trees=1))
    d = random_dataset(0)
    with pytest.raises(ValueError):
        fit_forest(d, np.zeros(d.p), ForestParams(n_trees=1))
    with pytest.raises(ValueError):
        fit_forest(d, None, ForestParams(n_trees=1, mtry=d.p + 1))


def test_check_weights():
    assert check_weights([1, 1, 2], 3).tolist() == [0.25, 0.25, 0.5]
    for bad in ([-1, 2], [0, 0], [1, np.nan]):
        with pytest.raises(ValueError):
            check_weights(bad, 2)


def test_boundary_point_goes_right():
    d = _separable()
    f = fit_forest(d, None, ForestParams(n_trees=1, mtry=2, bootstrap=False), threads=1)
    t = f.trees[0]
    x = np.array([t.threshold[0], 0.0])
    assert route(f, x)[0] == t.right[0]


def test_route_errors():
    f, _ = small_forest(0)
    with pytest.raises(DataError):
        route(f, np.zeros(f.p + 1))
    with pytest.raises(DataError):
        f.apply(np.zeros((3, f.p - 1)))


def test_single_leaf_tree_routes_to_root():
    d = Dataset(np.zeros((4, 1)), [0, 1, 0, 1], ["a"])  # no split possible
    f = fit_forest(d, None, ForestParams(n_trees=1, bootstrap=False), threads=1)
    assert f.trees[0].n_nodes == 1
    assert route(f, [3.0]).tolist() == [0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        w, ok = gini_importance(f)
    assert not ok and w.tolist() == [1.0]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_routing_matches_hyperrectangles_and_path_walk(seed):
    f, d = small_forest(seed % 1000, n_trees=10)
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((10, f.p)) * 1.5
    leaves = f.apply(pts)
    for k, t in enumerate(f.trees):
        regions = t.regions()
        assert set(regions) == set(t.leaf_ids.tolist())
        for i, x in enumerate(pts):
            inside = [node for node, box in regions.items() if box.contains(x)]
            assert inside == [leaves[i, k]]
            node, signed = walk_path(t, x)
            assert node == leaves[i, k]
            assert set(t.signed_set(node)) == signed


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_leaf_invariants(seed):
    f, d = small_forest(seed % 997, n=30, n_trees=3, min_leaf=2)
    for t in f.trees:
        for node in t.leaf_ids:
            s = t.signed_set(node)
            assert len({abs(g) for g in s}) == len(s)
            c = t.counts[node]
            assert c.sum() >= 2
        assert (t.leaf_predictions == (t.counts[t.leaf_ids, 1] > t.counts[t.leaf_ids, 0])).all()
        # in-bag rows land in leaves that count them
        leaves = t.apply(d.features[t.inbag])
        per_leaf = np.zeros((t.n_nodes, 2), dtype=int)
        np.add.at(per_leaf, (leaves, d.responses[t.inbag]), 1)
        assert np.array_equal(per_leaf[t.leaf_ids], t.counts[t.leaf_ids])


def test_tie_leaf_predicts_zero():
    d = Dataset(np.zeros((4, 1)), [0, 1, 0, 1], ["a"])
    f = fit_forest(d, None, ForestParams(n_trees=1, bootstrap=False), threads=1)
    assert f.trees[0].leaf_predictions.tolist() == [0]


def test_thresholds_are_midpoints():
    f, d = small_forest(5, n_trees=4)
    for t in f.trees:
        stack = [(0, d.features[t.inbag])]
        while stack:
            node, rows = stack.pop()
            j = t.feature[node]
            if j < 0:
                continue
            # threshold sits halfway between adjacent distinct values of the node's rows
            col = np.unique(rows[:, j])
            k = np.searchsorted(col, t.threshold[node])
            assert 0 < k < col.size
            assert math.isclose(t.threshold[node], (col[k - 1] + col[k]) / 2, rel_tol=0, abs_tol=1e-12)
            go = rows[:, j] >= t.threshold[node]
            stack += [(t.left[node], rows[~go]), (t.right[node], rows[go])]


def test_monotone_transform_equivariance():
    d = random_dataset(8, n=60, p=3)
    X2 = d.features.copy()
    X2[:, 1] = np.exp(X2[:, 1])  # strictly increasing
    d2 = Dataset(X2, d.responses, d.feature_names)
    params = ForestParams(n_trees=5, seed=4)
    a, b = fit_forest(d, None, params, threads=1), fit_forest(d2, None, params, threads=1)
    for ta, tb in zip(a.trees, b.trees):
        assert np.array_equal(ta.feature, tb.feature)
        assert np.array_equal(ta.counts, tb.counts)
        assert np.array_equal(ta.leaf_signs, tb.leaf_signs)


def test_gini_importance_on_noise():
    for seed in range(20):
        d = random_dataset(seed, n=100, p=5, signal=False)
        f = fit_forest(d, None, ForestParams(n_trees=20, seed=seed), threads=1)
        w, ok = gini_importance(f)
        assert ok and abs(w.sum() - 1) < 1e-12 and w.max() < 0.5


def test_oob_accuracy_on_shuffled_labels():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((300, 4))
    y = rng.permutation(np.arange(300) % 2)
    acc = oob_accuracy(fit_forest(Dataset(X, y, default_feature_names(4)), None,
                                  ForestParams(n_trees=50, seed=1), threads=1),
                       Dataset(X, y, default_feature_names(4)))
    assert 0.35 <= acc <= 0.65


def test_oob_single_tree_uses_its_oob_rows():
    f, d = small_forest(2, n_trees=1)
    t = f.trees[0]
    oob = np.setdiff1d(np.arange(d.n), t.inbag)
    pred = np.array([leaf_prediction(t, walk_path(t, d.features[i])[0]) for i in oob])
    assert oob_accuracy(f, d) == pytest.approx(np.mean(pred == d.responses[oob]), abs=1e-15)


def test_oob_requires_bootstrap():
    f, d = small_forest(1, bootstrap=False)
    with pytest.raises(ValueError):
        oob_accuracy(f, d)


def test_threads_do_not_change_result():
    d = random_dataset(6, n=80, p=6)
    a = fit_forest(d, None, ForestParams(n_trees=8, seed=3), threads=1)
    b = fit_forest(d, None, ForestParams(n_trees=8, seed=3), threads=4)
    for ta, tb in zip(a.trees, b.trees):
        assert np.array_equal(ta.threshold, tb.threshold) and np.array_equal(ta.inbag, tb.inbag)


def test_serialization_round_trip(tmp_path):
    f, d = small_forest(9)
    dump_forest(f, tmp_path / "f.json")
    g = load_forest(tmp_path / "f.json")
    assert np.array_equal(f.apply(d.features), g.apply(d.features))
    for ta, tb in zip(f.trees, g.trees):
        assert ta.threshold.tobytes() == tb.threshold.tobytes()
    (tmp_path / "bad.json").write_text('{"schema_version": 99}')
    with pytest.raises(ValueError):
        load_forest(tmp_path / "bad.json")


def test_split_ties_prefer_lowest_feature_then_threshold():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    y = np.array([0, 1, 1, 0])
    d = Dataset(np.column_stack([x, x]), y, ["a", "b"])
    t = fit_forest(d, None, ForestParams(n_trees=1, mtry=2, bootstrap=False), threads=1).trees[0]
    assert t.feature[0] == 0
    assert t.threshold[0] == 0.5
