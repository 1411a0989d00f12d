import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sirf.data import Dataset, default_feature_names
from sirf.forest import ForestParams, fit_forest
from sirf.interactions import encode_leaves, make_interaction
from sirf.rulepred import (RuleGroup, group_rules, grouped_predict, grouped_predict_many, raw_scores,
                           response_surface, threshold_distribution, weighted_quantile,
                           write_surface_csv, write_threshold_csv)

from conftest import make_forest, make_tree, small_forest


def _stump_forest():
    t = make_tree([1, -1, -1], [0.5, 0, 0], [1, -1, -1], [2, -1, -1], [[3, 3], [3, 0], [0, 3]], p=2)
    return make_forest([t], 2)


def test_stump_group():
    f = _stump_forest()
    d = Dataset([[0, 0.0], [0, 1.0], [0, 2.0]], [0, 1, 1], ["x1", "x2"])
    g = group_rules(f, encode_leaves(f, d), (2,))
    assert g.n_members == 1
    assert g.thresholds.tolist() == [[0.5]] and g.signs.tolist() == [1]
    assert g.fires([[9.0, 0.5], [9.0, 0.4]])[:, 0].tolist() == [True, False]


def test_repeated_split_uses_first_threshold():
    # x5 >= 1 then x5 >= 2: restricted region for {+5} uses 1.0
    t = make_tree([4, -1, 4, -1, -1], [1.0, 0, 2.0, 0, 0], [1, -1, 3, -1, -1], [2, -1, 4, -1, -1],
                  [[1, 0], [1, 0], [0, 0], [0, 1], [0, 1]], p=5)
    f = make_forest([t], 5)
    X = np.zeros((3, 5))
    X[:, 4] = [0.0, 1.5, 3.0]
    g = group_rules(f, encode_leaves(f, Dataset(X, [0, 1, 1], default_feature_names(5))), (5,))
    assert sorted(g.thresholds[:, 0].tolist()) == [1.0, 1.0]


def test_absent_interaction_and_unsigned_table():
    f = _stump_forest()
    d = Dataset([[0, 0.0], [0, 1.0]], [0, 1], ["x1", "x2"])
    table = encode_leaves(f, d)
    with pytest.raises(ValueError, match="no decision path"):
        group_rules(f, table, (1,))
    with pytest.raises(ValueError):
        group_rules(f, table.unsigned(), (2,))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**5))
def test_group_membership_matches_enumeration(seed):
    f, d = small_forest(seed % 300, n_trees=6)
    table = encode_leaves(f, d)
    s = table.signed_set(int(np.argmax(table.routed)))
    if not s:
        return
    g = group_rules(f, table, s)
    expected = []
    for k, t in enumerate(f.trees):
        for node in t.leaf_ids:
            if set(s) <= set(t.signed_set(node)):
                expected.append((k, node))
    assert sorted(zip(g.tree.tolist(), g.node.tolist())) == expected
    # restricted regions are one-sided and agree with the path direction
    for m, (k, node) in enumerate(zip(g.tree, g.node)):
        t = f.trees[k]
        # first split on each feature along the path to the leaf
        lo = {}
        for parent, went_right in _path_to(t, node):
            j = int(t.feature[parent])
            lo.setdefault(j, (t.threshold[parent], went_right))
        for i, j in enumerate(g.features):
            thr, right = lo[j]
            assert g.thresholds[m, i] == thr
            assert (g.signs[i] > 0) == right


def _path_to(t, target):
    stack = [(0, [])]
    while stack:
        node, path = stack.pop()
        if node == target:
            return path
        if t.feature[node] >= 0:
            stack.append((t.left[node], path + [(node, False)]))
            stack.append((t.right[node], path + [(node, True)]))
    raise AssertionError("node not found")


def _random_group(rng, k=2, members=None):
    members = members or int(rng.integers(1, 15))
    feats = np.sort(rng.choice(6, size=k, replace=False))
    signs = rng.choice([-1, 1], size=k)
    return RuleGroup(
        interaction=make_interaction((feats + 1) * signs),
        features=feats, signs=signs,
        thresholds=rng.normal(size=(members, k)),
        prediction=rng.integers(0, 2, members).astype(float),
        weight=rng.integers(1, 10, members).astype(float),
        tree=np.zeros(members, dtype=int), node=np.arange(members))


def test_raw_score_coordinatewise_monotone():
    rng = np.random.default_rng(0)
    grid = np.linspace(-3, 3, 25)
    for _ in range(100):
        g = _random_group(rng, k=int(rng.integers(1, 4)))
        base = rng.normal(size=6)
        for i, j in enumerate(g.features):
            X = np.tile(base, (grid.size, 1))
            X[:, j] = grid
            diffs = np.diff(raw_scores(g, X)) * g.signs[i]
            assert np.all(diffs >= 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_prediction_ignores_other_coordinates(seed):
    rng = np.random.default_rng(seed)
    g = _random_group(rng, k=2)
    x = rng.normal(size=6)
    y = rng.normal(size=6) * 10
    y[g.features] = x[g.features]
    for mode in ("weighted_average", "raw_sum"):
        assert grouped_predict(g, x, mode) == grouped_predict(g, y, mode)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(1e-3, 0.5))
def test_perturbation_bounded_by_nearby_threshold_mass(seed, eps):
    rng = np.random.default_rng(seed)
    g = _random_group(rng, k=2)
    x = rng.normal(size=6)
    delta = np.zeros(6)
    delta[g.features] = rng.uniform(-eps, eps, size=2)
    change = abs(raw_scores(g, (x + delta)[None])[0] - raw_scores(g, x[None])[0])
    near = np.any(np.abs(g.thresholds - x[g.features]) <= eps, axis=1)
    assert change <= np.sum(g.weight[near] * g.prediction[near]) + 1e-12


def test_weighted_average_cases():
    rng = np.random.default_rng(3)
    g = _random_group(rng, k=2, members=6)
    g = RuleGroup(g.interaction, g.features, np.array([1, 1]), g.thresholds, np.ones(6), g.weight,
                  g.tree, g.node)
    inside = np.zeros(6)
    inside[g.features] = 10.0
    assert grouped_predict(g, inside) == 1.0
    # below every threshold nothing fires: fall back to the weighted mean prediction
    outside = np.zeros(6)
    outside[g.features] = -10.0
    mixed = RuleGroup(g.interaction, g.features, g.signs, g.thresholds,
                      np.array([1, 0, 1, 0, 0, 0.0]), g.weight, g.tree, g.node)
    want = np.sum(mixed.weight * mixed.prediction) / mixed.weight.sum()
    assert grouped_predict(mixed, outside) == pytest.approx(want)
    scores = grouped_predict_many(mixed, rng.normal(size=(50, 6)) * 2)
    assert np.all((0 <= scores) & (scores <= 1))
    with pytest.raises(ValueError):
        grouped_predict(mixed, inside, mode="bogus")
    bad = inside.copy()
    bad[g.features[0]] = np.nan
    with pytest.raises(ValueError):
        grouped_predict(mixed, bad)


def test_weighted_quantile():
    assert weighted_quantile([3, 1, 2], [1, 1, 1], 0.5) == 2
    assert weighted_quantile([1, 2], [1, 3], 0.5) == 2
    assert weighted_quantile([1, 2], [1, 1], 0.5) == 1


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=20), st.data())
def test_threshold_quantiles_monotone(values, data):
    weights = data.draw(st.lists(st.integers(1, 9), min_size=len(values), max_size=len(values)))
    k = len(values)
    g = RuleGroup((1,), np.array([0]), np.array([1]), np.array(values)[:, None], np.ones(k),
                  np.array(weights, dtype=float), np.zeros(k, dtype=int), np.arange(k))
    q = list(threshold_distribution(g, 1).quantiles.values())
    assert q == sorted(q)


def test_threshold_point_mass():
    g = RuleGroup((1,), np.array([0]), np.array([1]), np.full((4, 1), 0.7), np.ones(4),
                  np.array([1.0, 2, 3, 4]), np.zeros(4, dtype=int), np.arange(4))
    dist = threshold_distribution(g, 1)
    assert set(dist.quantiles.values()) == {0.7}
    assert dist.mass_at_or_below(0.7) == 1.0
    with pytest.raises(ValueError):
        threshold_distribution(g, 2)


def _and_model(seed=0, n=600):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 4))
    y = ((X[:, 0] > 0) & (X[:, 1] > 0) & (rng.random(n) < 0.9)).astype(int)
    return Dataset(X, y, default_feature_names(4))


def test_response_surface_shape_and_and_structure(tmp_path):
    d = _and_model()
    f = fit_forest(d, None, ForestParams(n_trees=30, seed=1), threads=1)
    g = group_rules(f, encode_leaves(f, d), (1, 2))
    rows = response_surface(g, d)
    assert len(rows) == 25
    raw = response_surface(g, d, mode="raw_sum")
    top = max(raw, key=lambda r: (r[0], r[1]))
    # the top-right cell is a maximum and strictly beats every cell outside the
    # AND region (x1 > 0 and x2 > 0); cells inside the region form a plateau
    assert top[3] == max(r[3] for r in raw)
    assert all(top[3] > r[3] for r in raw if r[0] < 0 or r[1] < 0)
    write_surface_csv(rows, ["x1", "x2"], tmp_path / "s.csv")
    out = list(csv.reader(open(tmp_path / "s.csv")))
    assert out[0] == ["x1", "x2", "fixed_level", "score"] and len(out) == 26
    write_threshold_csv(g, d.feature_names, tmp_path / "t.csv")
    out = list(csv.reader(open(tmp_path / "t.csv")))
    assert out[0] == ["feature", "quantile", "value", "weight_mass"] and len(out) == 11


def test_constant_group_gives_flat_surface():
    d = _and_model(1)
    k = 5
    g = RuleGroup((1, 2), np.array([0, 1]), np.array([1, 1]), np.zeros((k, 2)), np.ones(k),
                  np.ones(k), np.zeros(k, dtype=int), np.arange(k))
    assert {r[3] for r in response_surface(g, d)} == {1.0}


def test_three_way_surface_has_low_and_high_panels():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((800, 4))
    y = ((X[:, 0] > 0) & (X[:, 1] > 0) & (X[:, 2] > 0)).astype(int)
    d = Dataset(X, y, default_feature_names(4))
    f = fit_forest(d, None, ForestParams(n_trees=30, seed=2), threads=1)
    g = group_rules(f, encode_leaves(f, d), (1, 2, 3))
    rows = response_surface(g, d, fixed_feature=3)
    assert {r[2] for r in rows} == {"low", "high"} and len(rows) == 50
    with pytest.raises(ValueError):
        response_surface(g, d, fixed_feature=4)
    four = RuleGroup((1, 2, 3, 4), np.arange(4), np.ones(4, dtype=int), np.zeros((1, 4)), np.ones(1),
                     np.ones(1), np.zeros(1, dtype=int), np.arange(1))
    with pytest.raises(ValueError):
        response_surface(four, d)
