import numpy as np
import pytest

from sirf.data import Dataset, default_feature_names
from sirf.forest import Forest, ForestParams, Tree, fit_forest, uniform_weights
from sirf.interactions import EncodedLeafTable


def random_dataset(seed, n=40, p=4, signal=True):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    if signal:
        y = ((X[:, 0] > 0) & (X[:, 1 % p] < 0.3)).astype(int)
        flip = rng.random(n) < 0.15
        y = np.where(flip, 1 - y, y)
    else:
        y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1  # both classes present
    return Dataset(X, y, default_feature_names(p))


def small_forest(seed, n=40, p=4, n_trees=5, **kw):
    d = random_dataset(seed, n, p)
    return fit_forest(d, None, ForestParams(n_trees=n_trees, seed=seed, **kw), threads=1), d


def walk_path(tree, x):
    """Pure-Python descent: (leaf node id, first-split signed set)."""
    node, first = 0, {}
    while tree.feature[node] >= 0:
        j = int(tree.feature[node])
        go_right = x[j] >= tree.threshold[node]
        first.setdefault(j, 1 if go_right else -1)
        node = int(tree.right[node] if go_right else tree.left[node])
    return node, {s * (j + 1) for j, s in first.items()}


def leaf_prediction(tree, node):
    c = tree.counts[node]
    return int(c[1] > c[0])


def make_tree(feature, threshold, left, right, counts, p):
    n = len(feature)
    return Tree(np.array(feature), np.array(threshold, dtype=float), np.array(left), np.array(right),
                np.array(counts).reshape(n, 2), np.zeros(n), np.arange(1), p)


def make_forest(trees, p):
    return Forest(trees, p, tuple(f"x{j + 1}" for j in range(p)), uniform_weights(p),
                  ForestParams(n_trees=len(trees)))


def make_table(sets, masses, predictions=None, p=None, tree=None):
    """Leaf table with one leaf per signed set; masses go to the class column of the prediction."""
    L = len(sets)
    p = p or max(abs(g) for s in sets for g in s)
    signs = np.zeros((L, p), dtype=np.int8)
    for l, s in enumerate(sets):
        for g in s:
            signs[l, abs(g) - 1] = np.sign(g)
    pred = np.ones(L, dtype=np.int64) if predictions is None else np.asarray(predictions)
    counts = np.zeros((L, 2), dtype=np.int64)
    counts[np.arange(L), pred] = masses
    tree = np.zeros(L, dtype=np.int64) if tree is None else np.asarray(tree)
    return EncodedLeafTable(p, int(tree.max()) + 1, tree, np.arange(L), signs, pred, counts)


@pytest.fixture
def toy_dataset():
    return random_dataset(0)


# filled by test_acceptance; echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
