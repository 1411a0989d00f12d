"""Random forests with importance-weighted feature sampling.

Trees split ``x_j < t`` to the left and ``x_j >= t`` to the right, with
thresholds at midpoints between adjacent distinct values. Each leaf carries a
signed encoding of its decision path: ``-j`` (1-based) for a left turn on
feature j and ``+j`` for a right turn, keeping only the first split on any
feature that repeats along the path.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .data import Dataset, DataError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the stream addressed by ``keys``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))


def default_threads() -> int:
    env = os.environ.get("SIRF_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def check_weights(w, p: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (p,):
        raise ValueError(f"weights must have shape ({p},), got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights are all zero")
    return w / total


def uniform_weights(p: int) -> np.ndarray:
    return np.full(p, 1.0 / p)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    mtry: int | None = None  # None -> ceil(sqrt(p))
    min_leaf: int = 1
    max_depth: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def resolved_mtry(self, p: int) -> int:
        m = math.ceil(math.sqrt(p)) if self.mtry is None else self.mtry
        if not 1 <= m <= p:
            raise ValueError(f"mtry must lie in [1, {p}], got {m}")
        return m


@dataclass(frozen=True)
class Hyperrectangle:
    """Axis-aligned box; ``bounds[j] = (lower, upper)`` means lower <= x_j < upper.

    Features without an entry are unconstrained.
    """

    bounds: dict

    def interval(self, j: int) -> tuple[float, float]:
        return self.bounds.get(j, (-math.inf, math.inf))

    def contains(self, x) -> bool:
        return all(lo <= x[j] < hi for j, (lo, hi) in self.bounds.items())


@dataclass(eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # in-bag class counts per node, shape (n_nodes, 2)
    decrease: np.ndarray  # count-weighted Gini decrease per split node
    inbag: np.ndarray  # row indices used to grow the tree (with duplicates)
    p: int

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @cached_property
    def leaf_ids(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    @cached_property
    def _first_splits(self):
        return _kernels.first_splits(self.feature, self.threshold, self.left, self.right, self.p)

    @property
    def leaf_signs(self) -> np.ndarray:
        """(n_leaves, p) int8 array of first-split directions per feature."""
        return self._first_splits[0][self.leaf_ids]

    @property
    def leaf_first_thresholds(self) -> np.ndarray:
        """(n_leaves, p) thresholds of the first split per feature (NaN if unused)."""
        return self._first_splits[1][self.leaf_ids]

    @property
    def leaf_predictions(self) -> np.ndarray:
        c = self.counts[self.leaf_ids]
        return (c[:, 1] > c[:, 0]).astype(np.int64)

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _kernels.apply_tree(self.feature, self.threshold, self.left, self.right, X)

    def regions(self) -> dict:
        """Full hyperrectangle of every leaf, keyed by node id."""
        out = {}
        stack = [(0, {})]
        while stack:
            node, bounds = stack.pop()
            f = int(self.feature[node])
            if f < 0:
                out[node] = Hyperrectangle(bounds)
                continue
            t = float(self.threshold[node])
            lo, hi = bounds.get(f, (-math.inf, math.inf))
            stack.append((int(self.left[node]), {**bounds, f: (lo, min(hi, t))}))
            stack.append((int(self.right[node]), {**bounds, f: (max(lo, t), hi)}))
        return out

    def signed_set(self, node: int) -> tuple[int, ...]:
        """Signed path encoding of a node, sorted by (|gamma|, sign)."""
        row = self._first_splits[0][node]
        return tuple(int(s) * (j + 1) for j, s in enumerate(row) if s != 0)


@dataclass(eq=False)
class Forest:
    trees: list
    p: int
    feature_names: tuple
    weights: np.ndarray
    params: ForestParams
    meta: dict = field(default_factory=dict)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def apply(self, X) -> np.ndarray:
        """Leaf node id reached in each tree, shape (n_rows, n_trees)."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.p:
            raise DataError(f"expected points with {self.p} features, got shape {X.shape}")
        return np.column_stack([t.apply(X) for t in self.trees])

    def predict_proba(self, X) -> np.ndarray:
        leaves = self.apply(X)
        votes = np.zeros(leaves.shape[0])
        for k, t in enumerate(self.trees):
            c = t.counts[leaves[:, k]]
            votes += c[:, 1] > c[:, 0]
        return votes / self.n_trees


def route(f: Forest, x) -> np.ndarray:
    """Leaf node id per tree for a single point."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (f.p,):
        raise DataError(f"expected a point with {f.p} coordinates, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError("point has non-finite coordinates")
    return f.apply(x[None, :])[0]


def _grow_one(X, y, w, mtry, params: ForestParams, t: int):
    rng = substream(params.seed, 0, t)
    n = X.shape[0]
    if params.bootstrap:
        sample = rng.integers(0, n, size=n)
    else:
        sample = np.arange(n)
    uniforms = rng.random((2 * n + 1) * mtry)
    max_depth = -1 if params.max_depth is None else int(params.max_depth)
    arrays = _kernels.grow_tree(X, y, sample.astype(np.int64), w, mtry,
                                int(params.min_leaf), max_depth, uniforms)
    return Tree(*arrays, inbag=sample, p=X.shape[1])


def fit_forest(d: Dataset, w=None, params: ForestParams = ForestParams(), threads: int | None = None) -> Forest:
    """Grow ``params.n_trees`` trees with features drawn proportional to ``w``.

    Each tree uses its own random stream derived from (seed, tree index), so
    the result does not depend on ``threads``.
    """
    if not d.has_both_classes():
        raise DataError("fit_forest needs both classes in the responses")
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if params.min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    w = uniform_weights(d.p) if w is None else check_weights(w, d.p)
    mtry = params.resolved_mtry(d.p)
    X = np.ascontiguousarray(d.features)
    y = np.ascontiguousarray(d.responses, dtype=np.int64)
    threads = threads or default_threads()

    def grow(t):
        return _grow_one(X, y, w, mtry, params, t)

    if threads > 1 and params.n_trees > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(grow, range(params.n_trees)))
    else:
        trees = [grow(t) for t in range(params.n_trees)]
    return Forest(trees, d.p, d.feature_names, w, params)


def gini_importance(f: Forest) -> tuple[np.ndarray, bool]:
    """Mean decrease in Gini impurity per feature, normalized to sum 1.

    Returns ``(weights, ok)``; ``ok`` is False when no tree has any split, in
    which case uniform weights are returned.
    """
    total = np.zeros(f.p)
    for t in f.trees:
        split = t.feature >= 0
        if not split.any():
            continue
        per = np.bincount(t.feature[split], weights=t.decrease[split], minlength=f.p)
        total += per / t.counts[0].sum()
    total /= f.n_trees
    s = total.sum()
    if s <= 0:
        log.warning("forest has no informative splits; returning uniform importance")
        return uniform_weights(f.p), False
    return total / s, True


def oob_votes(f: Forest, d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per row: number of trees voting class 1 and number of trees where the row is OOB."""
    if not f.params.bootstrap:
        raise ValueError("OOB accuracy needs per-tree bootstrap at fit time")
    leaves = f.apply(d.features)
    ones = np.zeros(d.n)
    total = np.zeros(d.n)
    for k, t in enumerate(f.trees):
        oob = np.ones(d.n, dtype=bool)
        oob[t.inbag] = False
        c = t.counts[leaves[:, k]]
        pred = c[:, 1] > c[:, 0]
        ones += oob & pred
        total += oob
    return ones, total


def oob_accuracy(f: Forest, d: Dataset) -> float:
    """Majority-vote accuracy over the trees where each row was out-of-bag.

    Vote ties go to class 0, matching the leaf rule.
    """
    ones, total = oob_votes(f, d)
    have = total > 0
    if not have.any():
        raise ValueError("no row is out-of-bag in any tree")
    pred = (ones[have] > total[have] - ones[have]).astype(np.int64)
    return float(np.mean(pred == d.responses[have]))


# -- serialization -----------------------------------------------------------

def forest_to_dict(f: Forest) -> dict:
    return {
        "p": f.p,
        "feature_names": list(f.feature_names),
        "weights": f.weights.tolist(),
        "params": asdict(f.params),
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "counts": t.counts.tolist(),
                "decrease": t.decrease.tolist(),
                "inbag": t.inbag.tolist(),
            }
            for t in f.trees
        ],
    }


def forest_from_dict(doc: dict) -> Forest:
    p = int(doc["p"])
    trees = [
        Tree(
            feature=np.array(t["feature"], dtype=np.int64),
            threshold=np.array(t["threshold"], dtype=np.float64),
            left=np.array(t["left"], dtype=np.int64),
            right=np.array(t["right"], dtype=np.int64),
            counts=np.array(t["counts"], dtype=np.int64).reshape(-1, 2),
            decrease=np.array(t["decrease"], dtype=np.float64),
            inbag=np.array(t["inbag"], dtype=np.int64),
            p=p,
        )
        for t in doc["trees"]
    ]
    return Forest(trees, p, tuple(doc["feature_names"]), np.array(doc["weights"]),
                  ForestParams(**doc["params"]))


def dump_forest(f: Forest, path) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "kind": "forest", "forest": forest_to_dict(f)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_forest(path) -> Forest:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {doc.get('schema_version')!r}")
    return forest_from_dict(doc["forest"])
