"""Predictions from the group of forest leaves that share a signed interaction.

Every leaf whose path contains S contributes a rule restricted to S's
features: for each member ``+j`` the leaf's first split on j gives
``x_j >= t`` and for ``-j`` it gives ``x_j < t``. Leaves are weighted by
their routed observation counts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .forest import Forest
from .interactions import EncodedLeafTable, make_interaction

QUANTILE_LEVELS = (0.1, 0.25, 0.5, 0.75, 0.9)
MODES = ("weighted_average", "raw_sum")


@dataclass(frozen=True)
class RuleGroup:
    interaction: tuple
    features: np.ndarray  # 0-based feature indices, in interaction order
    signs: np.ndarray  # +1/-1 per feature
    thresholds: np.ndarray  # (members, |S|) first-split thresholds
    prediction: np.ndarray  # (members,)
    weight: np.ndarray  # (members,)
    tree: np.ndarray
    node: np.ndarray

    @property
    def n_members(self) -> int:
        return self.prediction.shape[0]

    def fires(self, X) -> np.ndarray:
        """(n_points, members) indicator of each restricted rule."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        xs = X[:, self.features][:, None, :]
        t = self.thresholds[None, :, :]
        ok = np.where(self.signs > 0, xs >= t, xs < t)
        return ok.all(axis=2)


def group_rules(f: Forest, table: EncodedLeafTable, s) -> RuleGroup:
    """Collect every leaf (over all trees) whose signed path contains ``s``."""
    s = make_interaction(s)
    if not table.signed:
        raise ValueError("rule groups need a signed leaf table")
    if table.n_trees != f.n_trees or table.p != f.p:
        raise ValueError("leaf table does not match the forest")
    members = np.flatnonzero(table.contains(s))
    if members.size == 0:
        raise ValueError(f"interaction {s} appears on no decision path")
    feats = np.array([abs(g) - 1 for g in s], dtype=np.int64)
    first_leaf = np.searchsorted(table.tree, np.arange(f.n_trees))
    thr = np.empty((members.size, feats.size))
    for k in np.unique(table.tree[members]):
        rows = members[table.tree[members] == k]
        ft = f.trees[k].leaf_first_thresholds
        thr[np.searchsorted(members, rows)] = ft[rows - first_leaf[k]][:, feats]
    return RuleGroup(
        interaction=s,
        features=feats,
        signs=np.sign(np.array(s)).astype(np.int64),
        thresholds=thr,
        prediction=table.prediction[members].astype(float),
        weight=table.routed[members].astype(float),
        tree=table.tree[members],
        node=table.node[members],
    )


def raw_scores(g: RuleGroup, X) -> np.ndarray:
    """Sum of weight * rule * prediction over members."""
    return g.fires(X).astype(float) @ (g.weight * g.prediction)


def grouped_predict_many(g: RuleGroup, X, mode: str = "weighted_average") -> np.ndarray:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if g.n_members == 0:
        raise ValueError("empty rule group")
    fire = g.fires(X).astype(float)
    raw = fire @ (g.weight * g.prediction)
    if mode == "raw_sum":
        return raw
    mass = fire @ g.weight
    fallback = float(np.sum(g.weight * g.prediction) / np.sum(g.weight)) if g.weight.sum() > 0 else 0.0
    out = np.full(raw.shape, fallback)
    np.divide(raw, mass, out=out, where=mass > 0)
    return out


def grouped_predict(g: RuleGroup, x, mode: str = "weighted_average") -> float:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x[g.features])):
        raise ValueError("interaction coordinates must be finite")
    return float(grouped_predict_many(g, x[None, :], mode)[0])


def weighted_quantile(values, weights, q) -> float:
    """Inverse-CDF quantile of a weighted sample."""
    order = np.argsort(values, kind="mergesort")
    v = np.asarray(values, dtype=float)[order]
    w = np.asarray(weights, dtype=float)[order]
    cum = np.cumsum(w)
    k = np.searchsorted(cum, q * cum[-1] - 1e-12 * cum[-1], side="left")
    return float(v[min(k, v.size - 1)])


@dataclass(frozen=True)
class ThresholdDistribution:
    feature: int  # 1-based
    thresholds: np.ndarray
    weights: np.ndarray
    quantiles: dict

    def mass_at_or_below(self, value) -> float:
        return float(self.weights[self.thresholds <= value].sum() / self.weights.sum())


def threshold_distribution(g: RuleGroup, j: int, levels=QUANTILE_LEVELS,
                           min_size_quantile: float | None = None) -> ThresholdDistribution:
    """Weighted distribution of first-split thresholds on feature ``j`` (1-based).

    ``min_size_quantile`` keeps only members whose weight is at or above that
    quantile of member weights (e.g. 0.9 for the largest leaves).
    """
    pos = np.flatnonzero(g.features == j - 1)
    if pos.size == 0:
        raise ValueError(f"feature {j} is not part of interaction {g.interaction}")
    t = g.thresholds[:, pos[0]]
    w = g.weight
    keep = w > 0
    if min_size_quantile is not None:
        keep &= w >= np.quantile(w, min_size_quantile)
    t, w = t[keep], w[keep]
    if t.size == 0:
        raise ValueError("no members with positive weight")
    qs = {float(q): weighted_quantile(t, w, q) for q in levels}
    return ThresholdDistribution(j, t, w, qs)


def response_surface(g: RuleGroup, eval_data: Dataset, grid_quantiles=(0.1, 0.25, 0.5, 0.75, 0.9),
                     fixed_feature: int | None = None, mode: str = "weighted_average") -> list[tuple]:
    """Evaluate the grouped prediction on an empirical-quantile grid.

    Returns rows ``(v1, v2, fixed_level, score)``. For three-feature
    interactions one feature (default: the last) is held at a low and a high
    level: the median of held-out values below and at-or-above its weighted
    median first-split threshold.
    """
    feats = [int(j) + 1 for j in g.features]
    if len(feats) == 2:
        plot, fixed_levels = feats, [("", None)]
    elif len(feats) == 3:
        fixed = feats[-1] if fixed_feature is None else int(fixed_feature)
        if fixed not in feats:
            raise ValueError(f"fixed feature {fixed} not in interaction")
        plot = [j for j in feats if j != fixed]
        cut = threshold_distribution(g, fixed, levels=(0.5,)).quantiles[0.5]
        col = eval_data.features[:, fixed - 1]
        lo, hi = col[col < cut], col[col >= cut]
        fixed_levels = []
        if lo.size:
            fixed_levels.append(("low", (fixed, float(np.median(lo)))))
        if hi.size:
            fixed_levels.append(("high", (fixed, float(np.median(hi)))))
    else:
        raise ValueError("response surfaces need an interaction of size 2 or 3")
    a = np.quantile(eval_data.features[:, plot[0] - 1], grid_quantiles)
    b = np.quantile(eval_data.features[:, plot[1] - 1], grid_quantiles)
    rows = []
    for label, fix in fixed_levels:
        grid = np.zeros((a.size * b.size, eval_data.p))
        aa, bb = np.meshgrid(a, b, indexing="ij")
        grid[:, plot[0] - 1] = aa.ravel()
        grid[:, plot[1] - 1] = bb.ravel()
        if fix is not None:
            grid[:, fix[0] - 1] = fix[1]
        scores = grouped_predict_many(g, grid, mode)
        rows += [(float(u), float(v), label, float(sc))
                 for u, v, sc in zip(aa.ravel(), bb.ravel(), scores)]
    return rows


def write_surface_csv(rows, names, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([*names, "fixed_level", "score"])
        for u, v, label, sc in rows:
            wr.writerow([repr(u), repr(v), label, repr(sc)])


def write_threshold_csv(g: RuleGroup, feature_names, path, levels=QUANTILE_LEVELS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["feature", "quantile", "value", "weight_mass"])
        for j in g.features:
            dist = threshold_distribution(g, int(j) + 1, levels)
            for q, v in dist.quantiles.items():
                wr.writerow([feature_names[j], repr(q), repr(v), repr(dist.mass_at_or_below(v))])
