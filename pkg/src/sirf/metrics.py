"""Prevalence, precision and their null comparisons for signed interactions.

Prevalence is computed from a leaf table routed with training rows (uses each
leaf's prediction and routed mass); precision from a table of the same forest
routed with held-out rows (uses the true labels). Per-tree ratios are averaged
over the trees where the ratio is defined; ``n_valid`` reports how many.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import _kernels
from .interactions import EncodedLeafTable, format_interaction


class UndefinedMetricError(ValueError):
    """The metric's conditioning event has no mass in any tree."""


@dataclass
class MetricReport:
    interaction: tuple
    prevalence: float | None = None
    delta_prevalence: float | None = None
    independence: float | None = None
    precision: float | None = None
    delta_precision: float | None = None
    n_valid: dict = field(default_factory=dict)


def _mean_valid(num, den):
    valid = den > 0
    if not valid.any():
        return None, 0
    return float(np.mean(num[valid] / den[valid])), int(valid.sum())


class InteractionEvaluator:
    """Caches per-tree leaf sums so many interactions (and their subsets) can
    be scored against one forest cheaply.

    Per-tree sums are kept in four columns: routed mass in leaves predicting
    1, routed mass in leaves predicting 0, held-out rows labeled 1, held-out
    rows labeled 0.
    """

    def __init__(self, train_table: EncodedLeafTable, eval_table: EncodedLeafTable | None = None):
        if eval_table is not None and (
            eval_table.n_leaves != train_table.n_leaves
            or not np.array_equal(eval_table.signs, train_table.signs)
        ):
            raise ValueError("train and eval tables must encode the same forest")
        self.table = train_table
        routed = train_table.routed.astype(float)
        z = train_table.prediction
        w = np.zeros((train_table.n_leaves, 4))
        w[:, 0] = routed * (z == 1)
        w[:, 1] = routed * (z == 0)
        if eval_table is not None:
            w[:, 2] = eval_table.counts[:, 1]
            w[:, 3] = eval_table.counts[:, 0]
        self.has_eval = eval_table is not None
        self._weights = w
        self._tree = np.ascontiguousarray(train_table.tree)
        self._cache = {}
        T = train_table.n_trees
        # predicted-class mass per tree: index by class C -> column 1 - C
        self._class_mass = np.stack([
            np.bincount(self._tree, weights=w[:, 1], minlength=T),
            np.bincount(self._tree, weights=w[:, 0], minlength=T),
        ])

    def prefetch(self, sets) -> None:
        todo = sorted({tuple(s) for s in sets} - self._cache.keys(), key=lambda s: (len(s), s))
        if not todo:
            return
        kmax = max(len(s) for s in todo)
        cols = np.zeros((len(todo), max(kmax, 1)), dtype=np.int64)
        lens = np.zeros(len(todo), dtype=np.int64)
        for q, s in enumerate(todo):
            cols[q, :len(s)] = self.table.columns(s)
            lens[q] = len(s)
        sums = _kernels.set_tree_sums(cols, lens, self.table.bits, self._tree,
                                      self.table.n_trees, self._weights)
        for q, s in enumerate(todo):
            self._cache[s] = sums[q]

    def _sums(self, s) -> np.ndarray:
        s = tuple(s)
        if s not in self._cache:
            self.prefetch([s])
        return self._cache[s]

    # -- per-tree pieces ------------------------------------------------------

    def _prev_parts(self, s, c):
        return self._sums(s)[:, 1 - c], self._class_mass[c]

    def _prec_parts(self, s, c):
        sums = self._sums(s)
        num = sums[:, 2] if c == 1 else sums[:, 3]
        return num, sums[:, 2] + sums[:, 3]

    # -- metrics (None when undefined) ---------------------------------------

    def prevalence(self, s, c):
        return _mean_valid(*self._prev_parts(s, c))

    def delta_prevalence(self, s, c):
        n1, d1 = self._prev_parts(s, c)
        n0, d0 = self._prev_parts(s, 1 - c)
        valid = (d1 > 0) & (d0 > 0)
        if not valid.any():
            return None, 0
        diff = n1[valid] / d1[valid] - n0[valid] / d0[valid]
        return float(np.mean(diff)), int(valid.sum())

    def independence(self, s, c):
        if len(s) < 2:
            return None, 0
        full, nv = self.prevalence(s, c)
        if full is None:
            return None, 0
        best = -math.inf
        for g in s:
            single, _ = self.prevalence((g,), c)
            rest, _ = self.prevalence(tuple(h for h in s if h != g), c)
            best = max(best, full - single * rest)
        return best, nv

    def precision(self, s, c):
        if not self.has_eval:
            raise ValueError("precision needs an eval table")
        return _mean_valid(*self._prec_parts(s, c))

    def delta_precision(self, s, c):
        if len(s) < 2:
            return None, 0
        full, nv = self.precision(s, c)
        if full is None:
            return None, 0
        gaps = []
        for sub in combinations(s, len(s) - 1):
            v, _ = self.precision(sub, c)
            if v is not None:
                gaps.append(full - v)
        if not gaps:
            return None, 0
        return min(gaps), nv

    def needed_sets(self, s):
        s = tuple(s)
        out = [s]
        if len(s) >= 2:
            out += [(g,) for g in s]
            out += list(combinations(s, len(s) - 1))
        return out

    def report(self, s, c) -> MetricReport:
        s = tuple(s)
        rep = MetricReport(s)
        names = ["prevalence", "delta_prevalence", "independence"]
        if self.has_eval:
            names += ["precision", "delta_precision"]
        for name in names:
            value, nv = getattr(self, name)(s, c)
            setattr(rep, name, value)
            rep.n_valid[name] = nv
        return rep

    def reports(self, candidates, c) -> list[MetricReport]:
        candidates = [tuple(s) for s in candidates]
        self.prefetch(x for s in candidates for x in self.needed_sets(s))
        return [self.report(s, c) for s in candidates]


def _scalar(result):
    value, _ = result
    if value is None:
        raise UndefinedMetricError("metric undefined: conditioning event has no mass in any tree")
    return value


def prevalence(table: EncodedLeafTable, s, c: int) -> float:
    """Tree-averaged share of class-c predicted mass whose leaf path contains s."""
    return _scalar(InteractionEvaluator(table).prevalence(tuple(s), c))


def delta_prevalence(table: EncodedLeafTable, s, c: int) -> float:
    return _scalar(InteractionEvaluator(table).delta_prevalence(tuple(s), c))


def independence(table: EncodedLeafTable, s, c: int) -> float:
    """Largest gap between P(S|c) and P(g|c) * P(S - g|c) over members g."""
    if len(s) < 2:
        raise ValueError("independence needs an interaction of size >= 2")
    return _scalar(InteractionEvaluator(table).independence(tuple(s), c))


def precision(eval_table: EncodedLeafTable, s, c: int) -> float:
    """Tree-averaged share of held-out rows labeled c among rows in leaves containing s."""
    return _scalar(InteractionEvaluator(eval_table, eval_table).precision(tuple(s), c))


def delta_precision(eval_table: EncodedLeafTable, s, c: int) -> float:
    if len(s) < 2:
        raise ValueError("delta_precision needs an interaction of size >= 2")
    return _scalar(InteractionEvaluator(eval_table, eval_table).delta_precision(tuple(s), c))


def evaluate_all(train_table, eval_table, candidates, c: int) -> list[MetricReport]:
    if not candidates:
        return []
    return InteractionEvaluator(train_table, eval_table).reports(candidates, c)


REPORT_COLUMNS = ["interaction", "dP", "prev", "prec", "indep", "dPrec"]


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_metric_csv(reports, names, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(REPORT_COLUMNS)
        for r in reports:
            wr.writerow([format_interaction(r.interaction, names), _fmt(r.delta_prevalence),
                         _fmt(r.prevalence), _fmt(r.precision), _fmt(r.independence),
                         _fmt(r.delta_precision)])
