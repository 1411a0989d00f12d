"""Signed decision-path encodings and random intersection trees over them.

A signed interaction is a tuple of nonzero ints sorted by absolute value,
e.g. ``(-2, 3)`` for the rule ``1(x_2 < .) * 1(x_3 >= .)`` (features are
1-based). Unsigned interactions use the same type with positive members only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .data import Dataset, DataError
from .forest import Forest, substream


def make_interaction(members) -> tuple[int, ...]:
    """Validate and canonicalize a signed interaction."""
    s = tuple(sorted((int(g) for g in members), key=lambda g: (abs(g), g)))
    if not s:
        raise ValueError("interaction must be nonempty")
    if any(g == 0 for g in s):
        raise ValueError("signed feature indices must be nonzero")
    if len({abs(g) for g in s}) != len(s):
        raise ValueError(f"interaction {s} uses a feature twice")
    return s


def unsigned_projection(s) -> tuple[int, ...]:
    return tuple(sorted({abs(int(g)) for g in s}))


def format_interaction(s, names) -> str:
    """Render as ``name+_name-`` (positive: x >= t, negative: x < t)."""
    return "_".join(f"{names[abs(g) - 1]}{'+' if g > 0 else '-'}" for g in s)


_TOKEN = re.compile(r"^([^_+\-]+)([+-])$")


def parse_interaction(text: str, names) -> tuple[int, ...]:
    index = {name: j + 1 for j, name in enumerate(names)}
    members = []
    for tok in text.strip().split("_"):
        m = _TOKEN.match(tok)
        if not m:
            raise ValueError(f"malformed interaction token {tok!r} in {text!r}")
        name, sign = m.groups()
        if name not in index:
            raise ValueError(f"unknown feature {name!r} in {text!r}")
        members.append(index[name] if sign == "+" else -index[name])
    return make_interaction(members)


@dataclass(frozen=True)
class RitParams:
    n_trees: int = 500
    depth: int = 5
    n_children: int = 2
    target_class: int = 1
    collect_internal: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.depth < 1 or self.n_children < 2:
            raise ValueError(f"invalid RIT parameters {self}")
        if self.target_class not in (0, 1):
            raise ValueError("target_class must be 0 or 1")


@dataclass(eq=False)
class EncodedLeafTable:
    """All leaves of a forest, stacked across trees.

    ``signs[l, j]`` is +1/-1 for the first split on feature j+1 along leaf l's
    path (0 if unused); for unsigned tables it is 1/0. ``counts[l, c]`` is the
    number of routed rows of true class c that reached leaf l.
    """

    p: int
    n_trees: int
    tree: np.ndarray
    node: np.ndarray
    signs: np.ndarray
    prediction: np.ndarray
    counts: np.ndarray
    signed: bool = True

    @property
    def n_leaves(self) -> int:
        return self.tree.shape[0]

    @property
    def routed(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def signed_set(self, leaf: int) -> tuple[int, ...]:
        row = self.signs[leaf]
        return tuple(int(s) * (j + 1) for j, s in enumerate(row) if s != 0)

    @cached_property
    def bits(self) -> np.ndarray:
        """(L, 2p) uint8 membership matrix: column j is +(j+1), p+j is -(j+1)."""
        return np.ascontiguousarray(
            np.concatenate([self.signs > 0, self.signs < 0], axis=1).astype(np.uint8))

    def columns(self, s) -> np.ndarray:
        return np.array([g - 1 if g > 0 else self.p - g - 1 for g in s], dtype=np.int64)

    def contains(self, s) -> np.ndarray:
        """Boolean mask of leaves whose encoding is a superset of ``s``."""
        if not s:
            return np.ones(self.n_leaves, dtype=bool)
        return self.bits[:, self.columns(s)].all(axis=1)

    def with_counts(self, counts) -> "EncodedLeafTable":
        return EncodedLeafTable(self.p, self.n_trees, self.tree, self.node, self.signs,
                                self.prediction, np.asarray(counts, dtype=np.int64), self.signed)

    def unsigned(self) -> "EncodedLeafTable":
        if not self.signed:
            return self
        return EncodedLeafTable(self.p, self.n_trees, self.tree, self.node,
                                (self.signs != 0).astype(np.int8), self.prediction,
                                self.counts, signed=False)


def encode_leaves(f: Forest, d: Dataset | None = None, signed: bool = True,
                  inbag_only: bool = False) -> EncodedLeafTable:
    """Route every row of ``d`` down every tree and tabulate leaves.

    With ``inbag_only`` each tree counts only the rows (with multiplicity) it
    was grown on; ``d`` must then be the forest's training set, or None.
    Leaves no row reaches are kept with zero counts.
    """
    if d is not None and d.p != f.p:
        raise DataError(f"dataset has {d.p} features, forest expects {f.p}")
    if d is None and not inbag_only:
        raise ValueError("a dataset is required unless inbag_only=True")
    trees, nodes, signs, preds, counts = [], [], [], [], []
    leaves = None if inbag_only else f.apply(d.features)
    for k, t in enumerate(f.trees):
        ids = t.leaf_ids
        pos = np.full(t.n_nodes, -1, dtype=np.int64)
        pos[ids] = np.arange(ids.size)
        if inbag_only:
            c = t.counts[ids]
        else:
            c = np.zeros((ids.size, 2), dtype=np.int64)
            np.add.at(c, (pos[leaves[:, k]], d.responses), 1)
        trees.append(np.full(ids.size, k, dtype=np.int64))
        nodes.append(ids)
        signs.append(t.leaf_signs)
        preds.append(t.leaf_predictions)
        counts.append(c)
    table = EncodedLeafTable(
        f.p, f.n_trees, np.concatenate(trees), np.concatenate(nodes),
        np.concatenate(signs).astype(np.int8), np.concatenate(preds), np.concatenate(counts))
    return table if signed else table.unsigned()


def _sampling_pool(table: EncodedLeafTable, target_class: int):
    """Distinct class-C leaf encodings with their routed mass, canonically ordered."""
    mass = {}
    routed = table.routed
    for l in np.flatnonzero((table.prediction == target_class) & (routed > 0)):
        key = table.signed_set(l)
        mass[key] = mass.get(key, 0) + int(routed[l])
    keys = sorted(mass, key=lambda s: (len(s), s))
    return [frozenset(k) for k in keys], np.array([mass[k] for k in keys], dtype=float)


def grit(table: EncodedLeafTable, params: RitParams = RitParams()) -> set:
    """Random intersection trees over class-C leaf encodings.

    Each tree's root is a leaf encoding drawn with probability proportional
    to its routed mass; every child intersects its parent with a fresh draw.
    Nodes that become empty are not expanded. Depth counts the root as 1, so
    a depth-D node is the intersection of D draws. Returns the distinct
    nonempty sets found at depth D (and at shallower nodes when
    ``collect_internal``).
    """
    pool, mass = _sampling_pool(table, params.target_class)
    if not pool:
        raise ValueError(f"no class-{params.target_class} leaf has routed observations")
    cum = np.cumsum(mass)
    per_tree = sum(params.n_children ** k for k in range(params.depth))
    found = set()
    for m in range(params.n_trees):
        rng = substream(params.seed, 2, m)
        draws = np.searchsorted(cum, rng.random(per_tree) * cum[-1], side="right")
        draws = np.minimum(draws, len(pool) - 1)
        nxt = 0
        level = [pool[draws[nxt]]]
        nxt += 1
        for depth in range(2, params.depth + 1):
            if params.collect_internal:
                found.update(level)
            children = []
            for node in level:
                for _ in range(params.n_children):
                    child = node & pool[draws[nxt]]
                    nxt += 1
                    if child:
                        children.append(child)
            level = children
            if not level:
                break
        found.update(level)
    return {make_interaction(s) for s in found if s}
