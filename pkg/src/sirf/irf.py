"""Iteratively reweighted random forests."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, DataError
from .forest import Forest, ForestParams, fit_forest, gini_importance, oob_accuracy, uniform_weights


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit child seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class IRFParams:
    k_max: int = 10
    forest: ForestParams = field(default_factory=ForestParams)


@dataclass
class IRFResult:
    forests: list
    weights: list  # weights[k] is the feature-sampling distribution of forests[k]
    oob: list
    selected_K: int  # 1-based

    @property
    def selected_forest(self) -> Forest:
        return self.forests[self.selected_K - 1]

    @property
    def selected_weights(self) -> np.ndarray:
        return self.weights[self.selected_K - 1]

    def iteration_log(self) -> list[dict]:
        return [
            {"k": k + 1, "oob_accuracy": acc, "weight_entropy": entropy(w)}
            for k, (acc, w) in enumerate(zip(self.oob, self.weights))
        ]


def entropy(w) -> float:
    w = np.asarray(w, dtype=float)
    nz = w[w > 0]
    return float(-(nz * np.log(nz)).sum())


def kl_from_uniform(w) -> float:
    """KL divergence of ``w`` from the uniform distribution on its support size."""
    return float(np.log(len(w)) - entropy(w))


def select_K(oob_curve) -> int:
    """1-based index of the largest OOB accuracy; the earliest wins ties."""
    curve = np.asarray(oob_curve, dtype=float)
    if curve.size == 0:
        raise ValueError("empty OOB curve")
    return int(np.argmax(curve)) + 1


def fit_irf(d: Dataset, params: IRFParams = IRFParams(), threads: int | None = None) -> IRFResult:
    """Fit ``k_max`` forests, each sampling features by the previous one's
    Gini importance, starting from uniform weights."""
    if not d.has_both_classes():
        raise DataError("fit_irf needs both classes in the responses")
    if params.k_max < 1:
        raise ValueError("k_max must be >= 1")
    w = uniform_weights(d.p)
    forests, weights, oob = [], [], []
    for k in range(params.k_max):
        fp = replace(params.forest, seed=derive_seed(params.forest.seed, 1, k))
        f = fit_forest(d, w, fp, threads=threads)
        forests.append(f)
        weights.append(w)
        oob.append(oob_accuracy(f, d))
        w, _ = gini_importance(f)
    return IRFResult(forests, weights, oob, select_K(oob))


def write_iteration_log(result: IRFResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=["k", "oob_accuracy", "weight_entropy"], lineterminator="\n")
        wr.writeheader()
        for row in result.iteration_log():
            wr.writerow({"k": row["k"], "oob_accuracy": repr(row["oob_accuracy"]),
                         "weight_entropy": repr(row["weight_entropy"])})
