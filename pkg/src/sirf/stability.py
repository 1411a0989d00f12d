"""Outer-bootstrap stability analysis and filtering of signed interactions."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, bootstrap_indices
from .forest import Forest, ForestParams, fit_forest, substream
from .interactions import RitParams, encode_leaves, format_interaction, grit
from .irf import derive_seed
from .metrics import InteractionEvaluator

NULL_METRICS = ("delta_prevalence", "independence", "delta_precision")
TRACKED = NULL_METRICS + ("prevalence", "precision")
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class StabilityParams:
    n_bootstraps: int = 20
    tau: float = 0.5
    forest: ForestParams = field(default_factory=ForestParams)
    rit: RitParams = field(default_factory=RitParams)
    signed: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_bootstraps < 1:
            raise ValueError("n_bootstraps must be >= 1")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")


@dataclass
class StabilityReport:
    interaction: tuple
    per_bootstrap: dict  # metric -> length-B array, NaN where undefined
    fractions: dict  # null metric -> share of bootstraps with value <= 0 or undefined
    means: dict  # metric -> mean over defined bootstraps (None if never defined)
    recovered: int  # bootstraps whose RIT search proposed the interaction
    kept: bool = False


@dataclass
class OuterReplicate:
    forest: Forest
    data: Dataset


def fit_outer_forests(d_train: Dataset, w, n_bootstraps: int, forest: ForestParams,
                      seed: int = 0, threads: int | None = None) -> list[OuterReplicate]:
    """Fit one forest per bootstrap sample of ``d_train``, all with weights ``w``."""
    out = []
    for b in range(n_bootstraps):
        sample = bootstrap_indices(d_train.n, substream(seed, 3, b))
        data = d_train.take(sample.indices)
        if not data.has_both_classes():
            raise RuntimeError(f"bootstrap replicate {b} drew a single class")
        fp = replace(forest, seed=derive_seed(seed, 4, b))
        try:
            f = fit_forest(data, w, fp, threads=threads)
        except Exception as exc:
            raise RuntimeError(f"bootstrap replicate {b} failed: {exc}") from exc
        out.append(OuterReplicate(f, data))
    return out


def fractions_of(values: np.ndarray) -> float:
    """Share of entries that are <= 0 or undefined (NaN)."""
    return float(np.mean(~(values > 0)))


def filter_reports(reports, tau: float) -> list:
    """Set ``kept`` on every report and return the surviving interactions.

    An interaction is removed when any null-metric failure share exceeds tau.
    """
    survivors = []
    for r in reports:
        r.kept = all(r.fractions[m] <= tau for m in NULL_METRICS)
        if r.kept:
            survivors.append(r.interaction)
    return survivors


def analyze_replicates(replicates, d_test: Dataset, rit: RitParams, tau: float,
                       signed: bool = True, seed: int = 0) -> list[StabilityReport]:
    """Pool RIT candidates over replicates, then score every candidate on every replicate."""
    c = rit.target_class
    evaluators, proposals = [], []
    for b, rep in enumerate(replicates):
        train_table = encode_leaves(rep.forest, rep.data, signed=signed)
        eval_table = encode_leaves(rep.forest, d_test, signed=signed)
        proposals.append(grit(train_table, replace(rit, seed=derive_seed(seed, 5, b))))
        evaluators.append(InteractionEvaluator(train_table, eval_table))
    pooled = sorted(set().union(*proposals), key=lambda s: (len(s), s))
    B = len(replicates)
    values = {m: np.full((len(pooled), B), np.nan) for m in TRACKED}
    for b, ev in enumerate(evaluators):
        for i, r in enumerate(ev.reports(pooled, c)):
            for m in TRACKED:
                v = getattr(r, m)
                if v is not None:
                    values[m][i, b] = v
    reports = []
    for i, s in enumerate(pooled):
        per = {m: values[m][i] for m in TRACKED}
        means = {}
        for m, arr in per.items():
            ok = ~np.isnan(arr)
            means[m] = float(arr[ok].mean()) if ok.any() else None
        reports.append(StabilityReport(
            interaction=s,
            per_bootstrap=per,
            fractions={m: fractions_of(per[m]) for m in NULL_METRICS},
            means=means,
            recovered=sum(s in prop for prop in proposals),
        ))
    filter_reports(reports, tau)
    return rank_reports(reports)


def rank_reports(reports) -> list:
    def key(r):
        dp = r.means["delta_prevalence"]
        return (dp is None, -(dp if dp is not None else 0.0), len(r.interaction), r.interaction)
    return sorted(reports, key=key)


def run_stability(d_train: Dataset, d_test: Dataset, w, params: StabilityParams = StabilityParams(),
                  threads: int | None = None) -> list[StabilityReport]:
    replicates = fit_outer_forests(d_train, w, params.n_bootstraps, params.forest,
                                   seed=params.seed, threads=threads)
    return analyze_replicates(replicates, d_test, params.rit, params.tau,
                              signed=params.signed, seed=params.seed)


# -- output ------------------------------------------------------------------

def _num(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return None
    return float(v)


def reports_to_dict(reports, names, params: StabilityParams) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "stability",
        "tau": params.tau,
        "n_bootstraps": params.n_bootstraps,
        "target_class": params.rit.target_class,
        "signed": params.signed,
        "interactions": [
            {
                "interaction": format_interaction(r.interaction, names),
                "members": list(r.interaction),
                "kept": r.kept,
                "recovered": r.recovered,
                "fractions": r.fractions,
                "means": {m: _num(v) for m, v in r.means.items()},
                "per_bootstrap": {m: [_num(v) for v in arr] for m, arr in r.per_bootstrap.items()},
            }
            for r in reports
        ],
    }


def write_reports_json(reports, names, params, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(reports_to_dict(reports, names, params), fh, indent=1)


def write_reports_csv(reports, names, path) -> None:
    cols = ["interaction", "dP", "prev", "prec", "indep", "dPrec",
            "f_dP", "f_indep", "f_dPrec", "recovered", "kept"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for r in reports:
            m = r.means
            wr.writerow([
                format_interaction(r.interaction, names),
                *("" if m[k] is None else repr(m[k]) for k in
                  ("delta_prevalence", "prevalence", "precision", "independence", "delta_precision")),
                repr(r.fractions["delta_prevalence"]), repr(r.fractions["independence"]),
                repr(r.fractions["delta_precision"]), r.recovered, int(r.kept),
            ])
