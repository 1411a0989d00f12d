"""Gaussian AND-rule simulations and interaction-recovery scoring.

Three generative models over i.i.d. standard Gaussian features:

* ``single_and``:   pi = 0.8 * 1(x1 > t1 & x2 > t2 & x3 > t3 & x4 > t4)
* ``multi_and``:    pi = 0.8 * 1(rule {+1,+2,-3,-4} or rule {-1,-2,+3,+4})
* ``additive_and``: pi = 0.4 * (1(x1,x2,x3 > t) + 1(x4,x5,x6 > t))

Upper thresholds sit at the empirical ``1 - 0.1**(1/4)`` quantile of each
feature and lower thresholds at the ``0.1**(1/4)`` quantile.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, default_feature_names
from .forest import ForestParams
from .interactions import RitParams, unsigned_projection
from .irf import IRFParams, derive_seed, fit_irf
from .stability import analyze_replicates, fit_outer_forests

log = logging.getLogger(__name__)

MODELS = ("single_and", "multi_and", "additive_and")
UPPER_LEVEL = 1.0 - 0.1 ** 0.25
LOWER_LEVEL = 0.1 ** 0.25

GROUND_TRUTH = {
    "single_and": ((1, 2, 3, 4),),
    "multi_and": ((1, 2, -3, -4), (-1, -2, 3, 4)),
    "additive_and": ((1, 2, 3), (4, 5, 6)),
}
DEFAULT_SCALE = {"single_and": 0.8, "multi_and": 0.8, "additive_and": 0.4}


@dataclass(frozen=True)
class SimulationSpec:
    model: str = "single_and"
    n: int = 1000
    p: int = 50
    seed: int = 0
    pi_scale: float | None = None  # None -> model default
    upper_level: float = UPPER_LEVEL
    lower_level: float = LOWER_LEVEL
    n_test: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        need = max(abs(g) for rule in GROUND_TRUTH[self.model] for g in rule)
        if self.p < need:
            raise ValueError(f"model {self.model} needs p >= {need}, got {self.p}")
        if not (0 < self.upper_level < 1 and 0 < self.lower_level < 1):
            raise ValueError("quantile levels must lie in (0, 1)")

    @property
    def scale(self) -> float:
        return DEFAULT_SCALE[self.model] if self.pi_scale is None else self.pi_scale

    @property
    def active_spec(self) -> tuple:
        return GROUND_TRUTH[self.model]


def _rule_indicator(X, rule, upper, lower):
    ind = np.ones(X.shape[0], dtype=bool)
    for g in rule:
        j = abs(g) - 1
        ind &= X[:, j] > upper[j] if g > 0 else X[:, j] <= lower[j]
    return ind


def response_probability(X, spec: SimulationSpec, upper, lower) -> np.ndarray:
    rules = [_rule_indicator(X, r, upper, lower) for r in spec.active_spec]
    if spec.model == "additive_and":
        return spec.scale * np.sum(rules, axis=0, dtype=float)
    return spec.scale * np.any(rules, axis=0).astype(float)


def thresholds(X, spec: SimulationSpec):
    return (np.quantile(X, spec.upper_level, axis=0),
            np.quantile(X, spec.lower_level, axis=0))


def generate(spec: SimulationSpec) -> Dataset:
    """Draw ``n + n_test`` rows; thresholds are empirical quantiles of the draw."""
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n + spec.n_test, spec.p))
    upper, lower = thresholds(X, spec)
    pi = response_probability(X, spec, upper, lower)
    y = (rng.random(X.shape[0]) < pi).astype(np.int64)
    return Dataset(X, y, default_feature_names(spec.p))


def generate_train_test(spec: SimulationSpec) -> tuple[Dataset, Dataset]:
    """First ``n`` rows for training, the remaining ``n_test`` held out."""
    if spec.n_test < 2:
        raise ValueError("n_test must be >= 2 for a held-out set")
    d = generate(spec)
    return d.take(np.arange(spec.n)), d.take(np.arange(spec.n, spec.n + spec.n_test))


def label_candidate(s, spec: SimulationSpec | str, signed: bool = True) -> bool:
    """True iff ``s`` is contained in one of the generative rules.

    Unsigned candidates are compared against the projected rules.
    """
    model = spec if isinstance(spec, str) else spec.model
    if not s:
        raise ValueError("empty interaction")
    rules = GROUND_TRUTH[model]
    if not signed:
        rules = [unsigned_projection(r) for r in rules]
        s = unsigned_projection(s)
    return any(set(s) <= set(r) for r in rules)


@dataclass(frozen=True)
class LabeledCandidate:
    interaction: tuple
    score: float
    active: bool


def _pr_steps(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    order = np.argsort(-scores, kind="mergesort")
    s, lab = scores[order], labels[order]
    tp = np.cumsum(lab)
    # last position of every tie group
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp_end = tp[ends].astype(float)
    precision = tp_end / (ends + 1)
    recall = tp_end / labels.sum()
    return precision, recall


def pr_curve(candidates) -> tuple[np.ndarray, np.ndarray]:
    """(recall, precision) at each distinct score threshold, high to low."""
    precision, recall = _pr_steps([c.score for c in candidates], [c.active for c in candidates])
    return recall, precision


def auc_pr(candidates) -> float:
    """Step-wise area under the PR curve: sum of precision times recall gain.

    Tied scores form one threshold. Candidates with score -inf (actives the
    method never recovered) still count toward the recall denominator.
    """
    if not candidates:
        raise ValueError("empty candidate list")
    if not any(c.active for c in candidates):
        raise ValueError("auc_pr needs at least one active candidate")
    precision, recall = _pr_steps([c.score for c in candidates], [c.active for c in candidates])
    gains = np.diff(np.r_[0.0, recall])
    return float(np.sum(gains * precision))


@dataclass(frozen=True)
class BenchmarkParams:
    k_max: int = 10
    forest: ForestParams = field(default_factory=ForestParams)
    n_bootstraps: int = 20
    tau: float = 0.5
    rit: RitParams = field(default_factory=RitParams)
    n_test: int | None = None  # None -> same as n
    rank_by: str = "delta_prevalence"
    min_order: int = 2  # main effects (order 1) are never interactions and never survive filtering


METHODS = ("unsigned", "signed", "filtered")


@dataclass
class ReplicateResult:
    replicate: int
    seed: int
    auc: dict
    curves: dict
    selected_K: int
    positive_rate: float
    n_candidates: dict


@dataclass
class BenchmarkResult:
    spec: SimulationSpec
    replicates: list

    def mean_auc(self) -> dict:
        return {m: float(np.mean([r.auc[m] for r in self.replicates])) for m in METHODS}


def _score(report, rank_by):
    v = report.means[rank_by]
    return -math.inf if v is None else v


def score_candidates(reports, spec: SimulationSpec, signed: bool, rank_by: str = "delta_prevalence",
                     kept_only: bool = False, min_order: int = 1) -> list[LabeledCandidate]:
    """Label pooled candidates and append unrecovered actives at -inf.

    The recall base is every active candidate ever proposed plus the maximal
    generative rules. With ``kept_only``, filtered-out actives move to -inf
    and filtered-out inactives are dropped.
    """
    out, seen = [], set()
    for r in reports:
        if len(r.interaction) < min_order:
            continue
        active = label_candidate(r.interaction, spec, signed)
        seen.add(r.interaction)
        if kept_only and not r.kept:
            if active:
                out.append(LabeledCandidate(r.interaction, -math.inf, True))
            continue
        out.append(LabeledCandidate(r.interaction, _score(r, rank_by), active))
    rules = spec.active_spec if signed else [unsigned_projection(x) for x in spec.active_spec]
    for rule in rules:
        rule = tuple(sorted(rule, key=abs))
        if rule not in seen:
            out.append(LabeledCandidate(rule, -math.inf, True))
    return out


def run_replicate(spec: SimulationSpec, params: BenchmarkParams, replicate: int,
                  threads: int | None = None) -> ReplicateResult:
    seed = derive_seed(spec.seed, 6, replicate)
    n_test = spec.n if params.n_test is None else params.n_test
    rspec = replace(spec, seed=seed, n_test=n_test)
    train, test = generate_train_test(rspec)
    fp = replace(params.forest, seed=derive_seed(seed, 7))
    irf = fit_irf(train, IRFParams(params.k_max, fp), threads=threads)
    outer = fit_outer_forests(train, irf.selected_weights, params.n_bootstraps, fp,
                              seed=derive_seed(seed, 8), threads=threads)
    rit = replace(params.rit, target_class=1)
    signed = analyze_replicates(outer, test, rit, params.tau, signed=True, seed=derive_seed(seed, 9))
    unsigned = analyze_replicates(outer, test, rit, params.tau, signed=False, seed=derive_seed(seed, 10))
    lists = {
        "unsigned": score_candidates(unsigned, rspec, False, params.rank_by, min_order=params.min_order),
        "signed": score_candidates(signed, rspec, True, params.rank_by, min_order=params.min_order),
        "filtered": score_candidates(signed, rspec, True, params.rank_by, kept_only=True,
                                     min_order=params.min_order),
    }
    auc = {m: auc_pr(lists[m]) for m in METHODS}
    curves = {m: pr_curve(lists[m]) for m in METHODS}
    log.info("replicate %d: K=%d auc=%s", replicate, irf.selected_K, auc)
    return ReplicateResult(replicate, seed, auc, curves, irf.selected_K,
                           float(train.responses.mean()),
                           {"unsigned": len(unsigned), "signed": len(signed),
                            "filtered": sum(r.kept for r in signed)})


def run_benchmark(spec: SimulationSpec, params: BenchmarkParams = BenchmarkParams(),
                  replicates: int = 10, threads: int | None = None, progress=None) -> BenchmarkResult:
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    results = []
    for r in range(replicates):
        results.append(run_replicate(spec, params, r, threads=threads))
        if progress is not None:
            progress(results[-1])
    return BenchmarkResult(spec, results)


def write_auc_csv(result: BenchmarkResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["replicate", "method", "auc"])
        for r in result.replicates:
            for m in METHODS:
                wr.writerow([r.replicate, m, repr(r.auc[m])])


def write_curve_csv(result: BenchmarkResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["replicate", "method", "recall", "precision"])
        for r in result.replicates:
            for m in METHODS:
                recall, precision = r.curves[m]
                for a, b in zip(recall, precision):
                    wr.writerow([r.replicate, m, repr(float(a)), repr(float(b))])
