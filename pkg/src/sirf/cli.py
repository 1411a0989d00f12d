"""Command-line interface: ``sirf fit | interactions | simulate | predict``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .data import DataError, load_csv, load_feature_matrix
from .forest import ForestParams, forest_from_dict, forest_to_dict
from .interactions import RitParams, encode_leaves, parse_interaction
from .irf import IRFParams, fit_irf, write_iteration_log
from .rulepred import (MODES, group_rules, grouped_predict_many, response_surface,
                       write_surface_csv, write_threshold_csv)
from .simbench import (BenchmarkParams, SimulationSpec, run_benchmark, write_auc_csv,
                       write_curve_csv)
from .stability import StabilityParams, run_stability, write_reports_csv, write_reports_json

BUNDLE_SCHEMA = 1
EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 2, 3, 4

log = logging.getLogger("sirf")


class UsageError(Exception):
    pass


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _add_forest_args(p):
    p.add_argument("--trees", type=_positive_int, default=100, help="trees per forest")
    p.add_argument("--mtry", type=_positive_int, default=None, help="candidate features per node (default ceil(sqrt(p)))")
    p.add_argument("--min-leaf", type=_positive_int, default=1)
    p.add_argument("--max-depth", type=_positive_int, default=None)


def _add_rit_args(p):
    p.add_argument("--bootstraps", type=_positive_int, default=20, help="outer bootstrap replicates B")
    p.add_argument("--tau", type=float, default=0.5, help="filtering level")
    p.add_argument("--rits", type=_positive_int, default=500, help="intersection trees per replicate")
    p.add_argument("--rit-depth", type=_positive_int, default=5)
    p.add_argument("--rit-children", type=_positive_int, default=2)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: $SIRF_THREADS or all cores)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="sirf", description="signed iterative random forests")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit iteratively reweighted forests")
    p.add_argument("--train", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--k-max", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="bundle JSON path")
    p.add_argument("--log", default=None, help="optional iteration log CSV")
    p.add_argument("--bool-tokens", action="store_true", help="accept true/false responses")
    _add_forest_args(p)

    p = sub.add_parser("interactions", parents=[common], help="stability analysis of signed interactions")
    p.add_argument("--model", required=True, help="bundle from `fit`")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--class", dest="target_class", type=int, choices=(0, 1), default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unsigned", action="store_true", help="search unsigned feature sets instead")
    p.add_argument("--keep-all", action="store_true", help="also report filtered-out interactions")
    p.add_argument("--out-json", required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--bool-tokens", action="store_true")
    _add_rit_args(p)

    p = sub.add_parser("simulate", parents=[common], help="Gaussian interaction-recovery benchmark")
    p.add_argument("--model", required=True, choices=("single-and", "multi-and", "additive-and"))
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--p", type=_positive_int, default=50)
    p.add_argument("--replicates", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k-max", type=_positive_int, default=10)
    p.add_argument("--n-test", type=_positive_int, default=None)
    p.add_argument("--out-dir", default=".")
    _add_forest_args(p)
    _add_rit_args(p)

    p = sub.add_parser("predict", parents=[common], help="predictions restricted to one signed interaction")
    p.add_argument("--model", required=True)
    p.add_argument("--interaction", required=True, help='e.g. "x1+_x2+_x3-"')
    p.add_argument("--train", required=True, help="training CSV used to weight leaves")
    p.add_argument("--response", required=True)
    p.add_argument("--input", required=True, help="CSV with the feature columns to score")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=MODES, default="weighted_average")
    p.add_argument("--surface", default=None, help="write a response-surface grid CSV")
    p.add_argument("--fixed-feature", default=None, help="feature held low/high for 3-way surfaces")
    p.add_argument("--thresholds", default=None, help="write a threshold-distribution CSV")
    p.add_argument("--bool-tokens", action="store_true")
    return parser


# -- bundle I/O --------------------------------------------------------------

def save_bundle(path, result, response, forest_params, k_max, seed) -> None:
    doc = {
        "schema_version": BUNDLE_SCHEMA,
        "kind": "irf_bundle",
        "response_column": response,
        "feature_names": list(result.forests[0].feature_names),
        "params": {"k_max": k_max, "seed": seed, "forest": asdict(forest_params)},
        "selected_K": result.selected_K,
        "oob_accuracy": result.oob,
        "weights": [w.tolist() for w in result.weights],
        "iteration_log": result.iteration_log(),
        "forests": [forest_to_dict(f) for f in result.forests],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_bundle(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read bundle {path}: {exc}") from None
    if doc.get("schema_version") != BUNDLE_SCHEMA or doc.get("kind") != "irf_bundle":
        raise DataError(f"{path} is not a schema-{BUNDLE_SCHEMA} iRF bundle")
    return doc


def _forest_params(args, seed):
    return ForestParams(n_trees=args.trees, mtry=args.mtry, min_leaf=args.min_leaf,
                        max_depth=args.max_depth, seed=seed)


def _check_names(d, names, what):
    if list(d.feature_names) != list(names):
        raise DataError(f"{what} feature columns do not match the bundle")


# -- commands ----------------------------------------------------------------

def cmd_fit(args) -> int:
    d = load_csv(args.train, args.response, args.bool_tokens)
    fp = _forest_params(args, args.seed)
    result = fit_irf(d, IRFParams(args.k_max, fp), threads=args.threads)
    save_bundle(args.out, result, args.response, fp, args.k_max, args.seed)
    if args.log:
        write_iteration_log(result, args.log)
    print(f"selected K={result.selected_K} (OOB accuracy {result.oob[result.selected_K - 1]:.4f}); "
          f"bundle written to {args.out}")
    return 0


def cmd_interactions(args) -> int:
    if not 0.0 <= args.tau <= 1.0:
        raise UsageError("--tau must lie in [0, 1]")
    if args.rit_children < 2:
        raise UsageError("--rit-children must be >= 2")
    bundle = load_bundle(args.model)
    names = bundle["feature_names"]
    train = load_csv(args.train, args.response, args.bool_tokens)
    test = load_csv(args.test, args.response, args.bool_tokens)
    _check_names(train, names, "training")
    _check_names(test, names, "test")
    w = np.array(bundle["weights"][bundle["selected_K"] - 1])
    fp = ForestParams(**bundle["params"]["forest"])
    rit = RitParams(n_trees=args.rits, depth=args.rit_depth, n_children=args.rit_children,
                    target_class=args.target_class, seed=args.seed)
    params = StabilityParams(n_bootstraps=args.bootstraps, tau=args.tau, forest=fp, rit=rit,
                             signed=not args.unsigned, seed=args.seed)
    reports = run_stability(train, test, w, params, threads=args.threads)
    shown = reports if args.keep_all else [r for r in reports if r.kept]
    write_reports_json(shown, names, params, args.out_json)
    write_reports_csv(shown, names, args.out_csv)
    print(f"{sum(r.kept for r in reports)} of {len(reports)} interactions kept at tau={args.tau}")
    return 0


def cmd_simulate(args) -> int:
    if not 0.0 <= args.tau <= 1.0:
        raise UsageError("--tau must lie in [0, 1]")
    model = args.model.replace("-", "_")
    spec = SimulationSpec(model=model, n=args.n, p=args.p, seed=args.seed)
    params = BenchmarkParams(
        k_max=args.k_max, forest=_forest_params(args, 0), n_bootstraps=args.bootstraps,
        tau=args.tau, rit=RitParams(n_trees=args.rits, depth=args.rit_depth,
                                    n_children=args.rit_children),
        n_test=args.n_test)
    result = run_benchmark(spec, params, args.replicates, threads=args.threads)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_auc_csv(result, out / f"{model}_auc.csv")
    write_curve_csv(result, out / f"{model}_pr_curves.csv")
    for method, value in result.mean_auc().items():
        print(f"{method}\t{value:.4f}")
    return 0


def cmd_predict(args) -> int:
    bundle = load_bundle(args.model)
    names = bundle["feature_names"]
    try:
        s = parse_interaction(args.interaction, names)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    forest = forest_from_dict(bundle["forests"][bundle["selected_K"] - 1])
    train = load_csv(args.train, args.response, args.bool_tokens)
    _check_names(train, names, "training")
    table = encode_leaves(forest, train)
    try:
        group = group_rules(forest, table, s)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    X = load_feature_matrix(args.input, names)
    scores = grouped_predict_many(group, X, args.mode)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("row,score\n")
        for i, v in enumerate(scores):
            fh.write(f"{i},{float(v)!r}\n")
    if args.surface:
        if len(s) not in (2, 3):
            raise UsageError("--surface needs an interaction with 2 or 3 features")
        fixed = None
        if args.fixed_feature is not None:
            if args.fixed_feature not in names:
                raise UsageError(f"unknown --fixed-feature {args.fixed_feature!r}")
            fixed = names.index(args.fixed_feature) + 1
        rows = response_surface(group, train, fixed_feature=fixed, mode=args.mode)
        held = None if len(s) == 2 else (fixed or int(group.features[-1]) + 1)
        plot = [int(j) + 1 for j in group.features if int(j) + 1 != held]
        write_surface_csv(rows, [names[j - 1] for j in plot], args.surface)
    if args.thresholds:
        write_threshold_csv(group, names, args.thresholds)
    print(f"scored {len(scores)} rows with {len(group.prediction)} grouped rules")
    return 0


COMMANDS = {"fit": cmd_fit, "interactions": cmd_interactions,
            "simulate": cmd_simulate, "predict": cmd_predict}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sirf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"sirf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"sirf: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
