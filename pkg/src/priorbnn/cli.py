"""Command-line interface: simulate, train, predict, evaluate, reproduce.

Exit codes: 0 success, 1 usage/config error, 2 data/format error,
3 runtime numerical error. All randomness flows from --seed (or the config
seed); reruns with the same inputs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import bundled, datasets, evidence, mcmc, metrics
from .baseline import BaselineConfig
from .errors import ConfigError, DataFormatError, NumericalError, PriorBnnError
from .evidence import SupportThresholds
from .experiment import (ExperimentConfig, SplitConfig, derive_seed,
                         run_experiment)
from .mcmc import McmcConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _say(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="priorbnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_sim = sub.add_parser("simulate", help="generate the synthetic beta dataset")
    p_sim.add_argument("--config", help="JSON config with a beta dataset section")
    p_sim.add_argument("--out", default="out", help="output directory")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--n-classes", type=int, default=None)
    p_sim.add_argument("--instances-per-class", type=int, default=None)
    p_sim.add_argument("--n-features", type=int, default=None)

    p_train = sub.add_parser("train", help="run posterior/prior chains and the baseline")
    p_train.add_argument("--config", required=True, help="experiment config JSON")
    p_train.add_argument("--out", default=None, help="override config out_dir")
    p_train.add_argument("--seed", type=int, default=None, help="override config seed")
    p_train.add_argument("--threads", type=int, default=1)
    p_train.add_argument("--ess-floor", type=float, default=50.0,
                         help="warn when the log-likelihood ESS falls below this")

    p_pred = sub.add_parser("predict", help="prediction summaries from saved traces")
    p_pred.add_argument("--trace", required=True, help="posterior trace file")
    p_pred.add_argument("--prior-trace", required=True, help="prior-only trace file")
    p_pred.add_argument("--data", required=True, help="CSV of instances to predict")
    p_pred.add_argument("--label-column", default=None,
                        help="include true labels from this CSV column")
    p_pred.add_argument("--out", default="predictions.csv")
    p_pred.add_argument("--pp-threshold", type=float, default=0.95)
    p_pred.add_argument("--bf-threshold", type=float, default=150.0)

    p_eval = sub.add_parser("evaluate", help="evaluation report from prediction CSVs")
    p_eval.add_argument("--in", dest="in_paths", action="append", required=True,
                        help="in-distribution predictions CSV (repeatable)")
    p_eval.add_argument("--ood", dest="ood_paths", action="append", default=[],
                        help="matching OOD predictions CSV (repeatable)")
    p_eval.add_argument("--out", default="report")
    p_eval.add_argument("--pp-threshold", type=float, default=None,
                        help="recompute support at this PP threshold")
    p_eval.add_argument("--bf-threshold", type=float, default=None,
                        help="recompute support at this BF threshold")

    p_rep = sub.add_parser("reproduce", help="run a named experiment end to end")
    p_rep.add_argument("experiment", choices=("wine", "beta", "mnist"))
    p_rep.add_argument("--out", default=None, help="output directory")
    p_rep.add_argument("--seed", type=int, default=1)
    p_rep.add_argument("--threads", type=int, default=1)
    p_rep.add_argument("--replicates", type=int, default=None,
                       help="override the preset replicate count")
    p_rep.add_argument("--iterations", type=int, default=None,
                       help="override posterior-chain iterations")
    p_rep.add_argument("--save-traces", action="store_true",
                       help="persist trace files even for large runs")
    p_rep.add_argument("--train-images", help="real MNIST train images IDX")
    p_rep.add_argument("--train-labels", help="real MNIST train labels IDX")
    p_rep.add_argument("--test-images", help="real MNIST test images IDX")
    p_rep.add_argument("--test-labels", help="real MNIST test labels IDX")
    return parser


def cmd_simulate(args) -> int:
    cfg = {}
    if args.config:
        exp = ExperimentConfig.from_json(args.config)
        if exp.dataset.get("type") != "beta":
            raise ConfigError("simulate needs a config with a beta dataset section")
        cfg = dict(exp.dataset)
        cfg.pop("type", None)
        if args.seed is None and "seed" not in cfg:
            cfg["seed"] = derive_seed(exp.seed, "beta-data")
    for key, value in (("n_classes", args.n_classes),
                       ("instances_per_class", args.instances_per_class),
                       ("n_features", args.n_features),
                       ("seed", args.seed)):
        if value is not None:
            cfg[key] = value
    beta_cfg = datasets.SyntheticBetaConfig.from_dict(cfg)
    sim = datasets.simulate_beta(beta_cfg)

    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "beta_dataset.csv")
    ds = sim.dataset
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join([f"f{i}" for i in range(ds.n_features)] + ["label"]) + "\n")
        for row, label in zip(ds.features, ds.labels):
            fh.write(",".join([repr(float(v)) for v in row]
                              + [ds.class_names[label]]) + "\n")
    manifest_path = os.path.join(args.out, "beta_manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump({
            "config": beta_cfg.to_dict(),
            "shape_a": sim.shape_a.tolist(),
            "shape_b": sim.shape_b.tolist(),
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _say(f"wrote {csv_path} ({ds.n_instances} rows) and {manifest_path}")
    return EXIT_OK


def _load_experiment(args) -> ExperimentConfig:
    exp = ExperimentConfig.from_json(args.config)
    if getattr(args, "out", None):
        exp.out_dir = args.out
    if getattr(args, "seed", None) is not None:
        exp.seed = args.seed
    return exp


def cmd_train(args) -> int:
    exp = _load_experiment(args)
    exp.save_traces = True
    run_experiment(exp, threads=args.threads, progress=_say)
    trace_dir = os.path.join(exp.out_dir, "traces")
    for name in sorted(os.listdir(trace_dir)):
        if not name.endswith("_posterior.trace"):
            continue
        trace = mcmc.load_trace(os.path.join(trace_dir, name))
        ess = mcmc.effective_sample_size(trace.log_liks)
        line = (f"{name}: acceptance={trace.acceptance_rate:.4f} "
                f"ESS(log-lik)={ess:.1f}")
        if ess < args.ess_floor:
            line += f"  WARNING: ESS below floor {args.ess_floor}"
        print(line)
    return EXIT_OK


def cmd_predict(args) -> int:
    trace = mcmc.load_trace(args.trace)
    prior_trace = mcmc.load_trace(args.prior_trace)
    thresholds = SupportThresholds(args.pp_threshold, args.bf_threshold)
    if args.label_column:
        ds = datasets.load_csv(args.data, args.label_column)
        X, labels = ds.features, ds.labels
    else:
        # Without a label column every CSV column is a feature.
        import csv as _csv

        rows = []
        with open(args.data, "r", encoding="utf-8", newline="") as fh:
            reader = _csv.reader(fh)
            try:
                next(reader)
            except StopIteration:
                raise DataFormatError(f"{args.data}: empty file") from None
            for lineno, row in enumerate(reader, start=2):
                try:
                    rows.append([float(v) for v in row])
                except ValueError as exc:
                    raise DataFormatError(f"{args.data}:{lineno}: {exc}") from exc
        if not rows:
            raise DataFormatError(f"{args.data}: no data rows")
        X, labels = np.asarray(rows), None
    ids = [str(i) for i in range(len(X))]
    summaries = evidence.summarize_many(X, ids, labels, trace, prior_trace, thresholds)
    evidence.write_predictions(args.out, summaries)
    _say(f"wrote {args.out} ({len(summaries)} instances)")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    thresholds = None
    if args.pp_threshold is not None or args.bf_threshold is not None:
        thresholds = SupportThresholds(
            args.pp_threshold if args.pp_threshold is not None else 0.95,
            args.bf_threshold if args.bf_threshold is not None else 150.0)

    ood_paths = list(args.ood_paths)
    while len(ood_paths) < len(args.in_paths):
        ood_paths.append(None)

    reports, partials = [], []
    for in_path, ood_path in zip(args.in_paths, ood_paths):
        in_summaries = evidence.read_predictions(in_path)
        if thresholds is not None:
            in_summaries = [evidence.with_thresholds(s, thresholds) for s in in_summaries]
        if ood_path is None or not os.path.exists(ood_path):
            if ood_path is not None:
                _say(f"warning: OOD file {ood_path} missing; OOD fields are null")
            else:
                _say(f"warning: no OOD file paired with {in_path}; OOD fields are null")
            partials.append({
                "accuracy": metrics.accuracy(in_summaries),
                "tpr_pp": metrics.true_positive_rate(in_summaries, "pp"),
                "tpr_bf": metrics.true_positive_rate(in_summaries, "bf"),
                "fpr_in_pp": metrics.false_positive_rate(in_summaries, "pp"),
                "fpr_in_bf": metrics.false_positive_rate(in_summaries, "bf"),
                "fpr_ood_pp": None,
                "fpr_ood_bf": None,
            })
            continue
        ood_summaries = evidence.read_predictions(ood_path)
        if thresholds is not None:
            ood_summaries = [evidence.with_thresholds(s, thresholds) for s in ood_summaries]
        reports.append(metrics.evaluate_run(in_summaries, ood_summaries))

    document: dict = {"n_runs": len(reports) + len(partials)}
    if reports:
        document["aggregate"] = metrics.aggregate_reports(reports)
        document["runs"] = [r.to_dict() for r in reports]
    if partials:
        document["partial_runs"] = partials
    json_path = args.out + ".json"
    metrics.write_report_json(json_path, document)
    csv_rows = []
    for i, r in enumerate(reports):
        csv_rows.extend(metrics.report_csv_rows(f"run{i}", "-", r))
    if csv_rows:
        metrics.write_report_csv(args.out + ".csv", csv_rows)
    _say(f"wrote {json_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Named desk-scale reproductions. The original analyses ran 100M iterations;
# these presets are sized for a laptop and calibrated in the acceptance
# tests.


def wine_config(out_dir: str, seed: int, data_dir: str | None = None) -> ExperimentConfig:
    data_dir = data_dir or out_dir
    os.makedirs(data_dir, exist_ok=True)
    csv_path = os.path.join(data_dir, "wine.csv")
    if not os.path.exists(csv_path):
        bundled.fetch_wine_csv(csv_path)
    return ExperimentConfig(
        name="wine",
        dataset={"type": "csv", "path": csv_path, "label_column": "label"},
        hidden=(10, 5),
        mcmc=McmcConfig(iterations=200_000, burn_in=100_000, thinning=100,
                        proposal_window=0.05, update_fraction=0.05,
                        adapt_iterations=10_000),
        prior_mcmc=McmcConfig(iterations=200_000, burn_in=20_000, thinning=120,
                              proposal_window=0.5, update_fraction=0.2,
                              adapt_iterations=10_000),
        split=SplitConfig(n_ood_classes=1, n_replicates=1, train_fraction=0.5,
                          ood_classes=(2,)),
        baseline=BaselineConfig(dropout_rate=0.2, max_epochs=500),
        out_dir=out_dir,
        seed=seed,
    )


def beta_config(out_dir: str, seed: int, n_replicates: int = 2) -> ExperimentConfig:
    return ExperimentConfig(
        name="beta",
        dataset={"type": "beta", "n_classes": 20, "instances_per_class": 199,
                 "n_features": 10},
        hidden=(15, 10),
        mcmc=McmcConfig(iterations=1_000_000, burn_in=500_000, thinning=330,
                        proposal_window=0.05, update_fraction=0.05,
                        adapt_iterations=50_000),
        prior_mcmc=McmcConfig(iterations=200_000, burn_in=20_000, thinning=120,
                              proposal_window=0.5, update_fraction=0.2,
                              adapt_iterations=10_000),
        split=SplitConfig(n_ood_classes=10, n_replicates=n_replicates,
                          train_fraction=0.5),
        baseline=BaselineConfig(dropout_rate=0.01, max_epochs=400),
        out_dir=out_dir,
        seed=seed,
    )


def mnist_config(out_dir: str, seed: int, idx_paths: dict | None = None,
                 n_replicates: int = 1) -> ExperimentConfig:
    if idx_paths is None:
        idx_paths = bundled.build_digits_idx(
            os.path.join(out_dir, "data"), seed=derive_seed(seed, "digits-split"))
        train_pool = None
        # The digits stand-in is an easier task than real MNIST; 0.05 leaves
        # the 10-hidden-unit dropout net with no supported predictions at
        # all. 0.02 balances the true and false positive rates here.
        dropout = 0.02
    else:
        train_pool = 1000
        dropout = 0.05
    dataset = {
        "type": "idx_pair",
        "train_images": idx_paths["train_images"],
        "train_labels": idx_paths["train_labels"],
        "test_images": idx_paths["test_images"],
        "test_labels": idx_paths["test_labels"],
        "train_instances": 500,
        "n_in_classes": 5,
    }
    if train_pool:
        dataset["train_pool"] = train_pool
    return ExperimentConfig(
        name="mnist",
        dataset=dataset,
        hidden=(5, 5),
        # ~40 of the 3,975 weights move per proposal; larger subsets mix
        # poorly at this dimensionality.
        mcmc=McmcConfig(iterations=800_000, burn_in=400_000, thinning=400,
                        proposal_window=0.05, update_fraction=0.01,
                        adapt_iterations=30_000),
        prior_mcmc=McmcConfig(iterations=150_000, burn_in=20_000, thinning=130,
                              proposal_window=0.5, update_fraction=0.2,
                              adapt_iterations=10_000),
        split=SplitConfig(n_ood_classes=5, n_replicates=n_replicates,
                          train_fraction=0.5),
        baseline=BaselineConfig(dropout_rate=dropout, max_epochs=300),
        out_dir=out_dir,
        seed=seed,
        save_traces=False,
    )


def cmd_reproduce(args) -> int:
    out_dir = args.out or f"out_{args.experiment}"
    if args.experiment == "wine":
        exp = wine_config(out_dir, args.seed)
    elif args.experiment == "beta":
        exp = beta_config(out_dir, args.seed,
                          n_replicates=args.replicates or 2)
    else:
        supplied = (args.train_images, args.train_labels,
                    args.test_images, args.test_labels)
        if any(supplied) and not all(supplied):
            raise ConfigError("real MNIST needs all four --train/--test IDX paths")
        idx_paths = None
        if all(supplied):
            idx_paths = {"train_images": args.train_images,
                         "train_labels": args.train_labels,
                         "test_images": args.test_images,
                         "test_labels": args.test_labels}
        else:
            _say("no MNIST IDX files supplied; using the bundled digits stand-in "
                 "(same shapes, easier task)")
        exp = mnist_config(out_dir, args.seed, idx_paths,
                           n_replicates=args.replicates or 1)
    if args.replicates is not None:
        exp.split = replace(exp.split, n_replicates=args.replicates)
    if args.iterations is not None:
        it = args.iterations
        exp.mcmc = replace(exp.mcmc, iterations=it, burn_in=it // 2,
                           thinning=max(1, (it // 2) // 1500))
    if args.save_traces:
        exp.save_traces = True
    exp.write_json(os.path.join(_ensure_dir(out_dir), "config.json"))
    result = run_experiment(exp, threads=args.threads, progress=_say)

    table = os.path.join(out_dir, "reports", f"{exp.name}_table.csv")
    print(f"comparison table: {table}")
    with open(table, "r", encoding="utf-8") as fh:
        print(fh.read().rstrip())
    return EXIT_OK


def _ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


_HANDLERS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        _say(f"config error: {exc}")
        return EXIT_USAGE
    except DataFormatError as exc:
        _say(f"data error: {exc}")
        return EXIT_DATA
    except NumericalError as exc:
        _say(f"numerical error: {exc}")
        return EXIT_NUMERIC
    except PriorBnnError as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE
    except FileNotFoundError as exc:
        _say(f"data error: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
