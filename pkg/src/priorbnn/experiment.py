"""End-to-end experiment orchestration: dataset preparation, chain running,
prediction, evaluation, and replicate aggregation, all driven by a single
JSON-serializable configuration with one global seed.

Every random stream is derived from the global seed plus a purpose string,
so reruns are byte-identical and parallel execution cannot change results.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import baseline as baseline_mod
from . import datasets, evidence, mcmc, metrics
from .errors import ConfigError
from .network import NetworkArchitecture
from .priors import PRIOR_KINDS, PriorSpec

_MASK64 = (1 << 64) - 1


def derive_seed(base: int, *parts) -> int:
    """Stable 64-bit sub-seed for a named purpose under a global seed."""
    tag = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    entropy = int.from_bytes(digest[:8], "little")
    ss = np.random.SeedSequence([base & _MASK64, entropy])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SplitConfig:
    """Class-holdout cross-validation parameters."""

    n_ood_classes: int = 1
    n_replicates: int = 1
    train_fraction: float = 0.5
    ood_classes: tuple[int, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "n_ood_classes": self.n_ood_classes,
            "n_replicates": self.n_replicates,
            "train_fraction": self.train_fraction,
            "ood_classes": list(self.ood_classes) if self.ood_classes else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitConfig":
        ood = d.get("ood_classes")
        return cls(
            n_ood_classes=int(d.get("n_ood_classes", 1)),
            n_replicates=int(d.get("n_replicates", 1)),
            train_fraction=float(d.get("train_fraction", 0.5)),
            ood_classes=tuple(ood) if ood else None,
        )


@dataclass
class ExperimentConfig:
    """Everything one experiment needs; serializable to/from JSON."""

    name: str
    dataset: dict
    hidden: tuple[int, int]
    mcmc: mcmc.McmcConfig
    prior_mcmc: mcmc.McmcConfig
    priors: list[PriorSpec] = field(default_factory=lambda: [PriorSpec(k) for k in PRIOR_KINDS])
    split: SplitConfig = SplitConfig()
    thresholds: evidence.SupportThresholds = evidence.SupportThresholds()
    baseline: baseline_mod.BaselineConfig | None = None
    estimator: str = evidence.MEAN_SOFTMAX
    out_dir: str = "out"
    seed: int = 0
    save_traces: bool = True

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dataset": self.dataset,
            "hidden": list(self.hidden),
            "mcmc": self.mcmc.to_dict(),
            "prior_mcmc": self.prior_mcmc.to_dict(),
            "priors": [p.to_dict() for p in self.priors],
            "split": self.split.to_dict(),
            "thresholds": self.thresholds.to_dict(),
            "baseline": self.baseline.to_dict() if self.baseline else None,
            "estimator": self.estimator,
            "out_dir": self.out_dir,
            "seed": self.seed,
            "save_traces": self.save_traces,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            return cls(
                name=str(d["name"]),
                dataset=dict(d["dataset"]),
                hidden=tuple(d["hidden"]),
                mcmc=mcmc.McmcConfig.from_dict(d["mcmc"]),
                prior_mcmc=mcmc.McmcConfig.from_dict(d["prior_mcmc"]),
                priors=[PriorSpec.from_dict(p) for p in d.get("priors", [])]
                or [PriorSpec(k) for k in PRIOR_KINDS],
                split=SplitConfig.from_dict(d.get("split", {})),
                thresholds=evidence.SupportThresholds.from_dict(d.get("thresholds", {})),
                baseline=(baseline_mod.BaselineConfig.from_dict(d["baseline"])
                          if d.get("baseline") else None),
                estimator=d.get("estimator", evidence.MEAN_SOFTMAX),
                out_dir=str(d.get("out_dir", "out")),
                seed=int(d.get("seed", 0)),
                save_traces=bool(d.get("save_traces", True)),
            )
        except KeyError as exc:
            raise ConfigError(f"experiment config is missing {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_dataset(spec: dict, base_seed: int) -> datasets.LabeledDataset:
    """Materialize the dataset named by a config dataset spec."""
    kind = spec.get("type")
    if kind == "csv":
        return datasets.load_csv(spec["path"], spec.get("label_column", "label"))
    if kind == "beta":
        cfg = datasets.SyntheticBetaConfig.from_dict(
            {**spec, "seed": spec.get("seed", derive_seed(base_seed, "beta-data"))})
        return datasets.simulate_beta(cfg).dataset
    if kind == "idx":
        return datasets.load_mnist_idx(spec["images"], spec["labels"])
    raise ConfigError(f"unknown dataset type {kind!r} (expected csv, beta, or idx)")


@dataclass
class PreparedSplit:
    """One replicate's materialized data plus its provenance."""

    replicate_id: int
    data: datasets.SplitData
    in_classes: tuple[int, ...]
    ood_classes: tuple[int, ...]


def prepare_splits(config: ExperimentConfig) -> list[PreparedSplit]:
    """Build every replicate's train/test split from the config.

    A plain dataset is split by class holdout. A paired train/test dataset
    (type "idx_pair", the MNIST layout) instead draws the training rows
    from the training file and tests on the full test file, holding out
    the non-training classes as OOD.
    """
    spec = config.dataset
    if spec.get("type") == "idx_pair":
        return _prepare_idx_pair_splits(config)
    dataset = load_dataset(spec, config.seed)
    plans = datasets.plan_splits(
        dataset,
        n_ood_classes=config.split.n_ood_classes,
        n_replicates=config.split.n_replicates,
        train_fraction=config.split.train_fraction,
        seed=derive_seed(config.seed, "splits"),
        ood_classes=config.split.ood_classes,
    )
    return [
        PreparedSplit(p.replicate_id, datasets.extract_split(dataset, p),
                      p.in_classes, p.ood_classes)
        for p in plans
    ]


def _prepare_idx_pair_splits(config: ExperimentConfig) -> list[PreparedSplit]:
    spec = config.dataset
    train_ds = datasets.load_mnist_idx(spec["train_images"], spec["train_labels"])
    test_ds = datasets.load_mnist_idx(spec["test_images"], spec["test_labels"])
    pool_size = int(spec.get("train_pool", train_ds.n_instances))
    n_train = int(spec.get("train_instances", 500))
    n_in = int(spec.get("n_in_classes", 5))
    n_classes = max(train_ds.n_classes, test_ds.n_classes)
    if not 1 <= n_in < n_classes:
        raise ConfigError(f"n_in_classes must be in [1, {n_classes - 1}], got {n_in}")

    if pool_size < train_ds.n_instances:
        train_ds = datasets.subsample(train_ds, pool_size,
                                      derive_seed(config.seed, "train-pool"))
    out = []
    for rep in range(config.split.n_replicates):
        rng = np.random.Generator(np.random.PCG64(derive_seed(config.seed, "idx-split", rep)))
        if config.split.ood_classes is not None:
            ood_cls = tuple(sorted(config.split.ood_classes))
            in_cls = tuple(c for c in range(n_classes) if c not in ood_cls)
            if len(in_cls) != n_in:
                raise ConfigError("explicit ood_classes inconsistent with n_in_classes")
        else:
            in_cls = tuple(sorted(rng.choice(n_classes, size=n_in, replace=False).tolist()))
            ood_cls = tuple(c for c in range(n_classes) if c not in in_cls)
        pool_rows = np.where(np.isin(train_ds.labels, in_cls))[0]
        if len(pool_rows) < n_train:
            raise ConfigError(
                f"train pool holds {len(pool_rows)} rows of classes {in_cls}, "
                f"need {n_train}"
            )
        train_rows = rng.choice(pool_rows, size=n_train, replace=False)
        class_map = {c: i for i, c in enumerate(in_cls)}
        remap = np.vectorize(class_map.__getitem__, otypes=[int])

        Xtr = train_ds.features[train_rows]
        scaler = datasets.fit_min_max(Xtr)
        tf = lambda A: datasets.apply_min_max(scaler, A)
        test_in_rows = np.where(np.isin(test_ds.labels, in_cls))[0]
        test_ood_rows = np.where(~np.isin(test_ds.labels, in_cls))[0]
        data = datasets.SplitData(
            train_features=tf(Xtr),
            train_labels=remap(train_ds.labels[train_rows]),
            test_in_features=tf(test_ds.features[test_in_rows]),
            test_in_labels=remap(test_ds.labels[test_in_rows]),
            test_ood_features=tf(test_ds.features[test_ood_rows]),
            test_in_ids=[str(i) for i in test_in_rows],
            test_ood_ids=[str(i) for i in test_ood_rows],
            class_map=class_map,
            scaler=scaler,
        )
        out.append(PreparedSplit(rep, data, in_cls, ood_cls))
    return out


def architecture_for(config: ExperimentConfig, split: PreparedSplit) -> NetworkArchitecture:
    return NetworkArchitecture(
        n_features=split.data.train_features.shape[1],
        hidden=config.hidden,
        n_classes=len(split.in_classes),
    )


@dataclass
class BnnRunResult:
    """One (prior, replicate) unit: traces, summaries, and report."""

    prior: PriorSpec
    replicate_id: int
    posterior_trace: mcmc.PosteriorTrace
    prior_trace: mcmc.PosteriorTrace
    in_summaries: list[evidence.PredictionSummary]
    ood_summaries: list[evidence.PredictionSummary]
    report: metrics.EvaluationReport


def run_bnn_unit(config: ExperimentConfig, split: PreparedSplit,
                 prior: PriorSpec) -> BnnRunResult:
    """Posterior + prior-only chains for one prior on one replicate,
    followed by prediction summaries and the evaluation report."""
    arch = architecture_for(config, split)
    data = split.data
    post_cfg = replace(
        config.mcmc, mode=mcmc.POSTERIOR,
        seed=derive_seed(config.seed, "chain", prior.kind, split.replicate_id, "posterior"))
    prior_cfg = replace(
        config.prior_mcmc, mode=mcmc.PRIOR_ONLY,
        seed=derive_seed(config.seed, "chain", prior.kind, split.replicate_id, "prior"))
    posterior_trace = mcmc.run_chain(data.train_features, data.train_labels,
                                     arch, prior, post_cfg)
    prior_trace = mcmc.run_chain(None, None, arch, prior, prior_cfg)

    in_summaries = evidence.summarize_many(
        data.test_in_features, data.test_in_ids, data.test_in_labels,
        posterior_trace, prior_trace, config.thresholds, config.estimator)
    ood_summaries = evidence.summarize_many(
        data.test_ood_features, data.test_ood_ids, None,
        posterior_trace, prior_trace, config.thresholds, config.estimator)
    report = metrics.evaluate_run(in_summaries, ood_summaries)
    return BnnRunResult(prior, split.replicate_id, posterior_trace, prior_trace,
                        in_summaries, ood_summaries, report)


def run_baseline_unit(config: ExperimentConfig, split: PreparedSplit):
    """Train the MC-dropout comparison network on one replicate and build
    prediction summaries whose two support flags both mean dropout support."""
    if config.baseline is None:
        raise ConfigError("experiment config has no baseline section")
    arch = architecture_for(config, split)
    data = split.data
    cfg = replace(config.baseline,
                  seed=derive_seed(config.seed, "baseline", split.replicate_id))
    weights, log = baseline_mod.train_baseline(
        data.train_features, data.train_labels, arch, cfg)

    def summarize(X, ids, labels, tag):
        rng = np.random.Generator(np.random.PCG64(
            derive_seed(config.seed, "mc-dropout", split.replicate_id, tag)))
        pred, freq, label_probs = baseline_mod.mc_dropout_predict_many(
            weights, arch, X, cfg, rng, return_probs=True)
        out = []
        uniform = np.full(arch.n_classes, 1.0 / arch.n_classes)
        for i in range(X.shape[0]):
            supported = bool(freq[i] > cfg.support_threshold)
            out.append(evidence.PredictionSummary(
                instance_id=str(ids[i]),
                posterior_probs=label_probs[i],
                prior_probs=uniform.copy(),
                bayes_factors=np.full(arch.n_classes, np.nan),
                predicted_class=int(pred[i]),
                supported_pp=supported,
                supported_bf=supported,
                true_label=None if labels is None else int(labels[i]),
            ))
        return out

    in_summaries = summarize(data.test_in_features, data.test_in_ids,
                             data.test_in_labels, "in")
    ood_summaries = summarize(data.test_ood_features, data.test_ood_ids, None, "ood")
    report = metrics.evaluate_run(in_summaries, ood_summaries)
    return weights, log, in_summaries, ood_summaries, report


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    bnn_reports: dict          # prior kind -> list of per-replicate reports
    bnn_aggregates: dict       # prior kind -> aggregate dict
    baseline_reports: list
    baseline_aggregate: dict | None


def _ensure_out_dirs(out_dir: str) -> dict:
    paths = {sub: os.path.join(out_dir, sub) for sub in ("traces", "predictions", "reports")}
    for p in paths.values():
        os.makedirs(p, exist_ok=True)
    return paths


def _bnn_job(args):
    config, split, prior = args
    return run_bnn_unit(config, split, prior)


def run_experiment(config: ExperimentConfig, threads: int = 1,
                   progress=None) -> ExperimentResult:
    """Execute every (prior, replicate) BNN unit plus the optional baseline,
    write all artifacts under config.out_dir, and aggregate reports."""
    def say(msg):
        if progress:
            progress(msg)

    paths = _ensure_out_dirs(config.out_dir)
    splits = prepare_splits(config)
    say(f"{config.name}: {len(splits)} replicate(s), "
        f"{len(config.priors)} prior(s)")

    jobs = [(config, split, prior) for split in splits for prior in config.priors]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_bnn_job, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_bnn_job(job))
            r = results[-1]
            say(f"  {r.prior.kind} rep{r.replicate_id}: "
                f"acc={r.report.accuracy:.3f} "
                f"fpr_ood_pp={r.report.fpr_ood_pp:.3f} "
                f"(acceptance {r.posterior_trace.acceptance_rate:.3f})")

    bnn_reports: dict = {p.kind: [] for p in config.priors}
    csv_rows = []
    for res in results:
        tag = f"{config.name}_{res.prior.kind}_rep{res.replicate_id}"
        if config.save_traces:
            mcmc.save_trace(res.posterior_trace,
                            os.path.join(paths["traces"], f"{tag}_posterior.trace"))
            mcmc.save_trace(res.prior_trace,
                            os.path.join(paths["traces"], f"{tag}_prior.trace"))
        evidence.write_predictions(
            os.path.join(paths["predictions"], f"{tag}_in.csv"), res.in_summaries)
        evidence.write_predictions(
            os.path.join(paths["predictions"], f"{tag}_ood.csv"), res.ood_summaries)
        metrics.write_report_json(
            os.path.join(paths["reports"], f"{tag}.json"),
            {"dataset": config.name, "prior": res.prior.kind,
             "replicate": res.replicate_id, "report": res.report.to_dict(),
             "acceptance_rate": res.posterior_trace.acceptance_rate})
        bnn_reports[res.prior.kind].append(res.report)
        csv_rows.extend(metrics.report_csv_rows(config.name, res.prior.kind, res.report))

    bnn_aggregates = {kind: metrics.aggregate_reports(reps)
                      for kind, reps in bnn_reports.items()}

    baseline_reports = []
    baseline_aggregate = None
    if config.baseline is not None:
        for split in splits:
            weights, log, in_s, ood_s, report = run_baseline_unit(config, split)
            tag = f"{config.name}_baseline_rep{split.replicate_id}"
            say(f"  baseline rep{split.replicate_id}: acc={report.accuracy:.3f} "
                f"fpr_ood={report.fpr_ood_pp:.3f} (best epoch {log.best_epoch})")
            if config.save_traces:
                arch = architecture_for(config, split)
                trace = mcmc.PosteriorTrace(
                    arch=arch, prior=None, mode="baseline",
                    seed=derive_seed(config.seed, "baseline", split.replicate_id),
                    burn_in=0, thinning=1,
                    iterations=np.array([log.best_epoch], dtype=np.int64),
                    log_priors=np.array([0.0]), log_liks=np.array([0.0]),
                    weights=weights[None, :], acceptance_rate=1.0)
                mcmc.save_trace(trace, os.path.join(paths["traces"], f"{tag}.trace"))
            evidence.write_predictions(
                os.path.join(paths["predictions"], f"{tag}_in.csv"), in_s)
            evidence.write_predictions(
                os.path.join(paths["predictions"], f"{tag}_ood.csv"), ood_s)
            metrics.write_report_json(
                os.path.join(paths["reports"], f"{tag}.json"),
                {"dataset": config.name, "prior": "baseline",
                 "replicate": split.replicate_id, "report": report.to_dict()})
            baseline_reports.append(report)
            csv_rows.extend(metrics.report_csv_rows(config.name, "baseline", report))
        baseline_aggregate = metrics.aggregate_reports(baseline_reports)

    metrics.write_report_csv(
        os.path.join(paths["reports"], f"{config.name}_runs.csv"), csv_rows)
    summary = {
        "dataset": config.name,
        "seed": config.seed,
        "bnn": bnn_aggregates,
        "baseline": baseline_aggregate,
    }
    metrics.write_report_json(
        os.path.join(paths["reports"], f"{config.name}_summary.json"), summary)
    _write_comparison_table(
        os.path.join(paths["reports"], f"{config.name}_table.csv"),
        bnn_aggregates, baseline_aggregate)
    return ExperimentResult(config, bnn_reports, bnn_aggregates,
                            baseline_reports, baseline_aggregate)


def _write_comparison_table(path, bnn_aggregates: dict, baseline_aggregate) -> None:
    """One row per model: the headline statistics, replicate means."""
    import csv as _csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["model", "accuracy", "tpr_pp", "tpr_bf", "fpr_in_pp",
                         "fpr_in_bf", "informedness_pp", "informedness_bf",
                         "fpr_ood_pp", "fpr_ood_bf"])
        def row(name, agg):
            writer.writerow([
                name,
                *(repr(agg[k]["mean"]) for k in (
                    "accuracy", "tpr_pp", "tpr_bf", "fpr_in_pp", "fpr_in_bf",
                    "informedness_pp", "informedness_bf", "fpr_ood_pp", "fpr_ood_bf"))])
        for kind in sorted(bnn_aggregates):
            row(kind, bnn_aggregates[kind])
        if baseline_aggregate is not None:
            row("nn-dropout", baseline_aggregate)
