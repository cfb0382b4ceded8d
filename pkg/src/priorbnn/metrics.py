"""Accuracy, supported true/false positive rates, and informedness.

A prediction is a true positive when it is correct and statistically
supported, and a false positive when it is supported but wrong. Every
out-of-distribution prediction is wrong by construction, so on the OOD
split the false positive rate is simply the supported fraction.
Informedness is TPR minus the in-distribution FPR, reported separately per
support rule.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

from .errors import InvalidInputError
from .evidence import PredictionSummary, SupportThresholds, with_thresholds

PP_RULE = "pp"
BF_RULE = "bf"
RULES = (PP_RULE, BF_RULE)


@dataclass
class EvaluationReport:
    """All rates for one run, with the raw counts they were computed from."""

    accuracy: float
    tpr_pp: float
    tpr_bf: float
    fpr_in_pp: float
    fpr_in_bf: float
    fpr_ood_pp: float
    fpr_ood_bf: float
    informedness_pp: float
    informedness_bf: float
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "tpr_pp": self.tpr_pp,
            "tpr_bf": self.tpr_bf,
            "fpr_in_pp": self.fpr_in_pp,
            "fpr_in_bf": self.fpr_in_bf,
            "fpr_ood_pp": self.fpr_ood_pp,
            "fpr_ood_bf": self.fpr_ood_bf,
            "informedness_pp": self.informedness_pp,
            "informedness_bf": self.informedness_bf,
            "counts": self.counts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        return cls(**d)


def _supported(summary: PredictionSummary, rule: str) -> bool:
    if rule not in RULES:
        raise InvalidInputError(f"rule must be one of {RULES}, got {rule!r}")
    return summary.supported_pp if rule == PP_RULE else summary.supported_bf


def accuracy(summaries: list[PredictionSummary]) -> float:
    """Fraction of summaries whose predicted class equals the true label."""
    if not summaries:
        raise InvalidInputError("accuracy of an empty prediction set is undefined")
    if any(s.true_label is None for s in summaries):
        raise InvalidInputError("accuracy needs true labels on every summary")
    return sum(s.correct for s in summaries) / len(summaries)


def true_positive_rate(summaries: list[PredictionSummary], rule: str) -> float:
    """Fraction of in-distribution instances correct AND supported."""
    if not summaries:
        raise InvalidInputError("TPR of an empty prediction set is undefined")
    if any(s.true_label is None for s in summaries):
        raise InvalidInputError("TPR needs true labels on every summary")
    return sum(s.correct and _supported(s, rule) for s in summaries) / len(summaries)


def false_positive_rate(summaries: list[PredictionSummary], rule: str,
                        ood: bool = False) -> float:
    """Fraction of instances supported AND erroneous.

    On an OOD split (``ood=True``) every prediction is erroneous, so this is
    the supported fraction regardless of labels.
    """
    if not summaries:
        raise InvalidInputError("FPR of an empty prediction set is undefined")
    if ood:
        return sum(_supported(s, rule) for s in summaries) / len(summaries)
    if any(s.true_label is None for s in summaries):
        raise InvalidInputError("in-distribution FPR needs true labels")
    return sum(_supported(s, rule) and not s.correct for s in summaries) / len(summaries)


def informedness(tpr: float, fpr: float) -> float:
    """TPR minus FPR; 1 when sensitivity and specificity are both 1."""
    return tpr - fpr


def evaluate_run(in_summaries: list[PredictionSummary],
                 ood_summaries: list[PredictionSummary],
                 thresholds: SupportThresholds | None = None) -> EvaluationReport:
    """Full report over one in-distribution and one OOD prediction set.

    When ``thresholds`` is given, every summary's support flags are
    recomputed before counting; otherwise the stored flags are used.
    """
    if not in_summaries or not ood_summaries:
        raise InvalidInputError("evaluate_run needs non-empty in- and OOD splits")
    if thresholds is not None:
        in_summaries = [with_thresholds(s, thresholds) for s in in_summaries]
        ood_summaries = [with_thresholds(s, thresholds) for s in ood_summaries]

    n_in, n_ood = len(in_summaries), len(ood_summaries)
    n_correct = sum(s.correct for s in in_summaries)
    counts = {
        "n_in": n_in,
        "n_ood": n_ood,
        "correct": n_correct,
    }
    rates = {}
    for rule in RULES:
        tp = sum(s.correct and _supported(s, rule) for s in in_summaries)
        fp_in = sum(_supported(s, rule) and not s.correct for s in in_summaries)
        fp_ood = sum(_supported(s, rule) for s in ood_summaries)
        counts[f"tp_{rule}"] = tp
        counts[f"fp_in_{rule}"] = fp_in
        counts[f"fp_ood_{rule}"] = fp_ood
        rates[rule] = (tp / n_in, fp_in / n_in, fp_ood / n_ood)

    tpr_pp, fpr_in_pp, fpr_ood_pp = rates[PP_RULE]
    tpr_bf, fpr_in_bf, fpr_ood_bf = rates[BF_RULE]
    return EvaluationReport(
        accuracy=n_correct / n_in,
        tpr_pp=tpr_pp, tpr_bf=tpr_bf,
        fpr_in_pp=fpr_in_pp, fpr_in_bf=fpr_in_bf,
        fpr_ood_pp=fpr_ood_pp, fpr_ood_bf=fpr_ood_bf,
        informedness_pp=informedness(tpr_pp, fpr_in_pp),
        informedness_bf=informedness(tpr_bf, fpr_in_bf),
        counts=counts,
    )


_RATE_FIELDS = ("accuracy", "tpr_pp", "tpr_bf", "fpr_in_pp", "fpr_in_bf",
                "fpr_ood_pp", "fpr_ood_bf", "informedness_pp", "informedness_bf")


def aggregate_reports(reports: list[EvaluationReport]) -> dict:
    """Unweighted mean plus min-max range of each rate across replicates."""
    if not reports:
        raise InvalidInputError("no reports to aggregate")
    agg = {"n_replicates": len(reports)}
    for name in _RATE_FIELDS:
        values = [getattr(r, name) for r in reports]
        agg[name] = {
            "mean": sum(values) / len(values),
            "min": min(values),
            "max": max(values),
        }
    return agg


# ---------------------------------------------------------------------------
# Report files: a JSON document plus one flat CSV row per (dataset, prior,
# rule) for plot tooling.


def write_report_json(path, document: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=2, sort_keys=True)
        fh.write("\n")


REPORT_CSV_HEADER = ["dataset", "prior", "rule", "accuracy", "tpr", "fpr_in",
                     "fpr_ood", "informedness"]


def report_csv_rows(dataset: str, prior: str, report: EvaluationReport) -> list[list]:
    rows = []
    for rule in RULES:
        rows.append([
            dataset, prior, rule,
            repr(report.accuracy),
            repr(getattr(report, f"tpr_{rule}")),
            repr(getattr(report, f"fpr_in_{rule}")),
            repr(getattr(report, f"fpr_ood_{rule}")),
            repr(getattr(report, f"informedness_{rule}")),
        ])
    return rows


def write_report_csv(path, rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_CSV_HEADER)
        writer.writerows(rows)
