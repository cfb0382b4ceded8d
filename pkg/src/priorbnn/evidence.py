"""Per-instance prediction support from posterior and prior-only traces.

Class posterior probabilities are the mean softmax output across retained
posterior samples (the zero-extra-variance version of the label sampling
frequency); an argmax-frequency estimator is available behind a switch.
Empirical class priors come from a prior-only trace the same way. The Bayes
factor for a class is its posterior odds divided by its prior odds, computed
one-vs-rest.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from . import network
from .errors import InvalidInputError
from .mcmc import PRIOR_ONLY, PosteriorTrace

MEAN_SOFTMAX = "mean-softmax"
ARGMAX_FREQUENCY = "argmax-frequency"
ESTIMATORS = (MEAN_SOFTMAX, ARGMAX_FREQUENCY)

# Finite prior traces can put empirical mass 0 or 1 on a class, where the
# odds ratio is undefined; probabilities are clamped to [EPS, 1-EPS] before
# entering any odds computation.
PRIOR_PROB_EPS = 1e-6


@dataclass(frozen=True)
class SupportThresholds:
    """Cutoffs above which a prediction counts as statistically supported."""

    pp_threshold: float = 0.95
    bf_threshold: float = 150.0

    def __post_init__(self):
        if not 0.5 < self.pp_threshold < 1:
            raise InvalidInputError(
                f"pp_threshold must be in (0.5, 1), got {self.pp_threshold}"
            )
        if not self.bf_threshold > 1:
            raise InvalidInputError(f"bf_threshold must be > 1, got {self.bf_threshold}")

    def to_dict(self) -> dict:
        return {"pp_threshold": self.pp_threshold, "bf_threshold": self.bf_threshold}

    @classmethod
    def from_dict(cls, d: dict) -> "SupportThresholds":
        return cls(float(d.get("pp_threshold", 0.95)), float(d.get("bf_threshold", 150.0)))


@dataclass
class PredictionSummary:
    """Posterior/prior class probabilities, Bayes factors, and the decision
    for one instance. ``true_label`` is None for unlabeled instances."""

    instance_id: str
    posterior_probs: np.ndarray
    prior_probs: np.ndarray
    bayes_factors: np.ndarray
    predicted_class: int
    supported_pp: bool
    supported_bf: bool
    true_label: int | None = None

    @property
    def pp_pred(self) -> float:
        return float(self.posterior_probs[self.predicted_class])

    @property
    def prior_pred(self) -> float:
        return float(self.prior_probs[self.predicted_class])

    @property
    def bf_pred(self) -> float:
        return float(self.bayes_factors[self.predicted_class])

    @property
    def correct(self) -> bool:
        return self.true_label is not None and self.predicted_class == self.true_label


def _estimate_probs(trace: PosteriorTrace, X: np.ndarray, estimator: str) -> np.ndarray:
    if estimator not in ESTIMATORS:
        raise InvalidInputError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    if trace.n_samples == 0:
        raise InvalidInputError("trace contains no samples")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != trace.arch.n_features:
        raise InvalidInputError(
            f"input has {X.shape[1]} features, trace architecture needs "
            f"{trace.arch.n_features}"
        )
    Xb = network.augment(X)
    acc = np.zeros((X.shape[0], trace.arch.n_classes))
    if estimator == MEAN_SOFTMAX:
        for w in trace.weights:
            acc += network.forward_aug(trace.arch, w, Xb)
    else:
        rows = np.arange(X.shape[0])
        for w in trace.weights:
            acc[rows, network.forward_aug(trace.arch, w, Xb).argmax(axis=1)] += 1.0
    return acc / trace.n_samples


def posterior_class_probs_many(trace: PosteriorTrace, X: np.ndarray,
                               estimator: str = MEAN_SOFTMAX) -> np.ndarray:
    """Class posterior probabilities for a batch of inputs, shape (n, K)."""
    return _estimate_probs(trace, X, estimator)


def posterior_class_probs(trace: PosteriorTrace, x: np.ndarray,
                          estimator: str = MEAN_SOFTMAX) -> np.ndarray:
    """Class posterior probabilities for a single input."""
    return _estimate_probs(trace, np.asarray(x, dtype=float)[None, :], estimator)[0]


def empirical_prior_class_probs_many(prior_trace: PosteriorTrace, X: np.ndarray,
                                     estimator: str = MEAN_SOFTMAX,
                                     clamp: bool = True) -> np.ndarray:
    """Empirical per-class prior probabilities from a prior-only trace.

    With ``clamp`` the entries are restricted to [EPS, 1-EPS] so they can
    enter odds ratios; the clamped vector may deviate from sum 1 by up to
    K * EPS when a class was never sampled.
    """
    if prior_trace.mode != PRIOR_ONLY:
        raise InvalidInputError(
            f"empirical class priors need a {PRIOR_ONLY!r} trace, got {prior_trace.mode!r}"
        )
    probs = _estimate_probs(prior_trace, X, estimator)
    if clamp:
        probs = np.clip(probs, PRIOR_PROB_EPS, 1.0 - PRIOR_PROB_EPS)
    return probs


def empirical_prior_class_probs(prior_trace: PosteriorTrace, x: np.ndarray,
                                estimator: str = MEAN_SOFTMAX,
                                clamp: bool = True) -> np.ndarray:
    """Empirical class priors for a single input."""
    return empirical_prior_class_probs_many(
        prior_trace, np.asarray(x, dtype=float)[None, :], estimator, clamp
    )[0]


def bayes_factor(pp_k: float, prior_k: float) -> float:
    """Posterior odds over prior odds for one class; +inf when pp_k is 1."""
    if not 0.0 <= pp_k <= 1.0:
        raise InvalidInputError(f"posterior probability must be in [0, 1], got {pp_k}")
    if not 0.0 < prior_k < 1.0:
        raise InvalidInputError(f"prior probability must be in (0, 1), got {prior_k}")
    if pp_k == 1.0:
        return math.inf
    return (pp_k / (1.0 - pp_k)) / (prior_k / (1.0 - prior_k))


def _bayes_factors(pp: np.ndarray, prior: np.ndarray) -> np.ndarray:
    prior = np.clip(prior, PRIOR_PROB_EPS, 1.0 - PRIOR_PROB_EPS)
    prior_odds = prior / (1.0 - prior)
    with np.errstate(divide="ignore"):
        post_odds = np.where(pp < 1.0, pp / np.maximum(1.0 - pp, 1e-300), np.inf)
    return post_odds / prior_odds


def _check_compatible(trace: PosteriorTrace, prior_trace: PosteriorTrace) -> None:
    if trace.arch != prior_trace.arch:
        raise InvalidInputError(
            f"trace architectures differ: {trace.arch} vs {prior_trace.arch}"
        )
    if trace.prior != prior_trace.prior:
        raise InvalidInputError(
            f"trace prior specs differ: {trace.prior} vs {prior_trace.prior}"
        )


def summarize_many(X, instance_ids, true_labels, trace: PosteriorTrace,
                   prior_trace: PosteriorTrace,
                   thresholds: SupportThresholds = SupportThresholds(),
                   estimator: str = MEAN_SOFTMAX) -> list[PredictionSummary]:
    """Prediction summaries for a batch; true_labels may be None."""
    _check_compatible(trace, prior_trace)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    pp = posterior_class_probs_many(trace, X, estimator)
    prior_p = empirical_prior_class_probs_many(prior_trace, X, estimator)
    out = []
    for i in range(X.shape[0]):
        bf = _bayes_factors(pp[i], prior_p[i])
        pred = int(np.argmax(pp[i]))
        out.append(PredictionSummary(
            instance_id=str(instance_ids[i]),
            posterior_probs=pp[i],
            prior_probs=prior_p[i],
            bayes_factors=bf,
            predicted_class=pred,
            supported_pp=bool(pp[i, pred] > thresholds.pp_threshold),
            supported_bf=bool(bf[pred] > thresholds.bf_threshold),
            true_label=None if true_labels is None else int(true_labels[i]),
        ))
    return out


def summarize(instance_id, x, trace: PosteriorTrace, prior_trace: PosteriorTrace,
              thresholds: SupportThresholds = SupportThresholds(),
              true_label: int | None = None,
              estimator: str = MEAN_SOFTMAX) -> PredictionSummary:
    """Prediction summary for a single instance."""
    labels = None if true_label is None else [true_label]
    return summarize_many(np.asarray(x, dtype=float)[None, :], [instance_id], labels,
                          trace, prior_trace, thresholds, estimator)[0]


def with_thresholds(summary: PredictionSummary,
                    thresholds: SupportThresholds) -> PredictionSummary:
    """Copy of a summary with its support flags recomputed."""
    return replace(
        summary,
        supported_pp=bool(summary.pp_pred > thresholds.pp_threshold),
        supported_bf=bool(summary.bf_pred > thresholds.bf_threshold),
    )


# ---------------------------------------------------------------------------
# Predictions CSV: one row per instance with per-class PP columns appended.


def write_predictions(path, summaries: list[PredictionSummary]) -> None:
    if not summaries:
        raise InvalidInputError("no prediction summaries to write")
    n_classes = len(summaries[0].posterior_probs)
    header = ["instance_id", "true_label", "pred_label", "pp_pred", "prior_pred",
              "bf_pred", "supported_pp", "supported_bf"]
    header += [f"pp_{k}" for k in range(n_classes)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in summaries:
            row = [s.instance_id,
                   "" if s.true_label is None else s.true_label,
                   s.predicted_class, repr(s.pp_pred), repr(s.prior_pred),
                   repr(s.bf_pred), int(s.supported_pp), int(s.supported_bf)]
            row += [repr(float(v)) for v in s.posterior_probs]
            writer.writerow(row)


def read_predictions(path) -> list[PredictionSummary]:
    """Reload prediction summaries written by write_predictions.

    Per-class prior probabilities and Bayes factors other than the predicted
    class are not stored in the CSV; reloaded summaries carry them only for
    the predicted class.
    """
    from .errors import DataFormatError

    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty predictions file") from None
        pp_cols = [c for c in header if c.startswith("pp_") and c != "pp_pred"]
        n_classes = len(pp_cols)
        if n_classes == 0 or header[:8] != ["instance_id", "true_label", "pred_label",
                                            "pp_pred", "prior_pred", "bf_pred",
                                            "supported_pp", "supported_bf"]:
            raise DataFormatError(f"{path}: not a predictions file")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                pred = int(row[2])
                pp = np.array([float(v) for v in row[8:8 + n_classes]])
                prior_probs = np.full(n_classes, np.nan)
                prior_probs[pred] = float(row[4])
                bf = np.full(n_classes, np.nan)
                bf[pred] = float(row[5])
                out.append(PredictionSummary(
                    instance_id=row[0],
                    posterior_probs=pp,
                    prior_probs=prior_probs,
                    bayes_factors=bf,
                    predicted_class=pred,
                    supported_pp=bool(int(row[6])),
                    supported_bf=bool(int(row[7])),
                    true_label=int(row[1]) if row[1] != "" else None,
                ))
            except (ValueError, IndexError) as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    return out
