"""Bayesian neural network classifiers sampled by Metropolis-Hastings under
four alternative weight priors, with posterior-probability and Bayes-factor
support evaluation on in- and out-of-distribution data, plus an MC-dropout
baseline."""

from .network import NetworkArchitecture
from .priors import PriorSpec, PRIOR_KINDS
from .mcmc import McmcConfig, PosteriorTrace, run_chain, effective_sample_size
from .evidence import SupportThresholds, PredictionSummary, bayes_factor
from .metrics import EvaluationReport, evaluate_run

__version__ = "0.1.0"

__all__ = [
    "NetworkArchitecture",
    "PriorSpec",
    "PRIOR_KINDS",
    "McmcConfig",
    "PosteriorTrace",
    "run_chain",
    "effective_sample_size",
    "SupportThresholds",
    "PredictionSummary",
    "bayes_factor",
    "EvaluationReport",
    "evaluate_run",
    "__version__",
]
