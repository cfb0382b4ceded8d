"""Metropolis-Hastings sampling over flat weight vectors.

The proposal perturbs a uniformly random subset of the weights by additive
U(-d, d) draws; it is symmetric, so the acceptance ratio reduces to the
target-density ratio. A chain targets either the posterior (prior x
likelihood) or the prior alone; prior-only chains never evaluate the
likelihood and are used to estimate empirical class priors.

The low-level engine (``run_mh``) takes arbitrary log-density callables so
sampler correctness can be checked against analytic targets.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import network, priors
from .errors import ConfigError, DataFormatError, InvalidInputError, NumericalError

POSTERIOR = "posterior"
PRIOR_ONLY = "prior-only"
MODES = (POSTERIOR, PRIOR_ONLY)

# Pre-burn-in window adaptation aims for the classic random-walk target.
TARGET_ACCEPTANCE = 0.234
_ADAPT_BLOCK = 100


@dataclass(frozen=True)
class McmcConfig:
    """Chain length, proposal, and bookkeeping parameters.

    ``update_fraction`` is the fraction of weights perturbed per proposal;
    ``proposal_window`` is the half-width d of the additive uniform step.
    ``adapt_iterations`` > 0 prepends a non-recorded phase that tunes d
    toward an acceptance rate of 0.234 and then freezes it.
    """

    iterations: int
    burn_in: int = 0
    thinning: int = 1
    proposal_window: float = 0.05
    update_fraction: float = 0.05
    seed: int = 0
    mode: str = POSTERIOR
    adapt_iterations: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"iterations must be positive, got {self.iterations}")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError(
                f"burn_in must be in [0, iterations), got {self.burn_in} of {self.iterations}"
            )
        if self.thinning < 1:
            raise ConfigError(f"thinning must be positive, got {self.thinning}")
        if self.n_retained < 1:
            raise ConfigError(
                f"burn_in={self.burn_in} and thinning={self.thinning} leave no samples "
                f"in {self.iterations} iterations"
            )
        if not (self.proposal_window >= 0 and math.isfinite(self.proposal_window)):
            raise ConfigError(f"proposal_window must be >= 0, got {self.proposal_window}")
        if not 0 < self.update_fraction <= 1:
            raise ConfigError(f"update_fraction must be in (0, 1], got {self.update_fraction}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.adapt_iterations < 0:
            raise ConfigError(f"adapt_iterations must be >= 0, got {self.adapt_iterations}")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thinning

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "burn_in": self.burn_in,
            "thinning": self.thinning,
            "proposal_window": self.proposal_window,
            "update_fraction": self.update_fraction,
            "seed": self.seed,
            "mode": self.mode,
            "adapt_iterations": self.adapt_iterations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "McmcConfig":
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})


@dataclass
class ChainState:
    """Current position of a chain plus its cached log densities."""

    weights: np.ndarray
    log_prior: float
    log_lik: float
    iteration: int = 0
    accept_count: int = 0


@dataclass
class MhResult:
    """Raw output of the low-level engine: retained states and diagnostics."""

    iterations: np.ndarray
    log_priors: np.ndarray
    log_liks: np.ndarray
    weights: np.ndarray
    acceptance_rate: float
    tuned_window: float


@dataclass
class PosteriorTrace:
    """Thinned retained states of a finished chain, immutable by convention."""

    arch: network.NetworkArchitecture
    prior: priors.PriorSpec | None
    mode: str
    seed: int
    burn_in: int
    thinning: int
    iterations: np.ndarray = field(repr=False)
    log_priors: np.ndarray = field(repr=False)
    log_liks: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    acceptance_rate: float = 0.0

    @property
    def n_samples(self) -> int:
        return int(self.weights.shape[0])

    @property
    def log_posteriors(self) -> np.ndarray:
        return self.log_priors + self.log_liks


def subset_size(n_weights: int, update_fraction: float) -> int:
    return min(n_weights, math.ceil(update_fraction * n_weights))


def propose(current: np.ndarray, cfg: McmcConfig, rng: np.random.Generator) -> np.ndarray:
    """Copy of ``current`` with a random weight subset shifted by U(-d, d)."""
    current = np.asarray(current, dtype=float)
    if not np.all(np.isfinite(current)):
        raise InvalidInputError("proposal start point contains non-finite entries")
    k = subset_size(current.size, cfg.update_fraction)
    prop = current.copy()
    idx = rng.choice(current.size, size=k, replace=False)
    prop[idx] += rng.uniform(-cfg.proposal_window, cfg.proposal_window, size=k)
    return prop


def _check_log_density(value: float, label: str) -> float:
    # -inf signals zero density (automatic rejection); NaN/+inf signal bugs.
    if math.isnan(value) or value == math.inf:
        raise NumericalError(f"proposed {label} is {value}; this indicates a bug")
    return value


def _mh_kernel(state, log_prior_fn, log_lik_fn, posterior_mode, window, k, rng):
    """One in-place MH transition; returns True if the proposal was accepted."""
    w = state.weights
    prop = w.copy()
    idx = rng.choice(w.size, size=k, replace=False)
    prop[idx] += rng.uniform(-window, window, size=k)

    lp_new = _check_log_density(log_prior_fn(prop), "log-prior")
    state.iteration += 1
    if lp_new == -math.inf:
        return False

    if posterior_mode:
        ll_new = _check_log_density(log_lik_fn(prop), "log-likelihood")
        target_new = lp_new + ll_new
        target_cur = state.log_prior + state.log_lik
    else:
        ll_new = 0.0
        target_new = lp_new
        target_cur = state.log_prior

    if target_new == -math.inf:
        return False
    if target_cur == -math.inf:
        accept = True
    else:
        delta = target_new - target_cur
        accept = delta >= 0 or rng.random() < math.exp(delta)
    if accept:
        state.weights = prop
        state.log_prior = lp_new
        state.log_lik = ll_new
        state.accept_count += 1
    return accept


def mh_step(state: ChainState, X, y, arch, prior, cfg: McmcConfig,
            rng: np.random.Generator) -> ChainState:
    """One Metropolis-Hastings step of the BNN chain; returns the new state."""
    posterior_mode = cfg.mode == POSTERIOR
    log_lik_fn = network.make_log_likelihood(arch, X, y) if posterior_mode else None
    new = ChainState(state.weights.copy(), state.log_prior, state.log_lik,
                     state.iteration, state.accept_count)
    k = subset_size(new.weights.size, cfg.update_fraction)
    _mh_kernel(new, lambda w: priors.log_prior(prior, w), log_lik_fn,
               posterior_mode, cfg.proposal_window, k, rng)
    return new


def run_mh(log_prior_fn, log_lik_fn, init: np.ndarray, cfg: McmcConfig,
           rng: np.random.Generator) -> MhResult:
    """Run a full chain against arbitrary log-density callables.

    In posterior mode the target is log_prior_fn + log_lik_fn; in prior-only
    mode log_lik_fn is never called and the recorded log-likelihood is 0.
    """
    init = np.asarray(init, dtype=float)
    posterior_mode = cfg.mode == POSTERIOR
    lp0 = _check_log_density(log_prior_fn(init), "log-prior")
    if lp0 == -math.inf:
        raise NumericalError("chain initialized outside the prior support")
    ll0 = _check_log_density(log_lik_fn(init), "log-likelihood") if posterior_mode else 0.0
    state = ChainState(weights=init.copy(), log_prior=lp0, log_lik=ll0)
    k = subset_size(init.size, cfg.update_fraction)

    window = cfg.proposal_window
    if cfg.adapt_iterations > 0 and window > 0:
        done = 0
        while done < cfg.adapt_iterations:
            block = min(_ADAPT_BLOCK, cfg.adapt_iterations - done)
            accepted = sum(
                _mh_kernel(state, log_prior_fn, log_lik_fn, posterior_mode, window, k, rng)
                for _ in range(block)
            )
            window *= math.exp(accepted / block - TARGET_ACCEPTANCE)
            done += block
        # Frozen from here on; adaptation steps are not recorded.
        state.iteration = 0
        state.accept_count = 0

    n_ret = cfg.n_retained
    n_w = init.size
    out_iter = np.empty(n_ret, dtype=np.int64)
    out_lp = np.empty(n_ret)
    out_ll = np.empty(n_ret)
    out_w = np.empty((n_ret, n_w))
    kept = 0
    for i in range(1, cfg.iterations + 1):
        _mh_kernel(state, log_prior_fn, log_lik_fn, posterior_mode, window, k, rng)
        if i > cfg.burn_in and (i - cfg.burn_in) % cfg.thinning == 0 and kept < n_ret:
            out_iter[kept] = i
            out_lp[kept] = state.log_prior
            out_ll[kept] = state.log_lik
            out_w[kept] = state.weights
            kept += 1
    return MhResult(
        iterations=out_iter[:kept],
        log_priors=out_lp[:kept],
        log_liks=out_ll[:kept],
        weights=out_w[:kept],
        acceptance_rate=state.accept_count / cfg.iterations,
        tuned_window=window,
    )


def run_chain(X, y, arch: network.NetworkArchitecture, prior: priors.PriorSpec,
              cfg: McmcConfig) -> PosteriorTrace:
    """Sample BNN weights from the posterior or the prior, per cfg.mode.

    Weights are initialized by one prior draw per entry; the run is fully
    deterministic given cfg.seed. Prior-only chains ignore the data.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    init = priors.sample_prior(prior, arch.n_weights, rng)
    if cfg.mode == POSTERIOR:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=int)
        if X.shape[0] == 0:
            raise InvalidInputError("posterior chain needs non-empty data")
        if X.shape[1] != arch.n_features or np.any(y < 0) or np.any(y >= arch.n_classes):
            raise InvalidInputError("data does not match the architecture")
        log_lik_fn = network.make_log_likelihood(arch, X, y)
    else:
        log_lik_fn = None
    result = run_mh(lambda w: priors.log_prior(prior, w), log_lik_fn, init, cfg, rng)
    return PosteriorTrace(
        arch=arch,
        prior=prior,
        mode=cfg.mode,
        seed=cfg.seed,
        burn_in=cfg.burn_in,
        thinning=cfg.thinning,
        iterations=result.iterations,
        log_priors=result.log_priors,
        log_liks=result.log_liks,
        weights=result.weights,
        acceptance_rate=result.acceptance_rate,
    )


def effective_sample_size(series) -> float:
    """ESS = N / (1 + 2 sum of autocorrelations up to the first non-positive
    lag). A zero-variance series returns N and emits a warning."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 10:
        raise InvalidInputError("ESS needs a 1-D series of at least 10 values")
    n = x.size
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        warnings.warn("ESS of a constant series is reported as N", stacklevel=2)
        return float(n)
    # Autocovariances for all lags at once via FFT convolution.
    nfft = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(spec * np.conj(spec), nfft)[:n]
    rho = acov / acov[0]
    s = 0.0
    for lag in range(1, n):
        if rho[lag] <= 0:
            break
        s += rho[lag]
    return min(float(n), n / (1.0 + 2.0 * s))


# ---------------------------------------------------------------------------
# Trace file format: one JSON header line, then one CSV record per retained
# sample with round-trip decimal precision.


def save_trace(trace: PosteriorTrace, path) -> None:
    header = {
        "architecture": trace.arch.to_dict(),
        "prior": trace.prior.to_dict() if trace.prior is not None else None,
        "mode": trace.mode,
        "seed": trace.seed,
        "burn_in": trace.burn_in,
        "thinning": trace.thinning,
        "acceptance_rate": trace.acceptance_rate,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i in range(trace.n_samples):
            row = [str(int(trace.iterations[i])), repr(float(trace.log_priors[i])),
                   repr(float(trace.log_liks[i]))]
            row.extend(repr(v) for v in trace.weights[i].tolist())
            fh.write(",".join(row) + "\n")


def load_trace(path) -> PosteriorTrace:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise DataFormatError(f"{path}: empty trace file")
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: bad trace header: {exc}") from exc
        try:
            arch = network.NetworkArchitecture.from_dict(header["architecture"])
            prior_d = header["prior"]
            prior = priors.PriorSpec.from_dict(prior_d) if prior_d is not None else None
            mode = header["mode"]
            seed = int(header["seed"])
            burn_in = int(header["burn_in"])
            thinning = int(header["thinning"])
            acceptance = float(header["acceptance_rate"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: incomplete trace header: {exc}") from exc

        iters, lps, lls, ws = [], [], [], []
        n_w = arch.n_weights
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3 + n_w:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {3 + n_w} fields, found {len(parts)}"
                )
            try:
                iters.append(int(parts[0]))
                lps.append(float(parts[1]))
                lls.append(float(parts[2]))
                ws.append([float(p) for p in parts[3:]])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    return PosteriorTrace(
        arch=arch, prior=prior, mode=mode, seed=seed, burn_in=burn_in,
        thinning=thinning,
        iterations=np.asarray(iters, dtype=np.int64),
        log_priors=np.asarray(lps), log_liks=np.asarray(lls),
        weights=np.asarray(ws, dtype=float).reshape(len(iters), n_w),
        acceptance_rate=acceptance,
    )
