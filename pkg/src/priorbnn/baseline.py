"""Gradient-descent comparison model: the same two-hidden-layer network
trained by Adam on cross-entropy with inverted dropout, and MC-dropout
prediction support.

Dropout masks apply to the hidden-layer activations only; survivors are
scaled by 1/(1-p) at train time so deterministic inference needs no
rescaling. Prediction support is the frequency with which the modal class
wins the argmax across stochastic forward passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import network
from .errors import ConfigError, InvalidInputError, TrainingError
from .network import NetworkArchitecture


@dataclass(frozen=True)
class BaselineConfig:
    """Training and MC-dropout parameters for the comparison network."""

    dropout_rate: float = 0.2
    learning_rate: float = 0.001
    max_epochs: int = 500
    batch_size: int = 32
    validation_fraction: float = 0.2
    mc_samples: int = 1000
    support_threshold: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError(
                f"validation_fraction must be in (0, 1), got {self.validation_fraction}"
            )
        if self.mc_samples < 1:
            raise ConfigError(f"mc_samples must be positive, got {self.mc_samples}")
        if not 0 < self.support_threshold <= 1:
            raise ConfigError(
                f"support_threshold must be in (0, 1], got {self.support_threshold}"
            )

    def to_dict(self) -> dict:
        return {
            "dropout_rate": self.dropout_rate,
            "learning_rate": self.learning_rate,
            "max_epochs": self.max_epochs,
            "batch_size": self.batch_size,
            "validation_fraction": self.validation_fraction,
            "mc_samples": self.mc_samples,
            "support_threshold": self.support_threshold,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BaselineConfig":
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})


def sample_masks(arch: NetworkArchitecture, p: float, rng: np.random.Generator,
                 n_rows: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Per-row inverted-dropout masks for both hidden layers: entries are 0
    with probability p, else 1/(1-p)."""
    h1, h2 = arch.hidden
    if p == 0.0:
        return np.ones((n_rows, h1)), np.ones((n_rows, h2))
    keep = 1.0 / (1.0 - p)
    m1 = (rng.random((n_rows, h1)) >= p) * keep
    m2 = (rng.random((n_rows, h2)) >= p) * keep
    return m1, m2


def forward_dropout(arch: NetworkArchitecture, w: np.ndarray, x: np.ndarray,
                    p: float, masks=None, rng: np.random.Generator | None = None,
                    train_mode: bool = True) -> np.ndarray:
    """Class probabilities for one input under dropout.

    In train/MC mode masks are either supplied or drawn from ``rng``; with
    train_mode False (or p == 0) this is the plain deterministic forward.
    """
    x = np.asarray(x, dtype=float)
    if not train_mode or p == 0.0:
        return network.forward(arch, w, x)
    if masks is None:
        if rng is None:
            raise InvalidInputError("dropout forward needs masks or an rng")
        masks = sample_masks(arch, p, rng)
    m1, m2 = masks
    return _forward_masked(arch, w, network.augment(x[None, :]),
                           np.atleast_2d(m1), np.atleast_2d(m2))[0]


def _forward_masked(arch, w, Xb, m1, m2):
    w1, w2, w3 = network.unpack_weights(arch, w)
    a1 = np.maximum(Xb @ w1, 0.0) * m1
    a2 = np.maximum(a1 @ w2, 0.0) * m2
    return network._softmax(a2 @ w3)


def cross_entropy(arch: NetworkArchitecture, w: np.ndarray, X: np.ndarray,
                  y: np.ndarray, masks=None) -> float:
    """Mean cross-entropy of a batch under fixed dropout masks (or none)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int)
    Xb = network.augment(X)
    if masks is None:
        probs = network.forward_aug(arch, w, Xb)
    else:
        probs = _forward_masked(arch, w, Xb, masks[0], masks[1])
    picked = np.maximum(probs[np.arange(len(y)), y], network.LOG_PROB_FLOOR)
    return float(-np.mean(np.log(picked)))


def gradients(arch: NetworkArchitecture, w: np.ndarray, X: np.ndarray,
              y: np.ndarray, masks=None) -> np.ndarray:
    """Backpropagated gradient of the mean cross-entropy, WeightVector layout.

    ``masks`` fixes the dropout pattern (one row per batch row); None means
    no dropout.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int)
    if X.shape[0] == 0:
        raise InvalidInputError("gradient of an empty batch is undefined")
    n = X.shape[0]
    Xb = network.augment(X)
    w1, w2, w3 = network.unpack_weights(arch, w)
    if masks is None:
        m1 = m2 = None
    else:
        m1, m2 = np.atleast_2d(masks[0]), np.atleast_2d(masks[1])

    z1 = Xb @ w1
    a1 = np.maximum(z1, 0.0)
    if m1 is not None:
        a1 = a1 * m1
    z2 = a1 @ w2
    a2 = np.maximum(z2, 0.0)
    if m2 is not None:
        a2 = a2 * m2
    probs = network._softmax(a2 @ w3)

    dz3 = probs.copy()
    dz3[np.arange(n), y] -= 1.0
    dz3 /= n
    dw3 = a2.T @ dz3
    da2 = dz3 @ w3.T
    if m2 is not None:
        da2 = da2 * m2
    dz2 = da2 * (z2 > 0)
    dw2 = a1.T @ dz2
    da1 = dz2 @ w2.T
    if m1 is not None:
        da1 = da1 * m1
    dz1 = da1 * (z1 > 0)
    dw1 = Xb.T @ dz1
    return network.pack_weights(arch, (dw1, dw2, dw3))


@dataclass
class AdamState:
    """First/second-moment accumulators plus the step counter."""

    weights: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def init(cls, weights: np.ndarray) -> "AdamState":
        w = np.asarray(weights, dtype=float)
        return cls(weights=w.copy(), m=np.zeros_like(w), v=np.zeros_like(w))


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_step(state: AdamState, grad: np.ndarray, lr: float) -> AdamState:
    """One bias-corrected Adam update; returns the new state."""
    grad = np.asarray(grad, dtype=float)
    t = state.t + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grad
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grad * grad
    m_hat = m / (1.0 - ADAM_BETA1 ** t)
    v_hat = v / (1.0 - ADAM_BETA2 ** t)
    weights = state.weights - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return AdamState(weights=weights, m=m, v=v, t=t)


def init_weights(arch: NetworkArchitecture, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform initialization: U(-r, r), r = sqrt(6/(fan_in+fan_out))."""
    mats = []
    for rows, cols in arch.layer_shapes:
        r = math.sqrt(6.0 / (rows + cols))
        mats.append(rng.uniform(-r, r, size=(rows, cols)))
    return network.pack_weights(arch, mats)


@dataclass
class TrainingLog:
    """Per-epoch losses plus the epoch whose weights were returned."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    warnings: list[str] = field(default_factory=list)


def train_baseline(X, y, arch: NetworkArchitecture, cfg: BaselineConfig):
    """Adam training with dropout; returns the weight snapshot from the
    epoch with minimum validation cross-entropy, plus the training log.

    The last validation_fraction of a seeded shuffle is held out for epoch
    selection. Raises TrainingError if the loss goes non-finite.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int)
    if X.shape[0] < 2:
        raise InvalidInputError("baseline training needs at least 2 rows")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))

    order = rng.permutation(X.shape[0])
    n_val = max(1, int(round(cfg.validation_fraction * X.shape[0])))
    if n_val >= X.shape[0]:
        raise ConfigError("validation_fraction leaves no training rows")
    val_idx, fit_idx = order[:n_val], order[n_val:]
    X_fit, y_fit = X[fit_idx], y[fit_idx]
    X_val, y_val = X[val_idx], y[val_idx]

    state = AdamState.init(init_weights(arch, rng))
    log = TrainingLog()
    best_weights = state.weights.copy()
    best_val = cross_entropy(arch, state.weights, X_val, y_val)
    log.best_epoch = 0
    if cfg.max_epochs == 0:
        log.warnings.append("max_epochs=0: returning initial weights")
        return best_weights, log

    n_fit = X_fit.shape[0]
    batch = min(cfg.batch_size, n_fit)
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(n_fit)
        for start in range(0, n_fit, batch):
            idx = perm[start : start + batch]
            masks = sample_masks(arch, cfg.dropout_rate, rng, n_rows=len(idx))
            grad = gradients(arch, state.weights, X_fit[idx], y_fit[idx], masks)
            state = adam_step(state, grad, cfg.learning_rate)
        train_loss = cross_entropy(arch, state.weights, X_fit, y_fit)
        val_loss = cross_entropy(arch, state.weights, X_val, y_val)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        log.train_loss.append(train_loss)
        log.val_loss.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_weights = state.weights.copy()
            log.best_epoch = epoch
    return best_weights, log


def mc_dropout_predict_many(w: np.ndarray, arch: NetworkArchitecture,
                            X: np.ndarray, cfg: BaselineConfig,
                            rng: np.random.Generator | None = None,
                            return_probs: bool = False):
    """MC-dropout predictions for a batch.

    Returns (modal predicted classes, support frequencies): the fraction of
    the mc_samples stochastic forwards whose argmax equals the modal class.
    ``return_probs`` appends the full per-class vote distribution.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n = X.shape[0]
    Xb = network.augment(X)
    votes = np.zeros((n, arch.n_classes), dtype=np.int64)
    rows = np.arange(n)
    if cfg.dropout_rate == 0.0:
        # No stochasticity: every sample votes identically.
        pred = network.forward_aug(arch, w, Xb).argmax(axis=1)
        votes[rows, pred] = cfg.mc_samples
    else:
        w1, w2, w3 = network.unpack_weights(arch, w)
        keep = 1.0 / (1.0 - cfg.dropout_rate)
        a1_base = np.maximum(Xb @ w1, 0.0)
        for _ in range(cfg.mc_samples):
            m1 = (rng.random(w1.shape[1]) >= cfg.dropout_rate) * keep
            m2 = (rng.random(w2.shape[1]) >= cfg.dropout_rate) * keep
            a2 = np.maximum((a1_base * m1) @ w2, 0.0) * m2
            pred = (a2 @ w3).argmax(axis=1)
            votes[rows, pred] += 1
    modal = votes.argmax(axis=1)
    freq = votes[rows, modal] / cfg.mc_samples
    if return_probs:
        return modal, freq, votes / cfg.mc_samples
    return modal, freq


def mc_dropout_predict(w: np.ndarray, arch: NetworkArchitecture, x: np.ndarray,
                       cfg: BaselineConfig,
                       rng: np.random.Generator | None = None):
    """MC-dropout prediction for one input: (predicted class, support freq)."""
    modal, freq = mc_dropout_predict_many(w, arch, np.asarray(x, float)[None, :],
                                          cfg, rng)
    return int(modal[0]), float(freq[0])
