"""Fully connected two-hidden-layer classifier on a flat weight vector.

The network input is augmented with a constant-1 bias feature; the hidden
layers carry no biases. Hidden activations are ReLU, the output layer is a
softmax over classes. All operations are pure functions of their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

# Softmax outputs are floored at this value before taking logs so that
# log-likelihoods stay finite for Metropolis-Hastings comparisons.
LOG_PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class NetworkArchitecture:
    """Layer sizes of the classifier: n_features -> h1 -> h2 -> n_classes."""

    n_features: int
    hidden: tuple[int, int]
    n_classes: int

    def __post_init__(self):
        if self.n_features < 1:
            raise InvalidInputError(f"n_features must be >= 1, got {self.n_features}")
        if len(self.hidden) != 2 or any(h < 1 for h in self.hidden):
            raise InvalidInputError(f"hidden must be two positive widths, got {self.hidden}")
        if self.n_classes < 2:
            raise InvalidInputError(f"n_classes must be >= 2, got {self.n_classes}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def layer_shapes(self) -> tuple[tuple[int, int], ...]:
        h1, h2 = self.hidden
        return ((self.n_features + 1, h1), (h1, h2), (h2, self.n_classes))

    @property
    def n_weights(self) -> int:
        return sum(r * c for r, c in self.layer_shapes)

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "hidden": list(self.hidden),
            "n_classes": self.n_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkArchitecture":
        return cls(int(d["n_features"]), tuple(d["hidden"]), int(d["n_classes"]))


def check_weights(arch: NetworkArchitecture, w: np.ndarray) -> np.ndarray:
    """Validate a flat weight vector against the architecture."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.shape[0] != arch.n_weights:
        raise InvalidInputError(
            f"weight vector has length {w.shape}, architecture needs {arch.n_weights}"
        )
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("weight vector contains non-finite entries")
    return w


def unpack_weights(arch: NetworkArchitecture, w: np.ndarray):
    """Split a flat weight vector into the three row-major layer matrices."""
    w = check_weights(arch, w)
    mats = []
    offset = 0
    for rows, cols in arch.layer_shapes:
        mats.append(w[offset : offset + rows * cols].reshape(rows, cols))
        offset += rows * cols
    return tuple(mats)


def pack_weights(arch: NetworkArchitecture, mats) -> np.ndarray:
    """Inverse of unpack_weights."""
    expected = arch.layer_shapes
    if len(mats) != len(expected):
        raise InvalidInputError(f"expected {len(expected)} matrices, got {len(mats)}")
    parts = []
    for mat, shape in zip(mats, expected):
        mat = np.asarray(mat, dtype=float)
        if mat.shape != shape:
            raise InvalidInputError(f"matrix shape {mat.shape} does not match layer {shape}")
        parts.append(mat.reshape(-1))
    return np.concatenate(parts)


def augment(X: np.ndarray) -> np.ndarray:
    """Append the constant-1 bias column to a feature matrix."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _softmax(logits: np.ndarray) -> np.ndarray:
    # Max-shift keeps exp() from overflowing; the result is unchanged.
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward_many(arch: NetworkArchitecture, w: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Class probabilities for a batch of inputs, shape (n, n_classes)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != arch.n_features:
        raise InvalidInputError(
            f"input has {X.shape[1]} features, architecture needs {arch.n_features}"
        )
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("input features contain non-finite values")
    return forward_aug(arch, w, augment(X))


def forward_aug(arch: NetworkArchitecture, w: np.ndarray, Xb: np.ndarray) -> np.ndarray:
    """Forward pass on a pre-augmented batch (bias column already appended)."""
    w1, w2, w3 = unpack_weights(arch, w)
    a1 = np.maximum(Xb @ w1, 0.0)
    a2 = np.maximum(a1 @ w2, 0.0)
    return _softmax(a2 @ w3)


def forward(arch: NetworkArchitecture, w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Class probability vector for a single input."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidInputError(f"expected a single feature vector, got shape {x.shape}")
    return forward_many(arch, w, x[None, :])[0]


def make_log_likelihood(arch: NetworkArchitecture, X: np.ndarray, y: np.ndarray):
    """Build a fast log-likelihood closure over a fixed dataset.

    Equivalent to summing log forward()[y] with probabilities floored at
    LOG_PROB_FLOOR, but computed as floored log-softmax with reused buffers,
    which keeps the MH inner loop cheap.
    """
    Xb = np.ascontiguousarray(augment(X))
    y = np.asarray(y, dtype=int)
    n = Xb.shape[0]
    rows = np.arange(n)
    (_, h1), (_, h2), (_, n_classes) = arch.layer_shapes
    sizes = [r * c for r, c in arch.layer_shapes]
    o1, o2 = sizes[0], sizes[0] + sizes[1]
    a1 = np.empty((n, h1))
    a2 = np.empty((n, h2))
    z = np.empty((n, n_classes))
    log_floor = math.log(LOG_PROB_FLOOR)
    shapes = arch.layer_shapes

    def log_lik(w: np.ndarray) -> float:
        np.dot(Xb, w[:o1].reshape(shapes[0]), out=a1)
        np.maximum(a1, 0.0, out=a1)
        np.dot(a1, w[o1:o2].reshape(shapes[1]), out=a2)
        np.maximum(a2, 0.0, out=a2)
        np.dot(a2, w[o2:].reshape(shapes[2]), out=z)
        m = z.max(axis=1)
        np.subtract(z, m[:, None], out=z)
        picked = z[rows, y].copy()
        np.exp(z, out=z)
        log_probs = picked - np.log(z.sum(axis=1))
        return float(np.sum(np.maximum(log_probs, log_floor)))

    return log_lik


def log_likelihood_aug(arch, w, Xb: np.ndarray, y: np.ndarray) -> float:
    """Categorical log-likelihood on a pre-augmented batch."""
    w1, w2, w3 = unpack_weights(arch, w)
    a1 = np.maximum(Xb @ w1, 0.0)
    z = np.maximum(a1 @ w2, 0.0) @ w3
    m = z.max(axis=1)
    picked = z[np.arange(len(y)), y] - m
    log_probs = picked - np.log(np.exp(z - m[:, None]).sum(axis=1))
    return float(np.sum(np.maximum(log_probs, math.log(LOG_PROB_FLOOR))))


def log_likelihood(arch: NetworkArchitecture, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Sum of log softmax probabilities of the true labels.

    Always finite (probabilities are floored before the log) and <= 0.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int)
    if X.shape[0] == 0:
        raise InvalidInputError("log_likelihood needs a non-empty dataset")
    if y.shape != (X.shape[0],):
        raise InvalidInputError(f"labels shape {y.shape} does not match {X.shape[0]} rows")
    if np.any(y < 0) or np.any(y >= arch.n_classes):
        raise InvalidInputError("labels out of range for architecture")
    if X.shape[1] != arch.n_features:
        raise InvalidInputError(
            f"input has {X.shape[1]} features, architecture needs {arch.n_features}"
        )
    return log_likelihood_aug(arch, w, augment(X), y)


def predict_class(probs: np.ndarray) -> int:
    """Index of the largest probability; ties go to the lowest index."""
    probs = np.asarray(probs, dtype=float)
    if probs.size == 0:
        raise InvalidInputError("cannot predict from an empty probability vector")
    return int(np.argmax(probs))
