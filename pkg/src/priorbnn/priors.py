"""The four weight-prior families: uniform, standard normal, truncated
Cauchy, and Laplace.

Every family is i.i.d. across weights. The uniform and truncated Cauchy
share a single boundary parameter ``bound`` (default 5); the normal is
fixed at N(0, 1) and the Laplace at L(0, 1). The truncated Cauchy is a
C(0, 1) density restricted to [-bound, bound] and renormalized by
(2/pi) * arctan(bound).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

UNIFORM = "uniform"
NORMAL = "normal"
CAUCHY = "cauchy"
LAPLACE = "laplace"
PRIOR_KINDS = (UNIFORM, NORMAL, CAUCHY, LAPLACE)

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorSpec:
    """A prior family plus its boundary parameter (used by uniform/cauchy)."""

    kind: str
    bound: float = 5.0

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ConfigError(f"unknown prior kind {self.kind!r}; expected one of {PRIOR_KINDS}")
        if not (self.bound > 0 and math.isfinite(self.bound)):
            raise ConfigError(f"prior bound must be a positive real, got {self.bound}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "bound": self.bound}

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        return cls(str(d["kind"]), float(d.get("bound", 5.0)))


def truncated_cauchy_mass(bound: float) -> float:
    """Mass of the standard Cauchy on [-bound, bound]: (2/pi) arctan(bound)."""
    return (2.0 / math.pi) * math.atan(bound)


def log_density_weight(spec: PriorSpec, w: float) -> float:
    """Log prior density of a single weight; -inf outside bounded supports."""
    b = spec.bound
    if spec.kind == UNIFORM:
        return -math.log(2.0 * b) if -b <= w <= b else -math.inf
    if spec.kind == NORMAL:
        return -0.5 * (w * w + _LOG_2PI)
    if spec.kind == CAUCHY:
        if not -b <= w <= b:
            return -math.inf
        return -math.log(math.pi * (1.0 + w * w)) - math.log(truncated_cauchy_mass(b))
    # Laplace(0, 1)
    return -abs(w) - math.log(2.0)


def log_prior(spec: PriorSpec, weights: np.ndarray) -> float:
    """Joint log density of an i.i.d. weight vector; -inf if any entry is
    outside the support."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    b = spec.bound
    if spec.kind == UNIFORM:
        if np.any(np.abs(w) > b):
            return -math.inf
        return -n * math.log(2.0 * b)
    if spec.kind == NORMAL:
        return float(-0.5 * np.sum(w * w) - 0.5 * n * _LOG_2PI)
    if spec.kind == CAUCHY:
        if np.any(np.abs(w) > b):
            return -math.inf
        log_norm = math.log(math.pi) + math.log(truncated_cauchy_mass(b))
        return float(-np.sum(np.log1p(w * w)) - n * log_norm)
    return float(-np.sum(np.abs(w)) - n * math.log(2.0))


def sample_prior(spec: PriorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. draws from the prior family."""
    b = spec.bound
    if spec.kind == UNIFORM:
        return rng.uniform(-b, b, size=n)
    if spec.kind == NORMAL:
        return rng.standard_normal(n)
    if spec.kind == CAUCHY:
        # Inverse-CDF restricted to [-b, b]: u is uniform on [F(-b), F(b)]
        # where F is the standard Cauchy CDF.
        lo = 0.5 + math.atan(-b) / math.pi
        hi = 0.5 + math.atan(b) / math.pi
        u = rng.uniform(lo, hi, size=n)
        return np.tan(math.pi * (u - 0.5))
    return rng.laplace(0.0, 1.0, size=n)


def sample_prior_weight(spec: PriorSpec, rng: np.random.Generator) -> float:
    """A single i.i.d. draw from the prior family."""
    return float(sample_prior(spec, 1, rng)[0])


def cdf_weight(spec: PriorSpec, w: float) -> float:
    """Analytic CDF of a single-weight prior (used by sampler diagnostics)."""
    b = spec.bound
    if spec.kind == UNIFORM:
        return min(1.0, max(0.0, (w + b) / (2.0 * b)))
    if spec.kind == NORMAL:
        return 0.5 * math.erfc(-w / math.sqrt(2.0))
    if spec.kind == CAUCHY:
        if w <= -b:
            return 0.0
        if w >= b:
            return 1.0
        lo = 0.5 + math.atan(-b) / math.pi
        hi = 0.5 + math.atan(b) / math.pi
        return (0.5 + math.atan(w) / math.pi - lo) / (hi - lo)
    return 0.5 * math.exp(w) if w < 0 else 1.0 - 0.5 * math.exp(-w)
