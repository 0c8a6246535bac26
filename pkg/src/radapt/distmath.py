"""Discrete rating-distribution math.

Subjective quality labels arrive as a mean opinion score plus a rater
variance. This module converts such labels into probability vectors over
an equally spaced grid of rating levels, using a Gaussian model truncated
to the rating range, and converts probability vectors back into moments.

Everything here runs in float64 regardless of the dtype used by the
network; these vectors are the reference currency for losses and metrics.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import ndtr

DEFAULT_SIGMA_FLOOR = 0.1
SIMPLEX_TOL = 1e-9

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def make_levels(lower: float, upper: float, n_levels: int) -> np.ndarray:
    """Equally spaced rating levels, endpoints included.

    Level k (0-based) sits at lower + k / (n_levels - 1) * (upper - lower),
    so the first and last level coincide with the range bounds exactly.
    """
    if not (np.isfinite(lower) and np.isfinite(upper)):
        raise ValueError("rating range bounds must be finite")
    if not lower < upper:
        raise ValueError(f"rating range is empty: [{lower}, {upper}]")
    if n_levels < 2:
        raise ValueError(f"need at least two rating levels, got {n_levels}")
    k = np.arange(n_levels, dtype=np.float64)
    return lower + k / (n_levels - 1) * (upper - lower)


@dataclass(frozen=True)
class RatingScale:
    """An equally spaced grid of discrete rating levels on [lower, upper]."""

    lower: float = 1.0
    upper: float = 5.0
    n_levels: int = 5

    def __post_init__(self) -> None:
        make_levels(self.lower, self.upper, self.n_levels)  # validates

    @cached_property
    def levels(self) -> np.ndarray:
        return make_levels(self.lower, self.upper, self.n_levels)

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.n_levels - 1)


@dataclass(frozen=True)
class QualityLabel:
    """Mean opinion score with its rater variance, on the scale's units."""

    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.mean) and np.isfinite(self.variance)):
            raise ValueError("label mean and variance must be finite")
        if self.variance < 0:
            raise ValueError(f"label variance must be >= 0, got {self.variance}")


def truncated_gaussian_density(
    x: float | np.ndarray, label: QualityLabel, scale: RatingScale
) -> float | np.ndarray:
    """Gaussian density restricted to the rating range and renormalised.

    The normaliser is the Gaussian CDF mass inside [lower, upper]; points
    outside the range get density zero.
    """
    if label.variance <= 0:
        raise ValueError(f"variance must be positive, got {label.variance}")
    xs = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(xs)):
        raise ValueError("evaluation points must be finite")
    sigma = np.sqrt(label.variance)
    pdf = np.exp(-((xs - label.mean) ** 2) / (2.0 * label.variance)) / (sigma * _SQRT_2PI)
    mass = ndtr((scale.upper - label.mean) / sigma) - ndtr((scale.lower - label.mean) / sigma)
    inside = (xs >= scale.lower) & (xs <= scale.upper)
    out = np.where(inside, pdf / mass, 0.0)
    return float(out) if np.isscalar(x) or out.ndim == 0 else out


def effective_sigma(
    variance: float | np.ndarray, sigma_floor: float = DEFAULT_SIGMA_FLOOR
) -> float | np.ndarray:
    """Standard deviation used for discretization, never below the floor."""
    if sigma_floor <= 0:
        raise ValueError(f"sigma_floor must be positive, got {sigma_floor}")
    return np.maximum(np.sqrt(np.maximum(variance, 0.0)), sigma_floor)


def discretize_batch(
    means: np.ndarray,
    variances: np.ndarray,
    scale: RatingScale,
    sigma_floor: float = DEFAULT_SIGMA_FLOOR,
) -> np.ndarray:
    """Probability vectors over the rating levels for a batch of labels.

    Evaluates the label's Gaussian at each level and renormalises over the
    levels. The truncation mass cancels in that ratio, so untruncated
    exponents suffice; they are shifted by their per-row maximum before
    exponentiation to keep the arithmetic stable for small sigma.
    """
    means = np.asarray(means, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    if not (np.all(np.isfinite(means)) and np.all(np.isfinite(variances))):
        raise ValueError("label means and variances must be finite")
    if np.any(means < scale.lower) or np.any(means > scale.upper):
        raise ValueError("label means must lie within the rating range")
    sigma = effective_sigma(variances, sigma_floor)
    z = (means[..., None] - scale.levels) / sigma[..., None]
    expo = -0.5 * z**2
    expo -= expo.max(axis=-1, keepdims=True)
    w = np.exp(expo)
    return w / w.sum(axis=-1, keepdims=True)


def discretize(
    label: QualityLabel, scale: RatingScale, sigma_floor: float = DEFAULT_SIGMA_FLOOR
) -> np.ndarray:
    """Probability vector over the rating levels for one label."""
    return discretize_batch(
        np.asarray(label.mean), np.asarray(label.variance), scale, sigma_floor
    )


# Moments use explicit multiply-sum rather than matmul: BLAS picks different
# accumulation orders for matrix-vector and vector-vector products, and batched
# vs single-row calls must agree bit for bit.


def dist_mean(probs: np.ndarray, scale: RatingScale) -> float | np.ndarray:
    """Expected rating level under a probability vector (last axis = levels)."""
    probs = np.asarray(probs, dtype=np.float64)
    out = np.sum(probs * scale.levels, axis=-1)
    return float(out) if out.ndim == 0 else out


def dist_var(probs: np.ndarray, scale: RatingScale) -> float | np.ndarray:
    """Variance of the rating level under a probability vector."""
    probs = np.asarray(probs, dtype=np.float64)
    mean = np.sum(probs * scale.levels, axis=-1)
    out = np.sum(probs * scale.levels**2, axis=-1) - mean**2
    # clamp tiny negatives produced by cancellation on near-degenerate vectors
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def pseudo_distribution(
    probs: np.ndarray, scale: RatingScale, sigma_floor: float = DEFAULT_SIGMA_FLOOR
) -> np.ndarray:
    """Gaussian-shaped stand-in with the same first two moments.

    Takes a predicted probability vector, extracts mean and variance, and
    re-discretizes them. The result is detached from whatever produced the
    input: callers treat it as a constant target.
    """
    probs = np.asarray(probs, dtype=np.float64)
    mean = np.sum(probs * scale.levels, axis=-1)
    var = np.maximum(np.sum(probs * scale.levels**2, axis=-1) - mean**2, 0.0)
    return discretize_batch(mean, var, scale, sigma_floor)


def is_simplex(probs: np.ndarray, tol: float = SIMPLEX_TOL) -> bool:
    """True when every row is non-negative and sums to one within tol."""
    probs = np.asarray(probs, dtype=np.float64)
    if not np.all(np.isfinite(probs)):
        return False
    if np.any(probs < -tol):
        return False
    return bool(np.all(np.abs(probs.sum(axis=-1) - 1.0) <= tol))


def check_simplex(probs: np.ndarray, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate a probability vector (or batch of rows); returns the input."""
    probs = np.asarray(probs, dtype=np.float64)
    if not is_simplex(probs, tol):
        raise ValueError("expected rows on the probability simplex")
    return probs
