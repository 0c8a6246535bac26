"""Training objectives with values and analytic gradients w.r.t. logits.

Every loss returns a LossOutput pairing the scalar value with the exact
gradient of that value with respect to the raw logits, so the network
backward pass can start directly from ``grad_logits``. Per-sample losses
are averaged over the batch. Logarithms are natural.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from radapt.distmath import (
    DEFAULT_SIGMA_FLOOR,
    QualityLabel,
    RatingScale,
    discretize_batch,
    pseudo_distribution,
)
from radapt.errors import ConfigError, DataError
from radapt.nn.layers import log_softmax


@dataclass(frozen=True)
class LossOutput:
    """Scalar loss value plus its gradient w.r.t. the input logits."""

    value: float
    grad_logits: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"loss value is not finite: {self.value}")
        if not np.all(np.isfinite(self.grad_logits)):
            raise ValueError("loss gradient contains non-finite entries")


@dataclass(frozen=True)
class AdaptWeights:
    """Per-target weights for the combined adaptation objective.

    lambda_ent is not part of the combination rule proper (the entropy
    term enters with coefficient 1); it exists so ablations can switch
    individual terms off without a separate code path.
    """

    lambda_div: float = 1.0
    lambda_gau: float = 0.2
    lambda_ent: float = 1.0

    def __post_init__(self):
        for name in ("lambda_div", "lambda_gau", "lambda_ent"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


def _probs(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise ValueError(f"logits must be (B, C) with B >= 1, got {logits.shape}")
    ls = log_softmax(logits)
    return np.exp(ls), ls


def source_loss(
    logits: np.ndarray,
    labels: Sequence[QualityLabel],
    scale: RatingScale,
    sigma_floor: float = DEFAULT_SIGMA_FLOOR,
    squared: bool = True,
) -> LossOutput:
    """Supervised objective: cross-entropy to the discretized label
    distribution plus a penalty on the predicted-mean error.

    ``squared`` selects (mu - mu_hat)^2 per sample; False uses the
    absolute deviation instead.
    """
    p, ls = _probs(logits)
    b, _ = p.shape
    if len(labels) != b:
        raise DataError(f"got {len(labels)} labels for a batch of {b}")
    means = np.array([lab.mean for lab in labels], dtype=np.float64)
    variances = np.array([lab.variance for lab in labels], dtype=np.float64)
    if np.any(means < scale.lower) or np.any(means > scale.upper):
        raise DataError("label mean outside the rating scale")
    q = discretize_batch(means, variances, scale, sigma_floor)

    ce = -np.sum(q * ls, axis=1)
    mu_hat = np.sum(p * scale.levels, axis=1)
    err = mu_hat - means
    if squared:
        mse = err**2
        coeff = 2.0 * err
    else:
        mse = np.abs(err)
        coeff = np.sign(err)
    value = float(np.mean(ce + mse))
    # d mu_hat / d z_j = p_j (l_j - mu_hat)
    grad = (p - q) + coeff[:, None] * p * (scale.levels - mu_hat[:, None])
    return LossOutput(value, grad / b)


def entropy_loss(logits: np.ndarray) -> LossOutput:
    """Mean per-image entropy of the predicted distributions."""
    p, ls = _probs(logits)
    b = p.shape[0]
    h = -np.sum(p * ls, axis=1)
    # dH/dz_j = -p_j (log p_j + H)
    grad = -p * (ls + h[:, None])
    return LossOutput(float(np.mean(h)), grad / b)


def diversity_loss(logits: np.ndarray) -> LossOutput:
    """Entropy of the batch-averaged prediction.

    Low values mean the batch collapsed onto one rating; training
    subtracts this term to push predictions apart. With B=1 this equals
    the per-image entropy and stops measuring diversity, hence the
    warning.
    """
    p, _ = _probs(logits)
    b = p.shape[0]
    if b < 2:
        warnings.warn("diversity over a single-image batch reduces to entropy", stacklevel=2)
    q_bar = np.mean(p, axis=0)
    log_q = np.where(q_bar > 0.0, np.log(np.where(q_bar > 0.0, q_bar, 1.0)), 0.0)
    value = float(-np.sum(q_bar * log_q))
    # per row: (1/B) p_j (-log qbar_j + sum_k p_k log qbar_k)
    inner = np.sum(p * log_q, axis=1)
    grad = p * (inner[:, None] - log_q) / b
    return LossOutput(value, grad)


def gaussian_reg_loss(
    logits: np.ndarray,
    scale: RatingScale,
    sigma_floor: float = DEFAULT_SIGMA_FLOOR,
) -> LossOutput:
    """Cross-entropy against the prediction's own moment-matched
    discretized Gaussian, with that target held constant.

    The target q~ is recomputed every call but treated as data, so the
    gradient is the plain cross-entropy one: (q_hat - q~) per sample.
    """
    p, ls = _probs(logits)
    b = p.shape[0]
    q_t = pseudo_distribution(p, scale, sigma_floor)
    value = float(np.mean(-np.sum(q_t * ls, axis=1)))
    grad = (p - q_t) / b
    return LossOutput(value, grad)


@dataclass(frozen=True)
class DomainLosses:
    """One target domain's loss decomposition.

    ``combined`` is this domain's own combination (before the 1/T
    average); ``grad_logits`` is the gradient of the overall total,
    which includes the 1/T factor.
    """

    entropy: float
    diversity: float
    gaussian: float
    combined: float
    grad_logits: np.ndarray


def total_adaptation_loss(
    logits_by_domain: Mapping[str, np.ndarray],
    weights: Mapping[str, AdaptWeights] | AdaptWeights,
    scale: RatingScale,
    sigma_floor: float = DEFAULT_SIGMA_FLOOR,
) -> tuple[float, dict[str, DomainLosses]]:
    """Combine entropy, diversity, and Gaussian terms over target domains.

    Per domain: lambda_ent * L_ent - lambda_div * L_div + lambda_gau * L_Gau,
    averaged across the T domains. A single AdaptWeights applies to all
    domains; a mapping must cover every domain present.
    """
    if not logits_by_domain:
        raise ConfigError("total_adaptation_loss needs at least one target domain")
    n = len(logits_by_domain)
    total = 0.0
    out: dict[str, DomainLosses] = {}
    for domain, logits in logits_by_domain.items():
        if isinstance(weights, AdaptWeights):
            w = weights
        else:
            if domain not in weights:
                raise ConfigError(f"no adaptation weights for domain {domain!r}")
            w = weights[domain]
        ent = entropy_loss(logits)
        div = diversity_loss(logits)
        gau = gaussian_reg_loss(logits, scale, sigma_floor)
        combined = w.lambda_ent * ent.value - w.lambda_div * div.value + w.lambda_gau * gau.value
        grad = (
            w.lambda_ent * ent.grad_logits
            - w.lambda_div * div.grad_logits
            + w.lambda_gau * gau.grad_logits
        ) / n
        total += combined
        out[domain] = DomainLosses(ent.value, div.value, gau.value, combined, grad)
    return total / n, out
