"""Consistency-training loss pair.

Supervised cross-entropy on weak views, thresholded pseudo-label
cross-entropy on strong views, combined as L = L_s + lambda_u * L_u.
All functions operate on logits/probabilities; the trainer wires model
forward passes and augmentation around them. Gradients are returned at the
logits so they can be pushed through the classifier's backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .nn import log_softmax, softmax


@dataclass
class PseudoBatch:
    """Frozen weak-view predictions for one unlabeled batch.

    `weak_probs` is treated as a constant: no gradient ever flows through it.
    `mask` stays all-False until thresholds are applied.
    """

    weak_probs: np.ndarray          # (mu, N)
    labels: np.ndarray              # (mu,) argmax class ids
    confidences: np.ndarray         # (mu,) max prob per row
    source_indices: np.ndarray      # (mu,) positions in the unlabeled pool
    mask: np.ndarray = None

    def __post_init__(self):
        if self.mask is None:
            self.mask = np.zeros(len(self.labels), dtype=bool)

    @property
    def num_classes(self):
        return self.weak_probs.shape[1]


@dataclass
class UnsupReport:
    loss: float
    grad_logits: np.ndarray
    mask: np.ndarray
    normalizer: float
    included_count: int
    per_class_included: np.ndarray


@dataclass
class LossReport:
    supervised: float
    unsupervised: float
    lambda_u: float
    total: float
    included_count: int
    per_class_included: list


def supervised_loss(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the labeled batch; returns (L_s, dL/dlogits)."""
    b, n = logits.shape
    if b < 1:
        raise DataError("empty labeled batch")
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= n:
        raise DataError("label out of range")
    logp = log_softmax(logits)
    ls = -logp[np.arange(b), labels].mean()
    grad = softmax(logits)
    grad[np.arange(b), labels] -= 1.0
    grad /= b
    return ls, grad


def make_pseudo_batch(weak_probs: np.ndarray, source_indices) -> PseudoBatch:
    """Freeze weak-view probabilities into pseudo-labels and confidences."""
    weak_probs = np.asarray(weak_probs)
    labels = weak_probs.argmax(axis=1)
    conf = weak_probs.max(axis=1)
    return PseudoBatch(weak_probs.copy(), labels, conf,
                       np.asarray(source_indices, dtype=np.int64))


def threshold_mask(pseudo: PseudoBatch, thresholds: np.ndarray) -> np.ndarray:
    """Inclusion mask: confidence >= per-class threshold of the pseudo-label."""
    thresholds = np.asarray(thresholds, dtype=float)
    return pseudo.confidences >= thresholds[pseudo.labels]


def unsupervised_loss(strong_logits: np.ndarray, pseudo: PseudoBatch,
                      thresholds, weights, normalizer: float = None) -> UnsupReport:
    """Weighted, thresholded consistency loss on strong-view logits.

    L_u = 1/(Z*mu) * sum_b 1{conf_b >= tau_{label_b}} * w_{label_b}
          * H(label_b, softmax(strong_logits_b))

    With weights all 1 and Z=1 this is plain confidence-thresholded
    consistency. If `normalizer` is None, Z is computed over the included
    rows as mean included weight, which makes equal-weight batches match the
    unweighted loss exactly. Masked-out rows contribute zero loss and zero
    gradient.
    """
    mu, n = strong_logits.shape
    thresholds = np.asarray(thresholds, dtype=float)
    weights = np.asarray(weights, dtype=float)
    mask = threshold_mask(pseudo, thresholds)
    pseudo.mask = mask
    row_w = weights[pseudo.labels] * mask

    if normalizer is None:
        z = row_w.sum() / max(int(mask.sum()), 1) if mask.any() else 1.0
    else:
        z = float(normalizer)
    if z <= 0:
        raise ConfigError("normalizer must be positive")

    logp = log_softmax(strong_logits)
    ce = -logp[np.arange(mu), pseudo.labels]
    lu = float((row_w * ce).sum() / (z * mu))

    grad = softmax(strong_logits)
    grad[np.arange(mu), pseudo.labels] -= 1.0
    grad *= (row_w / (z * mu))[:, None]

    per_class = np.bincount(pseudo.labels[mask], minlength=n)
    return UnsupReport(lu, grad, mask, z, int(mask.sum()), per_class)


def total_loss(ls: float, lu: float, lambda_u: float) -> float:
    if lambda_u < 0:
        raise ConfigError("lambda_u must be nonnegative")
    return ls + lambda_u * lu
