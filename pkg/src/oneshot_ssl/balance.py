"""Pseudo-label class counting and the four balancing methods.

Methods:
  0 -> off (plain thresholded consistency loss)
  1 -> per-class thresholds lowered for minority classes
  2 -> loss weights 1/c_n from all pseudo-label counts
  3 -> loss weights 1/chat_n from confident pseudo-label counts only
  4 -> hybrid: method-1 thresholds combined with method-3 weights

Minority/majority status comes from pseudo-label counts, never from ground
truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .losses import PseudoBatch

VALID_METHODS = (0, 1, 2, 3, 4)


@dataclass
class BalanceConfig:
    method: int = 0
    tau: float = 0.95
    delta: float = 0.0
    lambda_u: float = 1.0

    def __post_init__(self):
        if self.method not in VALID_METHODS:
            raise ConfigError(f"unknown balance method {self.method}")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau must be in (0,1)")
        if not 0.0 <= self.delta < self.tau:
            raise ConfigError("delta must satisfy 0 <= delta < tau")
        if self.lambda_u < 0:
            raise ConfigError("lambda_u must be nonnegative")

    def to_dict(self):
        return {"method": self.method, "tau": self.tau,
                "delta": self.delta, "lambda_u": self.lambda_u}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class ClassCounts:
    """Running pseudo-label histograms over the tracked unlabeled pool.

    `counts` tracks every pseudo-label, `confident_counts` only rows above
    threshold. In "exact" mode batches accumulate into an epoch buffer that
    replaces the counts at each epoch boundary; in "ema" mode each batch
    histogram is rescaled to pool size and blended in.
    """

    num_classes: int
    pool_size: int
    mode: str = "ema"  # "ema" | "exact"
    ema_decay: float = 0.999
    counts: np.ndarray = None
    confident_counts: np.ndarray = None
    batches_seen: int = 0

    def __post_init__(self):
        if self.mode not in ("ema", "exact"):
            raise ConfigError(f"unknown count mode {self.mode!r}")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigError("ema_decay must be in [0,1)")
        if self.counts is None:
            self.counts = np.zeros(self.num_classes, dtype=float)
        if self.confident_counts is None:
            self.confident_counts = np.zeros(self.num_classes, dtype=float)
        self._epoch_all = np.zeros(self.num_classes, dtype=float)
        self._epoch_conf = np.zeros(self.num_classes, dtype=float)
        self._epoch_seen = 0

    def snapshot(self):
        return {"counts": self.counts.tolist(),
                "confident_counts": self.confident_counts.tolist()}


def update_counts(state: ClassCounts, pseudo: PseudoBatch) -> ClassCounts:
    """Fold one batch of pseudo-labels (and its inclusion mask) into `state`."""
    labels = pseudo.labels
    if len(labels) == 0:
        return state
    n = state.num_classes
    hist = np.bincount(labels, minlength=n).astype(float)
    conf_hist = np.bincount(labels[pseudo.mask], minlength=n).astype(float)
    if state.mode == "ema":
        scale = state.pool_size / len(labels)
        d = state.ema_decay
        if state.batches_seen == 0:
            state.counts = hist * scale
            state.confident_counts = conf_hist * scale
        else:
            state.counts = d * state.counts + (1.0 - d) * hist * scale
            state.confident_counts = d * state.confident_counts + (1.0 - d) * conf_hist * scale
    else:
        state._epoch_all += hist
        state._epoch_conf += conf_hist
        state._epoch_seen += len(labels)
        if state._epoch_seen >= state.pool_size:
            state.counts = state._epoch_all
            state.confident_counts = state._epoch_conf
            state._epoch_all = np.zeros(n, dtype=float)
            state._epoch_conf = np.zeros(n, dtype=float)
            state._epoch_seen = 0
    state.batches_seen += 1
    return state


def class_thresholds(counts: np.ndarray, tau: float, delta: float) -> np.ndarray:
    """tau_n = tau - delta*(1 - c_n/max(counts)); all tau when counts are zero."""
    counts = np.asarray(counts, dtype=float)
    cmax = counts.max() if counts.size else 0.0
    if cmax <= 0 or delta == 0.0:
        return np.full(counts.shape, tau)
    return tau - delta * (1.0 - counts / cmax)


def class_weights(counts: ClassCounts, method: int):
    """Per-class weights w_n = 1/max(k_n, 1) from all counts (method 2) or
    confident counts (method 3). Zero-count classes get weight 1 so a class
    the counts have not seen yet behaves as unweighted."""
    if method not in (2, 3):
        raise ConfigError(f"class_weights applies to methods 2/3, got {method}")
    base = counts.counts if method == 2 else counts.confident_counts
    return 1.0 / np.maximum(np.asarray(base, dtype=float), 1.0)


def batch_normalizer(weights: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """Z = mean weight over included rows; 1.0 when nothing is included.

    Defined so that when every included row carries the same weight, the
    weighted loss equals the unweighted one exactly.
    """
    if not np.any(mask):
        return 1.0
    row_w = np.asarray(weights, dtype=float)[labels][mask]
    return float(row_w.sum() / len(row_w))


@dataclass
class BalancePlan:
    thresholds: np.ndarray      # per-class tau_n
    weights: np.ndarray         # per-class w_n
    normalize: bool             # compute Z per batch over included rows

    def fixed_normalizer(self):
        return None if self.normalize else 1.0


def balance_plan(config: BalanceConfig, counts: ClassCounts) -> BalancePlan:
    n = counts.num_classes
    flat_tau = np.full(n, config.tau)
    ones = np.ones(n)
    m = config.method
    if m == 0:
        return BalancePlan(flat_tau, ones, False)
    if m == 1:
        return BalancePlan(class_thresholds(counts.counts, config.tau, config.delta), ones, False)
    if m in (2, 3):
        return BalancePlan(flat_tau, class_weights(counts, m), True)
    if m == 4:
        return BalancePlan(class_thresholds(counts.counts, config.tau, config.delta),
                           class_weights(counts, 3), True)
    raise ConfigError(f"unknown balance method {m}")
