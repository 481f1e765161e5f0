"""Self-training iteration: promote top-confidence pseudo-labels to labels
and retrain on the enlarged labeled set.

Promoted samples carry their pseudo-labels, never ground truth; a purity
audit (fraction of promotions matching the true label) is computed for
reporting only and gates nothing.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, PrototypeSet
from .errors import DataError, ValidationError


@dataclass
class Promotion:
    pool_index: int
    pseudo_label: int
    confidence: float


@dataclass
class SelfTrainPlan:
    source_run_id: str
    k_per_class: int
    promotions: list                      # Promotion, grouped by class order
    shortfalls: dict = field(default_factory=dict)   # class -> available count < k
    purity: float = None                  # audit only


def select_top_k(dump: dict, k: int, protoset: PrototypeSet) -> tuple:
    """First k records per class from the confidence-sorted dump, skipping
    prototype indices. Classes with fewer than k matching records yield all
    of them plus a shortfall entry."""
    if k < 1:
        raise DataError("k must be >= 1")
    if len(dump["pseudo_labels"]) == 0:
        raise DataError("empty pseudo-label dump")
    taken = {c: [] for c in range(protoset.num_classes)}
    skip = set(protoset.all_indices())
    for label, conf, idx in zip(dump["pseudo_labels"], dump["confidences"],
                                dump["pool_indices"]):
        label = int(label)
        if label not in taken or len(taken[label]) >= k or int(idx) in skip:
            continue
        taken[label].append(Promotion(int(idx), label, float(conf)))
    promotions = []
    shortfalls = {}
    for c in range(protoset.num_classes):
        promotions.extend(taken[c])
        if len(taken[c]) < k:
            shortfalls[c] = len(taken[c])
    return promotions, shortfalls


def assemble_labeled_set(protoset: PrototypeSet, promotions, set_id: str = None) -> PrototypeSet:
    """Versioned prototype set with promotions appended to their pseudo-label
    class; true labels are never consulted."""
    existing = set(protoset.all_indices())
    per_class = [list(c) for c in protoset.per_class_indices]
    seen = set()
    for p in promotions:
        if p.pool_index in existing or p.pool_index in seen:
            raise ValidationError(f"promotion {p.pool_index} collides with an existing label")
        seen.add(p.pool_index)
        per_class[p.pseudo_label].append(p.pool_index)
    return PrototypeSet(set_id or f"ps-{uuid.uuid4().hex[:8]}", protoset.dataset_id,
                        tuple(tuple(c) for c in per_class),
                        provenance="self-train-augmented", parent_id=protoset.set_id)


def purity_audit(dataset: Dataset, promotions) -> float:
    """Fraction of promoted labels matching ground truth (synthetic data
    report only)."""
    if not promotions:
        return 1.0
    idx = [p.pool_index for p in promotions]
    truth = dataset.true_labels_for(idx, purpose="purity-audit")
    hits = sum(1 for p, t in zip(promotions, truth) if p.pseudo_label == t)
    return hits / len(promotions)


def build_plan(source_run_id: str, dump: dict, k: int, protoset: PrototypeSet,
               dataset: Dataset = None) -> SelfTrainPlan:
    promotions, shortfalls = select_top_k(dump, k, protoset)
    plan = SelfTrainPlan(source_run_id, k, promotions, shortfalls)
    if dataset is not None:
        plan.purity = purity_audit(dataset, promotions)
    return plan


def plan_to_dict(plan: SelfTrainPlan) -> dict:
    return {
        "source_run_id": plan.source_run_id,
        "k_per_class": plan.k_per_class,
        "promotions": [[p.pool_index, p.pseudo_label, p.confidence] for p in plan.promotions],
        "shortfalls": {str(c): n for c, n in plan.shortfalls.items()},
        "purity": plan.purity,
    }
