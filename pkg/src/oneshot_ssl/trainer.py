"""Training loop binding data, augmentation, losses, and balancing, plus
per-class evaluation, metrics logging, pseudo-label dumps, and the
trajectory diagnosis with hyper-parameter tuning suggestions."""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import augment
from .augment import AugmentPolicy, rng_key
from .balance import BalanceConfig, BalancePlan, ClassCounts, balance_plan, update_counts
from .data import Dataset, PrototypeSet
from .errors import ConfigError, DataError, NumericDivergenceError
from .losses import (make_pseudo_batch, supervised_loss, total_loss,
                     unsupervised_loss)
from .nn import Classifier, OptimizerState, save_checkpoint, sgd_step

# diagnosis heuristics quantifying the two failure-mode curves; all in
# accuracy percentage points
DIAG_MIN_EVALS = 10
DIAG_DROP_POINTS = 15.0
DIAG_WEAK_GAP_POINTS = 20.0
DIAG_PLATEAU_TOL_POINTS = 2.0
DIAG_PLATEAU_FRACTION = 0.30

INSTABILITY_SUGGESTIONS = [("delta", "decrease"), ("lambda_u", "decrease"),
                           ("weight_decay", "decrease"), ("learning_rate", "decrease"),
                           ("tau", "increase")]
LOCAL_MIN_SUGGESTIONS = [("delta", "increase"), ("lambda_u", "increase"),
                         ("weight_decay", "increase"), ("learning_rate", "increase"),
                         ("tau", "decrease"), ("prototypes", "refine-weak-classes")]


@dataclass
class RunConfig:
    dataset_id: str
    prototype_set_id: str
    balance: BalanceConfig = field(default_factory=BalanceConfig)
    batch_size: int = 30
    unlabeled_ratio: int = 4
    total_kimg: int = 64
    learning_rate: float = 0.06
    momentum: float = 0.88
    weight_decay: float = 8e-4
    seed: int = 0
    eval_interval: int = 50
    precision: str = "f64"
    hidden: int = 128
    count_mode: str = "ema"
    count_ema_decay: float = 0.999
    weak_policy: AugmentPolicy = field(default_factory=lambda: AugmentPolicy(kind="weak"))
    strong_policy: AugmentPolicy = field(default_factory=lambda: AugmentPolicy(kind="strong"))

    def __post_init__(self):
        if self.mu < 1:
            raise ConfigError("unlabeled batch (ratio * batch size) must be >= 1")
        if self.precision not in ("f32", "f64"):
            raise ConfigError("precision must be f32 or f64")
        if self.eval_interval < 1:
            raise ConfigError("eval_interval must be >= 1")
        if self.total_kimg < 1:
            raise ConfigError("total_kimg must be >= 1")

    @property
    def mu(self) -> int:
        return int(self.unlabeled_ratio * self.batch_size)

    @property
    def total_steps(self) -> int:
        return math.ceil(self.total_kimg * 1024 / (self.batch_size + self.mu))

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    def to_dict(self):
        d = {k: getattr(self, k) for k in (
            "dataset_id", "prototype_set_id", "batch_size", "unlabeled_ratio",
            "total_kimg", "learning_rate", "momentum", "weight_decay", "seed",
            "eval_interval", "precision", "hidden", "count_mode", "count_ema_decay")}
        d["balance"] = self.balance.to_dict()
        d["weak_policy"] = self.weak_policy.to_dict()
        d["strong_policy"] = self.strong_policy.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["balance"] = BalanceConfig.from_dict(d.get("balance", {}))
        d["weak_policy"] = AugmentPolicy.from_dict(d.get("weak_policy", {"kind": "weak"}))
        d["strong_policy"] = AugmentPolicy.from_dict(d.get("strong_policy", {"kind": "strong"}))
        return cls(**d)


@dataclass
class Diagnosis:
    verdict: str                    # healthy | instability | local-minimum | undetermined
    max_drop: float = 0.0
    plateau_length: int = 0
    weak_classes: list = field(default_factory=list)
    suggestions: list = field(default_factory=list)

    def to_dict(self):
        return {"verdict": self.verdict, "max_drop": self.max_drop,
                "plateau_length": self.plateau_length,
                "weak_classes": self.weak_classes,
                "suggestions": [list(s) for s in self.suggestions]}


class RunMetrics:
    """Per-step loss records and per-eval accuracy records."""

    def __init__(self):
        self.steps = []
        self.evals = []
        self.running_max = 0.0
        self.events = []

    def add_step(self, rec):
        self.steps.append(rec)

    def add_eval(self, rec):
        self.running_max = max(self.running_max, rec["accuracy"])
        rec["running_max"] = self.running_max
        self.evals.append(rec)

    def accuracy_series(self):
        return [e["accuracy"] for e in self.evals]

    def to_dict(self):
        return {"steps": self.steps, "evals": self.evals,
                "running_max": self.running_max, "events": self.events}


@dataclass
class RunResult:
    state: str                      # completed | diverged | stopped
    metrics: RunMetrics
    model: Classifier
    best_accuracy: float
    counts: ClassCounts
    steps_done: int


# ---------------------------------------------------------------------------
# batch composition


def compose_batches(rng: np.random.Generator, protoset: PrototypeSet,
                    pool_indices: np.ndarray, batch_size: int,
                    unlabeled_ratio: int, step: int = 0):
    """Labeled batch: class-stratified round-robin over the prototype set.
    Unlabeled batch: mu uniform draws without replacement from the pool."""
    mu = int(unlabeled_ratio * batch_size)
    if mu > len(pool_indices):
        raise ConfigError(f"unlabeled batch {mu} exceeds pool size {len(pool_indices)}")
    n = protoset.num_classes
    lab_idx, lab_lab = [], []
    for b in range(batch_size):
        c = b % n
        cls = protoset.per_class_indices[c]
        lab_idx.append(cls[(b // n + step) % len(cls)])
        lab_lab.append(c)
    unl = rng.choice(pool_indices, size=mu, replace=False)
    return (np.array(lab_idx, dtype=np.int64), np.array(lab_lab, dtype=np.int64),
            np.asarray(unl, dtype=np.int64))


def _augment_batch(images, indices, policy, seed, tag, step, fill=None):
    fn = augment.weak if policy.kind == "weak" else augment.strong
    out = np.empty_like(images)
    for row, idx in enumerate(indices):
        rng = rng_key(seed, tag, int(idx), step)
        if policy.kind == "weak":
            out[row] = fn(images[row], rng, policy)
        else:
            out[row] = fn(images[row], rng, policy, fill=fill)
    return out


# ---------------------------------------------------------------------------
# evaluation


def evaluate(model: Classifier, images: np.ndarray, labels: np.ndarray, batch=512):
    """(overall, per_class) accuracies in [0,1]; overall is the mean of the
    per-class accuracies (the test split is class-balanced)."""
    if len(images) == 0:
        raise DataError("empty test split")
    preds = np.empty(len(images), dtype=np.int64)
    for i in range(0, len(images), batch):
        probs = model.predict_probs(images[i:i + batch])
        preds[i:i + batch] = probs.argmax(axis=1)
    n = model.num_classes
    per_class = np.zeros(n)
    for c in range(n):
        sel = labels == c
        per_class[c] = (preds[sel] == c).mean() if sel.any() else 0.0
    return float(per_class.mean()), per_class


# ---------------------------------------------------------------------------
# pseudo-label dump (appendix-style sorted files)

DUMP_FILES = ("pseudo_labels.bin", "confidences.bin", "true_labels.bin")
DUMP_INDEX_FILE = "pool_indices.bin"


def _write_prefixed(path, payload: bytes, count: int):
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", count))
        f.write(payload)


def dump_pseudo_labels(model: Classifier, dataset: Dataset, pool_indices,
                       seed: int, out_dir, weak_policy: AugmentPolicy = None,
                       batch=256):
    """Weak-view inference over the whole pool, sorted by confidence
    descending (pool index ascending on ties), written as parallel binary
    files: u16 pseudo-labels, f64 confidences, u16 true labels (audit), each
    prefixed with a u64 record count, plus a u64 pool-index sidecar."""
    weak_policy = weak_policy or AugmentPolicy(kind="weak")
    pool_indices = np.asarray(pool_indices, dtype=np.int64)
    probs = np.empty((len(pool_indices), model.num_classes))
    for i in range(0, len(pool_indices), batch):
        chunk = pool_indices[i:i + batch]
        views = _augment_batch(dataset.images[chunk], chunk, weak_policy,
                               seed, augment.TAG_DUMP, 0)
        probs[i:i + batch] = model.predict_probs(views)
    conf = probs.max(axis=1)
    labels = probs.argmax(axis=1)
    order = np.lexsort((pool_indices, -conf))
    truth = dataset.true_labels_for(pool_indices[order], purpose="audit")
    os.makedirs(out_dir, exist_ok=True)
    count = len(pool_indices)
    _write_prefixed(os.path.join(out_dir, "pseudo_labels.bin"),
                    labels[order].astype("<u2").tobytes(), count)
    _write_prefixed(os.path.join(out_dir, "confidences.bin"),
                    conf[order].astype("<f8").tobytes(), count)
    _write_prefixed(os.path.join(out_dir, "true_labels.bin"),
                    truth.astype("<u2").tobytes(), count)
    _write_prefixed(os.path.join(out_dir, DUMP_INDEX_FILE),
                    pool_indices[order].astype("<u8").tobytes(), count)
    return out_dir


def _read_prefixed(path, dtype):
    with open(path, "rb") as f:
        (count,) = struct.unpack("<Q", f.read(8))
        data = np.frombuffer(f.read(), dtype=dtype)
    if len(data) != count:
        raise DataError(f"{path}: expected {count} records, found {len(data)}")
    return data


def read_dump(dump_dir):
    """Load the sorted dump back as a dict of parallel arrays."""
    return {
        "pseudo_labels": _read_prefixed(os.path.join(dump_dir, "pseudo_labels.bin"), "<u2").astype(np.int64),
        "confidences": _read_prefixed(os.path.join(dump_dir, "confidences.bin"), "<f8").astype(np.float64),
        "true_labels": _read_prefixed(os.path.join(dump_dir, "true_labels.bin"), "<u2").astype(np.int64),
        "pool_indices": _read_prefixed(os.path.join(dump_dir, DUMP_INDEX_FILE), "<u8").astype(np.int64),
    }


# ---------------------------------------------------------------------------
# diagnosis


def diagnose(metrics: RunMetrics) -> Diagnosis:
    """Classify a finished trajectory as healthy / instability / local-minimum.

    Instability: accuracy falls more than DIAG_DROP_POINTS below the running
    max at any eval. Local minimum: no such collapse, but the trajectory sits
    within DIAG_PLATEAU_TOL_POINTS of its final running max for more than
    DIAG_PLATEAU_FRACTION of the evals while at least one class lags the
    overall accuracy by DIAG_WEAK_GAP_POINTS. Suggestions follow the two
    opposite tuning directions.
    """
    evals = metrics.evals
    if len(evals) < DIAG_MIN_EVALS:
        return Diagnosis("undetermined")
    accs = np.array([e["accuracy"] for e in evals]) * 100.0
    running = np.maximum.accumulate(accs)
    drops = running - accs
    max_drop = float(drops.max())

    overall = accs[-1]
    per_class = np.array(evals[-1]["per_class"]) * 100.0
    weak = [int(c) for c in np.flatnonzero(per_class < overall - DIAG_WEAK_GAP_POINTS)]

    if max_drop > DIAG_DROP_POINTS:
        return Diagnosis("instability", max_drop=max_drop, weak_classes=weak,
                         suggestions=list(INSTABILITY_SUGGESTIONS))

    final_max = running[-1]
    plateau = 0
    for a in reversed(accs.tolist()):
        if a >= final_max - DIAG_PLATEAU_TOL_POINTS:
            plateau += 1
        else:
            break
    if plateau > DIAG_PLATEAU_FRACTION * len(accs) and weak:
        return Diagnosis("local-minimum", max_drop=max_drop, plateau_length=plateau,
                         weak_classes=weak, suggestions=list(LOCAL_MIN_SUGGESTIONS))
    return Diagnosis("healthy", max_drop=max_drop, plateau_length=plateau,
                     weak_classes=weak)


# ---------------------------------------------------------------------------
# the loop


def train(dataset: Dataset, protoset: PrototypeSet, config: RunConfig,
          run_dir=None, stop_flag=None, eval_callback=None) -> RunResult:
    """Run the full consistency-training loop.

    Writes metrics.jsonl, best/last checkpoints, and a final pseudo-label
    dump into run_dir when given. A non-finite loss marks the run diverged
    and preserves partial metrics instead of raising.
    """
    c, h, w = dataset.image_shape
    model = Classifier(in_channels=c, image_size=h, num_classes=dataset.num_classes,
                       hidden=config.hidden, seed=config.seed, dtype=config.dtype)
    opt = OptimizerState(config.learning_rate, config.momentum, config.weight_decay,
                         total_steps=config.total_steps)
    pool = dataset.train_indices
    counts = ClassCounts(dataset.num_classes, pool_size=len(pool),
                         mode=config.count_mode, ema_decay=config.count_ema_decay)
    # before counts exist every method acts unbalanced for one epoch of steps
    warmup_steps = math.ceil(len(pool) / config.mu)
    metrics = RunMetrics()
    test_labels = dataset.true_labels_for(dataset.test_indices, purpose="evaluate")
    test_images = dataset.images[dataset.test_indices]
    fill = dataset.channel_mean

    metrics_file = None
    if run_dir:
        os.makedirs(os.path.join(run_dir, "checkpoints"), exist_ok=True)
        with open(os.path.join(run_dir, "config.json"), "w") as f:
            json.dump(config.to_dict(), f, indent=2)
        metrics_file = open(os.path.join(run_dir, "metrics.jsonl"), "w")

    def log(rec):
        if metrics_file:
            metrics_file.write(json.dumps(rec) + "\n")
            metrics_file.flush()

    method0 = BalanceConfig(method=0, tau=config.balance.tau,
                            lambda_u=config.balance.lambda_u)
    best_acc = -1.0
    state = "completed"
    step = 0

    def run_eval(step):
        nonlocal best_acc
        acc, per_class = evaluate(model, test_images, test_labels)
        plan = balance_plan(config.balance, counts) if step >= warmup_steps \
            else balance_plan(method0, counts)
        rec = {"type": "eval", "step": step, "accuracy": acc,
               "per_class": per_class.tolist(),
               "class_counts": counts.snapshot(),
               "thresholds": np.asarray(plan.thresholds).tolist()}
        metrics.add_eval(rec)
        log(rec)
        if acc > best_acc:
            best_acc = acc
            if run_dir:
                save_checkpoint(os.path.join(run_dir, "checkpoints", "best.ckpt"),
                                model.params())
        if eval_callback:
            eval_callback(rec)

    try:
        for step in range(config.total_steps):
            if stop_flag and stop_flag():
                state = "stopped"
                break
            rng = rng_key(config.seed, augment.TAG_COMPOSE, 0, step)
            lab_idx, lab_lab, unl_idx = compose_batches(
                rng, protoset, pool, config.batch_size, config.unlabeled_ratio, step)

            xw = _augment_batch(dataset.images[lab_idx], lab_idx, config.weak_policy,
                                config.seed, augment.TAG_WEAK_LABELED, step)
            uw = _augment_batch(dataset.images[unl_idx], unl_idx, config.weak_policy,
                                config.seed, augment.TAG_WEAK_UNLABELED, step)
            us = _augment_batch(dataset.images[unl_idx], unl_idx, config.strong_policy,
                                config.seed, augment.TAG_STRONG_UNLABELED, step, fill=fill)

            logits_l, cache_l = model.forward(xw)
            ls, grad_l = supervised_loss(logits_l, lab_lab)

            pseudo = make_pseudo_batch(model.predict_probs(uw), unl_idx)
            if step >= warmup_steps:
                plan = balance_plan(config.balance, counts)
            else:
                plan = balance_plan(method0, counts)

            logits_s, cache_s = model.forward(us)
            report = unsupervised_loss(logits_s, pseudo, plan.thresholds,
                                       plan.weights, plan.fixed_normalizer())
            update_counts(counts, pseudo)

            lam = config.balance.lambda_u
            loss = total_loss(ls, report.loss, lam)
            if not math.isfinite(loss):
                raise NumericDivergenceError(f"loss {loss} at step {step}")

            model.zero_grads()
            model.backward(grad_l, cache_l)
            model.backward(lam * report.grad_logits, cache_s)
            lr = sgd_step(opt, model)

            rec = {"type": "step", "step": step, "ls": float(ls),
                   "lu": float(report.loss), "l": float(loss),
                   "included": report.included_count, "lr": lr}
            metrics.add_step(rec)
            log(rec)

            if (step + 1) % config.eval_interval == 0 or step + 1 == config.total_steps:
                run_eval(step + 1)
    except NumericDivergenceError as exc:
        state = "diverged"
        event = {"type": "event", "event": "divergence", "step": step, "detail": str(exc)}
        metrics.events.append(event)
        log(event)

    if not metrics.evals and state != "diverged":
        run_eval(step + 1 if state == "completed" else step)

    if run_dir:
        save_checkpoint(os.path.join(run_dir, "checkpoints", "last.ckpt"), model.params())
        if state == "completed":
            dump_pseudo_labels(model, dataset, pool, config.seed,
                               os.path.join(run_dir, "dump"), config.weak_policy)
        diag = diagnose(metrics)
        with open(os.path.join(run_dir, "diagnosis.json"), "w") as f:
            json.dump(diag.to_dict(), f, indent=2)
        metrics_file.close()

    return RunResult(state, metrics, model, max(best_acc, 0.0), counts, step + 1)
