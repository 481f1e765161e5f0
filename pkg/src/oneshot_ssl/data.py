"""Datasets (synthetic shape grammar + CIFAR-10 binary), splits, and
prototype-set management.

Ground-truth labels are guarded behind an access counter: training may only
touch them for prototype assignment and evaluation/audit reporting, and
tests assert the counter matches the expected reads.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, FormatError, ValidationError

CIFAR_RECORD = 3073  # 1 label byte + 3*1024 plane bytes

SHAPES = ("disk", "square", "cross", "triangle", "ring", "hbars", "vbars", "diamond")
PALETTE = (
    (0.90, 0.15, 0.15),
    (0.15, 0.85, 0.20),
    (0.15, 0.25, 0.90),
    (0.90, 0.85, 0.15),
    (0.85, 0.20, 0.85),
    (0.15, 0.85, 0.85),
    (0.95, 0.55, 0.10),
    (0.55, 0.15, 0.85),
)


@dataclass
class SyntheticSpec:
    num_classes: int = 4
    samples_per_class: int = 250
    image_size: int = 16
    difficulty: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("need at least 2 classes")
        if self.num_classes > len(SHAPES):
            raise ConfigError(f"at most {len(SHAPES)} classes supported")
        if not 0.0 <= self.difficulty <= 1.0:
            raise ConfigError("difficulty must be in [0,1]")
        if self.image_size % 4:
            raise ConfigError("image_size must be divisible by 4")

    def to_dict(self):
        return {"num_classes": self.num_classes,
                "samples_per_class": self.samples_per_class,
                "image_size": self.image_size,
                "difficulty": self.difficulty,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class Dataset:
    """Images in [0,1], CHW, float64, with guarded true labels."""

    def __init__(self, images: np.ndarray, true_labels: np.ndarray, dataset_id: str,
                 num_classes: int, meta: dict = None):
        images = np.asarray(images, dtype=np.float64)
        true_labels = np.asarray(true_labels, dtype=np.int64)
        if images.ndim != 4:
            raise DataError("images must be (M,C,H,W)")
        if len(images) != len(true_labels):
            raise DataError("images/labels length mismatch")
        if len(true_labels) and (true_labels.min() < 0 or true_labels.max() >= num_classes):
            raise DataError("label out of range")
        self.images = images
        self._true_labels = true_labels
        self.id = dataset_id
        self.num_classes = num_classes
        self.meta = meta or {}
        self.channel_mean = images.mean(axis=(0, 2, 3)) if len(images) else np.zeros(images.shape[1])
        self.channel_std = images.std(axis=(0, 2, 3)) if len(images) else np.ones(images.shape[1])
        self.label_reads = {}
        self.train_indices, self.test_indices = self._stratified_split()

    def __len__(self):
        return len(self.images)

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def _stratified_split(self, train_fraction=0.8):
        train, test = [], []
        for n in range(self.num_classes):
            idx = np.flatnonzero(self._true_labels == n)
            cut = int(round(train_fraction * len(idx)))
            train.extend(idx[:cut])
            test.extend(idx[cut:])
        return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64))

    def true_labels_for(self, indices, purpose: str) -> np.ndarray:
        """The only gate to ground truth. `purpose` is tallied for audits."""
        indices = np.asarray(indices, dtype=np.int64)
        self.label_reads[purpose] = self.label_reads.get(purpose, 0) + len(indices)
        return self._true_labels[indices].copy()

    def label_histogram(self) -> np.ndarray:
        return np.bincount(self._true_labels, minlength=self.num_classes)


# ---------------------------------------------------------------------------
# synthetic shape grammar


def _shape_mask(shape: str, size: int, cy: float, cx: float, radius: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    dy, dx = yy - cy, xx - cx
    r = radius
    if shape == "disk":
        return (dy * dy + dx * dx) <= r * r
    if shape == "square":
        return (np.abs(dy) <= r) & (np.abs(dx) <= r)
    if shape == "cross":
        return ((np.abs(dy) <= r / 2.5) & (np.abs(dx) <= r)) | \
               ((np.abs(dx) <= r / 2.5) & (np.abs(dy) <= r))
    if shape == "triangle":
        return (dy >= -r) & (dy <= r) & (np.abs(dx) <= (dy + r) / 2.0)
    if shape == "ring":
        d2 = dy * dy + dx * dx
        return (d2 <= r * r) & (d2 >= (0.55 * r) ** 2)
    if shape == "hbars":
        return (np.abs(dx) <= r) & (np.abs(dy) <= r) & (np.floor(yy) % 2 == 0)
    if shape == "vbars":
        return (np.abs(dx) <= r) & (np.abs(dy) <= r) & (np.floor(xx) % 2 == 0)
    if shape == "diamond":
        return (np.abs(dy) + np.abs(dx)) <= r
    raise ConfigError(f"unknown shape {shape!r}")


def generate_synthetic(spec: SyntheticSpec, dataset_id: str = None) -> Dataset:
    """Procedural dataset: one (shape, color) template per class.

    The difficulty knob blends each class's color toward the next class's
    color and raises positional/noise jitter, which manufactures confusable
    class pairs (the weak-class phenomenon) while staying deterministic
    under the seed.
    """
    rng = np.random.default_rng(spec.seed)
    n, s, d = spec.num_classes, spec.image_size, spec.difficulty
    images, labels = [], []
    base_colors = [np.array(PALETTE[c % len(PALETTE)]) for c in range(n)]
    for c in range(n):
        # converge toward the next class's color as difficulty rises
        color_c = (1.0 - 0.45 * d) * base_colors[c] + 0.45 * d * base_colors[(c + 1) % n]
        for _ in range(spec.samples_per_class):
            jit = (2.0 + 2.0 * d)
            cy = s / 2 - 0.5 + rng.uniform(-jit, jit)
            cx = s / 2 - 0.5 + rng.uniform(-jit, jit)
            radius = s * 0.28 * rng.uniform(1.0 - 0.15 - 0.25 * d, 1.0 + 0.15)
            mask = _shape_mask(SHAPES[c], s, cy, cx, radius)
            intensity = rng.uniform(1.0 - 0.35 * d, 1.0)
            color = np.clip(color_c * intensity + rng.normal(0, 0.05 * d, 3), 0, 1)
            img = np.full((3, s, s), 0.10)
            img[:, mask] = color[:, None]
            noise_sigma = 0.02 + 0.25 * d
            img = np.clip(img + rng.normal(0.0, noise_sigma, img.shape), 0.0, 1.0)
            images.append(img)
            labels.append(c)
    images = np.stack(images)
    labels = np.array(labels)
    # interleave classes so pool ordering carries no class signal
    order = np.arange(len(labels)).reshape(n, spec.samples_per_class).T.reshape(-1)
    dataset_id = dataset_id or f"syn-{uuid.uuid4().hex[:8]}"
    return Dataset(images[order], labels[order], dataset_id, n,
                   meta={"kind": "synthetic", "spec": spec.to_dict()})


# ---------------------------------------------------------------------------
# CIFAR-10 binary ingestion


def parse_cifar10_bytes(blob: bytes):
    """Parse concatenated 3073-byte records -> (images [M,3,32,32] in [0,1], labels)."""
    if len(blob) % CIFAR_RECORD:
        raise FormatError(f"file length {len(blob)} is not a multiple of {CIFAR_RECORD}")
    m = len(blob) // CIFAR_RECORD
    raw = np.frombuffer(blob, dtype=np.uint8).reshape(m, CIFAR_RECORD)
    labels = raw[:, 0].astype(np.int64)
    if m and labels.max() > 9:
        raise DataError(f"label byte {labels.max()} > 9")
    images = raw[:, 1:].reshape(m, 3, 32, 32).astype(np.float64) / 255.0
    return images, labels


def serialize_cifar10(images: np.ndarray, labels: np.ndarray) -> bytes:
    """Inverse of parse_cifar10_bytes, for round-trip checks."""
    m = len(labels)
    raw = np.empty((m, CIFAR_RECORD), dtype=np.uint8)
    raw[:, 0] = labels
    raw[:, 1:] = np.round(np.asarray(images).reshape(m, -1) * 255.0).astype(np.uint8)
    return raw.tobytes()


def ingest_cifar10(paths, dataset_id: str = None) -> Dataset:
    all_images, all_labels = [], []
    warnings = []
    for p in paths:
        with open(p, "rb") as f:
            blob = f.read()
        if not blob:
            warnings.append(f"empty file {p}")
            continue
        images, labels = parse_cifar10_bytes(blob)
        all_images.append(images)
        all_labels.append(labels)
    if all_images:
        images = np.concatenate(all_images)
        labels = np.concatenate(all_labels)
    else:
        images = np.zeros((0, 3, 32, 32))
        labels = np.zeros(0, dtype=np.int64)
    dataset_id = dataset_id or f"cifar10-{uuid.uuid4().hex[:8]}"
    return Dataset(images, labels, dataset_id, 10,
                   meta={"kind": "cifar10", "paths": [str(p) for p in paths],
                         "warnings": warnings})


# ---------------------------------------------------------------------------
# prototype sets


@dataclass(frozen=True)
class PrototypeSet:
    """Versioned labeled set: per-class sample indices (k >= 1 each).

    Indices beyond the original prototypes may carry pseudo-labels (the
    class slot they sit in), never ground truth.
    """

    set_id: str
    dataset_id: str
    per_class_indices: tuple      # tuple of N tuples of ints
    provenance: str = "manual"    # manual | replaced | self-train-augmented
    parent_id: str = None

    @property
    def num_classes(self):
        return len(self.per_class_indices)

    def all_indices(self):
        return [i for cls in self.per_class_indices for i in cls]

    def flat(self):
        """(indices, labels) arrays for batch composition."""
        idx, lab = [], []
        for c, cls in enumerate(self.per_class_indices):
            idx.extend(cls)
            lab.extend([c] * len(cls))
        return np.array(idx, dtype=np.int64), np.array(lab, dtype=np.int64)

    def to_dict(self):
        return {"set_id": self.set_id, "dataset_id": self.dataset_id,
                "per_class_indices": [list(c) for c in self.per_class_indices],
                "provenance": self.provenance, "parent_id": self.parent_id}

    @classmethod
    def from_dict(cls, d):
        return cls(d["set_id"], d["dataset_id"],
                   tuple(tuple(c) for c in d["per_class_indices"]),
                   d.get("provenance", "manual"), d.get("parent_id"))


def select_prototypes(dataset: Dataset, per_class_indices, set_id: str = None) -> PrototypeSet:
    """Validate and freeze a prototype set."""
    n = dataset.num_classes
    if len(per_class_indices) != n:
        raise ValidationError(f"need indices for all {n} classes")
    flat = []
    for c, cls in enumerate(per_class_indices):
        if len(cls) < 1:
            raise ValidationError(f"class {c} has no prototype")
        flat.extend(cls)
    if len(set(flat)) != len(flat):
        raise ValidationError("duplicate prototype indices")
    for i in flat:
        if not 0 <= i < len(dataset):
            raise ValidationError(f"index {i} out of range")
    return PrototypeSet(set_id or f"ps-{uuid.uuid4().hex[:8]}", dataset.id,
                        tuple(tuple(int(i) for i in cls) for cls in per_class_indices))


def audit_prototypes(dataset: Dataset, proto: PrototypeSet) -> list:
    """Warnings for prototypes whose true label mismatches their class slot
    (simulated labeling mistakes). Reporting only; training proceeds."""
    warnings = []
    for c, cls in enumerate(proto.per_class_indices):
        truth = dataset.true_labels_for(list(cls), purpose="audit")
        for i, t in zip(cls, truth):
            if t != c:
                warnings.append(f"prototype {i} assigned class {c} but true label is {int(t)}")
    return warnings


def replace_prototype(proto: PrototypeSet, class_id: int, new_index: int,
                      set_id: str = None) -> PrototypeSet:
    """New versioned set with one class's prototype swapped; the old set is
    untouched (sets are immutable, lineage via parent_id)."""
    if not 0 <= class_id < proto.num_classes:
        raise ValidationError(f"class {class_id} out of range")
    if new_index in proto.all_indices():
        raise ValidationError(f"index {new_index} is already a prototype")
    per_class = [list(c) for c in proto.per_class_indices]
    per_class[class_id] = [int(new_index)] + list(per_class[class_id][1:])
    return PrototypeSet(set_id or f"ps-{uuid.uuid4().hex[:8]}", proto.dataset_id,
                        tuple(tuple(c) for c in per_class),
                        provenance="replaced", parent_id=proto.set_id)
