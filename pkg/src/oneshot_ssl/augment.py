"""Seeded weak/strong stochastic image transforms.

Every transform is a pure function of (image, rng); rngs are derived from
(seed, tag, sample-index, step) so any view drawn during training can be
reproduced exactly offline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# rng stream tags, one per view kind
TAG_WEAK_LABELED = 0
TAG_WEAK_UNLABELED = 1
TAG_STRONG_UNLABELED = 2
TAG_DUMP = 3
TAG_COMPOSE = 99

PHOTOMETRIC_OPS = ("brightness", "contrast", "noise", "quantize")


def rng_key(seed: int, tag: int, sample_index: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag, sample_index, step])


@dataclass(frozen=True)
class AugmentPolicy:
    kind: str = "weak"  # "weak" | "strong"
    flip_probability: float = 0.5
    max_translate_fraction: float = 0.125
    strong_ops: tuple = PHOTOMETRIC_OPS
    ops_per_sample: int = 2
    cutout_fraction: float = 0.5

    def __post_init__(self):
        if self.kind not in ("weak", "strong"):
            raise ConfigError(f"unknown policy kind {self.kind!r}")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ConfigError("flip_probability must be in [0,1]")
        if not 0.0 <= self.max_translate_fraction <= 0.5:
            raise ConfigError("max_translate_fraction must be in [0,0.5]")
        if not 0.0 <= self.cutout_fraction <= 0.5:
            raise ConfigError("cutout_fraction must be in [0,0.5]")
        if self.kind == "strong" and self.ops_per_sample > 0 and not self.strong_ops:
            raise ConfigError("strong policy with empty op set")
        unknown = set(self.strong_ops) - set(PHOTOMETRIC_OPS)
        if unknown:
            raise ConfigError(f"unknown strong ops {sorted(unknown)}")

    def to_dict(self):
        return {
            "kind": self.kind,
            "flip_probability": self.flip_probability,
            "max_translate_fraction": self.max_translate_fraction,
            "strong_ops": list(self.strong_ops),
            "ops_per_sample": self.ops_per_sample,
            "cutout_fraction": self.cutout_fraction,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["strong_ops"] = tuple(d.get("strong_ops", PHOTOMETRIC_OPS))
        return cls(**d)


def _translate(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Shift with edge padding. Positive dy moves content down."""
    c, h, w = img.shape
    pady, padx = abs(dy), abs(dx)
    if pady == 0 and padx == 0:
        return img
    padded = np.pad(img, ((0, 0), (pady, pady), (padx, padx)), mode="edge")
    return padded[:, pady - dy:pady - dy + h, padx - dx:padx - dx + w]


def weak(img: np.ndarray, rng: np.random.Generator, policy: AugmentPolicy) -> np.ndarray:
    """Random horizontal flip plus small random translation with edge padding."""
    c, h, w = img.shape
    out = img
    if rng.random() < policy.flip_probability:
        out = out[:, :, ::-1]
    t = int(round(policy.max_translate_fraction * w))
    if t > 0:
        dy = int(rng.integers(-t, t + 1))
        dx = int(rng.integers(-t, t + 1))
        out = _translate(out, dy, dx)
    return np.ascontiguousarray(out)


def _apply_op(img, op, rng):
    if op == "brightness":
        s = rng.uniform(0.5, 1.5)
        return np.clip(img * s, 0.0, 1.0)
    if op == "contrast":
        s = rng.uniform(0.5, 1.5)
        m = img.mean()
        return np.clip((img - m) * s + m, 0.0, 1.0)
    if op == "noise":
        return np.clip(img + rng.normal(0.0, 0.05, img.shape), 0.0, 1.0)
    if op == "quantize":
        levels = int(rng.integers(3, 9))
        return np.clip(np.round(img * (levels - 1)) / (levels - 1), 0.0, 1.0)
    raise ConfigError(f"unknown strong op {op!r}")


def cutout(img: np.ndarray, rng: np.random.Generator, fraction: float, fill) -> np.ndarray:
    c, h, w = img.shape
    ch, cw = max(1, int(round(fraction * h))), max(1, int(round(fraction * w)))
    y0 = int(rng.integers(0, h - ch + 1))
    x0 = int(rng.integers(0, w - cw + 1))
    out = img.copy()
    out[:, y0:y0 + ch, x0:x0 + cw] = np.asarray(fill, dtype=img.dtype).reshape(c, 1, 1)
    return out


def strong(img: np.ndarray, rng: np.random.Generator, policy: AugmentPolicy,
           fill=None) -> np.ndarray:
    """weak() then ops_per_sample photometric draws then cutout.

    `fill` is the per-channel cutout fill (dataset channel mean); defaults to
    the image's own channel means.
    """
    if policy.ops_per_sample > 0 and not policy.strong_ops:
        raise ConfigError("strong augmentation needs a nonempty op set")
    out = weak(img, rng, policy)
    for _ in range(policy.ops_per_sample):
        op = policy.strong_ops[int(rng.integers(0, len(policy.strong_ops)))]
        out = _apply_op(out, op, rng)
    if policy.cutout_fraction > 0:
        if fill is None:
            fill = img.mean(axis=(1, 2))
        out = cutout(out, rng, policy.cutout_fraction, fill)
    return out
