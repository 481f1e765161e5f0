"""Dense numeric substrate: a small conv classifier with hand-written
reverse-mode gradients, SGD with momentum/weight decay, cosine LR schedule,
and binary checkpoints.

All math is plain numpy. float64 is the default so gradients can be checked
against central finite differences; float32 is selectable per run for speed.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    FormatError,
    NumericDivergenceError,
    ScheduleExhaustedError,
    UsageError,
)

CHECKPOINT_MAGIC = b"BOSSCKPT"
CHECKPOINT_VERSION = 1


def check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericDivergenceError(f"non-finite values in {what}")
    return arr


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stable under large logits."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# layers


class Conv3x3:
    """3x3 convolution, stride 1, zero padding 1 (shape preserving)."""

    def __init__(self, name, cin, cout, rng, dtype):
        fan_in = cin * 9
        self.name = name
        self.weight = rng.normal(0.0, math.sqrt(2.0 / fan_in), (cout, cin, 3, 3)).astype(dtype)
        self.bias = np.zeros(cout, dtype=dtype)

    def params(self):
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def forward(self, x):
        b, c, h, w = x.shape
        if c != self.weight.shape[1]:
            raise DimensionError(f"{self.name}: expected {self.weight.shape[1]} channels, got {c}")
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        # im2col: (B, C*9, H*W), one BLAS matmul per batch for the conv
        cols = np.empty((b, c * 9, h * w), dtype=x.dtype)
        k = 0
        for i in range(3):
            for j in range(3):
                cols[:, k * c:(k + 1) * c, :] = xp[:, :, i:i + h, j:j + w].reshape(b, c, h * w)
                k += 1
        wmat = self.weight.transpose(2, 3, 1, 0).reshape(c * 9, -1)  # (C*9, cout)
        out = np.matmul(wmat.T, cols)                                # (B, cout, H*W)
        out = out.reshape(b, -1, h, w) + self.bias[None, :, None, None]
        return out, (cols, (b, c, h, w))

    def backward(self, cache, dout, grads):
        cols, (b, c, h, w) = cache
        cout = self.weight.shape[0]
        p = h * w
        dmat = dout.reshape(b, cout, p)
        # fold batch into one GEMM: (cout, B*P) @ (B*P, C*9)
        dw = dmat.transpose(1, 0, 2).reshape(cout, b * p) @ \
            cols.transpose(0, 2, 1).reshape(b * p, c * 9)
        grads[f"{self.name}.weight"] += dw.reshape(cout, 3, 3, c).transpose(0, 3, 1, 2)
        grads[f"{self.name}.bias"] += dout.sum(axis=(0, 2, 3))
        wmat = self.weight.transpose(2, 3, 1, 0).reshape(c * 9, cout)
        dcols = np.matmul(wmat, dmat)                                # (B, C*9, H*W)
        # col2im scatter-add back into the padded image
        dxp = np.zeros((b, c, h + 2, w + 2), dtype=dout.dtype)
        k = 0
        for i in range(3):
            for j in range(3):
                dxp[:, :, i:i + h, j:j + w] += dcols[:, k * c:(k + 1) * c, :].reshape(b, c, h, w)
                k += 1
        return dxp[:, :, 1:1 + h, 1:1 + w]


class ReLU:
    name = "relu"

    def params(self):
        return {}

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, cache, dout, grads):
        return dout * cache


class MaxPool2:
    """2x2 max pooling, stride 2. Ties route gradient to the first max."""

    name = "maxpool2"

    def params(self):
        return {}

    def forward(self, x):
        b, c, h, w = x.shape
        if h % 2 or w % 2:
            raise DimensionError("maxpool2 requires even spatial dims")
        r = x.reshape(b, c, h // 2, 2, w // 2, 2)
        icol = r.argmax(axis=5)                                   # (b,c,h2,2,w2)
        m1 = np.take_along_axis(r, icol[..., None], axis=5)[..., 0]
        irow = m1.argmax(axis=3)                                  # (b,c,h2,w2)
        out = np.take_along_axis(m1, irow[:, :, :, None, :], axis=3)[:, :, :, 0, :]
        return out, (icol, irow, x.shape)

    def backward(self, cache, dout, grads):
        icol, irow, shape = cache
        b, c, h, w = shape
        dm1 = np.zeros((b, c, h // 2, 2, w // 2), dtype=dout.dtype)
        np.put_along_axis(dm1, irow[:, :, :, None, :], dout[:, :, :, None, :], axis=3)
        dr = np.zeros((b, c, h // 2, 2, w // 2, 2), dtype=dout.dtype)
        np.put_along_axis(dr, icol[..., None], dm1[..., None], axis=5)
        return dr.reshape(shape)


class Flatten:
    name = "flatten"

    def params(self):
        return {}

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, cache, dout, grads):
        return dout.reshape(cache)


class Linear:
    def __init__(self, name, din, dout, rng, dtype):
        self.name = name
        self.weight = rng.normal(0.0, math.sqrt(2.0 / din), (din, dout)).astype(dtype)
        self.bias = np.zeros(dout, dtype=dtype)

    def params(self):
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def forward(self, x):
        if x.shape[1] != self.weight.shape[0]:
            raise DimensionError(f"{self.name}: expected dim {self.weight.shape[0]}, got {x.shape[1]}")
        return x @ self.weight + self.bias, x

    def backward(self, cache, dout, grads):
        grads[f"{self.name}.weight"] += cache.T @ dout
        grads[f"{self.name}.bias"] += dout.sum(axis=0)
        return dout @ self.weight.T


# ---------------------------------------------------------------------------
# classifier


class Classifier:
    """conv(3->32)-relu-pool-conv(32->64)-relu-pool-flatten-linear(128)-relu-linear(N).

    Parameters and gradients are exposed as name->array dicts; `backward`
    accumulates into the gradient buffers so several loss terms can share
    one optimizer step.
    """

    def __init__(self, in_channels=3, image_size=16, num_classes=10, hidden=128,
                 seed=0, dtype=np.float64):
        if image_size % 4:
            raise ConfigError("image_size must be divisible by 4 (two 2x2 pools)")
        rng = np.random.default_rng(seed)
        self.in_channels = in_channels
        self.image_size = image_size
        self.num_classes = num_classes
        self.hidden = hidden
        self.dtype = np.dtype(dtype)
        flat = 64 * (image_size // 4) ** 2
        self.layers = [
            Conv3x3("conv1", in_channels, 32, rng, self.dtype),
            ReLU(),
            MaxPool2(),
            Conv3x3("conv2", 32, 64, rng, self.dtype),
            ReLU(),
            MaxPool2(),
            Flatten(),
            Linear("fc1", flat, hidden, rng, self.dtype),
            ReLU(),
            Linear("fc2", hidden, num_classes, rng, self.dtype),
        ]
        self.grads = {k: np.zeros_like(v) for k, v in self.params().items()}
        self._last_cache = None

    def params(self) -> dict:
        out = {}
        for layer in self.layers:
            out.update(layer.params())
        return out

    def set_params(self, values: dict) -> None:
        params = self.params()
        for name, arr in values.items():
            if name not in params:
                raise DimensionError(f"unknown parameter {name}")
            if params[name].shape != arr.shape:
                raise DimensionError(f"shape mismatch for {name}")
            params[name][...] = arr.astype(self.dtype)

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def forward(self, x: np.ndarray):
        """Run the net, returning (logits, cache) for a later backward."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1:] != (self.in_channels, self.image_size, self.image_size):
            raise DimensionError(
                f"expected batch of shape (B,{self.in_channels},{self.image_size},{self.image_size}), got {x.shape}")
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x)
            caches.append(c)
        check_finite(x, "logits")
        self._last_cache = caches
        return x, caches

    def predict_probs(self, x: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(x)
        self._last_cache = None
        return softmax(logits)

    def backward(self, grad_logits: np.ndarray, cache=None) -> None:
        if cache is None:
            cache = self._last_cache
        if cache is None:
            raise UsageError("backward called without a cached forward pass")
        d = np.asarray(grad_logits, dtype=self.dtype)
        for layer, c in zip(reversed(self.layers), reversed(cache)):
            d = layer.backward(c, d, self.grads)

    def clone(self) -> "Classifier":
        other = Classifier(self.in_channels, self.image_size, self.num_classes,
                           self.hidden, seed=0, dtype=self.dtype)
        other.set_params(self.params())
        return other


# ---------------------------------------------------------------------------
# optimizer


def cosine_lr(k: int, total_steps: int, base_lr: float) -> float:
    """Decay from base_lr at k=0 down to base_lr*cos(7pi/16) at k=total_steps."""
    if total_steps <= 0:
        raise ConfigError("total_steps must be positive")
    return base_lr * math.cos(7.0 * math.pi * k / (16.0 * total_steps))


@dataclass
class OptimizerState:
    base_lr: float
    momentum: float
    weight_decay: float
    total_steps: int
    step: int = 0
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError("momentum must be in [0,1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be nonnegative")
        if self.total_steps <= 0:
            raise ConfigError("total_steps must be positive")


def sgd_step(opt: OptimizerState, model: Classifier) -> float:
    """v <- beta*v + g + wd*theta; theta <- theta - lr(k)*v. Returns lr used."""
    if opt.step >= opt.total_steps:
        raise ScheduleExhaustedError(f"step {opt.step} >= budget {opt.total_steps}")
    lr = cosine_lr(opt.step, opt.total_steps, opt.base_lr)
    params = model.params()
    for name, theta in params.items():
        v = opt.velocity.get(name)
        if v is None:
            v = np.zeros_like(theta)
            opt.velocity[name] = v
        v *= opt.momentum
        v += model.grads[name] + opt.weight_decay * theta
        theta -= lr * v
    opt.step += 1
    return lr


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params: dict) -> None:
    """Binary dump: magic, u32 version, then per-parameter records
    (u32 name length, name, u32 rank, u32 dims..., little-endian f64 data)."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f8")
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.tobytes())


def load_checkpoint(path) -> dict:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    off = 12
    params = {}
    while off < len(blob):
        (nlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off:off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        shape = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
        params[name] = arr.copy()
    return params
