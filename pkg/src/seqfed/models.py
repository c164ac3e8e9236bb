"""Clip classifiers on flat float64 parameter vectors.

Two architectures over the flattened ``(clip_len, feature_dim)`` clip:

* ``linear``: softmax(W x + b)
* ``mlp``:    softmax(W2 relu(W1 x + b1) + b2)

Parameters live in one contiguous ``np.ndarray`` so replicas can be averaged
with plain vector arithmetic; :class:`ClipClassifier` knows how to slice it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from math import prod
from os import PathLike

import numpy as np

from seqfed.errors import ConfigError, DataError, NumericalError

LINEAR = "linear"
MLP = "mlp"
PROB_FLOOR = 1e-12

CHECKPOINT_MAGIC = b"UMODL1\x00\x00"
_KINDS = (LINEAR, MLP)


@dataclass(frozen=True)
class ModelSpec:
    kind: str = LINEAR
    clip_len: int = 16
    feature_dim: int = 8
    num_classes: int = 4
    hidden_dim: int = 0
    init_seed: int = 0
    head_seed: int = 1

    @property
    def input_dim(self) -> int:
        return self.clip_len * self.feature_dim

    def validate(self) -> ModelSpec:
        if self.kind not in _KINDS:
            raise ConfigError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        for name in ("clip_len", "feature_dim", "num_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.kind == MLP and self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be >= 1 for an mlp, got {self.hidden_dim}")
        return self

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        """Named tensor shapes in flat-vector order; the last two form the output head."""
        c, d = self.num_classes, self.input_dim
        if self.kind == LINEAR:
            return [("weight", (c, d)), ("bias", (c,))]
        h = self.hidden_dim
        return [("hidden.weight", (h, d)), ("hidden.bias", (h,)), ("out.weight", (c, h)), ("out.bias", (c,))]


@dataclass
class OptimizerState:
    lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-5
    velocity: np.ndarray | None = None

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if not self.weight_decay >= 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(probs: np.ndarray, labels) -> float:
    """Mean of ``-log p[label]`` over a batch (or a single prediction).

    Probabilities are floored at 1e-12 so a confidently wrong prediction
    gives a large but finite loss.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape[0] != probs.shape[0]:
        raise ValueError(f"{probs.shape[0]} predictions but {labels.shape[0]} labels")
    if np.any(labels < 0) or np.any(labels >= probs.shape[1]):
        raise ValueError("label out of range")
    picked = np.maximum(probs[np.arange(labels.size), labels], PROB_FLOOR)
    return float(np.mean(-np.log(picked)))


def sgd_step(params: np.ndarray, grad: np.ndarray, state: OptimizerState) -> tuple[np.ndarray, OptimizerState]:
    """Heavy-ball SGD with L2 weight decay folded into the gradient.

    ``v <- momentum * v + (grad + wd * w)``, then ``w <- w - lr * v``.
    Returns new arrays; the inputs are left untouched.
    """
    if params.shape != grad.shape:
        raise ValueError(f"parameter shape {params.shape} != gradient shape {grad.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient")
    g = grad + state.weight_decay * params if state.weight_decay else grad.copy()
    if state.velocity is None:
        velocity = g
    else:
        velocity = state.momentum * state.velocity + g
    new_params = params - state.lr * velocity
    return new_params, replace(state, velocity=velocity)


class ClipClassifier:
    """Forward pass, loss and exact gradient for one :class:`ModelSpec`."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec.validate()
        self.layout = spec.layout()
        self._slices = {}
        offset = 0
        for name, shape in self.layout:
            size = prod(shape)
            self._slices[name] = (slice(offset, offset + size), shape)
            offset += size
        self.num_params = offset
        self.head_offset = self._slices[self.layout[-2][0]][0].start

    def unpack(self, params: np.ndarray) -> dict[str, np.ndarray]:
        if params.shape != (self.num_params,):
            raise DataError(f"expected {self.num_params} parameters, got shape {params.shape}")
        return {name: params[sl].reshape(shape) for name, (sl, shape) in self._slices.items()}

    def init_params(self, replica: int = 0) -> np.ndarray:
        """Body from ``init_seed`` (shared by all replicas), head from ``(head_seed, replica)``."""
        params = np.zeros(self.num_params)
        views = self.unpack(params)
        names = [n for n, _ in self.layout]
        body_rng = np.random.default_rng(self.spec.init_seed)
        head_rng = np.random.default_rng([self.spec.head_seed, replica])
        for i, name in enumerate(names):
            if name.endswith("bias"):
                continue
            rng = head_rng if i >= len(names) - 2 else body_rng
            w = views[name]
            fan_in = w.shape[1]
            gain = 2.0 if name.startswith("hidden") else 1.0
            w[...] = rng.standard_normal(w.shape) * np.sqrt(gain / fan_in)
        return params

    def init_replicas(self, num_models: int) -> list[np.ndarray]:
        if num_models < 1:
            raise ConfigError(f"num_models must be >= 1, got {num_models}")
        return [self.init_params(m) for m in range(num_models)]

    def as_batch(self, clips) -> np.ndarray:
        """Flatten clips to an (n, T*D) float64 matrix.

        Accepts a Clip, a list of Clips, an array of shape (T, D) or
        (n, T, D), or an already flat (n, T*D) array.
        """
        if hasattr(clips, "frames"):
            clips = clips.frames[None]
        elif isinstance(clips, (list, tuple)):
            clips = np.stack([c.frames if hasattr(c, "frames") else c for c in clips])
        x = np.asarray(clips, dtype=np.float64)
        shape = (self.spec.clip_len, self.spec.feature_dim)
        if x.shape == shape:
            x = x[None]
        elif x.ndim == 2 and x.shape[1] == self.spec.input_dim:
            return x
        if x.ndim != 3 or x.shape[1:] != shape:
            raise DataError(f"clip shape {x.shape} does not match model clip shape {shape}")
        return x.reshape(x.shape[0], -1)

    def logits(self, params: np.ndarray, x: np.ndarray) -> np.ndarray:
        p = self.unpack(params)
        if self.spec.kind == LINEAR:
            return x @ p["weight"].T + p["bias"]
        hidden = np.maximum(x @ p["hidden.weight"].T + p["hidden.bias"], 0.0)
        return hidden @ p["out.weight"].T + p["out.bias"]

    def forward(self, params: np.ndarray, clips) -> np.ndarray:
        """Class probabilities, shape (n, C)."""
        return softmax(self.logits(params, self.as_batch(clips)))

    def predict(self, params: np.ndarray, clips) -> np.ndarray:
        """Top-1 class per clip; ties resolve to the lowest class index."""
        return np.argmax(self.logits(params, self.as_batch(clips)), axis=1)

    def loss(self, params: np.ndarray, clips, labels) -> float:
        logp = log_softmax(self.logits(params, self.as_batch(clips)))
        labels = np.asarray(labels, dtype=np.int64)
        return float(-np.mean(logp[np.arange(labels.size), labels]))

    def loss_and_grad(self, params: np.ndarray, clips, labels) -> tuple[float, np.ndarray]:
        """Mean cross-entropy over the batch and its exact gradient w.r.t. ``params``."""
        x = self.as_batch(clips)
        labels = np.asarray(labels, dtype=np.int64)
        n = x.shape[0]
        if n == 0:
            raise ValueError("empty batch")
        if labels.shape != (n,):
            raise ValueError(f"{n} clips but labels of shape {labels.shape}")
        p = self.unpack(params)
        grad = np.zeros_like(params)
        g = self.unpack(grad)
        rows = np.arange(n)

        if self.spec.kind == LINEAR:
            z = x @ p["weight"].T + p["bias"]
        else:
            pre = x @ p["hidden.weight"].T + p["hidden.bias"]
            hidden = np.maximum(pre, 0.0)
            z = hidden @ p["out.weight"].T + p["out.bias"]
        logp = log_softmax(z)
        loss = float(-np.mean(logp[rows, labels]))

        dz = np.exp(logp)
        dz[rows, labels] -= 1.0
        dz /= n
        if self.spec.kind == LINEAR:
            g["weight"][...] = dz.T @ x
            g["bias"][...] = dz.sum(axis=0)
        else:
            g["out.weight"][...] = dz.T @ hidden
            g["out.bias"][...] = dz.sum(axis=0)
            dpre = (dz @ p["out.weight"]) * (pre > 0)
            g["hidden.weight"][...] = dpre.T @ x
            g["hidden.bias"][...] = dpre.sum(axis=0)
        return loss, grad


def init_replicas(spec: ModelSpec, num_models: int) -> list[np.ndarray]:
    return ClipClassifier(spec).init_replicas(num_models)


_CKPT_HEAD = struct.Struct("<8sIIIIII")


def checkpoint_bytes(spec: ModelSpec, params: np.ndarray) -> bytes:
    model = ClipClassifier(spec)
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (model.num_params,):
        raise DataError(f"expected {model.num_params} parameters, got shape {params.shape}")
    parts = [
        _CKPT_HEAD.pack(
            CHECKPOINT_MAGIC,
            _KINDS.index(spec.kind),
            spec.clip_len,
            spec.feature_dim,
            spec.num_classes,
            spec.hidden_dim,
            len(model.layout),
        )
    ]
    for name, shape in model.layout:
        raw = name.encode()
        parts.append(struct.pack(f"<HI{len(shape)}I", len(raw), len(shape), *shape))
        parts.append(raw)
    parts.append(struct.pack("<Q", params.size))
    parts.append(params.astype("<f8").tobytes())
    return b"".join(parts)


def checkpoint_from_bytes(buf: bytes) -> tuple[ModelSpec, np.ndarray]:
    if buf[:8] != CHECKPOINT_MAGIC:
        raise DataError("not a model checkpoint (bad magic bytes)")
    try:
        _, kind, clip_len, dim, num_classes, hidden, n_tensors = _CKPT_HEAD.unpack_from(buf, 0)
        offset = _CKPT_HEAD.size
        layout = []
        for _ in range(n_tensors):
            name_len, ndim = struct.unpack_from("<HI", buf, offset)
            shape = struct.unpack_from(f"<{ndim}I", buf, offset + 6)
            offset += 6 + 4 * ndim
            layout.append((buf[offset : offset + name_len].decode(), tuple(shape)))
            offset += name_len
        (count,) = struct.unpack_from("<Q", buf, offset)
        offset += 8
    except (struct.error, UnicodeDecodeError) as exc:
        raise DataError(f"malformed checkpoint header: {exc}") from None
    if kind >= len(_KINDS):
        raise DataError(f"unknown model kind code {kind}")
    spec = ModelSpec(_KINDS[kind], clip_len, dim, num_classes, hidden)
    if layout != spec.layout():
        raise DataError("checkpoint layout does not match its model header")
    if len(buf) != offset + 8 * count:
        raise DataError(f"checkpoint payload is {len(buf) - offset} bytes, expected {8 * count}")
    params = np.frombuffer(buf, "<f8", count, offset).astype(np.float64)
    if params.size != ClipClassifier(spec).num_params:
        raise DataError("checkpoint parameter count does not match layout")
    return spec, params


def save_checkpoint(path: str | PathLike, spec: ModelSpec, params: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(checkpoint_bytes(spec, params))


def load_checkpoint(path: str | PathLike) -> tuple[ModelSpec, np.ndarray]:
    with open(path, "rb") as f:
        return checkpoint_from_bytes(f.read())
