"""Parameter synchronization across replicas.

``fedavg`` replaces every replica by the mean; ``fedprox`` only moves each
replica part of the way::

    w_m <- (1 - alpha) * mean(w) + alpha * w_m

so ``alpha = 0`` is full averaging and ``alpha = 1`` leaves replicas alone.
The mean is always accumulated left to right over replicas, which keeps
results bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from seqfed.errors import ConfigError

NONE = "none"
FEDAVG = "fedavg"
FEDPROX = "fedprox"

CONSTANT = "constant"
LINEAR_UP = "linear_up"
LINEAR_DOWN = "linear_down"


@dataclass(frozen=True)
class AlphaSchedule:
    """Per-epoch synchronization momentum.

    ``constant`` keeps ``value``; ``linear_up`` goes 0, step, 2*step, ...
    and ``linear_down`` goes 1, 1-step, ...; both clamp to [0, 1].
    """

    kind: str = CONSTANT
    value: float = 0.3
    step: float = 0.2

    def validate(self) -> AlphaSchedule:
        if self.kind not in (CONSTANT, LINEAR_UP, LINEAR_DOWN):
            raise ConfigError(f"alpha schedule must be constant, linear_up or linear_down, got {self.kind!r}")
        if self.kind == CONSTANT and not 0.0 <= self.value <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.value}")
        if self.kind != CONSTANT and not self.step >= 0:
            raise ConfigError(f"alpha step must be >= 0, got {self.step}")
        return self

    def label(self) -> str:
        if self.kind == CONSTANT:
            return f"constant:{self.value:g}"
        return f"{self.kind}:{self.step:g}"

    @classmethod
    def parse(cls, text: str) -> AlphaSchedule:
        """Parse ``"constant:0.3"``, ``"linear_up:0.2"``, ``"linear_down"`` or a bare number."""
        kind, _, arg = text.strip().partition(":")
        try:
            if kind not in (CONSTANT, LINEAR_UP, LINEAR_DOWN):
                return cls(CONSTANT, float(kind)).validate()
            if kind == CONSTANT:
                return cls(CONSTANT, float(arg)).validate()
            return cls(kind, step=float(arg) if arg else 0.2).validate()
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"alpha_schedule: cannot parse {text!r}") from None


def alpha_at(schedule: AlphaSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if schedule.kind == CONSTANT:
        a = schedule.value
    elif schedule.kind == LINEAR_UP:
        a = schedule.step * epoch
    else:
        a = 1.0 - schedule.step * epoch
    return min(max(a, 0.0), 1.0)


@dataclass(frozen=True)
class SyncPolicy:
    kind: str = NONE
    schedule: AlphaSchedule | None = None
    sync_optimizer_state: bool = False

    def validate(self) -> SyncPolicy:
        if self.kind not in (NONE, FEDAVG, FEDPROX):
            raise ConfigError(f"sync kind must be none, fedavg or fedprox, got {self.kind!r}")
        if self.kind == FEDPROX:
            if self.schedule is None:
                raise ConfigError("sync: fedprox requires an alpha schedule")
            self.schedule.validate()
        return self

    def alpha(self, epoch: int) -> float | None:
        """Alpha used during ``epoch``; ``None`` when no fedprox step applies."""
        if self.kind != FEDPROX:
            return None
        return alpha_at(self.schedule, epoch)

    def apply(self, vectors: Sequence[np.ndarray], epoch: int) -> list[np.ndarray]:
        if self.kind == FEDAVG:
            return fedavg_sync(vectors)
        if self.kind == FEDPROX:
            return fedprox_sync(vectors, self.alpha(epoch))
        return list(vectors)


def _check_layout(vectors: Sequence[np.ndarray]) -> None:
    if not len(vectors):
        raise ValueError("need at least one replica")
    shape = vectors[0].shape
    for k, v in enumerate(vectors):
        if v.shape != shape:
            raise ValueError(f"replica {k} has shape {v.shape}, replica 0 has {shape}")


def replica_mean(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Mean over replicas, summed strictly in replica order."""
    _check_layout(vectors)
    total = np.array(vectors[0], dtype=np.float64, copy=True)
    for v in vectors[1:]:
        total += v
    return total / len(vectors)


def fedavg_sync(vectors: Sequence[np.ndarray]) -> list[np.ndarray]:
    mean = replica_mean(vectors)
    return [mean.copy() for _ in vectors]


def fedprox_sync(vectors: Sequence[np.ndarray], alpha: float) -> list[np.ndarray]:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    mean = replica_mean(vectors)
    pull = (1.0 - alpha) * mean
    return [pull + alpha * v for v in vectors]


def merge_models(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Single inference model: the replica average."""
    return replica_mean(vectors)
