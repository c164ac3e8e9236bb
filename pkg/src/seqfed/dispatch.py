"""Round-robin assignment of batch positions to model replicas."""

from __future__ import annotations

import numpy as np


def assign_round_robin(batch_size: int, num_models: int, rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Split batch positions ``0..batch_size-1`` among ``num_models`` replicas.

    Position ``b`` goes to replica ``b % num_models`` when the batch divides
    evenly.  Otherwise the replica order is permuted at random for this batch
    (position ``b`` goes to ``perm[b % num_models]``) so that, on average, every
    replica receives ``batch_size / num_models`` samples.  ``rng`` is only
    consumed in the uneven case.

    Returns one sorted index array per replica; some may be empty when
    ``batch_size < num_models``.
    """
    if batch_size < 1 or num_models < 1:
        raise ValueError(f"need batch_size >= 1 and num_models >= 1, got {batch_size}, {num_models}")
    positions = np.arange(batch_size)
    owner = positions % num_models
    if batch_size % num_models:
        if rng is None:
            raise ValueError("an rng is required when batch_size is not a multiple of num_models")
        owner = rng.permutation(num_models)[owner]
    return [positions[owner == m] for m in range(num_models)]


def delivered_indices(
    stream_len: int, batch_size: int, num_models: int, rng: np.random.Generator | None = None
) -> list[np.ndarray]:
    """Global stream indices each replica receives when the stream is cut into batches.

    The last batch may be short; it is dispatched like any other.
    """
    per_model = [[] for _ in range(num_models)]
    for first in range(0, stream_len, batch_size):
        size = min(batch_size, stream_len - first)
        for m, idx in enumerate(assign_round_robin(size, num_models, rng)):
            per_model[m].append(idx + first)
    return [np.concatenate(p) if p else np.zeros(0, dtype=np.int64) for p in per_model]
