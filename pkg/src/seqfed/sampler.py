"""Clip extraction from labeled streams.

Two protocols:

* sequential: read each stream front to back and cut non-overlapping clips of
  ``clip_len`` frames (``stride`` apart).  A candidate whose sampled frames do
  not share one label is dropped and reading resumes at the first frame whose
  label differs from the candidate's first frame.
* random: pick a random window of ``window_len`` frames inside a
  uniform-label (trimmed) stream and subsample ``clip_len`` frames evenly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from seqfed.datagen import StreamDataset, StreamSequence
from seqfed.errors import ConfigError, DataError

SEQUENTIAL = "sequential"
RANDOM = "random"


@dataclass(frozen=True, eq=False)
class Clip:
    frames: np.ndarray  # (clip_len, D), read-only view into the source stream
    label: int
    source_id: int
    start_frame: int

    @property
    def clip_len(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class SamplerConfig:
    clip_len: int = 16
    stride: int = 1
    window_len: int = 64
    mode: str = SEQUENTIAL
    epoch_seed: int = 0

    def validate(self) -> SamplerConfig:
        if self.clip_len < 1:
            raise ConfigError(f"clip_len must be >= 1, got {self.clip_len}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.mode not in (SEQUENTIAL, RANDOM):
            raise ConfigError(f"mode must be 'sequential' or 'random', got {self.mode!r}")
        if self.mode == RANDOM and self.window_len < self.clip_len:
            raise ConfigError(f"window_len ({self.window_len}) must be >= clip_len ({self.clip_len})")
        return self


def _run_ends(labels: np.ndarray) -> np.ndarray:
    """``out[t]`` is the first index after ``t`` whose label differs from ``labels[t]``."""
    n = labels.size
    cuts = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    stops = np.append(cuts, n)
    run_id = np.zeros(n, dtype=np.int64)
    run_id[cuts] = 1
    return stops[np.cumsum(run_id)]


def sequential_clip_starts(labels: np.ndarray, clip_len: int, stride: int = 1) -> list[int]:
    """Start frames of the clips the sequential scan keeps."""
    labels = np.asarray(labels)
    n = labels.size
    footprint = clip_len * stride
    if n < footprint:
        return []
    run_end = _run_ends(labels)
    offsets = np.arange(clip_len) * stride
    starts = []
    start = 0
    while start + footprint <= n:
        if stride == 1:
            uniform = run_end[start] >= start + clip_len
        else:
            uniform = bool(np.all(labels[start + offsets] == labels[start]))
        if uniform:
            starts.append(start)
            start += footprint
        else:
            start = int(run_end[start])
    return starts


def extract_sequential_clips(seq: StreamSequence, clip_len: int, stride: int = 1) -> list[Clip]:
    """Cut ``seq`` into non-overlapping single-label clips, front to back.

    A candidate clip starting at ``s`` covers frames ``s, s+stride, ...,
    s+(clip_len-1)*stride`` and occupies ``clip_len*stride`` frames of the
    stream; it is only considered while that footprint fits inside the
    stream, so at most ``len(seq) // (clip_len*stride)`` clips come out.
    """
    if clip_len < 1 or stride < 1:
        raise ConfigError("clip_len and stride must be >= 1")
    span = (clip_len - 1) * stride + 1
    return [
        Clip(seq.features[s : s + span : stride], int(seq.labels[s]), seq.id, s)
        for s in sequential_clip_starts(seq.labels, clip_len, stride)
    ]


def count_sequential_clips(dataset: StreamDataset, clip_len: int, stride: int = 1) -> int:
    return sum(len(sequential_clip_starts(s.labels, clip_len, stride)) for s in dataset)


def random_clip_indices(start: int, clip_len: int, window_len: int) -> np.ndarray:
    """Frame indices of ``clip_len`` frames spread evenly over a ``window_len`` window."""
    return start + (np.arange(clip_len) * window_len) // clip_len


def sample_random_clip(
    seq: StreamSequence,
    clip_len: int,
    window_len: int,
    rng: np.random.Generator,
    start: int | None = None,
) -> Clip:
    """Subsample ``clip_len`` frames from a random ``window_len`` window of ``seq``.

    ``seq`` is expected to be trimmed (one label over the window).  Passing
    ``start`` fixes the window instead of drawing it.
    """
    if clip_len > window_len:
        raise ConfigError(f"clip_len ({clip_len}) must not exceed window_len ({window_len})")
    n = len(seq)
    if n < window_len:
        raise DataError(f"sequence {seq.id} has {n} frames, shorter than the {window_len}-frame window")
    if start is None:
        start = int(rng.integers(0, n - window_len + 1))
    elif not 0 <= start <= n - window_len:
        raise DataError(f"window start {start} out of range [0, {n - window_len}]")
    window = seq.labels[start : start + window_len]
    if np.any(window != window[0]):
        raise DataError(f"sequence {seq.id}: labels change inside window at {start}; pass trimmed sequences")
    idx = random_clip_indices(start, clip_len, window_len)
    frames = seq.features[idx]
    frames.flags.writeable = False
    return Clip(frames, int(window[0]), seq.id, start)


def trim_dataset(dataset: StreamDataset) -> StreamDataset:
    """Split every stream at its label changes into uniform-label streams.

    The pieces are renumbered ``0..K-1`` in reading order.
    """
    pieces = []
    for seq in dataset:
        for a, b, _ in seq.segments():
            pieces.append(StreamSequence(seq.features[a:b], seq.labels[a:b], len(pieces)))
    return StreamDataset(tuple(pieces), dataset.num_classes, dataset.feature_dim)


def epoch_order(num_sequences: int, epoch_seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([epoch_seed, epoch]).permutation(num_sequences)


def iter_sequential_stream(dataset: StreamDataset, config: SamplerConfig, epoch: int) -> Iterator[Clip]:
    for i in epoch_order(len(dataset), config.epoch_seed, epoch):
        yield from extract_sequential_clips(dataset[i], config.clip_len, config.stride)


def sequential_stream(dataset: StreamDataset, config: SamplerConfig, epoch: int) -> list[Clip]:
    """All clips of one epoch: streams in a seeded random order, each read front to back."""
    return list(iter_sequential_stream(dataset, config, epoch))


def iter_random_clips(
    trimmed: StreamDataset, config: SamplerConfig, count: int, rng: np.random.Generator
) -> Iterator[Clip]:
    """``count`` clips, each from a uniformly chosen trimmed stream long enough for a window."""
    eligible = [s for s in trimmed if len(s) >= config.window_len]
    if count and not eligible:
        raise DataError(f"no trimmed sequence has at least window_len={config.window_len} frames")
    for _ in range(count):
        seq = eligible[int(rng.integers(len(eligible)))]
        yield sample_random_clip(seq, config.clip_len, config.window_len, rng)
