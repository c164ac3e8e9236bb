"""Synthetic labeled streams and their on-disk format.

A stream stands in for an untrimmed video: ``T_i`` frames, each a
``D``-dimensional feature vector, with a piecewise-constant class label per
frame.  Within a label segment of class ``c`` the features follow

    x_t = rho * x_{t-1} + (1 - rho) * mu_c + eps_t,    eps_t ~ N(0, sigma^2 I)

so ``rho`` directly sets how similar neighbouring frames (and therefore
neighbouring clips) are.

File layout (little-endian, no padding)::

    magic  b"USTRM1\\0\\0"         8 bytes
    N, D, C                       u32 each
    per sequence:
        id, T_i                   u32 each
        features                  T_i * D float32, row-major
        labels                    T_i u16
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from os import PathLike
from typing import Iterator, Sequence

import numpy as np
from scipy.signal import lfilter

from seqfed.errors import ConfigError, DataError

MAGIC = b"USTRM1\x00\x00"
_HEADER = struct.Struct("<8sIII")
_RECORD = struct.Struct("<II")
MAX_CLASSES = 1 << 16


class DatasetFormatError(DataError):
    """Base class for unreadable dataset files."""


class BadMagicError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class LabelRangeError(DatasetFormatError):
    pass


class DimensionMismatchError(DatasetFormatError):
    pass


@dataclass(frozen=True, eq=False)
class StreamSequence:
    """One long labeled sequence: ``features`` is (T_i, D), ``labels`` is (T_i,)."""

    features: np.ndarray
    labels: np.ndarray
    id: int = 0

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float32)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise DimensionMismatchError(f"features must be 2-D, got shape {features.shape}")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise DimensionMismatchError(
                f"sequence {self.id}: {features.shape[0]} feature rows but {labels.shape} labels"
            )
        if labels.size and labels.min() < 0:
            raise LabelRangeError(f"sequence {self.id}: negative label")
        if self.id < 0:
            raise DataError(f"sequence id must be non-negative, got {self.id}")
        features.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, StreamSequence):
            return NotImplemented
        return (
            self.id == other.id
            and self.features.shape == other.features.shape
            and self.features.tobytes() == other.features.tobytes()
            and np.array_equal(self.labels, other.labels)
        )

    def segments(self) -> list[tuple[int, int, int]]:
        """Maximal constant-label runs as ``(start, stop, label)`` triples."""
        labels = self.labels
        if labels.size == 0:
            return []
        cuts = np.flatnonzero(labels[1:] != labels[:-1]) + 1
        starts = np.concatenate(([0], cuts))
        stops = np.concatenate((cuts, [labels.size]))
        return [(int(a), int(b), int(labels[a])) for a, b in zip(starts, stops)]


@dataclass(frozen=True, eq=False)
class StreamDataset:
    sequences: tuple[StreamSequence, ...]
    num_classes: int
    feature_dim: int

    def __post_init__(self):
        seqs = tuple(self.sequences)
        object.__setattr__(self, "sequences", seqs)
        if not 1 <= self.num_classes <= MAX_CLASSES:
            raise DataError(f"num_classes must be in [1, {MAX_CLASSES}], got {self.num_classes}")
        if self.feature_dim < 0:
            raise DataError(f"feature_dim must be non-negative, got {self.feature_dim}")
        ids = set()
        for seq in seqs:
            if seq.feature_dim != self.feature_dim:
                raise DimensionMismatchError(
                    f"sequence {seq.id} has D={seq.feature_dim}, dataset has D={self.feature_dim}"
                )
            if len(seq) and seq.labels.max() >= self.num_classes:
                raise LabelRangeError(
                    f"sequence {seq.id} has label {seq.labels.max()} >= C={self.num_classes}"
                )
            if seq.id in ids:
                raise DataError(f"duplicate sequence id {seq.id}")
            ids.add(seq.id)

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self) -> Iterator[StreamSequence]:
        return iter(self.sequences)

    def __getitem__(self, i: int) -> StreamSequence:
        return self.sequences[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, StreamDataset):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.feature_dim == other.feature_dim
            and self.sequences == other.sequences
        )

    @property
    def total_frames(self) -> int:
        return sum(len(s) for s in self.sequences)


@dataclass(frozen=True)
class GenSpec:
    """Parameters of the synthetic stream generator.

    ``frames_per_sequence`` and ``segment_length`` are inclusive ``(min, max)``
    ranges; every generated label segment has a length inside
    ``segment_length``.  ``noise_scale`` is the per-frame innovation std.
    """

    num_sequences: int = 8
    frames_per_sequence: tuple[int, int] = (400, 800)
    num_classes: int = 4
    feature_dim: int = 8
    segment_length: tuple[int, int] = (50, 150)
    ar_coefficient: float = 0.9
    noise_scale: float = 0.5
    class_separation: float = 3.0
    seed: int = 0

    def validate(self) -> GenSpec:
        def _range(name, r, lo):
            if len(r) != 2 or r[0] > r[1] or r[0] < lo:
                raise ConfigError(f"{name}: need {lo} <= min <= max, got {tuple(r)}")

        if self.num_sequences < 0:
            raise ConfigError(f"num_sequences must be >= 0, got {self.num_sequences}")
        if not 1 <= self.num_classes <= MAX_CLASSES:
            raise ConfigError(f"num_classes must be in [1, {MAX_CLASSES}], got {self.num_classes}")
        if self.feature_dim < 1:
            raise ConfigError(f"feature_dim must be >= 1, got {self.feature_dim}")
        _range("frames_per_sequence", self.frames_per_sequence, 0)
        _range("segment_length", self.segment_length, 1)
        if not 0.0 <= self.ar_coefficient < 1.0:
            raise ConfigError(f"ar_coefficient must satisfy 0 <= rho < 1, got {self.ar_coefficient}")
        if not self.noise_scale >= 0.0:
            raise ConfigError(f"noise_scale must be >= 0, got {self.noise_scale}")
        if not self.class_separation > 0.0:
            raise ConfigError(f"class_separation must be > 0, got {self.class_separation}")
        if self.num_sequences and not _feasible_lengths(self.frames_per_sequence, self.segment_length).size:
            raise ConfigError(
                "frames_per_sequence: no length in range can be split into segments of "
                f"length {tuple(self.segment_length)}"
            )
        return self


def _is_composable(r, smin: int, smax: int):
    """Whether ``r`` frames split exactly into segments of length in [smin, smax]."""
    r = np.asarray(r)
    return (r == 0) | (-(-r // smax) <= r // smin)


def _feasible_lengths(frames: Sequence[int], segment: Sequence[int]) -> np.ndarray:
    candidates = np.arange(frames[0], frames[1] + 1)
    return candidates[_is_composable(candidates, segment[0], segment[1])]


def _split_into_segments(total: int, smin: int, smax: int, rng: np.random.Generator) -> list[int]:
    lengths = []
    remaining = total
    while remaining > 0:
        options = np.arange(smin, min(smax, remaining) + 1)
        options = options[_is_composable(remaining - options, smin, smax)]
        step = int(options[rng.integers(options.size)])
        lengths.append(step)
        remaining -= step
    return lengths


def class_prototypes(num_classes: int, dim: int, separation: float, rng: np.random.Generator) -> np.ndarray:
    """Random unit directions rescaled so the closest pair is ``separation`` apart."""
    dirs = rng.standard_normal((num_classes, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    if num_classes == 1:
        return dirs * separation
    diff = dirs[:, None, :] - dirs[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    dmin = dist[np.triu_indices(num_classes, 1)].min()
    if dmin < 1e-9:
        # degenerate directions (e.g. D=1): evenly spaced points on one axis
        axis = dirs[0]
        return np.outer(np.arange(num_classes) - (num_classes - 1) / 2, axis) * separation
    return dirs * (separation / dmin)


def _generate_sequence(seq_id, spec, feasible, prototypes, rng) -> StreamSequence:
    total = int(feasible[rng.integers(feasible.size)])
    seg_lengths = _split_into_segments(total, *spec.segment_length, rng)
    classes = []
    for _ in seg_lengths:
        if classes and spec.num_classes > 1:
            c = int(rng.integers(spec.num_classes - 1))
            c += c >= classes[-1]  # never repeat the previous class
        else:
            c = int(rng.integers(spec.num_classes))
        classes.append(c)
    labels = np.repeat(np.asarray(classes, dtype=np.int64), seg_lengths)
    noise = rng.standard_normal((total, spec.feature_dim)) * spec.noise_scale
    if total == 0:
        return StreamSequence(np.zeros((0, spec.feature_dim), np.float32), labels, seq_id)

    rho = spec.ar_coefficient
    drive = (1.0 - rho) * prototypes[labels] + noise
    start = prototypes[labels[0]]
    feats, _ = lfilter([1.0], [1.0, -rho], drive, axis=0, zi=(rho * start)[None, :])
    return StreamSequence(feats.astype(np.float32), labels, seq_id)


def generate_dataset(spec: GenSpec) -> StreamDataset:
    """Draw a dataset of ``spec.num_sequences`` streams; deterministic in ``spec.seed``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    prototypes = class_prototypes(spec.num_classes, spec.feature_dim, spec.class_separation, rng)
    feasible = _feasible_lengths(spec.frames_per_sequence, spec.segment_length)
    seqs = [_generate_sequence(i, spec, feasible, prototypes, rng) for i in range(spec.num_sequences)]
    return StreamDataset(tuple(seqs), spec.num_classes, spec.feature_dim)


def dataset_to_bytes(dataset: StreamDataset) -> bytes:
    parts = [_HEADER.pack(MAGIC, len(dataset), dataset.feature_dim, dataset.num_classes)]
    for seq in dataset:
        if seq.feature_dim != dataset.feature_dim:
            raise DimensionMismatchError(f"sequence {seq.id}: D={seq.feature_dim} != {dataset.feature_dim}")
        parts.append(_RECORD.pack(seq.id, len(seq)))
        parts.append(seq.features.astype("<f4", copy=False).tobytes())
        parts.append(seq.labels.astype("<u2").tobytes())
    return b"".join(parts)


def dataset_from_bytes(buf: bytes) -> StreamDataset:
    if len(buf) < len(MAGIC) or buf[: len(MAGIC)] != MAGIC:
        raise BadMagicError("not a stream dataset file (bad magic bytes)")
    if len(buf) < _HEADER.size:
        raise TruncatedFileError("file ends inside the header")
    _, n, dim, num_classes = _HEADER.unpack_from(buf, 0)
    offset = _HEADER.size
    seqs = []
    for k in range(n):
        if offset + _RECORD.size > len(buf):
            raise TruncatedFileError(f"file ends before record {k} of {n}")
        seq_id, length = _RECORD.unpack_from(buf, offset)
        offset += _RECORD.size
        n_feat = length * dim * 4
        n_lab = length * 2
        if offset + n_feat + n_lab > len(buf):
            raise TruncatedFileError(f"file ends inside record {k} (id {seq_id})")
        feats = np.frombuffer(buf, "<f4", length * dim, offset).reshape(length, dim)
        offset += n_feat
        labels = np.frombuffer(buf, "<u2", length, offset)
        offset += n_lab
        if length and labels.max() >= num_classes:
            raise LabelRangeError(f"record {k} (id {seq_id}): label {labels.max()} >= C={num_classes}")
        seqs.append(StreamSequence(feats.astype(np.float32), labels.astype(np.int64), seq_id))
    if offset != len(buf):
        raise DimensionMismatchError(
            f"{len(buf) - offset} trailing bytes after {n} records; header dims do not match the payload"
        )
    return StreamDataset(tuple(seqs), num_classes, dim)


def write_dataset(dataset: StreamDataset, path: str | PathLike) -> None:
    data = dataset_to_bytes(dataset)
    with open(path, "wb") as f:
        f.write(data)


def read_dataset(path: str | PathLike) -> StreamDataset:
    with open(path, "rb") as f:
        return dataset_from_bytes(f.read())


def split_dataset(dataset: StreamDataset, num_val: int) -> tuple[StreamDataset, StreamDataset]:
    """Hold out the last ``num_val`` whole streams for validation.

    Both halves share class prototypes because they come from one draw.
    """
    if not 0 <= num_val <= len(dataset):
        raise ConfigError(f"num_val must be in [0, {len(dataset)}], got {num_val}")
    cut = len(dataset) - num_val
    make = lambda seqs: StreamDataset(seqs, dataset.num_classes, dataset.feature_dim)  # noqa: E731
    return make(dataset.sequences[:cut]), make(dataset.sequences[cut:])
