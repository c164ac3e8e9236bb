"""Serial-correlation statistics for frame and clip streams."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from os import PathLike
from typing import Iterable, Sequence

import numpy as np

from seqfed.errors import DataError


@dataclass(frozen=True)
class SeriesStats:
    mean: float
    variance: float
    autocorrelations: dict[int, float]


def autocorrelation(series, lag: int) -> float:
    """Sample autocorrelation at ``lag``.

    ``sum((x_t - m)(x_{t+lag} - m)) / sum((x_t - m)^2)`` with ``m`` the full
    series mean; this is the usual biased estimator, so the value is always
    in [-1, 1].
    """
    x = np.asarray(series, dtype=np.float64).ravel()
    if lag < 1:
        raise ValueError(f"lag must be >= 1, got {lag}")
    if x.size <= lag:
        raise DataError(f"series of length {x.size} is too short for lag {lag}")
    d = x - x.mean()
    denom = np.dot(d, d)
    if denom <= 0.0:
        raise DataError("series has zero variance; autocorrelation undefined")
    return float(np.dot(d[:-lag], d[lag:]) / denom)


def series_stats(series, lags: Iterable[int]) -> SeriesStats:
    x = np.asarray(series, dtype=np.float64).ravel()
    return SeriesStats(float(x.mean()), float(x.var()), {k: autocorrelation(x, k) for k in lags})


def clip_summary(stream: Sequence) -> np.ndarray:
    """One scalar per clip: the mean over all of its frames and feature dims."""
    return np.array([float(np.mean(c.frames, dtype=np.float64)) for c in stream])


def clip_stream_correlation(stream: Sequence, lag: int) -> float:
    return autocorrelation(clip_summary(stream), lag)


def replica_subsequence(series, model: int, num_models: int):
    """Elements ``model, model + M, model + 2M, ...`` -- what round-robin dispatch hands one replica."""
    return series[model::num_models]


def write_lag_csv(path: str | PathLike, rows: Iterable[tuple[int, float]]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["lag", "value"])
        for lag, value in rows:
            w.writerow([lag, repr(float(value))])
