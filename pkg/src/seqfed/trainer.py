"""The multi-replica training loop, evaluation of the merged model, and timing.

One iteration:

1. pull the next ``batch_size`` clips from the epoch's clip stream,
2. deal batch positions to replicas round-robin,
3. every replica takes one SGD step on the mean loss of its share,
4. the sync policy runs once over all replicas.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import islice
from os import PathLike
from typing import Callable, Iterable, Iterator, NamedTuple, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from seqfed import sampler as smp
from seqfed.datagen import StreamDataset
from seqfed.dispatch import assign_round_robin
from seqfed.errors import ConfigError, DataError, NumericalError
from seqfed.models import ClipClassifier, ModelSpec, OptimizerState, sgd_step
from seqfed.sync import NONE, SyncPolicy, merge_models


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    sampler: smp.SamplerConfig = field(default_factory=smp.SamplerConfig)
    num_models: int = 1
    batch_size: int = 8
    epochs: int = 5
    lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-5
    sync: SyncPolicy = field(default_factory=SyncPolicy)
    seed: int = 0

    def validate(self) -> RunConfig:
        self.model.validate()
        self.sampler.validate()
        self.sync.validate()
        if self.num_models < 1:
            raise ConfigError(f"num_models must be >= 1, got {self.num_models}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.model.clip_len != self.sampler.clip_len:
            raise ConfigError(
                f"clip_len: model expects {self.model.clip_len} frames, sampler produces {self.sampler.clip_len}"
            )
        OptimizerState(self.lr, self.momentum, self.weight_decay)
        return self

    @property
    def mode(self) -> str:
        return self.sampler.mode

    def optimizer(self) -> OptimizerState:
        return OptimizerState(self.lr, self.momentum, self.weight_decay)


@dataclass
class IterationRecord:
    epoch: int
    iteration: int
    clip_start: int  # global stream index j of the batch's first clip
    clip_stop: int
    losses: list  # per replica; None for a replica that got no samples
    mean_loss: float
    alpha: float | None
    data_time: float = 0.0
    compute_time: float = 0.0
    sync_time: float = 0.0
    total_time: float = 0.0

    def metrics(self) -> dict:
        """Deterministic fields only (no wall-clock times)."""
        d = asdict(self)
        for k in ("data_time", "compute_time", "sync_time", "total_time"):
            d.pop(k)
        return d

    def timings(self) -> dict:
        return {
            "epoch": self.epoch,
            "iteration": self.iteration,
            "data_time": self.data_time,
            "compute_time": self.compute_time,
            "sync_time": self.sync_time,
            "total_time": self.total_time,
        }


@dataclass(frozen=True)
class EvalReport:
    top1: float
    num_clips: int
    num_correct: int
    per_class: dict[int, float]

    def to_dict(self) -> dict:
        return {
            "top1": self.top1,
            "num_clips": self.num_clips,
            "num_correct": self.num_correct,
            "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
        }


class TrainResult(NamedTuple):
    replicas: list[np.ndarray]
    records: list[IterationRecord]

    def merged(self) -> np.ndarray:
        return merge_models(self.replicas)


EpochSource = Callable[[int], Iterable[smp.Clip]]


def epoch_source(config: RunConfig, train_set: StreamDataset) -> EpochSource:
    """Clip stream factory for ``config.sampler.mode``.

    Random mode draws, per epoch, as many clips as sequential reading of the
    same data would yield.
    """
    scfg = config.sampler
    if scfg.mode == smp.SEQUENTIAL:
        return lambda epoch: smp.iter_sequential_stream(train_set, scfg, epoch)

    trimmed = smp.trim_dataset(train_set)
    count = smp.count_sequential_clips(train_set, scfg.clip_len, scfg.stride)
    rng = np.random.default_rng([config.seed, 2])
    return lambda epoch: smp.iter_random_clips(trimmed, scfg, count, rng)


def _stack(clips: Sequence[smp.Clip]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([c.frames for c in clips]).astype(np.float64)
    y = np.array([c.label for c in clips], dtype=np.int64)
    return x.reshape(len(clips), -1), y


def _sync_velocities(policy: SyncPolicy, states: list[OptimizerState], epoch: int) -> list[OptimizerState]:
    if all(s.velocity is None for s in states):
        return states
    shape = next(s.velocity.shape for s in states if s.velocity is not None)
    vel = [s.velocity if s.velocity is not None else np.zeros(shape) for s in states]
    return [replace(s, velocity=v) for s, v in zip(states, policy.apply(vel, epoch))]


def iterate_training(
    config: RunConfig,
    source: EpochSource,
    replicas: list[np.ndarray],
    *,
    threads: int = 1,
    epochs: int | None = None,
) -> Iterator[tuple[IterationRecord, list[np.ndarray]]]:
    """Run the loop, yielding ``(record, replicas)`` after every iteration.

    ``epochs=None`` uses ``config.epochs``; pass a larger value to keep going
    (the timing harness does).
    """
    model = ClipClassifier(config.model)
    num_models = config.num_models
    if len(replicas) != num_models:
        raise ConfigError(f"got {len(replicas)} initial replicas for num_models={num_models}")
    params = [np.array(r, dtype=np.float64, copy=True) for r in replicas]
    opts = [config.optimizer() for _ in range(num_models)]
    dispatch_rng = np.random.default_rng([config.seed, 1])
    policy = config.sync
    pool = ThreadPoolExecutor(threads) if threads > 1 else None

    def update(m, x, y):
        loss, grad = model.loss_and_grad(params[m], x, y)
        if not np.isfinite(loss):
            raise NumericalError(f"replica {m}: non-finite loss {loss}")
        new_params, new_opt = sgd_step(params[m], grad, opts[m])
        if not np.all(np.isfinite(new_params)):
            raise NumericalError(f"replica {m}: parameters became non-finite")
        return loss, new_params, new_opt

    iteration = 0
    try:
        for epoch in range(config.epochs if epochs is None else epochs):
            alpha = policy.alpha(epoch)
            stream = iter(source(epoch))
            j = 0
            while True:
                t0 = time.perf_counter()
                clips = list(islice(stream, config.batch_size))
                if not clips:
                    break
                x, y = _stack(clips)
                t1 = time.perf_counter()

                parts = assign_round_robin(len(clips), num_models, dispatch_rng)
                jobs = [(m, x[idx], y[idx]) for m, idx in enumerate(parts) if idx.size]
                if pool is None:
                    results = [update(*job) for job in jobs]
                else:
                    results = list(pool.map(lambda job: update(*job), jobs))
                losses = [None] * num_models
                for (m, _, _), (loss, new_params, new_opt) in zip(jobs, results):
                    losses[m] = loss
                    params[m] = new_params
                    opts[m] = new_opt
                t2 = time.perf_counter()

                if policy.kind != NONE:
                    params = policy.apply(params, epoch)
                    if policy.sync_optimizer_state:
                        opts = _sync_velocities(policy, opts, epoch)
                t3 = time.perf_counter()

                done = [v for v in losses if v is not None]
                record = IterationRecord(
                    epoch=epoch,
                    iteration=iteration,
                    clip_start=j,
                    clip_stop=j + len(clips),
                    losses=losses,
                    mean_loss=float(np.mean(done)),
                    alpha=alpha,
                    data_time=t1 - t0,
                    compute_time=t2 - t1,
                    sync_time=t3 - t2,
                )
                record.total_time = time.perf_counter() - t0
                iteration += 1
                j += len(clips)
                yield record, params
    finally:
        if pool is not None:
            pool.shutdown()


def train_on_source(
    config: RunConfig,
    source: EpochSource,
    init_params: Sequence[np.ndarray] | None = None,
    *,
    threads: int = 1,
) -> TrainResult:
    """Train from an arbitrary per-epoch clip source (``source(epoch)`` -> clips)."""
    config.validate()
    if init_params is None:
        init_params = ClipClassifier(config.model).init_replicas(config.num_models)
    records = []
    params = list(init_params)
    with threadpool_limits(limits=1):
        for record, params in iterate_training(config, source, list(init_params), threads=threads):
            records.append(record)
    if not records:
        raise DataError("training stream is empty: no clip could be extracted")
    return TrainResult(params, records)


def train(
    config: RunConfig,
    train_set: StreamDataset,
    init_params: Sequence[np.ndarray] | None = None,
    *,
    threads: int = 1,
) -> TrainResult:
    """Train ``config.num_models`` replicas on ``train_set``.

    Deterministic in ``config.seed`` (and the model/sampler seeds) for any
    ``threads``; BLAS is pinned to one thread inside the loop so every
    reduction has a fixed order.
    """
    config.validate()
    if train_set.feature_dim != config.model.feature_dim:
        raise DataError(
            f"dataset has D={train_set.feature_dim}, model expects feature_dim={config.model.feature_dim}"
        )
    return train_on_source(config, epoch_source(config, train_set), init_params, threads=threads)


def evaluate_predictions(predicted, labels) -> EvalReport:
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("validation stream is empty: no clip could be extracted")
    hit = predicted == labels
    per_class = {int(c): float(hit[labels == c].mean()) for c in np.unique(labels)}
    correct = int(hit.sum())
    return EvalReport(correct / labels.size, int(labels.size), correct, per_class)


def validation_clips(val_set: StreamDataset, sampler_config: smp.SamplerConfig) -> list[smp.Clip]:
    """Non-overlapping sequential clips of every stream, in dataset order."""
    clips = []
    for seq in val_set:
        clips.extend(smp.extract_sequential_clips(seq, sampler_config.clip_len, sampler_config.stride))
    return clips


def evaluate(
    spec: ModelSpec,
    params: np.ndarray,
    val_set: StreamDataset,
    sampler_config: smp.SamplerConfig,
    chunk: int = 4096,
) -> EvalReport:
    """Clip-level top-1 accuracy of one parameter vector on sequential validation clips."""
    model = ClipClassifier(spec)
    if val_set.feature_dim != spec.feature_dim:
        raise DataError(f"dataset has D={val_set.feature_dim}, model expects {spec.feature_dim}")
    clips = validation_clips(val_set, sampler_config)
    if not clips:
        raise DataError("validation stream is empty: no clip could be extracted")
    preds = []
    with threadpool_limits(limits=1):
        for k in range(0, len(clips), chunk):
            x, _ = _stack(clips[k : k + chunk])
            preds.append(model.predict(params, x))
    return evaluate_predictions(np.concatenate(preds), [c.label for c in clips])


@dataclass(frozen=True)
class BenchSummary:
    n_iters: int
    mode: str
    num_models: int
    mean: dict[str, float]
    std: dict[str, float]

    def to_dict(self) -> dict:
        return asdict(self)


PHASES = ("data_time", "compute_time", "sync_time", "total_time")


def bench_iteration(config: RunConfig, train_set: StreamDataset, n_iters: int, *, threads: int = 1) -> BenchSummary:
    """Mean and std of per-iteration wall time, split into data / compute / sync.

    Runs the real training loop for ``n_iters`` iterations, wrapping into
    further epochs if the configured ones run out.
    """
    if n_iters < 1:
        raise ConfigError(f"n_iters must be >= 1, got {n_iters}")
    config.validate()
    source = epoch_source(config, train_set)
    init = ClipClassifier(config.model).init_replicas(config.num_models)
    rows = []
    with threadpool_limits(limits=1):
        loop = iterate_training(config, source, init, threads=threads, epochs=1 << 30)
        for record, _ in islice(loop, n_iters):
            rows.append([getattr(record, p) for p in PHASES])
    if not rows:
        raise DataError("training stream is empty: no clip could be extracted")
    times = np.array(rows)
    return BenchSummary(
        n_iters=len(rows),
        mode=config.mode,
        num_models=config.num_models,
        mean=dict(zip(PHASES, times.mean(axis=0).tolist())),
        std=dict(zip(PHASES, times.std(axis=0).tolist())),
    )


def write_metrics(path: str | PathLike, records: Iterable[IterationRecord]) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r.metrics(), sort_keys=True) + "\n")


def write_timings(path: str | PathLike, records: Iterable[IterationRecord]) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r.timings(), sort_keys=True) + "\n")


def write_report(path: str | PathLike, report: EvalReport) -> None:
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
