"""Multi-replica training on sequentially read, label-segmented streams.

Clips are cut front-to-back from long labeled sequences, dealt round-robin
to ``M`` replicated classifiers and the replicas are pulled together after
every update by full (FedAvg) or partial (moving-average) synchronization.
"""

from seqfed.datagen import (
    GenSpec,
    StreamDataset,
    StreamSequence,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from seqfed.diagnostics import autocorrelation, clip_stream_correlation
from seqfed.dispatch import assign_round_robin
from seqfed.errors import ConfigError, DataError, NumericalError
from seqfed.models import ClipClassifier, ModelSpec, OptimizerState, cross_entropy, sgd_step
from seqfed.sampler import (
    Clip,
    SamplerConfig,
    extract_sequential_clips,
    sample_random_clip,
    sequential_stream,
    trim_dataset,
)
from seqfed.sync import AlphaSchedule, SyncPolicy, alpha_at, fedavg_sync, fedprox_sync, merge_models
from seqfed.trainer import RunConfig, bench_iteration, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "AlphaSchedule",
    "Clip",
    "ClipClassifier",
    "ConfigError",
    "DataError",
    "GenSpec",
    "ModelSpec",
    "NumericalError",
    "OptimizerState",
    "RunConfig",
    "SamplerConfig",
    "StreamDataset",
    "StreamSequence",
    "SyncPolicy",
    "alpha_at",
    "assign_round_robin",
    "autocorrelation",
    "bench_iteration",
    "clip_stream_correlation",
    "cross_entropy",
    "evaluate",
    "extract_sequential_clips",
    "fedavg_sync",
    "fedprox_sync",
    "generate_dataset",
    "merge_models",
    "read_dataset",
    "sample_random_clip",
    "sequential_stream",
    "sgd_step",
    "train",
    "trim_dataset",
    "write_dataset",
]
