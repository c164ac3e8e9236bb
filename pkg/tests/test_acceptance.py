"""Exit criteria. Each test carries an ``acceptance`` marker; the terminal
summary prints one PASS/FAIL line per criterion."""

import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import brute_force_starts, central_diff_grad, random_segmentation
from seqfed.cli import main
from seqfed.datagen import GenSpec, StreamDataset, StreamSequence, generate_dataset, split_dataset
from seqfed.diagnostics import autocorrelation, clip_summary
from seqfed.dispatch import assign_round_robin, delivered_indices
from seqfed.models import ClipClassifier, ModelSpec
from seqfed.sampler import SamplerConfig, extract_sequential_clips, sequential_stream
from seqfed.sync import AlphaSchedule, SyncPolicy, fedavg_sync, fedprox_sync, replica_mean
from seqfed.trainer import RunConfig, bench_iteration, evaluate, iterate_training, train, train_on_source

acceptance = pytest.mark.acceptance


@acceptance(1, "gradient oracle: analytic vs central differences, rel err < 1e-6, < 5 s")
def test_gradient_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    specs = [ModelSpec("linear", 4, 3, 5), ModelSpec("mlp", 4, 3, 5, hidden_dim=7)]
    worst = 0.0
    for spec in specs:
        model = ClipClassifier(spec)
        for _ in range(20):
            w = rng.standard_normal(model.num_params)
            n = int(rng.integers(1, 9))
            x = rng.standard_normal((n, 4, 3))
            y = rng.integers(0, 5, n)
            _, g = model.loss_and_grad(w, x, y)
            fd = central_diff_grad(lambda v: model.loss(v, x, y), w, h=1e-5)
            worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    assert worst < 1e-6
    assert time.perf_counter() - t0 < 5


@acceptance(2, "clip extraction equals brute-force scanner on 1000 sequences, < 5 s")
def test_clip_extraction_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    for _ in range(1000):
        length = int(rng.integers(0, 201))
        labels = random_segmentation(rng, length, int(rng.integers(1, 5)), int(rng.integers(1, 50)))
        seq = StreamSequence(np.zeros((length, 1), np.float32), labels, 0)
        clip_len = int(rng.integers(1, 20))
        stride = int(rng.integers(1, 4))
        got = [c.start_frame for c in extract_sequential_clips(seq, clip_len, stride)]
        assert got == brute_force_starts(labels, clip_len, stride)
    assert time.perf_counter() - t0 < 5


@acceptance(3, "partial-sync degeneracies, mean preservation, contraction (1e-12)")
def test_fedprox_identities():
    rng = np.random.default_rng(3)
    for _ in range(200):
        m = int(rng.integers(1, 7))
        src = [rng.uniform(-1, 1, 9) for _ in range(m)]
        for a, b in zip(fedprox_sync(src, 0.0), fedavg_sync(src)):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(fedprox_sync(src, 1.0), src):
            np.testing.assert_array_equal(a, b)
        alpha = float(rng.uniform())
        out = fedprox_sync(src, alpha)
        mean = replica_mean(src)
        assert np.max(np.abs(replica_mean(out) - mean)) <= 1e-12
        before = max(np.linalg.norm(v - mean) for v in src)
        after = max(np.linalg.norm(v - mean) for v in out)
        assert abs(after - alpha * before) <= 1e-12


def _clips(seed, n_clips, clip_len=4, dim=3, classes=3):
    spec = GenSpec(num_sequences=1, frames_per_sequence=(n_clips * clip_len * 2,) * 2, num_classes=classes,
                   feature_dim=dim, segment_length=(clip_len * 6, clip_len * 12), ar_coefficient=0.7,
                   noise_scale=0.5, class_separation=2.0, seed=seed)
    stream = sequential_stream(generate_dataset(spec), SamplerConfig(clip_len=clip_len), 0)
    assert len(stream) >= n_clips
    return stream[:n_clips]


@acceptance(4, "FedAvg replicas track single model on full batches (M=2,4; 1e-10), < 10 s")
def test_fedavg_single_model_equivalence():
    t0 = time.perf_counter()
    clips = _clips(0, 800)
    spec = ModelSpec("mlp", 4, 3, 3, hidden_dim=8, init_seed=5)
    base = RunConfig(model=spec, sampler=SamplerConfig(clip_len=4), batch_size=8, epochs=1,
                     lr=0.05, momentum=0.0, weight_decay=5e-5)
    w0 = ClipClassifier(spec).init_params()
    single = iterate_training(base, lambda e: clips, [w0])
    for m in (2, 4):
        cfg = replace(base, num_models=m, sync=SyncPolicy("fedavg"))
        single = iterate_training(base, lambda e: clips, [w0])
        n = 0
        worst = 0.0
        for (_, reps), (_, ref) in zip(iterate_training(cfg, lambda e: clips, [w0] * m), single):
            worst = max(worst, max(np.max(np.abs(r - ref[0])) for r in reps))
            n += 1
        assert n == 100
        assert worst <= 1e-10
    assert time.perf_counter() - t0 < 10


@acceptance(5, "alpha=1 replicas are bitwise equal to independent single-model runs")
def test_alpha_one_independence():
    epochs = [_clips(s, 400) for s in (10, 11, 12)]
    spec = ModelSpec("mlp", 4, 3, 3, hidden_dim=6, init_seed=1, head_seed=2)
    cfg = RunConfig(model=spec, sampler=SamplerConfig(clip_len=4), num_models=2, batch_size=8, epochs=3,
                    lr=0.02, sync=SyncPolicy("fedprox", AlphaSchedule("constant", 1.0)))
    init = ClipClassifier(spec).init_replicas(2)
    joint = train_on_source(cfg, lambda e: epochs[e], init)
    for m in range(2):
        solo_cfg = replace(cfg, num_models=1, batch_size=4, sync=SyncPolicy())
        solo = train_on_source(solo_cfg, lambda e: epochs[e][m::2], [init[m]])
        assert np.array_equal(joint.replicas[m], solo.replicas[0])
        assert [r.losses[m] for r in joint.records] == [r.losses[0] for r in solo.records]


@acceptance(6, "round-robin stream identity; uneven batches average B/M +- 0.02 over 30000 batches")
def test_round_robin_stream_identity(monkeypatch):
    # clip j carries the value j, so the trainer's calls reveal who got what
    n = 96
    seq = StreamSequence(np.arange(n, dtype=np.float32)[:, None], np.zeros(n, np.int64), 0)
    ds = StreamDataset((seq,), 2, 1)
    stream = sequential_stream(ds, SamplerConfig(clip_len=1), 0)
    for batch, m in [(8, 2), (8, 4), (12, 3), (6, 1)]:
        per_model = delivered_indices(len(stream), batch, m)
        for r in range(m):
            assert [stream[j].start_frame for j in per_model[r]] == [c.start_frame for c in stream[r::m]]

        seen = []
        orig = ClipClassifier.loss_and_grad

        def spy(self, params, x, y):
            seen.append(np.asarray(x)[:, 0].astype(int).tolist())
            return orig(self, params, x, y)

        monkeypatch.setattr(ClipClassifier, "loss_and_grad", spy)
        cfg = RunConfig(model=ModelSpec("linear", 1, 1, 2), sampler=SamplerConfig(clip_len=1),
                        num_models=m, batch_size=batch, epochs=1)
        train(cfg, ds)
        monkeypatch.setattr(ClipClassifier, "loss_and_grad", orig)
        consumed = [sum(seen[r::m], []) for r in range(m)]
        assert consumed == [list(range(r, n, m)) for r in range(m)]

    rng = np.random.default_rng(0)
    counts = np.zeros(3)
    for _ in range(30_000):
        counts += [len(p) for p in assign_round_robin(8, 3, rng)]
    assert np.all(np.abs(counts / 30_000 - 8 / 3) <= 0.02)


@acceptance(7, "decorrelation: per-replica lag-1 = global lag-M +- 0.05 and < global lag-1 (rho=0.9)")
def test_decorrelation():
    spec = GenSpec(num_sequences=10, frames_per_sequence=(82_000, 82_000), num_classes=4, feature_dim=4,
                   segment_length=(2000, 4000), ar_coefficient=0.9, noise_scale=1.0, class_separation=1.0, seed=1)
    stream = sequential_stream(generate_dataset(spec), SamplerConfig(clip_len=8), 0)
    assert len(stream) >= 100_000
    series = clip_summary(stream)
    lag1 = autocorrelation(series, 1)
    for m in (2, 3, 4):
        glob = autocorrelation(series, m)
        for idx in delivered_indices(len(series), 12, m, np.random.default_rng(m)):
            own = autocorrelation(series[idx], 1)
            assert abs(own - glob) <= 0.05
            assert own < lag1


def _direction_run(seed, num_models, sync):
    gen = GenSpec(num_sequences=24, frames_per_sequence=(2000, 3000), num_classes=10, feature_dim=32,
                  segment_length=(200, 400), ar_coefficient=0.95, noise_scale=0.3, class_separation=2.0, seed=seed)
    train_set, val_set = split_dataset(generate_dataset(gen), 8)
    spec = ModelSpec("linear", 16, 32, 10, init_seed=seed, head_seed=seed + 1)
    cfg = RunConfig(model=spec, sampler=SamplerConfig(clip_len=16, epoch_seed=seed), num_models=num_models,
                    batch_size=8, epochs=5, lr=1e-3, momentum=0.9, weight_decay=5e-5, sync=sync, seed=seed)
    return evaluate(spec, train(cfg, train_set).merged(), val_set, cfg.sampler).top1


@acceptance(8, "direction of effect: sequential M=3 (alpha=0.3) >= M=1 in >= 4 of 5 seeds, < 2 min")
def test_direction_of_effect():
    t0 = time.perf_counter()
    rows = []
    for seed in range(5):
        base = _direction_run(seed, 1, SyncPolicy())
        multi = _direction_run(seed, 3, SyncPolicy("fedprox", AlphaSchedule("constant", 0.3)))
        rows.append((seed, base, multi))
    for seed, base, multi in rows:
        print(f"seed {seed}: M=1 {base:.4f}  M=3 {multi:.4f}")
    wins = sum(multi >= base for _, base, multi in rows)
    assert time.perf_counter() - t0 < 120
    assert wins >= 4, f"M=3 >= M=1 in only {wins}/5 seeds: {rows}"


@acceptance(9, "cmd_train twice -> byte-identical checkpoint and metrics at any thread count")
def test_cli_determinism(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "[data]\nnum_sequences = 4\nframes_min = 300\nframes_max = 400\nnum_classes = 3\nfeature_dim = 4\n"
        "segment_min = 40\nsegment_max = 90\nseed = 2\n"
        "[sampler]\nclip_len = 8\n"
        "[model]\nkind = mlp\nhidden_dim = 6\n"
        "[train]\nreplicas = 3\nbatch_size = 8\nepochs = 2\nlr = 0.05\ndataset = data/train.bin\n"
        "[sync]\nkind = fedprox\nalpha_schedule = linear_up:0.2\n"
    )
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "data")]) == 0
    for name, threads in [("a", "1"), ("b", "4"), ("c", "1")]:
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / name), "--threads", threads]) == 0
    for f in ("model.ckpt", "metrics.jsonl"):
        ref = (tmp_path / "a" / f).read_bytes()
        assert (tmp_path / "b" / f).read_bytes() == ref
        assert (tmp_path / "c" / f).read_bytes() == ref


@acceptance(10, "timing harness: phase means sum <= total; sequential and random both complete")
def test_timing_harness():
    data = generate_dataset(GenSpec(num_sequences=6, seed=4))
    base = RunConfig(model=ModelSpec("linear", 16, 8, 4), num_models=2,
                     sync=SyncPolicy("fedprox", AlphaSchedule("constant", 0.3)))
    for mode in ("sequential", "random"):
        cfg = replace(base, sampler=SamplerConfig(clip_len=16, window_len=32, mode=mode))
        s = bench_iteration(cfg, data, 50)
        assert s.n_iters == 50
        assert s.mean["data_time"] + s.mean["compute_time"] + s.mean["sync_time"] <= s.mean["total_time"]
        assert all(np.isfinite(v) and v >= 0 for v in (*s.mean.values(), *s.std.values()))
