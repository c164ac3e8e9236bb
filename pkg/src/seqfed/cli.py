"""Command-line entry point.

Every command reads one INI-style config file (``--config``) and writes its
outputs under ``--out`` (default: current directory)::

    seqfed gen     --config run.ini --out runs/a     # train.bin [+ val.bin]
    seqfed train   --config run.ini --out runs/a     # model.ckpt, metrics.jsonl, timings.jsonl
    seqfed eval    --config run.ini --out runs/a     # eval.json
    seqfed sweep   --config run.ini --out runs/a     # sweep.csv
    seqfed analyze --config run.ini --out runs/a     # correlation.csv
    seqfed bench   --config run.ini --out runs/a     # bench.json

Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import itertools
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from seqfed import datagen, diagnostics
from seqfed.errors import ConfigError, DataError, NumericalError
from seqfed.models import ModelSpec, load_checkpoint, save_checkpoint
from seqfed.sampler import SamplerConfig, sequential_stream
from seqfed.sync import AlphaSchedule, SyncPolicy, merge_models
from seqfed.trainer import RunConfig, bench_iteration, evaluate, train, write_metrics, write_report, write_timings

SWEEP_FIELDS = ["M", "alpha_schedule", "mode", "seed", "top1", "iter_time_mean", "status"]


class Settings:
    """Typed access to the config file plus command-line overrides."""

    def __init__(self, path: str | None, out: str, seed: int | None = None, threads: int = 1):
        self.cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        self.base = Path(".")
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"--config: file not found: {path}")
            try:
                self.cp.read(p)
            except configparser.Error as exc:
                raise ConfigError(f"--config: {exc}") from None
            self.base = p.parent
        self.out = Path(out)
        self.seed_override = seed
        self.threads = threads

    def _get(self, section, key, conv, default):
        raw = self.cp.get(section, key, fallback=None)
        if raw is None:
            if default is ConfigError:
                raise ConfigError(f"[{section}] {key}: required")
            return default
        try:
            return conv(raw.strip())
        except ValueError:
            raise ConfigError(f"[{section}] {key}: invalid value {raw!r}") from None

    def int(self, section, key, default=ConfigError):
        return self._get(section, key, int, default)

    def float(self, section, key, default=ConfigError):
        return self._get(section, key, float, default)

    def str(self, section, key, default=ConfigError):
        return self._get(section, key, str, default)

    def bool(self, section, key, default=False):
        def conv(v):
            if v.lower() in ("1", "true", "yes", "on"):
                return True
            if v.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(v)

        return self._get(section, key, conv, default)

    def list(self, section, key, conv, default):
        return self._get(section, key, lambda v: [conv(x.strip()) for x in v.split(",") if x.strip()], default)

    def seed(self, section, key="seed", default=0):
        if self.seed_override is not None:
            return self.seed_override
        return self.int(section, key, default)

    def path(self, section, key, default_name):
        raw = self.cp.get(section, key, fallback=None)
        if raw is None:
            return self.out / default_name
        p = Path(raw.strip())
        return p if p.is_absolute() else self.base / p

    # builders -------------------------------------------------------------

    def gen_spec(self) -> datagen.GenSpec:
        s = "data"
        spec = datagen.GenSpec(
            num_sequences=self.int(s, "num_sequences", 8) + self.int(s, "val_sequences", 0),
            frames_per_sequence=(self.int(s, "frames_min", 400), self.int(s, "frames_max", 800)),
            num_classes=self.int(s, "num_classes", 4),
            feature_dim=self.int(s, "feature_dim", 8),
            segment_length=(self.int(s, "segment_min", 50), self.int(s, "segment_max", 150)),
            ar_coefficient=self.float(s, "ar_coefficient", 0.9),
            noise_scale=self.float(s, "noise_scale", 0.5),
            class_separation=self.float(s, "class_separation", 3.0),
            seed=self.seed(s),
        )
        return spec.validate()

    def sync_policy(self) -> SyncPolicy:
        kind = self.str("sync", "kind", "none")
        raw = self.str("sync", "alpha_schedule", None)
        schedule = AlphaSchedule.parse(raw) if raw is not None else None
        return SyncPolicy(kind, schedule, self.bool("sync", "sync_optimizer_state")).validate()

    def run_config(self, dataset: datagen.StreamDataset) -> RunConfig:
        seed = self.seed("train")
        clip_len = self.int("sampler", "clip_len", 16)
        sampler = SamplerConfig(
            clip_len=clip_len,
            stride=self.int("sampler", "stride", 1),
            window_len=self.int("sampler", "window_len", 64),
            mode=self.str("sampler", "mode", "sequential"),
            epoch_seed=seed if self.seed_override is not None else self.int("sampler", "epoch_seed", seed),
        )
        model = ModelSpec(
            kind=self.str("model", "kind", "linear"),
            clip_len=clip_len,
            feature_dim=dataset.feature_dim,
            num_classes=dataset.num_classes,
            hidden_dim=self.int("model", "hidden_dim", 0),
            init_seed=seed if self.seed_override is not None else self.int("model", "init_seed", seed),
            head_seed=seed + 1 if self.seed_override is not None else self.int("model", "head_seed", seed + 1),
        )
        cfg = RunConfig(
            model=model,
            sampler=sampler,
            num_models=self.int("train", "replicas", 1),
            batch_size=self.int("train", "batch_size", 8),
            epochs=self.int("train", "epochs", 5),
            lr=self.float("train", "lr", 1e-3),
            momentum=self.float("train", "momentum", 0.9),
            weight_decay=self.float("train", "weight_decay", 5e-5),
            sync=self.sync_policy(),
            seed=seed,
        )
        return cfg.validate()

    def train_set(self) -> datagen.StreamDataset:
        return _read(self.path("train", "dataset", self.str("data", "train_file", "train.bin")))

    def val_set(self) -> datagen.StreamDataset | None:
        if self.cp.has_option("train", "val_dataset"):
            return _read(self.path("train", "val_dataset", ""))
        default = self.out / self.str("data", "val_file", "val.bin")
        return _read(default) if default.is_file() else None


def _read(path: Path) -> datagen.StreamDataset:
    if not path.is_file():
        raise DataError(f"dataset not found: {path}")
    return datagen.read_dataset(path)


def _reseed(cfg: RunConfig, seed: int) -> RunConfig:
    return replace(
        cfg,
        seed=seed,
        model=replace(cfg.model, init_seed=seed, head_seed=seed + 1),
        sampler=replace(cfg.sampler, epoch_seed=seed),
    )


def cmd_gen(st: Settings) -> int:
    spec = st.gen_spec()
    num_val = st.int("data", "val_sequences", 0)
    train_set, val_set = datagen.split_dataset(datagen.generate_dataset(spec), num_val)
    st.out.mkdir(parents=True, exist_ok=True)
    path = st.out / st.str("data", "train_file", "train.bin")
    datagen.write_dataset(train_set, path)
    print(f"wrote {path}: N={len(train_set)} D={train_set.feature_dim} C={train_set.num_classes} "
          f"frames={train_set.total_frames}")
    if num_val:
        vpath = st.out / st.str("data", "val_file", "val.bin")
        datagen.write_dataset(val_set, vpath)
        print(f"wrote {vpath}: N={len(val_set)} D={val_set.feature_dim} C={val_set.num_classes} "
              f"frames={val_set.total_frames}")
    return 0


def cmd_train(st: Settings) -> int:
    train_set = st.train_set()
    cfg = st.run_config(train_set)
    result = train(cfg, train_set, threads=st.threads)
    merged = merge_models(result.replicas)
    st.out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(st.out / "model.ckpt", cfg.model, merged)
    write_metrics(st.out / "metrics.jsonl", result.records)
    write_timings(st.out / "timings.jsonl", result.records)
    print(f"trained M={cfg.num_models} for {len(result.records)} iterations; "
          f"final mean loss {result.records[-1].mean_loss:.4f}")
    val_set = st.val_set()
    if val_set is not None:
        report = evaluate(cfg.model, merged, val_set, cfg.sampler)
        write_report(st.out / "eval.json", report)
        print(f"top1 {report.top1:.4f} on {report.num_clips} validation clips")
    return 0


def cmd_eval(st: Settings, checkpoint: str | None, dataset: str | None) -> int:
    ckpt = Path(checkpoint) if checkpoint else st.path("eval", "checkpoint", "model.ckpt")
    if not ckpt.is_file():
        raise DataError(f"checkpoint not found: {ckpt}")
    data_path = Path(dataset) if dataset else st.path("eval", "dataset", st.str("data", "val_file", "val.bin"))
    val_set = _read(data_path)
    spec, params = load_checkpoint(ckpt)
    if (spec.feature_dim, spec.num_classes) != (val_set.feature_dim, val_set.num_classes):
        raise DataError(
            f"dimension mismatch: checkpoint D={spec.feature_dim}, C={spec.num_classes}; "
            f"dataset D={val_set.feature_dim}, C={val_set.num_classes}"
        )
    scfg = SamplerConfig(clip_len=spec.clip_len, stride=st.int("sampler", "stride", 1))
    report = evaluate(spec, params, val_set, scfg)
    st.out.mkdir(parents=True, exist_ok=True)
    write_report(st.out / "eval.json", report)
    print(f"top1 {report.top1:.4f} on {report.num_clips} clips")
    return 0


def run_sweep(st: Settings) -> list[dict]:
    train_set = st.train_set()
    val_set = st.val_set() or train_set
    base = st.run_config(train_set)
    replicas = st.list("sweep", "replicas", int, [base.num_models])
    schedules = st.list("sweep", "alpha_schedules", str, [])
    modes = st.list("sweep", "modes", str, [base.mode])
    seeds = st.list("sweep", "seeds", int, [base.seed])
    sync_kind = st.str("sweep", "sync", base.sync.kind)
    if not (replicas and modes and seeds) or (sync_kind == "fedprox" and not schedules):
        raise ConfigError("[sweep]: replicas, modes, seeds (and alpha_schedules for fedprox) must be non-empty")
    if sync_kind != "fedprox":
        schedules = schedules or ["-"]

    rows = []
    for m, sched, mode, seed in itertools.product(replicas, schedules, modes, seeds):
        row = {"M": m, "alpha_schedule": sched, "mode": mode, "seed": seed,
               "top1": "", "iter_time_mean": "", "status": "ok"}
        try:
            schedule = AlphaSchedule.parse(sched) if sync_kind == "fedprox" else None
            cfg = replace(
                _reseed(base, seed),
                num_models=m,
                sync=SyncPolicy(sync_kind, schedule, base.sync.sync_optimizer_state),
            )
            cfg = replace(cfg, sampler=replace(cfg.sampler, mode=mode)).validate()
            result = train(cfg, train_set, threads=st.threads)
            report = evaluate(cfg.model, merge_models(result.replicas), val_set, cfg.sampler)
            row["top1"] = repr(report.top1)
            row["iter_time_mean"] = repr(float(np.mean([r.total_time for r in result.records])))
        except (ConfigError, DataError, NumericalError) as exc:
            row["status"] = f"error: {exc}"
        rows.append(row)
        print(f"M={m} alpha={sched} mode={mode} seed={seed}: {row['top1'] or row['status']}")
    return rows


def cmd_sweep(st: Settings) -> int:
    rows = run_sweep(st)
    st.out.mkdir(parents=True, exist_ok=True)
    with open(st.out / "sweep.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SWEEP_FIELDS)
        w.writeheader()
        w.writerows(rows)
    return 0


def cmd_analyze(st: Settings) -> int:
    train_set = st.train_set()
    cfg = st.run_config(train_set)
    replicas = st.list("analyze", "replicas", int, [1, 2, 3, 4])
    series = diagnostics.clip_summary(sequential_stream(train_set, cfg.sampler, 0))

    def corr(s, lag):
        try:
            return repr(diagnostics.autocorrelation(s, lag)), "ok"
        except DataError as exc:
            return "", f"error: {exc}"

    rows = []
    for lag in range(1, max(replicas) + 1):
        rows.append(("global", max(replicas), "", lag, *corr(series, lag)))
    for m in replicas:
        for r in range(m):
            sub = diagnostics.replica_subsequence(series, r, m)
            rows.append(("replica", m, r, 1, *corr(sub, 1)))
    st.out.mkdir(parents=True, exist_ok=True)
    with open(st.out / "correlation.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["scope", "M", "replica", "lag", "autocorrelation", "status"])
        w.writerows(rows)
    for row in rows:
        print(",".join(str(v) for v in row))
    return 0


def cmd_bench(st: Settings) -> int:
    train_set = st.train_set()
    base = st.run_config(train_set)
    n_iters = st.int("bench", "iters", 20)
    modes = st.list("bench", "modes", str, ["sequential", "random"])
    out = []
    for mode in modes:
        cfg = replace(base, sampler=replace(base.sampler, mode=mode)).validate()
        summary = bench_iteration(cfg, train_set, n_iters, threads=st.threads)
        out.append(summary.to_dict())
        print(f"{mode}: total {summary.mean['total_time'] * 1e3:.3f} ms/iter "
              f"(data {summary.mean['data_time'] * 1e3:.3f}, compute {summary.mean['compute_time'] * 1e3:.3f}, "
              f"sync {summary.mean['sync_time'] * 1e3:.3f})")
    st.out.mkdir(parents=True, exist_ok=True)
    with open(st.out / "bench.json", "w") as f:
        json.dump(out, f, indent=2)
        f.write("\n")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seqfed", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("gen", "train", "eval", "sweep", "analyze", "bench"):
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", help="INI config file")
        p.add_argument("--out", metavar="DIR", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override every seed in the config")
        p.add_argument("--threads", type=int, default=1, help="worker threads for replica updates")
        if name == "eval":
            p.add_argument("--checkpoint", metavar="PATH")
            p.add_argument("--dataset", metavar="PATH")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        st = Settings(args.config, args.out, args.seed, args.threads)
        if args.command == "gen":
            return cmd_gen(st)
        if args.command == "train":
            return cmd_train(st)
        if args.command == "eval":
            return cmd_eval(st, args.checkpoint, args.dataset)
        if args.command == "sweep":
            return cmd_sweep(st)
        if args.command == "analyze":
            return cmd_analyze(st)
        return cmd_bench(st)
    except (ConfigError, DataError, NumericalError) as exc:
        print(f"seqfed {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"seqfed {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
