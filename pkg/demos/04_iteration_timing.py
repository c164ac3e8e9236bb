# %% [markdown]
# # Where does an iteration spend its time?
#
# `bench_iteration` runs the real loop and splits each iteration into
# data loading (pulling and stacking clips), compute (forward, backward and
# the SGD step of every replica) and synchronization.

# %%
from dataclasses import replace

from seqfed import AlphaSchedule, GenSpec, ModelSpec, RunConfig, SamplerConfig, SyncPolicy, bench_iteration, generate_dataset

data = generate_dataset(GenSpec(num_sequences=8, frames_per_sequence=(2000, 4000), num_classes=6,
                                feature_dim=32, segment_length=(200, 400), seed=0))
base = RunConfig(model=ModelSpec("mlp", 16, 32, 6, hidden_dim=128),
                 sync=SyncPolicy("fedprox", AlphaSchedule("constant", 0.3)))

# %%
print("mode        M   data    compute  sync     total  (ms / iteration)")
for mode in ("random", "sequential"):
    for m in (1, 2, 3, 4):
        cfg = replace(base, num_models=m, sampler=SamplerConfig(clip_len=16, window_len=64, mode=mode))
        s = bench_iteration(cfg, data, 200).mean
        print(f"{mode:<11} {m}   {s['data_time'] * 1e3:.3f}   {s['compute_time'] * 1e3:.3f}    "
              f"{s['sync_time'] * 1e3:.3f}    {s['total_time'] * 1e3:.3f}")
