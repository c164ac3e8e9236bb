# %% [markdown]
# # Number of replicas under random and sequential sampling
#
# Random sampling cuts the streams at label changes and draws windows from
# random pieces; sequential sampling reads whole streams in order.  Both
# see the same number of clips per epoch.  Replicas are partially
# synchronized with alpha = 0.3.

# %%
import numpy as np

from seqfed import AlphaSchedule, GenSpec, ModelSpec, RunConfig, SamplerConfig, SyncPolicy, evaluate, generate_dataset, train
from seqfed.datagen import split_dataset

gen = GenSpec(num_sequences=16, frames_per_sequence=(1500, 2500), num_classes=6, feature_dim=16,
              segment_length=(150, 300), ar_coefficient=0.95, noise_scale=0.3, class_separation=2.0, seed=1)
train_set, val_set = split_dataset(generate_dataset(gen), 4)

# %%
print(" M   random  sequential")
for m in (1, 2, 3, 4):
    row = []
    for mode in ("random", "sequential"):
        accs = []
        for seed in range(3):
            cfg = RunConfig(model=ModelSpec("linear", 16, 16, 6, init_seed=seed, head_seed=seed + 1),
                            sampler=SamplerConfig(clip_len=16, window_len=64, mode=mode, epoch_seed=seed),
                            num_models=m, sync=SyncPolicy("fedprox", AlphaSchedule("constant", 0.3)), seed=seed)
            accs.append(evaluate(cfg.model, train(cfg, train_set).merged(), val_set, cfg.sampler).top1)
        row.append(np.mean(accs))
    print(f" {m}   {row[0]:.4f}  {row[1]:.4f}")
