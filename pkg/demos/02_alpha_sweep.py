# %% [markdown]
# # Synchronization momentum with two replicas
#
# alpha = 0 averages the replicas after every step, alpha = 1 never
# synchronizes them; the two ramps move alpha by 0.2 per epoch.  Every run
# is evaluated with the merged (averaged) model on held-out streams.

# %%
import numpy as np

from seqfed import AlphaSchedule, GenSpec, ModelSpec, RunConfig, SamplerConfig, SyncPolicy, evaluate, generate_dataset, train
from seqfed.datagen import split_dataset

gen = GenSpec(num_sequences=16, frames_per_sequence=(1500, 2500), num_classes=6, feature_dim=16,
              segment_length=(150, 300), ar_coefficient=0.95, noise_scale=0.3, class_separation=2.0, seed=0)
train_set, val_set = split_dataset(generate_dataset(gen), 4)

schedules = [AlphaSchedule("constant", a) for a in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)]
schedules += [AlphaSchedule("linear_up", step=0.2), AlphaSchedule("linear_down", step=0.2)]

# %%
for sched in schedules:
    accs = []
    for seed in range(3):
        cfg = RunConfig(model=ModelSpec("linear", 16, 16, 6, init_seed=seed, head_seed=seed + 1),
                        sampler=SamplerConfig(clip_len=16, epoch_seed=seed), num_models=2, lr=1e-3,
                        sync=SyncPolicy("fedprox", sched), seed=seed)
        result = train(cfg, train_set)
        accs.append(evaluate(cfg.model, result.merged(), val_set, cfg.sampler).top1)
    print(f"{sched.label():>16}: top1 {np.mean(accs):.4f} +- {np.std(accs):.4f}")
