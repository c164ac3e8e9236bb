# %% [markdown]
# # How correlated is a sequentially read stream?
#
# Reading a long labeled stream front to back yields clips that look alike:
# neighbouring clips come from the same label segment and share slowly
# drifting features.  Dealing clips round-robin to M replicas means each
# replica only sees every M-th clip, so its own stream has the correlation
# of the global stream at lag M.

# %%
import numpy as np

from seqfed import GenSpec, SamplerConfig, autocorrelation, generate_dataset, sequential_stream
from seqfed.diagnostics import clip_summary
from seqfed.dispatch import delivered_indices

spec = GenSpec(num_sequences=8, frames_per_sequence=(20_000, 30_000), num_classes=6, feature_dim=8,
               segment_length=(300, 900), ar_coefficient=0.9, noise_scale=1.0, class_separation=1.5, seed=0)
data = generate_dataset(spec)
stream = sequential_stream(data, SamplerConfig(clip_len=16), epoch=0)
series = clip_summary(stream)
print(f"{len(stream)} clips from {data.total_frames} frames")

# %% global stream, several lags
for lag in range(1, 7):
    print(f"global lag {lag}: {autocorrelation(series, lag):+.3f}")

# %% what each replica sees (batch of 8, as in training)
rng = np.random.default_rng(0)
for m in (1, 2, 4):
    own = [autocorrelation(series[idx], 1) for idx in delivered_indices(len(series), 8, m, rng)]
    print(f"M={m}: per-replica lag-1 {np.round(own, 3)}  vs global lag-{m} {autocorrelation(series, m):+.3f}")

# %% shuffling destroys the serial correlation entirely
perm = np.random.default_rng(1).permutation(len(series))
print(f"shuffled lag 1: {autocorrelation(series[perm], 1):+.3f}")
