import numpy as np
import pytest

from seqfed.diagnostics import (
    autocorrelation,
    clip_stream_correlation,
    clip_summary,
    replica_subsequence,
    series_stats,
    write_lag_csv,
)
from seqfed.datagen import GenSpec, generate_dataset
from seqfed.errors import DataError
from seqfed.sampler import Clip, SamplerConfig, sequential_stream


def ar1(rho, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / np.sqrt(1 - rho**2)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + e[t]
    return x


def test_alternating():
    x = np.tile([1.0, -1.0], 50_000)
    assert autocorrelation(x, 1) == pytest.approx(-1.0, abs=1e-4)
    # the biased estimator is exactly -(n-1)/n here
    assert autocorrelation(x, 1) == pytest.approx(-(x.size - 1) / x.size, abs=1e-12)


def test_matches_statsmodels(rng):
    acf = pytest.importorskip("statsmodels.tsa.stattools").acf
    x = rng.standard_normal(500).cumsum()
    ref = acf(x, nlags=5, fft=False)
    for lag in range(1, 6):
        assert autocorrelation(x, lag) == pytest.approx(ref[lag], abs=1e-12)


def test_white_noise():
    x = np.random.default_rng(0).standard_normal(100_000)
    assert abs(autocorrelation(x, 1)) < 0.02


def test_ar1_lag3():
    assert autocorrelation(ar1(0.8, 100_000, 1), 3) == pytest.approx(0.8**3, abs=0.05)


def test_errors():
    with pytest.raises(DataError):
        autocorrelation(np.ones(10), 1)
    with pytest.raises(DataError):
        autocorrelation([1.0, 2.0], 2)


def test_bounded(rng):
    for _ in range(50):
        x = rng.standard_normal(int(rng.integers(3, 50))) ** 3
        for lag in range(1, x.size):
            assert -1 - 1e-9 <= autocorrelation(x, lag) <= 1 + 1e-9


def test_subsequence_lag_identity():
    x = ar1(0.9, 100_000, 2)
    for m in (2, 3, 4):
        for r in range(m):
            assert autocorrelation(replica_subsequence(x, r, m), 1) == pytest.approx(autocorrelation(x, m), abs=0.05)


def test_series_stats():
    s = series_stats([1.0, 2.0, 3.0, 4.0], [1, 2])
    assert s.mean == 2.5 and s.variance == 1.25
    assert s.autocorrelations[1] == pytest.approx(0.25)


class TestClipStream:
    def test_identical_clips(self):
        clip = Clip(np.ones((4, 2), np.float32), 0, 0, 0)
        with pytest.raises(DataError):
            clip_stream_correlation([clip] * 10, 1)

    def test_summary_is_mean_over_all_entries(self):
        c = Clip(np.arange(8, dtype=np.float32).reshape(4, 2), 0, 0, 0)
        assert clip_summary([c])[0] == 3.5

    def test_correlated_then_shuffled(self):
        ds = generate_dataset(GenSpec(num_sequences=1, frames_per_sequence=(800_000, 800_000), num_classes=1,
                                      feature_dim=2, segment_length=(800_000, 800_000), ar_coefficient=0.95,
                                      noise_scale=1.0, seed=3))
        stream = sequential_stream(ds, SamplerConfig(clip_len=8), 0)
        assert len(stream) == 100_000
        assert clip_stream_correlation(stream, 1) > 0.3
        perm = np.random.default_rng(0).permutation(len(stream))
        assert abs(clip_stream_correlation([stream[i] for i in perm], 1)) < 0.02


def test_csv(tmp_path):
    write_lag_csv(tmp_path / "c.csv", [(1, 0.5), (2, 0.25)])
    assert (tmp_path / "c.csv").read_text().splitlines() == ["lag,value", "1,0.5", "2,0.25"]
