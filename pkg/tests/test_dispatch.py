import numpy as np
import pytest

from seqfed.dispatch import assign_round_robin, delivered_indices


def test_default_batch():
    a = assign_round_robin(8, 2)
    assert [x.tolist() for x in a] == [[0, 2, 4, 6], [1, 3, 5, 7]]


def test_single_model():
    assert assign_round_robin(5, 1)[0].tolist() == [0, 1, 2, 3, 4]


@pytest.mark.parametrize("b, m", [(8, 3), (5, 2), (2, 4), (7, 7), (9, 3), (1, 1), (13, 5)])
def test_partition(b, m, rng):
    for _ in range(20):
        parts = assign_round_robin(b, m, rng)
        assert len(parts) == m
        allpos = np.sort(np.concatenate(parts))
        np.testing.assert_array_equal(allpos, np.arange(b))
        sizes = [len(p) for p in parts]
        assert max(sizes) - min(sizes) <= 1
        assert all(np.all(np.diff(p) > 0) for p in parts)


def test_uneven_needs_rng():
    with pytest.raises(ValueError):
        assign_round_robin(8, 3)


def test_uneven_average_count():
    rng = np.random.default_rng(1)
    counts = np.zeros(3)
    for _ in range(30_000):
        counts += [len(p) for p in assign_round_robin(8, 3, rng)]
    np.testing.assert_allclose(counts / 30_000, 8 / 3, atol=0.02)


def test_delivered_indices_even():
    per_model = delivered_indices(40, 8, 4)
    for m, idx in enumerate(per_model):
        np.testing.assert_array_equal(idx, np.arange(m, 40, 4))


def test_delivered_indices_short_tail(rng):
    per_model = delivered_indices(21, 8, 2, rng)
    assert sorted(np.concatenate(per_model).tolist()) == list(range(21))
    np.testing.assert_array_equal(per_model[0][:8], np.arange(0, 16, 2))
