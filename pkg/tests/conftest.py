import numpy as np
import pytest

from seqfed.datagen import StreamDataset, StreamSequence

ACCEPTANCE = {}


def brute_force_starts(labels, clip_len, stride):
    """Reference scanner: walks frame by frame with plain lists."""
    labels = list(labels)
    n = len(labels)
    starts = []
    start = 0
    while start + clip_len * stride <= n:
        sampled = [labels[start + k * stride] for k in range(clip_len)]
        if all(v == sampled[0] for v in sampled):
            starts.append(start)
            start += clip_len * stride
        else:
            nxt = start + 1
            while labels[nxt] == labels[start]:
                nxt += 1
            start = nxt
    return starts


def central_diff_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def random_segmentation(rng, length, num_classes, max_seg):
    labels = []
    while len(labels) < length:
        labels += [int(rng.integers(num_classes))] * int(rng.integers(1, max_seg + 1))
    return np.array(labels[:length])


def make_sequence(labels, dim=3, seq_id=0, rng=None):
    labels = np.asarray(labels)
    rng = rng or np.random.default_rng(0)
    return StreamSequence(rng.standard_normal((labels.size, dim)).astype(np.float32), labels, seq_id)


def make_dataset(label_lists, dim=3, num_classes=None, seed=0):
    rng = np.random.default_rng(seed)
    seqs = tuple(make_sequence(l, dim, i, rng) for i, l in enumerate(label_lists))
    c = num_classes or int(max(max(l) for l in label_lists if len(l)) + 1)
    return StreamDataset(seqs, c, dim)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = report.user_properties and dict(report.user_properties).get("acceptance")
    if marker:
        ACCEPTANCE[marker] = report.outcome


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m:
            item.user_properties.append(("acceptance", (m.args[0], m.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), outcome in sorted(ACCEPTANCE.items()):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {num:>2}. {title}")
