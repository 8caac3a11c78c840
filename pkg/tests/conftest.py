import math
from pathlib import Path

import numpy as np
import pytest

from mstool.io import EegRecording, SubjectMeta

DATA_DIR = Path(__file__).parent / "data"
RECORDINGS_DIR = DATA_DIR / "recordings"
GOLDEN_DIR = DATA_DIR / "golden"

FIXTURE_RECORDINGS = sorted(RECORDINGS_DIR.glob("*.csv"))


def make_meta(subject_id="S01", condition="Rest"):
    return SubjectMeta(subject_id=subject_id, age=25, gender="female",
                       arithmetic_score=12, condition=condition)


def make_recording(data, rate=250.0, condition="Rest", subject_id="S01"):
    data = np.asarray(data, dtype=np.float64)
    labels = [f"ch{i:02d}" for i in range(data.shape[0])]
    return EegRecording(channel_labels=labels, sampling_rate_hz=rate, data=data,
                        meta=make_meta(subject_id, condition))


def random_recording(seed, n_ch=8, n_samples=1000, rate=250.0):
    rng = np.random.default_rng(seed)
    return make_recording(rng.normal(size=(n_ch, n_samples)), rate=rate)


def orthonormal_maps(seed, n_ch, k):
    """Mutually orthogonal, zero-mean, unit-norm rows (k x n_ch)."""
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n_ch, k))
    m -= m.mean(axis=0, keepdims=True)
    q, _ = np.linalg.qr(m)
    return np.ascontiguousarray(q.T)


def pearson_oracle(x, y):
    """Textbook Pearson correlation, explicit sums."""
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def gfp_oracle(data):
    """Per-sample population standard deviation, explicit loops."""
    n_ch, n_t = data.shape
    out = []
    for t in range(n_t):
        mean = sum(data[i, t] for i in range(n_ch)) / n_ch
        var = sum((data[i, t] - mean) ** 2 for i in range(n_ch)) / n_ch
        out.append(math.sqrt(var))
    return np.asarray(out)


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)
