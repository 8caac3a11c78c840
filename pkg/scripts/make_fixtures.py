#!/usr/bin/env python3
"""Regenerate the checked-in fixture recordings under tests/data/recordings.

Four seeded synthetic recordings (2 subjects x Rest/Load) with plausible
microstate structure: piecewise-stable topographies amplitude-modulated
around 10 Hz, plus noise, drift and a mains-like 60 Hz component so the
bandpass filter has work to do. Run from the repository root:

    python3 scripts/make_fixtures.py
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mstool.io import EegRecording, SubjectMeta, save_recording  # noqa: E402

CHANNELS = ["Fp1", "Fp2", "F3", "F4", "Fz", "Cz", "P3", "P4"]
RATE = 250.0
DURATION_S = 4.0

SUBJECTS = [
    ("S01", 24, "female", 21, 101),
    ("S02", 31, "male", 14, 202),
]


def orthonormal_maps(rng: np.random.Generator, n_ch: int, k: int) -> np.ndarray:
    m = rng.normal(size=(n_ch, k))
    m -= m.mean(axis=0, keepdims=True)
    q, _ = np.linalg.qr(m)
    return q.T


def synth_recording(seed: int, condition: str) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = int(RATE * DURATION_S)
    maps = orthonormal_maps(rng, len(CHANNELS), 4)

    # Load runs switch faster than Rest runs
    mean_run_ms = 90.0 if condition == "Load" else 140.0
    states = np.empty(n, dtype=np.int64)
    t = 0
    while t < n:
        run = max(3, int(rng.normal(mean_run_ms, 25.0) * RATE / 1000.0))
        states[t : t + run] = rng.integers(0, 4)
        t += run

    tt = np.arange(n) / RATE
    amp = 9.0 * np.abs(np.sin(2 * np.pi * 10.0 * tt + rng.uniform(0, np.pi))) + 1.0
    data = maps[states].T * amp
    data += rng.normal(scale=0.8, size=data.shape)
    data += 2.0 * np.sin(2 * np.pi * 60.0 * tt)          # mains-like
    data += np.linspace(0.0, 3.0, n) + rng.uniform(-1, 1, size=(len(CHANNELS), 1))
    return data


def main() -> None:
    out = Path(__file__).resolve().parent.parent / "tests" / "data" / "recordings"
    out.mkdir(parents=True, exist_ok=True)
    for subject_id, age, gender, score, base_seed in SUBJECTS:
        for cond_idx, condition in enumerate(["Rest", "Load"]):
            meta = SubjectMeta(subject_id, age, gender, score, condition)
            data = synth_recording(base_seed + cond_idx, condition)
            rec = EegRecording(list(CHANNELS), RATE, data, meta)
            path = out / f"{subject_id.lower()}_{condition.lower()}.csv"
            save_recording(rec, path, format="csv")
            print(f"wrote {path}")


if __name__ == "__main__":
    main()
