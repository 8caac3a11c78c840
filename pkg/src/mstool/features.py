"""Per-state microstate features from a backfitted recording.

Five features per state: explained variance share, mean correlation of
assigned samples, time coverage (as a fraction and in seconds), mean segment
duration in seconds, and segments per second. Runs touching the recording
edges count as full runs, which keeps ``coverage = occurrence x duration``
an exact identity.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .backfit import LabelSequence, gev
from .errors import ValidationError
from .io import EegRecording, SubjectMeta
from .microstate import MicrostateModel


@dataclass
class StateFeatures:
    gev: float
    mean_corr: float
    timecov_fraction: float
    timecov_seconds: float
    meandurs_s: float
    occurrence_hz: float

    def to_dict(self) -> dict:
        return {
            "gev": self.gev,
            "mean_corr": self.mean_corr,
            "timecov_fraction": self.timecov_fraction,
            "timecov_seconds": self.timecov_seconds,
            "meandurs_s": self.meandurs_s,
            "occurrence_hz": self.occurrence_hz,
        }


@dataclass
class FeatureTable:
    subject: SubjectMeta
    per_state: dict[str, StateFeatures]
    duration_s: float

    def to_dict(self) -> dict:
        return {
            "subject": self.subject.to_dict(),
            "duration_s": self.duration_s,
            "per_state": {lbl: sf.to_dict() for lbl, sf in self.per_state.items()},
        }


def extract_features(rec: EegRecording, model: MicrostateModel,
                     seq: LabelSequence) -> FeatureTable:
    """Compute the five per-state features for one labeled recording."""
    rec.validate()
    model.validate()
    seq.validate(k=model.k)
    if len(seq) == 0:
        raise ValidationError("empty label sequence")
    if len(seq) != rec.n_samples:
        raise ValidationError("label sequence length does not match the recording")

    n = len(seq)
    duration = rec.duration_s
    rate = rec.sampling_rate_hz
    gev_report = gev(rec, model, seq)

    _, run_len, run_val = kernels.run_lengths(np.ascontiguousarray(seq.labels))
    per_state: dict[str, StateFeatures] = {}
    for s, label in enumerate(model.labels):
        mask = seq.labels == s
        count = int(mask.sum())
        runs = run_len[run_val == s]
        n_runs = int(runs.shape[0])
        frac = count / n
        per_state[label] = StateFeatures(
            gev=float(gev_report.per_state[s]),
            mean_corr=float(seq.corr[mask].mean()) if count else 0.0,
            timecov_fraction=frac,
            timecov_seconds=frac * duration,
            meandurs_s=(count / rate) / n_runs if n_runs else 0.0,
            occurrence_hz=n_runs / duration,
        )
    return FeatureTable(subject=rec.meta, per_state=per_state, duration_s=duration)


CSV_COLUMNS = ("subject_id", "condition", "state", "gev", "mean_corr",
               "timecov_fraction", "timecov_s", "meandurs_s", "occurrence_hz")


def write_features_csv(tables: list[FeatureTable], path: str | Path) -> None:
    """Merged per-state feature rows, sorted by subject, condition, state."""
    rows = []
    for table in tables:
        for state in sorted(table.per_state):
            sf = table.per_state[state]
            rows.append((table.subject.subject_id, table.subject.condition, state,
                         sf.gev, sf.mean_corr, sf.timecov_fraction,
                         sf.timecov_seconds, sf.meandurs_s, sf.occurrence_hz))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(list(row[:3]) + ["%.17g" % v for v in row[3:]])


def save_feature_table(table: FeatureTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_feature_table(path: str | Path) -> FeatureTable:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    subject = SubjectMeta(
        subject_id=str(doc["subject"]["subject_id"]),
        age=int(doc["subject"]["age"]),
        gender=str(doc["subject"]["gender"]),
        arithmetic_score=int(doc["subject"]["arithmetic_score"]),
        condition=str(doc["subject"]["condition"]),
    )
    subject.validate()
    per_state = {
        lbl: StateFeatures(**{k: float(v) for k, v in sf.items()})
        for lbl, sf in doc["per_state"].items()
    }
    return FeatureTable(subject=subject, per_state=per_state,
                        duration_s=float(doc["duration_s"]))
