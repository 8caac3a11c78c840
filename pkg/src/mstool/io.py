"""Loading, validation and persistence of EEG recordings.

Two on-disk matrix formats are supported:

* ``csv``: first row holds channel labels, each following row is one sample
  (sample-major on disk, transposed to channel-major in memory).
* ``raw_f64``: magic ``EEGR``, little-endian u32 channel count, u64 sample
  count, then a channel-major float64 little-endian payload.

Subject metadata and the sampling rate live in a JSON sidecar named
``<stem>.meta.json`` next to the matrix file. The sidecar also carries
``channel_labels``, which is required for ``raw_f64`` (the binary format has
no label block) and cross-checked against the header for ``csv``.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError

GENDERS = ("male", "female")
CONDITIONS = ("Rest", "Load")
FORMATS = ("csv", "raw_f64")

_RAW_MAGIC = b"EEGR"


@dataclass
class SubjectMeta:
    subject_id: str
    age: int
    gender: str
    arithmetic_score: int
    condition: str

    def validate(self) -> None:
        if not self.subject_id:
            raise ValidationError("subject_id must be non-empty")
        if self.age <= 0:
            raise ValidationError(f"age must be positive, got {self.age}")
        if self.gender not in GENDERS:
            raise ValidationError(f"gender must be one of {GENDERS}, got {self.gender!r}")
        if self.arithmetic_score < 0:
            raise ValidationError(f"arithmetic_score must be >= 0, got {self.arithmetic_score}")
        if self.condition not in CONDITIONS:
            raise ValidationError(f"condition must be one of {CONDITIONS}, got {self.condition!r}")

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "age": self.age,
            "gender": self.gender,
            "arithmetic_score": self.arithmetic_score,
            "condition": self.condition,
        }


@dataclass
class EegRecording:
    """Channels x samples matrix in microvolts plus acquisition metadata."""

    channel_labels: list[str]
    sampling_rate_hz: float
    data: np.ndarray
    meta: SubjectMeta

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sampling_rate_hz

    def validate(self) -> None:
        if self.data.ndim != 2:
            raise ValidationError(f"data must be 2-D, got shape {self.data.shape}")
        if len(self.channel_labels) != self.data.shape[0]:
            raise ValidationError(
                f"{len(self.channel_labels)} channel labels for {self.data.shape[0]} data rows"
            )
        if self.data.shape[0] < 2:
            raise ValidationError("recording needs at least 2 channels")
        if self.data.shape[1] < 2:
            raise ValidationError("recording needs at least 2 samples")
        if self.sampling_rate_hz <= 0:
            raise ValidationError(f"sampling_rate_hz must be positive, got {self.sampling_rate_hz}")
        if not np.isfinite(self.data).all():
            bad = np.argwhere(~np.isfinite(self.data))[0]
            raise ValidationError(
                f"non-finite value at channel {bad[0]} ({self.channel_labels[bad[0]]}), "
                f"sample {bad[1]}"
            )
        self.meta.validate()

    def with_data(self, data: np.ndarray) -> "EegRecording":
        return replace(self, data=data)


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".meta.json")


def _load_sidecar(path: Path) -> dict:
    sc = sidecar_path(path)
    if not sc.exists():
        raise ValidationError(f"missing metadata sidecar {sc}")
    with open(sc, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _meta_from_sidecar(doc: dict, sc_name: str) -> tuple[SubjectMeta, float]:
    required = ("subject_id", "age", "gender", "arithmetic_score", "condition", "sampling_rate_hz")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ValidationError(f"sidecar {sc_name} is missing keys: {', '.join(missing)}")
    meta = SubjectMeta(
        subject_id=str(doc["subject_id"]),
        age=int(doc["age"]),
        gender=str(doc["gender"]),
        arithmetic_score=int(doc["arithmetic_score"]),
        condition=str(doc["condition"]),
    )
    rate = float(doc["sampling_rate_hz"])
    return meta, rate


def _parse_csv_matrix(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file, no header row") from None
        labels = [h.strip() for h in header]
        if not labels or any(not lbl for lbl in labels):
            raise ValidationError(f"{path}: malformed header, empty channel label")
        if len(set(labels)) != len(labels):
            raise ValidationError(f"{path}: malformed header, duplicate channel labels")
        rows = []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(labels):
                raise ValidationError(
                    f"{path}: row {row_no} has {len(row)} values, header has {len(labels)} channels"
                )
            vals = []
            for col_no, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise ValidationError(
                        f"{path}: unparseable value {cell!r} at row {row_no}, "
                        f"column {col_no} ({labels[col_no]})"
                    ) from None
                if not math.isfinite(v):
                    raise ValidationError(
                        f"{path}: non-finite value {cell!r} at row {row_no}, "
                        f"column {col_no} ({labels[col_no]})"
                    )
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    # sample-major on disk -> channel-major in memory
    return labels, np.asarray(rows, dtype=np.float64).T


def _parse_raw_matrix(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    head = struct.calcsize("<4sIQ")
    if len(blob) < head:
        raise ValidationError(f"{path}: truncated raw_f64 header")
    magic, n_ch, n_samp = struct.unpack_from("<4sIQ", blob)
    if magic != _RAW_MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}, expected {_RAW_MAGIC!r}")
    expected = head + 8 * n_ch * n_samp
    if len(blob) != expected:
        raise ValidationError(
            f"{path}: payload is {len(blob) - head} bytes, header promises {expected - head}"
        )
    data = np.frombuffer(blob, dtype="<f8", offset=head).reshape(n_ch, n_samp)
    return data.astype(np.float64, copy=True)


def load_recording(path: str | Path, format: str = "csv") -> EegRecording:
    """Load and validate a recording plus its metadata sidecar."""
    if format not in FORMATS:
        raise ValidationError(f"unknown format {format!r}, expected one of {FORMATS}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such recording file: {path}")
    doc = _load_sidecar(path)
    meta, rate = _meta_from_sidecar(doc, sidecar_path(path).name)

    if format == "csv":
        labels, data = _parse_csv_matrix(path)
        side_labels = doc.get("channel_labels")
        if side_labels is not None and [str(x) for x in side_labels] != labels:
            raise ValidationError(
                f"{path}: sidecar channel_labels disagree with the CSV header"
            )
    else:
        data = _parse_raw_matrix(path)
        side_labels = doc.get("channel_labels")
        if side_labels is None:
            raise ValidationError(
                f"{sidecar_path(path)}: raw_f64 recordings need channel_labels in the sidecar"
            )
        labels = [str(x) for x in side_labels]
        if len(labels) != data.shape[0]:
            raise ValidationError(
                f"{path}: {len(labels)} sidecar labels for {data.shape[0]} channels"
            )

    rec = EegRecording(channel_labels=labels, sampling_rate_hz=rate, data=data, meta=meta)
    rec.validate()
    return rec


def save_recording(rec: EegRecording, path: str | Path, format: str = "csv") -> None:
    """Persist a recording and its sidecar; re-loadable by load_recording."""
    if format not in FORMATS:
        raise ValidationError(f"unknown format {format!r}, expected one of {FORMATS}")
    if not str(path):
        raise ValidationError("destination path must be non-empty")
    rec.validate()
    path = Path(path)

    if format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(rec.channel_labels)
            for t in range(rec.n_samples):
                writer.writerow(["%.17g" % v for v in rec.data[:, t]])
    else:
        payload = struct.pack("<4sIQ", _RAW_MAGIC, rec.n_channels, rec.n_samples)
        payload += np.ascontiguousarray(rec.data, dtype="<f8").tobytes()
        path.write_bytes(payload)

    doc = rec.meta.to_dict()
    doc["sampling_rate_hz"] = rec.sampling_rate_hz
    doc["channel_labels"] = list(rec.channel_labels)
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
