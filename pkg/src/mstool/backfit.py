"""Per-sample labeling of a recording with fitted archetypes, optional
temporal smoothing, and global explained variance."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DegenerateInputError, ValidationError
from .io import EegRecording
from .microstate import MicrostateModel


@dataclass
class LabelSequence:
    """State index and winning absolute correlation for every sample.

    ``state_corr`` holds the absolute spatial correlation of every state at
    every sample (k x T); smoothing needs it to compare neighbor states.
    ``n_degenerate`` counts constant samples that were labeled by tie-break.
    """

    labels: np.ndarray
    corr: np.ndarray
    sampling_rate_hz: float
    state_corr: np.ndarray | None = None
    n_degenerate: int = 0

    def __len__(self) -> int:
        return self.labels.shape[0]

    def validate(self, k: int | None = None) -> None:
        if self.labels.shape != self.corr.shape:
            raise ValidationError("labels and corr must have equal length")
        if self.sampling_rate_hz <= 0:
            raise ValidationError("sampling_rate_hz must be positive")
        if len(self) and self.labels.min() < 0:
            raise ValidationError("negative state index")
        if k is not None and len(self) and self.labels.max() >= k:
            raise ValidationError(f"state index {self.labels.max()} >= k={k}")
        if len(self) and (self.corr.min() < 0 or self.corr.max() > 1 + 1e-9):
            raise ValidationError("corr values must lie in [0, 1]")


@dataclass
class GevReport:
    """Eq .-style explained variance, per state and total."""

    per_state: np.ndarray
    total: float
    labels: list[str]

    def to_dict(self) -> dict:
        return {
            "labels": self.labels,
            "per_state": [float(v) for v in self.per_state],
            "total": self.total,
        }


def backfit(rec: EegRecording, model: MicrostateModel) -> LabelSequence:
    """Label every sample with the archetype of highest absolute correlation.

    Ties break to the lowest state index. Constant samples (zero GFP) have no
    defined correlation; they get the tie-break label with correlation 0 and
    are counted in ``n_degenerate``.
    """
    rec.validate()
    model.validate()
    if model.n_channels != rec.n_channels:
        raise ValidationError(
            f"model has {model.n_channels} channels, recording has {rec.n_channels}"
        )
    corr = kernels.corr_matrix(model.as_matrix(), np.ascontiguousarray(rec.data))
    abs_corr = np.abs(corr)
    labels = np.argmax(abs_corr, axis=0).astype(np.int64)
    winning = abs_corr[labels, np.arange(abs_corr.shape[1])]
    degenerate = int((abs_corr.max(axis=0) == 0.0).sum())
    if degenerate:
        warnings.warn(f"{degenerate} constant samples labeled by tie-break")
    return LabelSequence(
        labels=labels,
        corr=np.minimum(winning, 1.0),
        sampling_rate_hz=rec.sampling_rate_hz,
        state_corr=np.minimum(abs_corr, 1.0),
        n_degenerate=degenerate,
    )


def smooth_labels(seq: LabelSequence, min_duration_ms: float = 0.0) -> LabelSequence:
    """Reassign runs shorter than ``min_duration_ms`` into their neighbors.

    Each sample of a short interior run goes to whichever neighboring run's
    state correlates better at that sample. Runs touching the sequence edges
    have only one competitive neighbor and are left alone, so short edge runs
    may survive. Passes repeat until nothing changes or no short interior run
    remains. ``min_duration_ms = 0`` is the identity.
    """
    seq.validate()
    if min_duration_ms < 0:
        raise ValidationError(f"min_duration_ms must be >= 0, got {min_duration_ms}")
    labels = seq.labels.copy()
    if min_duration_ms == 0 or len(seq) == 0:
        return LabelSequence(labels, seq.corr.copy(), seq.sampling_rate_hz,
                             None if seq.state_corr is None else seq.state_corr.copy(),
                             seq.n_degenerate)
    if seq.state_corr is None:
        raise ValidationError(
            "smoothing needs per-state correlations; use a sequence produced by backfit"
        )
    state_corr = seq.state_corr
    min_len = min_duration_ms * seq.sampling_rate_hz / 1000.0

    # passes are capped to guarantee termination on adversarial oscillations
    for _ in range(len(seq)):
        starts, lengths, values = kernels.run_lengths(labels)
        changed = False
        short_interior = False
        for r in range(starts.shape[0]):
            if lengths[r] >= min_len:
                continue
            if r == 0 or r == starts.shape[0] - 1:
                continue
            # the run structure may be stale after an earlier merge this pass
            s, e = starts[r], starts[r] + lengths[r]
            if not np.all(labels[s:e] == values[r]):
                continue
            left = labels[s - 1]
            right = labels[e] if e < len(seq) else left
            if left == values[r] or right == values[r]:
                continue
            short_interior = True
            for t in range(s, e):
                labels[t] = left if state_corr[left, t] >= state_corr[right, t] else right
            changed = True
        if not changed or not short_interior:
            break

    corr = state_corr[labels, np.arange(len(seq))]
    return LabelSequence(labels, corr, seq.sampling_rate_hz, state_corr.copy(),
                         seq.n_degenerate)


def gev(rec: EegRecording, model: MicrostateModel, seq: LabelSequence) -> GevReport:
    """GFP-weighted explained variance of the labeled recording.

    ``per_state[s]`` sums ``(GFP(t) * C(s, t))**2`` over samples labeled ``s``
    and divides by the total squared GFP; the total is the sum over states.
    GFP is computed on the recording being labeled.
    """
    rec.validate()
    model.validate()
    seq.validate(k=model.k)
    if model.n_channels != rec.n_channels:
        raise ValidationError("model/recording channel mismatch")
    if len(seq) != rec.n_samples:
        raise ValidationError(
            f"label sequence has {len(seq)} samples, recording has {rec.n_samples}"
        )
    data = np.ascontiguousarray(rec.data)
    gfp_vals = kernels.gfp_values(data)
    denom = float((gfp_vals * gfp_vals).sum())
    if denom == 0.0:
        raise DegenerateInputError("recording has all-zero GFP")
    corr = kernels.corr_matrix(model.as_matrix(), data)
    contrib = (gfp_vals * corr[seq.labels, np.arange(rec.n_samples)]) ** 2
    per_state = np.bincount(seq.labels, weights=contrib, minlength=model.k) / denom
    return GevReport(per_state=per_state, total=float(per_state.sum()),
                     labels=list(model.labels))


def save_labels_csv(seq: LabelSequence, model: MicrostateModel, path: str | Path) -> None:
    """Write one row per sample: sample_index, label_letter, abs_corr."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("sample_index,label_letter,abs_corr\n")
        for t in range(len(seq)):
            fh.write(f"{t},{model.labels[seq.labels[t]]},{seq.corr[t]:.17g}\n")


def save_gev_report(report: GevReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
