"""Global field power, GFP peak detection and polarity-invariant clustering.

The clustering is the modified K-means used throughout microstate research:
samples are assigned to the topographic map with the highest squared spatial
correlation (so sign flips of either side do not matter), and each map is
updated to the dominant eigenvector of the scatter matrix of its assigned
samples. The best of ``n_init`` seeded restarts by explained variance wins.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DegenerateInputError, ValidationError
from .io import EegRecording

STATE_LETTERS = string.ascii_uppercase

DEFAULT_K = 4
DEFAULT_N_INIT = 10
DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-6


@dataclass
class GfpSeries:
    """Per-sample global field power in microvolts."""

    values: np.ndarray
    sampling_rate_hz: float

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass
class TopographicMap:
    """Zero-mean, unit-norm weight vector over channels."""

    weights: np.ndarray

    def validate(self) -> None:
        w = self.weights
        if w.ndim != 1:
            raise ValidationError(f"map weights must be 1-D, got shape {w.shape}")
        if abs(float(w.mean())) >= 1e-9:
            raise ValidationError(f"map mean {float(w.mean()):.3e} exceeds 1e-9")
        norm = float(np.linalg.norm(w))
        if abs(norm - 1.0) >= 1e-9:
            raise ValidationError(f"map norm {norm:.12f} is not 1 within 1e-9")


@dataclass
class MicrostateModel:
    """Fitted archetype maps with canonical letter labels."""

    maps: list[TopographicMap]
    labels: list[str]
    gev_total: float
    fit_seed: int
    n_init: int
    converged_iterations: int
    ev_traces: list[list[float]] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.maps)

    @property
    def n_channels(self) -> int:
        return self.maps[0].weights.shape[0]

    def as_matrix(self) -> np.ndarray:
        return np.ascontiguousarray(np.stack([m.weights for m in self.maps]))

    def validate(self) -> None:
        if self.k < 1:
            raise ValidationError("model needs at least one map")
        if len(self.labels) != self.k or len(set(self.labels)) != self.k:
            raise ValidationError("labels must be distinct, one per map")
        if not 0.0 <= self.gev_total <= 1.0:
            raise ValidationError(f"gev_total {self.gev_total} outside [0, 1]")
        for m in self.maps:
            m.validate()


def gfp(rec: EegRecording) -> GfpSeries:
    """Instantaneous standard deviation of the scalp potentials.

    Computed on the recording as given; no implicit re-referencing.
    """
    rec.validate()
    values = kernels.gfp_values(np.ascontiguousarray(rec.data))
    return GfpSeries(values=values, sampling_rate_hz=rec.sampling_rate_hz)


def find_gfp_peaks(series: GfpSeries, min_distance_ms: float = 0.0) -> np.ndarray:
    """Indices of local GFP maxima, endpoints excluded.

    A peak rises strictly from the left and does not fall to the right
    (``v[t] > v[t-1]`` and ``v[t] >= v[t+1]``). When two peaks are closer
    than ``min_distance_ms`` only the larger survives; ties keep the earlier
    index.
    """
    if len(series) == 0:
        raise ValidationError("empty GFP series")
    if min_distance_ms < 0:
        raise ValidationError(f"min_distance_ms must be >= 0, got {min_distance_ms}")
    values = np.ascontiguousarray(series.values, dtype=np.float64)
    cand = kernels.peak_candidates(values)
    if cand.shape[0] == 0:
        return cand
    min_dist = min_distance_ms * series.sampling_rate_hz / 1000.0
    # priority: larger value first, then earlier index
    order = np.lexsort((cand, -values[cand]))
    keep = kernels.select_peaks(cand, order.astype(np.int64), values.shape[0], min_dist)
    return cand[keep]


def spatial_correlation(topo: TopographicMap, sample: np.ndarray) -> float:
    """Pearson correlation across channels between a sample and a map."""
    topo.validate()
    sample = np.asarray(sample, dtype=np.float64)
    if sample.shape != topo.weights.shape:
        raise ValidationError(
            f"sample has shape {sample.shape}, map has {topo.weights.shape}"
        )
    centered = sample - sample.mean()
    norm = float(np.linalg.norm(centered))
    if norm == 0.0:
        raise DegenerateInputError("constant sample has no spatial correlation")
    # map is zero-mean and unit-norm, so Pearson reduces to a scaled dot
    return float(topo.weights @ centered / norm)


def _center_columns(data: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(data - data.mean(axis=0, keepdims=True))


def _per_state_gev(maps_matrix: np.ndarray, data: np.ndarray) -> np.ndarray:
    """Per-state share of GFP-weighted variance explained under argmax labels."""
    data = np.ascontiguousarray(data)
    corr = kernels.corr_matrix(maps_matrix, data)
    labels = np.argmax(np.abs(corr), axis=0)
    gfp_vals = kernels.gfp_values(data)
    denom = float((gfp_vals * gfp_vals).sum())
    if denom == 0.0:
        raise DegenerateInputError("all-zero GFP, nothing to explain")
    k = maps_matrix.shape[0]
    contrib = (gfp_vals * corr[labels, np.arange(data.shape[1])]) ** 2
    return np.bincount(labels, weights=contrib, minlength=k) / denom


def _canonical_order(maps_matrix: np.ndarray, data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort maps by descending GEV on ``data``; flip signs so the largest
    magnitude weight of each map is positive. Returns (sorted maps, gev)."""
    per_state = _per_state_gev(maps_matrix, data)
    # stable sort keeps the original order on GEV ties
    order = np.argsort(-per_state, kind="stable")
    sorted_maps = maps_matrix[order].copy()
    for j in range(sorted_maps.shape[0]):
        peak = np.argmax(np.abs(sorted_maps[j]))
        if sorted_maps[j, peak] < 0:
            sorted_maps[j] = -sorted_maps[j]
    return sorted_maps, per_state[order]


def _letters(k: int) -> list[str]:
    if k > len(STATE_LETTERS):
        raise ValidationError(f"cannot label {k} states with single letters")
    return list(STATE_LETTERS[:k])


def mod_kmeans(
    peak_samples: np.ndarray,
    k: int = DEFAULT_K,
    n_init: int = DEFAULT_N_INIT,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    *,
    seed: int,
) -> MicrostateModel:
    """Fit ``k`` archetype maps to a channels x P matrix of peak samples.

    Restarts are evaluated sequentially; the one with the highest explained
    variance wins, ties broken by the lowest restart index. The same seed
    always yields a bit-identical model. The returned maps are sorted by
    descending per-state GEV on the peak matrix itself.
    """
    peak_samples = np.asarray(peak_samples, dtype=np.float64)
    if peak_samples.ndim != 2:
        raise ValidationError(f"peak_samples must be 2-D, got shape {peak_samples.shape}")
    n_ch, n_p = peak_samples.shape
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if k > n_p:
        raise ValidationError(f"k={k} exceeds the {n_p} available peak samples")
    if n_init < 1 or max_iter < 1:
        raise ValidationError("n_init and max_iter must be >= 1")

    x = _center_columns(peak_samples)
    norms_sq = np.ascontiguousarray((x * x).sum(axis=0))
    pool = np.nonzero(norms_sq > 0.0)[0]
    if pool.shape[0] == 0:
        raise DegenerateInputError("all peak samples are constant across channels")
    if pool.shape[0] < k:
        raise DegenerateInputError(
            f"only {pool.shape[0]} non-constant peak samples for k={k}"
        )

    rng = np.random.default_rng(seed)
    init_sets = [pool[rng.choice(pool.shape[0], size=k, replace=False)] for _ in range(n_init)]

    best_ev = -1.0
    best_maps = None
    best_trace = None
    traces: list[list[float]] = []
    for init_idx in init_sets:
        maps, _, trace, n_iter = kernels.modkmeans_restart(
            x, norms_sq, np.ascontiguousarray(init_idx, dtype=np.int64), max_iter, tol
        )
        traces.append([float(v) for v in trace])
        ev = float(trace[n_iter - 1])
        if ev > best_ev:
            best_ev = ev
            best_maps = maps
            best_trace = trace

    sorted_maps, _ = _canonical_order(np.ascontiguousarray(best_maps), peak_samples)
    model = MicrostateModel(
        maps=[TopographicMap(_renormalize(w)) for w in sorted_maps],
        labels=_letters(k),
        gev_total=min(best_ev, 1.0),
        fit_seed=seed,
        n_init=n_init,
        converged_iterations=len(best_trace),
        ev_traces=traces,
    )
    model.validate()
    return model


def _renormalize(w: np.ndarray) -> np.ndarray:
    # tighten the zero-mean unit-norm invariants against accumulated roundoff
    w = w - w.mean()
    return w / np.linalg.norm(w)


def order_maps(model: MicrostateModel, rec: EegRecording) -> MicrostateModel:
    """Relabel a fitted model canonically against a recording.

    Maps are sorted by descending per-state GEV on ``rec`` and labeled
    A, B, C, ... in that order; each map's sign is flipped so its largest
    magnitude weight is positive.
    """
    model.validate()
    rec.validate()
    if model.n_channels != rec.n_channels:
        raise ValidationError(
            f"model has {model.n_channels} channels, recording has {rec.n_channels}"
        )
    sorted_maps, _ = _canonical_order(model.as_matrix(), rec.data)
    return replace(
        model,
        maps=[TopographicMap(_renormalize(w)) for w in sorted_maps],
        labels=_letters(model.k),
    )


def save_model(model: MicrostateModel, path: str | Path) -> None:
    model.validate()
    doc = {
        "labels": model.labels,
        "maps": [m.weights.tolist() for m in model.maps],
        "gev_total": model.gev_total,
        "fit_seed": model.fit_seed,
        "n_init": model.n_init,
        "converged_iterations": model.converged_iterations,
        "ev_traces": model.ev_traces,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_model(path: str | Path) -> MicrostateModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    model = MicrostateModel(
        maps=[TopographicMap(np.asarray(w, dtype=np.float64)) for w in doc["maps"]],
        labels=list(doc["labels"]),
        gev_total=float(doc["gev_total"]),
        fit_seed=int(doc["fit_seed"]),
        n_init=int(doc["n_init"]),
        converged_iterations=int(doc["converged_iterations"]),
        ev_traces=[list(map(float, t)) for t in doc.get("ev_traces", [])],
    )
    model.validate()
    return model
