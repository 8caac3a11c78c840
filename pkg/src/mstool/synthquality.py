"""Quality scoring of synthetic tabular data against an original table.

Three stability components, each mapped linearly onto 0-100%:

* field distribution stability: 1 minus the mean Jensen-Shannon distance
  between matching columns
* field correlation stability: 1 minus the mean absolute pairwise Pearson
  correlation difference, normalized by the maximum possible difference of 2
* deep structure stability: 1 minus the mean Jensen-Shannon distance between
  principal-component score distributions, components fitted on the original

A weighted composite combines the three. A Gaussian-copula baseline
synthesizer is included so the scorer can be exercised end to end.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import DegenerateInputError, SchemaError, ValidationError

KINDS = ("numeric", "categorical")
DEFAULT_BINS = 20
DEFAULT_VARIANCE_THRESHOLD = 0.95
EQUAL_WEIGHTS = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


@dataclass
class Column:
    name: str
    kind: str
    values: np.ndarray

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.values.shape[0] == 0:
            raise ValidationError(f"column {self.name!r} is empty")
        if self.kind == "numeric" and not np.isfinite(self.values.astype(np.float64)).all():
            raise ValidationError(f"column {self.name!r} contains non-finite values")


@dataclass
class Table:
    columns: list[Column]

    @property
    def n_rows(self) -> int:
        return self.columns[0].values.shape[0]

    @property
    def schema(self) -> list[tuple[str, str]]:
        return [(c.name, c.kind) for c in self.columns]

    def validate(self) -> None:
        if not self.columns:
            raise ValidationError("table has no columns")
        lengths = {c.values.shape[0] for c in self.columns}
        if len(lengths) != 1:
            raise ValidationError("table is not rectangular")
        for c in self.columns:
            c.validate()

    @classmethod
    def from_rows(cls, schema: list[tuple[str, str]], rows: list[tuple]) -> "Table":
        cols = []
        for j, (name, kind) in enumerate(schema):
            vals = [r[j] for r in rows]
            if kind == "numeric":
                arr = np.asarray(vals, dtype=np.float64)
            else:
                arr = np.asarray([str(v) for v in vals], dtype=object)
            cols.append(Column(name, kind, arr))
        table = cls(cols)
        table.validate()
        return table


def read_table(path: str | Path) -> Table:
    """CSV with a schema header: each cell is ``name:kind``."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty table file") from None
        schema = []
        for cell in header:
            if ":" not in cell:
                raise ValidationError(
                    f"{path}: header cell {cell!r} must look like name:kind"
                )
            name, kind = cell.rsplit(":", 1)
            if kind not in KINDS:
                raise ValidationError(f"{path}: unknown column kind {kind!r}")
            schema.append((name, kind))
        rows = [tuple(row) for row in reader if row]
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    return Table.from_rows(schema, rows)


def write_table(table: Table, path: str | Path) -> None:
    table.validate()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"{c.name}:{c.kind}" for c in table.columns])
        for i in range(table.n_rows):
            row = []
            for c in table.columns:
                row.append("%.17g" % c.values[i] if c.kind == "numeric" else str(c.values[i]))
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Jensen-Shannon distance
# ---------------------------------------------------------------------------

def _jsd_from_probs(p: np.ndarray, q: np.ndarray) -> float:
    m = 0.5 * (p + q)
    div = 0.0
    for dist in (p, q):
        nz = dist > 0
        div += 0.5 * float((dist[nz] * np.log2(dist[nz] / m[nz])).sum())
    # base-2 divergence lies in [0, 1]; clamp roundoff
    return min(max(div, 0.0), 1.0)


def js_distance(a: Column, b: Column, bins: int = DEFAULT_BINS) -> float:
    """Square root of the base-2 Jensen-Shannon divergence, in [0, 1].

    Numeric columns are binned into ``bins`` equal-width bins over the
    combined min-max range; categorical columns compare frequencies over the
    union of observed categories.
    """
    a.validate()
    b.validate()
    if a.kind != b.kind:
        raise ValidationError(f"mixed kinds: {a.name!r} is {a.kind}, {b.name!r} is {b.kind}")
    if a.kind == "numeric":
        if bins < 2:
            raise ValidationError(f"bins must be >= 2, got {bins}")
        av = a.values.astype(np.float64)
        bv = b.values.astype(np.float64)
        lo = min(av.min(), bv.min())
        hi = max(av.max(), bv.max())
        if lo == hi:
            return 0.0
        edges = np.linspace(lo, hi, bins + 1)
        p = np.histogram(av, bins=edges)[0] / av.shape[0]
        q = np.histogram(bv, bins=edges)[0] / bv.shape[0]
    else:
        cats = sorted(set(a.values) | set(b.values))
        index = {c: i for i, c in enumerate(cats)}
        p = np.zeros(len(cats))
        q = np.zeros(len(cats))
        for v in a.values:
            p[index[v]] += 1
        for v in b.values:
            q[index[v]] += 1
        p /= a.values.shape[0]
        q /= b.values.shape[0]
    return float(np.sqrt(_jsd_from_probs(p, q)))


def _check_schema(orig: Table, synth: Table) -> None:
    orig.validate()
    synth.validate()
    if orig.schema != synth.schema:
        raise SchemaError(
            f"schema mismatch: original {orig.schema} vs synthetic {synth.schema}"
        )


def field_distribution_stability(orig: Table, synth: Table,
                                 bins: int = DEFAULT_BINS) -> float:
    """100 x (1 - mean Jensen-Shannon distance over matching fields)."""
    _check_schema(orig, synth)
    dists = [js_distance(a, b, bins=bins) for a, b in zip(orig.columns, synth.columns)]
    return 100.0 * (1.0 - float(np.mean(dists)))


# ---------------------------------------------------------------------------
# Correlation stability
# ---------------------------------------------------------------------------

def _encode_numeric(orig: Table, synth: Table) -> tuple[np.ndarray, np.ndarray]:
    """Numeric matrices for both tables; categoricals become category ranks
    over the union of observed categories (sorted, hence deterministic)."""
    o_cols, s_cols = [], []
    for a, b in zip(orig.columns, synth.columns):
        if a.kind == "numeric":
            o_cols.append(a.values.astype(np.float64))
            s_cols.append(b.values.astype(np.float64))
        else:
            cats = sorted(set(a.values) | set(b.values))
            index = {c: float(i) for i, c in enumerate(cats)}
            o_cols.append(np.asarray([index[v] for v in a.values]))
            s_cols.append(np.asarray([index[v] for v in b.values]))
    return np.column_stack(o_cols), np.column_stack(s_cols)


def _pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    xc = x - x.mean()
    yc = y - y.mean()
    nx = float(np.sqrt((xc * xc).sum()))
    ny = float(np.sqrt((yc * yc).sum()))
    if nx == 0.0 or ny == 0.0:
        return None
    return float((xc @ yc) / (nx * ny))


def _pairwise_corr_diffs(orig: Table, synth: Table) -> tuple[list[float], int]:
    _check_schema(orig, synth)
    if len(orig.columns) < 2:
        raise ValidationError("correlation stability needs at least 2 fields")
    o_mat, s_mat = _encode_numeric(orig, synth)
    diffs: list[float] = []
    skipped = 0
    d = o_mat.shape[1]
    for i in range(d):
        for j in range(i + 1, d):
            co = _pearson(o_mat[:, i], o_mat[:, j])
            cs = _pearson(s_mat[:, i], s_mat[:, j])
            if co is None or cs is None:
                skipped += 1
                continue
            diffs.append(abs(co - cs))
    return diffs, skipped


def field_correlation_stability(orig: Table, synth: Table) -> float:
    """100 x (1 - mean |corr_orig - corr_synth| / 2 over field pairs).

    Pairs involving a constant column are skipped with a warning.
    """
    diffs, skipped = _pairwise_corr_diffs(orig, synth)
    if skipped:
        warnings.warn(f"{skipped} constant-column pairs skipped")
    if not diffs:
        raise DegenerateInputError("every field pair had a constant column")
    return 100.0 * (1.0 - float(np.mean(diffs)) / 2.0)


# ---------------------------------------------------------------------------
# Deep structure stability
# ---------------------------------------------------------------------------

def deep_structure_stability(orig: Table, synth: Table,
                             variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD,
                             bins: int = DEFAULT_BINS) -> float:
    """Distributional agreement of principal-component projections.

    Components come from the standardized original table (mean/std from the
    original); both tables are projected onto the top components reaching
    ``variance_threshold`` cumulative explained variance, and each component's
    score distributions are compared by Jensen-Shannon distance.
    """
    _check_schema(orig, synth)
    if not 0.0 < variance_threshold <= 1.0:
        raise ValidationError(f"variance_threshold must be in (0, 1], got {variance_threshold}")
    if len(orig.columns) < 2:
        raise ValidationError("deep structure stability needs at least 2 fields")
    o_mat, s_mat = _encode_numeric(orig, synth)

    mean = o_mat.mean(axis=0)
    std = o_mat.std(axis=0)
    keep = std > 0.0
    if not keep.any():
        raise DegenerateInputError("original table has no non-constant columns")
    zo = (o_mat[:, keep] - mean[keep]) / std[keep]
    zs = (s_mat[:, keep] - mean[keep]) / std[keep]

    cov = (zo.T @ zo) / zo.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    positive = eigvals > max(1e-12 * eigvals[0], 0.0)
    eigvals = eigvals[positive]
    eigvecs = eigvecs[:, positive]
    for j in range(eigvecs.shape[1]):
        peak = np.argmax(np.abs(eigvecs[:, j]))
        if eigvecs[peak, j] < 0:
            eigvecs[:, j] = -eigvecs[:, j]

    explained = np.cumsum(eigvals) / eigvals.sum()
    m = int(np.searchsorted(explained, variance_threshold) + 1)
    m = min(m, eigvals.shape[0])

    scores_o = zo @ eigvecs[:, :m]
    scores_s = zs @ eigvecs[:, :m]
    dists = [
        js_distance(Column(f"pc{j}", "numeric", scores_o[:, j]),
                    Column(f"pc{j}", "numeric", scores_s[:, j]), bins=bins)
        for j in range(m)
    ]
    return 100.0 * (1.0 - float(np.mean(dists)))


def composite_score(components: tuple[float, float, float],
                    weights: tuple[float, float, float] = EQUAL_WEIGHTS) -> float:
    """Weighted mean of the three stability percentages."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (3,) or (w < 0).any():
        raise ValidationError("weights must be 3 non-negative reals")
    if abs(float(w.sum()) - 1.0) > 1e-9:
        raise ValidationError(f"weights must sum to 1, got {float(w.sum())}")
    c = np.asarray(components, dtype=np.float64)
    if c.shape != (3,):
        raise ValidationError("expected exactly 3 component scores")
    return float(c @ w)


def display_percentage(x: float) -> str:
    return f"{x:.0f}"


@dataclass
class QualityReport:
    field_distribution_stability: float
    field_correlation_stability: float
    deep_structure_stability: float
    composite: float
    weights: tuple[float, float, float]
    skipped_correlation_pairs: int = 0

    def to_dict(self) -> dict:
        return {
            "field_distribution_stability": self.field_distribution_stability,
            "field_correlation_stability": self.field_correlation_stability,
            "deep_structure_stability": self.deep_structure_stability,
            "composite": self.composite,
            "composite_display": display_percentage(self.composite),
            "weights": list(self.weights),
            "skipped_correlation_pairs": self.skipped_correlation_pairs,
        }


def score_tables(orig: Table, synth: Table, bins: int = DEFAULT_BINS,
                 weights: tuple[float, float, float] = EQUAL_WEIGHTS,
                 variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD) -> QualityReport:
    dist = field_distribution_stability(orig, synth, bins=bins)
    diffs, skipped = _pairwise_corr_diffs(orig, synth)
    if not diffs:
        raise DegenerateInputError("every field pair had a constant column")
    corr = 100.0 * (1.0 - float(np.mean(diffs)) / 2.0)
    deep = deep_structure_stability(orig, synth, variance_threshold=variance_threshold,
                                    bins=bins)
    return QualityReport(
        field_distribution_stability=dist,
        field_correlation_stability=corr,
        deep_structure_stability=deep,
        composite=composite_score((dist, corr, deep), weights),
        weights=tuple(float(w) for w in weights),
        skipped_correlation_pairs=skipped,
    )


# ---------------------------------------------------------------------------
# Baseline Gaussian-copula synthesizer
# ---------------------------------------------------------------------------

def _rankdata(x: np.ndarray) -> np.ndarray:
    """Average ranks, ties shared; plain implementation to keep scipy out of
    the sampling path."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.shape[0], dtype=np.float64)
    i = 0
    while i < x.shape[0]:
        j = i
        while j + 1 < x.shape[0] and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _spearman_matrix(mat: np.ndarray) -> np.ndarray:
    d = mat.shape[1]
    ranks = np.column_stack([_rankdata(mat[:, j]) for j in range(d)])
    out = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            r = _pearson(ranks[:, i], ranks[:, j])
            out[i, j] = out[j, i] = 0.0 if r is None else r
    return out


def _nearest_correlation(mat: np.ndarray) -> np.ndarray:
    """Clip tiny or negative eigenvalues and rescale to unit diagonal."""
    eigvals, eigvecs = np.linalg.eigh(mat)
    eigvals = np.maximum(eigvals, 1e-10)
    fixed = eigvecs @ np.diag(eigvals) @ eigvecs.T
    scale = np.sqrt(np.diag(fixed))
    return fixed / np.outer(scale, scale)


def baseline_synthesize(orig: Table, n: int, seed: int) -> Table:
    """Sample ``n`` rows from a Gaussian copula fitted to ``orig``.

    Marginals are empirical per column; the dependence structure is the
    Spearman rank-correlation matrix mapped to its Gaussian-copula parameter
    ``2 sin(pi * rho / 6)``. One-row tables fall back to independent marginal
    sampling with a warning.
    """
    orig.validate()
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    d = len(orig.columns)

    if orig.n_rows < 2:
        warnings.warn("single-row table: copula undefined, sampling marginals only")
        u = rng.random((n, d))
    else:
        enc, _ = _encode_numeric(orig, orig)
        rho = _spearman_matrix(enc)
        gauss = _nearest_correlation(2.0 * np.sin(np.pi * rho / 6.0))
        chol = np.linalg.cholesky(gauss)
        z = rng.standard_normal((n, d)) @ chol.T
        u = ndtr(z)

    cols = []
    for j, col in enumerate(orig.columns):
        if col.kind == "numeric":
            srt = np.sort(col.values.astype(np.float64))
            idx = np.minimum((u[:, j] * srt.shape[0]).astype(np.int64), srt.shape[0] - 1)
            cols.append(Column(col.name, col.kind, srt[idx]))
        else:
            cats = sorted(set(col.values))
            freq = np.asarray([(col.values == c).sum() for c in cats], dtype=np.float64)
            cum = np.cumsum(freq / freq.sum())
            idx = np.minimum(np.searchsorted(cum, u[:, j], side="right"), len(cats) - 1)
            cols.append(Column(col.name, col.kind,
                               np.asarray([cats[i] for i in idx], dtype=object)))
    return Table(cols)
