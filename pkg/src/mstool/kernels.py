"""Numeric inner-loop kernels with two interchangeable backends.

Every kernel exists twice: a numba ``@njit`` version (``*_nb``) and a pure
numpy version (``*_np``) implementing the same contract. The public names at
the bottom of this module are bound to one backend at import time:

* default: numba, when importable
* ``MSTOOL_NUMBA=0`` in the environment forces the pure numpy path

``benchmarks/bench_kernels.py`` times both backends side by side. Results of
the two backends agree to floating-point roundoff; each backend on its own is
bit-deterministic for a fixed seed.
"""

import os

import numpy as np


def numba_requested() -> bool:
    flag = os.environ.get("MSTOOL_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


NUMBA_AVAILABLE = False
try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is an install-time choice
    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


NUMBA_ENABLED = NUMBA_AVAILABLE and numba_requested()


# ---------------------------------------------------------------------------
# Global field power: per-sample population std across channels
# ---------------------------------------------------------------------------

def gfp_values_np(data):
    return data.std(axis=0)


@njit(cache=True)
def gfp_values_nb(data):
    n_ch, n_t = data.shape
    out = np.empty(n_t)
    for t in range(n_t):
        mean = 0.0
        for i in range(n_ch):
            mean += data[i, t]
        mean /= n_ch
        acc = 0.0
        for i in range(n_ch):
            d = data[i, t] - mean
            acc += d * d
        out[t] = np.sqrt(acc / n_ch)
    return out


# ---------------------------------------------------------------------------
# Peak detection: strict left slope, non-strict right slope, endpoints excluded
# ---------------------------------------------------------------------------

def peak_candidates_np(values):
    mid = values[1:-1]
    mask = (mid > values[:-2]) & (mid >= values[2:])
    return np.nonzero(mask)[0].astype(np.int64) + 1


@njit(cache=True)
def peak_candidates_nb(values):
    n = values.shape[0]
    out = np.empty(n, dtype=np.int64)
    m = 0
    for t in range(1, n - 1):
        if values[t] > values[t - 1] and values[t] >= values[t + 1]:
            out[m] = t
            m += 1
    return out[:m]


def select_peaks_np(candidates, order, n_total, min_dist):
    # Greedy by priority order; a kept peak forbids indices closer than
    # min_dist on either side. radius = largest integer delta with delta < d.
    keep = np.zeros(candidates.shape[0], dtype=np.bool_)
    if min_dist <= 0:
        keep[:] = True
        return keep
    radius = int(np.ceil(min_dist)) - 1
    forbidden = np.zeros(n_total, dtype=np.bool_)
    for pos in order:
        idx = candidates[pos]
        if forbidden[idx]:
            continue
        keep[pos] = True
        lo = max(0, idx - radius)
        hi = min(n_total, idx + radius + 1)
        forbidden[lo:hi] = True
    return keep


@njit(cache=True)
def select_peaks_nb(candidates, order, n_total, min_dist):
    keep = np.zeros(candidates.shape[0], dtype=np.bool_)
    if min_dist <= 0:
        for i in range(keep.shape[0]):
            keep[i] = True
        return keep
    radius = int(np.ceil(min_dist)) - 1
    forbidden = np.zeros(n_total, dtype=np.bool_)
    for j in range(order.shape[0]):
        pos = order[j]
        idx = candidates[pos]
        if forbidden[idx]:
            continue
        keep[pos] = True
        lo = max(0, idx - radius)
        hi = min(n_total, idx + radius + 1)
        for i in range(lo, hi):
            forbidden[i] = True
    return keep


# ---------------------------------------------------------------------------
# Spatial correlation of every map against every sample
# ---------------------------------------------------------------------------
# Maps are zero-mean unit-norm rows, so Pearson across channels reduces to
# (m . x_centered) / ||x_centered||. Constant samples get correlation 0.

def corr_matrix_np(maps, data):
    centered = data - data.mean(axis=0, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=0))
    out = maps @ centered
    nonzero = norms > 0.0
    out[:, nonzero] /= norms[nonzero]
    out[:, ~nonzero] = 0.0
    return out


@njit(cache=True)
def corr_matrix_nb(maps, data):
    k, n_ch = maps.shape
    n_t = data.shape[1]
    out = np.zeros((k, n_t))
    for t in range(n_t):
        mean = 0.0
        for i in range(n_ch):
            mean += data[i, t]
        mean /= n_ch
        norm_sq = 0.0
        for i in range(n_ch):
            d = data[i, t] - mean
            norm_sq += d * d
        if norm_sq <= 0.0:
            continue
        inv = 1.0 / np.sqrt(norm_sq)
        for j in range(k):
            dot = 0.0
            for i in range(n_ch):
                dot += maps[j, i] * (data[i, t] - mean)
            out[j, t] = dot * inv
    return out


# ---------------------------------------------------------------------------
# One modified-K-means restart on centered peak samples
# ---------------------------------------------------------------------------
# x: channels x P, every column already channel-mean centered.
# Assignment maximizes the squared dot product with unit-norm maps, which is
# the same argmax as squared spatial correlation. Map update is the dominant
# eigenvector of the scatter matrix of assigned columns. Explained variance
# ev = sum_t (m_label(t) . x_t)^2 / sum_t ||x_t||^2 is tracked after every
# update step; both half-steps are coordinate ascent on it, so the trace is
# non-decreasing. Empty clusters are re-seeded from the currently worst
# explained sample (deterministic, lowest index on ties).

def modkmeans_restart_np(x, norms_sq, init_idx, max_iter, tol):
    n_ch, n_p = x.shape
    k = init_idx.shape[0]
    denom = norms_sq.sum()

    maps = np.empty((k, n_ch))
    for j in range(k):
        v = x[:, init_idx[j]]
        maps[j] = v / np.sqrt((v * v).sum())

    trace = np.empty(max_iter)
    labels = np.zeros(n_p, dtype=np.int64)
    n_iter = 0
    prev = -1.0
    for it in range(max_iter):
        act = maps @ x
        labels = np.argmax(act * act, axis=0)

        # explained share of each sample under its current assignment,
        # used to pick re-seed candidates for empty clusters
        assigned = act[labels, np.arange(n_p)]
        with np.errstate(divide="ignore", invalid="ignore"):
            share = np.where(norms_sq > 0.0, assigned * assigned / norms_sq, np.inf)

        used = np.zeros(n_p, dtype=np.bool_)
        for j in range(k):
            members = labels == j
            if not members.any():
                cand = np.where(used, np.inf, share)
                worst = int(np.argmin(cand))
                used[worst] = True
                v = x[:, worst]
                nrm = np.sqrt((v * v).sum())
                if nrm > 0.0:
                    maps[j] = v / nrm
                continue
            xj = x[:, members]
            scatter = xj @ xj.T
            _, vecs = np.linalg.eigh(scatter)
            m = vecs[:, -1]
            m = m - m.mean()
            maps[j] = m / np.sqrt((m * m).sum())

        act = maps @ x
        ev = float((act[labels, np.arange(n_p)] ** 2).sum() / denom)
        trace[it] = ev
        n_iter = it + 1
        if it > 0 and ev - prev < tol * max(prev, 1e-300):
            break
        prev = ev

    return maps, labels, trace[:n_iter].copy(), n_iter


@njit(cache=True)
def modkmeans_restart_nb(x, norms_sq, init_idx, max_iter, tol):
    n_ch, n_p = x.shape
    k = init_idx.shape[0]
    denom = 0.0
    for t in range(n_p):
        denom += norms_sq[t]

    maps = np.empty((k, n_ch))
    for j in range(k):
        nrm = 0.0
        for i in range(n_ch):
            nrm += x[i, init_idx[j]] * x[i, init_idx[j]]
        nrm = np.sqrt(nrm)
        for i in range(n_ch):
            maps[j, i] = x[i, init_idx[j]] / nrm

    trace = np.empty(max_iter)
    labels = np.zeros(n_p, dtype=np.int64)
    counts = np.zeros(k, dtype=np.int64)
    share = np.empty(n_p)
    used = np.zeros(n_p, dtype=np.bool_)
    n_iter = 0
    prev = -1.0
    for it in range(max_iter):
        act = maps @ x
        for j in range(k):
            counts[j] = 0
        for t in range(n_p):
            best = 0
            bv = act[0, t] * act[0, t]
            for j in range(1, k):
                v = act[j, t] * act[j, t]
                if v > bv:
                    bv = v
                    best = j
            labels[t] = best
            counts[best] += 1
            if norms_sq[t] > 0.0:
                share[t] = bv / norms_sq[t]
            else:
                share[t] = np.inf

        for t in range(n_p):
            used[t] = False
        for j in range(k):
            if counts[j] == 0:
                worst = -1
                wval = np.inf
                for t in range(n_p):
                    if not used[t] and share[t] < wval:
                        wval = share[t]
                        worst = t
                if worst >= 0:
                    used[worst] = True
                    nrm = 0.0
                    for i in range(n_ch):
                        nrm += x[i, worst] * x[i, worst]
                    if nrm > 0.0:
                        nrm = np.sqrt(nrm)
                        for i in range(n_ch):
                            maps[j, i] = x[i, worst] / nrm
                continue
            scatter = np.zeros((n_ch, n_ch))
            for t in range(n_p):
                if labels[t] == j:
                    for a in range(n_ch):
                        xa = x[a, t]
                        for b in range(n_ch):
                            scatter[a, b] += xa * x[b, t]
            _, vecs = np.linalg.eigh(scatter)
            mean = 0.0
            for i in range(n_ch):
                mean += vecs[i, n_ch - 1]
            mean /= n_ch
            nrm = 0.0
            for i in range(n_ch):
                d = vecs[i, n_ch - 1] - mean
                nrm += d * d
            nrm = np.sqrt(nrm)
            for i in range(n_ch):
                maps[j, i] = (vecs[i, n_ch - 1] - mean) / nrm

        act = maps @ x
        num = 0.0
        for t in range(n_p):
            num += act[labels[t], t] * act[labels[t], t]
        ev = num / denom
        trace[it] = ev
        n_iter = it + 1
        if it > 0 and ev - prev < tol * max(prev, 1e-300):
            break
        prev = ev

    return maps, labels, trace[:n_iter].copy(), n_iter


# ---------------------------------------------------------------------------
# Run-length encoding of a label vector
# ---------------------------------------------------------------------------

def run_lengths_np(labels):
    n = labels.shape[0]
    if n == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), empty.copy()
    breaks = np.nonzero(np.diff(labels) != 0)[0]
    starts = np.concatenate(([0], breaks + 1)).astype(np.int64)
    ends = np.concatenate((breaks + 1, [n])).astype(np.int64)
    return starts, ends - starts, labels[starts].astype(np.int64)


@njit(cache=True)
def run_lengths_nb(labels):
    n = labels.shape[0]
    starts = np.empty(n, dtype=np.int64)
    lengths = np.empty(n, dtype=np.int64)
    values = np.empty(n, dtype=np.int64)
    if n == 0:
        return starts[:0], lengths[:0], values[:0]
    m = 0
    start = 0
    cur = labels[0]
    for t in range(1, n):
        if labels[t] != cur:
            starts[m] = start
            lengths[m] = t - start
            values[m] = cur
            m += 1
            start = t
            cur = labels[t]
    starts[m] = start
    lengths[m] = n - start
    values[m] = cur
    m += 1
    return starts[:m].copy(), lengths[:m].copy(), values[:m].copy()


if NUMBA_ENABLED:
    gfp_values = gfp_values_nb
    peak_candidates = peak_candidates_nb
    select_peaks = select_peaks_nb
    corr_matrix = corr_matrix_nb
    modkmeans_restart = modkmeans_restart_nb
    run_lengths = run_lengths_nb
else:
    gfp_values = gfp_values_np
    peak_candidates = peak_candidates_np
    select_peaks = select_peaks_np
    corr_matrix = corr_matrix_np
    modkmeans_restart = modkmeans_restart_np
    run_lengths = run_lengths_np

BACKEND = "numba" if NUMBA_ENABLED else "numpy"
