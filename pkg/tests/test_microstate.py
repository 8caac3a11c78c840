import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mstool.errors import DegenerateInputError, ValidationError
from mstool.microstate import (
    GfpSeries,
    TopographicMap,
    find_gfp_peaks,
    gfp,
    load_model,
    mod_kmeans,
    order_maps,
    save_model,
    spatial_correlation,
)

from conftest import gfp_oracle, make_recording, orthonormal_maps, pearson_oracle


# ---------------------------------------------------------------------------
# gfp
# ---------------------------------------------------------------------------

def test_gfp_constant_sample_is_zero():
    rec = make_recording(np.array([[2.0, 5.0], [2.0, 5.0], [2.0, 5.0]]))
    np.testing.assert_array_equal(gfp(rec).values, [0.0, 0.0])


def test_gfp_two_channel_by_hand():
    # channels [+1, -1]: mean 0, variance 1, gfp 1
    rec = make_recording(np.array([[1.0, 1.0], [-1.0, -1.0]]))
    np.testing.assert_allclose(gfp(rec).values, [1.0, 1.0], atol=1e-15)


def test_gfp_matches_population_std_oracle(rng):
    rec = make_recording(rng.normal(size=(8, 1000)) * 30.0)
    series = gfp(rec)
    expected = gfp_oracle(rec.data)
    assert np.abs(series.values - expected).max() < 1e-9


@settings(max_examples=25, deadline=None)
@given(offset=st.floats(-100, 100, allow_nan=False))
def test_gfp_invariant_under_common_offset(offset):
    rng = np.random.default_rng(5)
    data = rng.normal(size=(6, 50))
    a = gfp(make_recording(data)).values
    b = gfp(make_recording(data + offset)).values
    np.testing.assert_allclose(a, b, atol=1e-9)


# ---------------------------------------------------------------------------
# find_gfp_peaks
# ---------------------------------------------------------------------------

def series_of(values, rate=1000.0):
    return GfpSeries(np.abs(np.asarray(values, dtype=np.float64)), rate)


def peak_oracle(values, min_dist_samples=0.0):
    """Exhaustive scan plus independent greedy suppression."""
    n = len(values)
    cands = [t for t in range(1, n - 1)
             if values[t] > values[t - 1] and values[t] >= values[t + 1]]
    if min_dist_samples <= 0:
        return cands
    kept = []
    for t in sorted(cands, key=lambda i: (-values[i], i)):
        if all(abs(t - k) >= min_dist_samples for k in kept):
            kept.append(t)
    return sorted(kept)


def test_peaks_monotone_series_empty():
    assert find_gfp_peaks(series_of([0, 1, 2, 3, 4])).tolist() == []


def test_peaks_by_definition():
    assert find_gfp_peaks(series_of([0, 1, 0, 2, 0])).tolist() == [1, 3]


def test_peaks_plateau_tiebreak():
    # strict left, non-strict right: the first sample of a plateau is the peak
    assert find_gfp_peaks(series_of([0, 2, 2, 0])).tolist() == [1]


def test_peaks_match_scan_oracle(rng):
    for _ in range(20):
        vals = np.abs(rng.normal(size=200))
        got = find_gfp_peaks(GfpSeries(vals, 1000.0)).tolist()
        assert got == peak_oracle(vals)


def test_peaks_min_distance_keeps_larger(rng):
    # 1000 Hz -> min_distance_ms equals samples
    for trial in range(10):
        vals = np.abs(rng.normal(size=300))
        for dist_ms in (2.0, 5.0, 17.0):
            got = find_gfp_peaks(GfpSeries(vals, 1000.0), min_distance_ms=dist_ms)
            assert got.tolist() == peak_oracle(vals, dist_ms)


def test_peaks_min_distance_tie_prefers_earlier():
    vals = np.array([0.0, 1.0, 0.5, 1.0, 0.0])
    got = find_gfp_peaks(GfpSeries(vals, 1000.0), min_distance_ms=10.0)
    assert got.tolist() == [1]


def test_peaks_empty_series_rejected():
    with pytest.raises(ValidationError):
        find_gfp_peaks(GfpSeries(np.empty(0), 100.0))


# ---------------------------------------------------------------------------
# spatial_correlation
# ---------------------------------------------------------------------------

def unit_map(seed, n_ch=8):
    return TopographicMap(orthonormal_maps(seed, n_ch, 1)[0])


def test_spatial_correlation_scaled_copy():
    topo = unit_map(3)
    assert spatial_correlation(topo, 5.0 * topo.weights) == pytest.approx(1.0, abs=1e-12)
    assert spatial_correlation(topo, -5.0 * topo.weights) == pytest.approx(-1.0, abs=1e-12)


def test_spatial_correlation_matches_pearson_oracle(rng):
    for _ in range(25):
        topo = unit_map(int(rng.integers(1 << 30)))
        sample = rng.normal(size=8) * 10 + rng.normal() * 5
        expected = pearson_oracle(topo.weights.tolist(), sample.tolist())
        assert spatial_correlation(topo, sample) == pytest.approx(expected, abs=1e-12)


def test_spatial_correlation_sign_antisymmetry(rng):
    topo = unit_map(11)
    x = rng.normal(size=8)
    assert spatial_correlation(topo, x) == pytest.approx(
        -spatial_correlation(topo, -x), abs=1e-12)


def test_spatial_correlation_constant_sample_degenerate():
    with pytest.raises(DegenerateInputError):
        spatial_correlation(unit_map(1), np.full(8, 3.3))


def test_spatial_correlation_dim_mismatch():
    with pytest.raises(ValidationError):
        spatial_correlation(unit_map(1), np.zeros(5))


# ---------------------------------------------------------------------------
# mod_kmeans
# ---------------------------------------------------------------------------

def test_single_cluster_fixed_point():
    m = orthonormal_maps(2, 10, 1)[0]
    signs = np.where(np.arange(40) % 2 == 0, 1.0, -1.0)
    peaks = np.outer(m, signs * 3.0)
    model = mod_kmeans(peaks, k=1, n_init=2, seed=9)
    rec_map = TopographicMap(model.maps[0].weights)
    assert abs(spatial_correlation(rec_map, m)) > 1 - 1e-9


def synth_peaks(seed, n_ch=16, k=4, n_peaks=500, snr=10.0):
    """Peaks drawn from orthogonal ground-truth maps at the given SNR."""
    rng = np.random.default_rng(seed)
    truth = orthonormal_maps(seed, n_ch, k)
    states = rng.integers(0, k, size=n_peaks)
    signs = rng.choice([-1.0, 1.0], size=n_peaks)
    amps = 1.0 + 0.2 * rng.random(n_peaks)
    clean = truth[states].T * (signs * amps)
    noise_scale = np.sqrt((amps**2).mean() / (snr * n_ch))
    peaks = clean + rng.normal(scale=noise_scale, size=clean.shape)
    return truth, peaks


def best_permutation_corrs(truth, fitted):
    """Max over state permutations of the min |corr|; greedy is not enough."""
    from itertools import permutations

    k = truth.shape[0]
    corr = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            corr[i, j] = abs(pearson_oracle(truth[i].tolist(), fitted[j].tolist()))
    best = -1.0
    best_perm = None
    for perm in permutations(range(k)):
        low = min(corr[i, perm[i]] for i in range(k))
        if low > best:
            best, best_perm = low, perm
    return best, [corr[i, best_perm[i]] for i in range(k)]


def test_recovery_from_orthogonal_truth():
    truth, peaks = synth_peaks(seed=77)
    model = mod_kmeans(peaks, k=4, seed=5)
    worst, _ = best_permutation_corrs(truth, model.as_matrix())
    assert worst > 0.95


def test_same_seed_identical_model():
    _, peaks = synth_peaks(seed=3)
    m1 = mod_kmeans(peaks, k=4, seed=42)
    m2 = mod_kmeans(peaks, k=4, seed=42)
    assert m1.labels == m2.labels
    assert m1.gev_total == m2.gev_total
    assert m1.converged_iterations == m2.converged_iterations
    for a, b in zip(m1.maps, m2.maps):
        np.testing.assert_array_equal(a.weights, b.weights)
    assert m1.ev_traces == m2.ev_traces


def test_explained_variance_monotone_every_restart():
    _, peaks = synth_peaks(seed=13)
    model = mod_kmeans(peaks, k=4, n_init=6, seed=1)
    assert len(model.ev_traces) == 6
    for trace in model.ev_traces:
        for a, b in zip(trace, trace[1:]):
            assert b >= a - 1e-12
        assert 0.0 <= trace[-1] <= 1.0 + 1e-12


def test_returned_maps_satisfy_invariants():
    _, peaks = synth_peaks(seed=21)
    model = mod_kmeans(peaks, k=4, seed=2)
    model.validate()
    for m in model.maps:
        assert abs(m.weights.mean()) < 1e-9
        assert abs(np.linalg.norm(m.weights) - 1.0) < 1e-9


def test_k_larger_than_samples_rejected():
    with pytest.raises(ValidationError):
        mod_kmeans(np.random.default_rng(0).normal(size=(8, 3)), k=4, seed=0)


def test_all_constant_peaks_degenerate():
    with pytest.raises(DegenerateInputError):
        mod_kmeans(np.ones((8, 20)), k=2, seed=0)


# ---------------------------------------------------------------------------
# order_maps
# ---------------------------------------------------------------------------

def gev_per_state_oracle(maps, data):
    """Brute-force per-state GEV under argmax-|corr| labels."""
    k, n_ch = maps.shape
    n_t = data.shape[1]
    g = gfp_oracle(data)
    denom = sum(v * v for v in g)
    per_state = [0.0] * k
    for t in range(n_t):
        col = data[:, t].tolist()
        if g[t] == 0.0:
            continue
        corrs = [pearson_oracle(maps[s].tolist(), col) for s in range(k)]
        best = max(range(k), key=lambda s: (abs(corrs[s]), -s))
        per_state[best] += (g[t] * corrs[best]) ** 2
    return [v / denom for v in per_state]


def fitted_model_and_rec(seed):
    rng = np.random.default_rng(seed)
    truth = orthonormal_maps(seed, 8, 4)
    states = rng.integers(0, 4, size=400)
    data = truth[states].T * (1 + rng.random(400)) + rng.normal(scale=0.2, size=(8, 400))
    rec = make_recording(data)
    model = mod_kmeans(data, k=4, seed=seed)
    return model, rec


def test_order_maps_sorts_by_descending_gev():
    model, rec = fitted_model_and_rec(31)
    ordered = order_maps(model, rec)
    per_state = gev_per_state_oracle(ordered.as_matrix(), rec.data)
    assert all(a >= b - 1e-12 for a, b in zip(per_state, per_state[1:]))
    assert ordered.labels == ["A", "B", "C", "D"]


def test_order_maps_idempotent():
    model, rec = fitted_model_and_rec(32)
    once = order_maps(model, rec)
    twice = order_maps(once, rec)
    for a, b in zip(once.maps, twice.maps):
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-12)


def test_order_maps_permutation_invariant():
    model, rec = fitted_model_and_rec(33)
    ordered = order_maps(model, rec)
    shuffled = order_maps(
        type(model)(maps=model.maps[::-1], labels=model.labels, gev_total=model.gev_total,
                    fit_seed=model.fit_seed, n_init=model.n_init,
                    converged_iterations=model.converged_iterations),
        rec)
    for a, b in zip(ordered.maps, shuffled.maps):
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-12)


def test_order_maps_sign_convention():
    model, rec = fitted_model_and_rec(34)
    ordered = order_maps(model, rec)
    for m in ordered.maps:
        peak = np.argmax(np.abs(m.weights))
        assert m.weights[peak] > 0


def test_model_json_round_trip(tmp_path):
    model, _ = fitted_model_and_rec(35)
    path = tmp_path / "model.json"
    save_model(model, path)
    back = load_model(path)
    assert back.labels == model.labels
    assert back.fit_seed == model.fit_seed
    assert back.gev_total == model.gev_total
    for a, b in zip(back.maps, model.maps):
        np.testing.assert_array_equal(a.weights, b.weights)
