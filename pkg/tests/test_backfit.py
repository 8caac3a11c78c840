import math

import numpy as np
import pytest

from mstool.backfit import LabelSequence, backfit, gev, smooth_labels
from mstool.errors import DegenerateInputError, ValidationError
from mstool.microstate import MicrostateModel, TopographicMap, mod_kmeans

from conftest import gfp_oracle, make_recording, orthonormal_maps, pearson_oracle


def model_from_maps(maps):
    k = maps.shape[0]
    return MicrostateModel(
        maps=[TopographicMap(m) for m in maps],
        labels=[chr(ord("A") + i) for i in range(k)],
        gev_total=0.5, fit_seed=0, n_init=1, converged_iterations=1,
    )


def archetype_recording(seed, n_ch=8, k=4, n_t=300, noise=0.0):
    """Every sample is a (possibly sign-flipped) scaled archetype."""
    rng = np.random.default_rng(seed)
    maps = orthonormal_maps(seed, n_ch, k)
    states = rng.integers(0, k, size=n_t)
    scale = (1.0 + rng.random(n_t)) * rng.choice([-1.0, 1.0], size=n_t)
    data = maps[states].T * scale
    if noise:
        data = data + rng.normal(scale=noise, size=data.shape)
    return make_recording(data), model_from_maps(maps), states


# ---------------------------------------------------------------------------
# backfit
# ---------------------------------------------------------------------------

def test_exact_archetype_gets_its_label():
    rec, model, states = archetype_recording(1)
    seq = backfit(rec, model)
    np.testing.assert_array_equal(seq.labels, states)
    np.testing.assert_allclose(seq.corr, 1.0, atol=1e-9)


def test_single_state_model_labels_everything_zero(rng):
    maps = orthonormal_maps(4, 8, 1)
    rec = make_recording(rng.normal(size=(8, 100)))
    seq = backfit(rec, model_from_maps(maps))
    assert set(seq.labels.tolist()) == {0}


def argmax_oracle(maps, data):
    """Per-sample exhaustive argmax of |pearson|, lowest index on ties."""
    k = maps.shape[0]
    labels, corrs = [], []
    for t in range(data.shape[1]):
        col = data[:, t]
        if np.std(col) == 0.0:
            labels.append(0)
            corrs.append(0.0)
            continue
        vals = [abs(pearson_oracle(maps[s].tolist(), col.tolist())) for s in range(k)]
        best = 0
        for s in range(1, k):
            if vals[s] > vals[best]:
                best = s
        labels.append(best)
        corrs.append(vals[best])
    return np.asarray(labels), np.asarray(corrs)


def test_backfit_matches_argmax_oracle(rng):
    maps = orthonormal_maps(9, 6, 4)
    rec = make_recording(rng.normal(size=(6, 200)))
    seq = backfit(rec, model_from_maps(maps))
    labels, corrs = argmax_oracle(maps, rec.data)
    np.testing.assert_array_equal(seq.labels, labels)
    np.testing.assert_allclose(seq.corr, corrs, atol=1e-12)


def test_backfit_invariant_to_map_sign_flip(rng):
    maps = orthonormal_maps(10, 8, 4)
    rec = make_recording(rng.normal(size=(8, 150)))
    seq1 = backfit(rec, model_from_maps(maps))
    flipped = maps.copy()
    flipped[2] = -flipped[2]
    seq2 = backfit(rec, model_from_maps(flipped))
    np.testing.assert_array_equal(seq1.labels, seq2.labels)
    np.testing.assert_allclose(seq1.corr, seq2.corr, atol=1e-12)


def test_backfit_constant_sample_tiebreak_and_warning():
    maps = orthonormal_maps(2, 4, 2)
    data = np.random.default_rng(0).normal(size=(4, 10))
    data[:, 3] = 7.5  # constant across channels
    rec = make_recording(data)
    with pytest.warns(UserWarning, match="constant samples"):
        seq = backfit(rec, model_from_maps(maps))
    assert seq.labels[3] == 0
    assert seq.corr[3] == 0.0
    assert seq.n_degenerate == 1


def test_backfit_channel_mismatch():
    maps = orthonormal_maps(2, 4, 2)
    rec = make_recording(np.random.default_rng(0).normal(size=(6, 10)))
    with pytest.raises(ValidationError):
        backfit(rec, model_from_maps(maps))


# ---------------------------------------------------------------------------
# smooth_labels
# ---------------------------------------------------------------------------

def test_smooth_zero_is_identity(rng):
    rec, model, _ = archetype_recording(5, noise=0.3)
    seq = backfit(rec, model)
    out = smooth_labels(seq, 0.0)
    np.testing.assert_array_equal(out.labels, seq.labels)
    np.testing.assert_array_equal(out.corr, seq.corr)


def test_smooth_forced_merge_aabaa():
    # AABAA at 1000 Hz; the 1-sample B run is below the 2 ms threshold and
    # both neighbors are A, so the result is AAAAA
    labels = np.array([0, 0, 1, 0, 0], dtype=np.int64)
    state_corr = np.array([
        [0.9, 0.9, 0.4, 0.9, 0.9],
        [0.2, 0.2, 0.8, 0.2, 0.2],
    ])
    seq = LabelSequence(labels=labels, corr=state_corr[labels, np.arange(5)],
                        sampling_rate_hz=1000.0, state_corr=state_corr)
    out = smooth_labels(seq, 2.0)
    np.testing.assert_array_equal(out.labels, np.zeros(5))
    np.testing.assert_allclose(out.corr, state_corr[0])


def test_smooth_picks_better_neighbor_per_sample():
    # ABBC with a short B run: first B sample goes to A, second to C
    labels = np.array([0, 1, 1, 2, 2, 2], dtype=np.int64)
    state_corr = np.array([
        [0.9, 0.8, 0.3, 0.1, 0.1, 0.1],
        [0.5, 0.6, 0.6, 0.2, 0.2, 0.2],
        [0.1, 0.2, 0.7, 0.9, 0.9, 0.9],
    ])
    seq = LabelSequence(labels=labels, corr=state_corr[labels, np.arange(6)],
                        sampling_rate_hz=1000.0, state_corr=state_corr)
    out = smooth_labels(seq, 3.0)
    np.testing.assert_array_equal(out.labels, [0, 0, 2, 2, 2, 2])


def run_lengths_of(labels):
    runs = []
    start = 0
    for t in range(1, len(labels) + 1):
        if t == len(labels) or labels[t] != labels[t - 1]:
            runs.append((start, t - start, labels[start]))
            start = t
    return runs


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_smooth_postcondition_no_short_interior_runs(seed):
    rec, model, _ = archetype_recording(seed, n_t=600, noise=0.8)
    seq = backfit(rec, model)
    min_ms = 20.0
    out = smooth_labels(seq, min_ms)
    min_len = min_ms * seq.sampling_rate_hz / 1000.0
    runs = run_lengths_of(out.labels.tolist())
    for i, (start, length, _) in enumerate(runs):
        if i in (0, len(runs) - 1):
            continue  # edge runs may stay short
        assert length >= min_len
    assert out.labels.max() < model.k
    # corr always tracks the assigned state
    np.testing.assert_allclose(
        out.corr, out.state_corr[out.labels, np.arange(len(out))], atol=0)


def test_smooth_requires_state_corr():
    seq = LabelSequence(labels=np.zeros(5, dtype=np.int64), corr=np.zeros(5),
                        sampling_rate_hz=100.0)
    with pytest.raises(ValidationError, match="per-state correlations"):
        smooth_labels(seq, 10.0)


# ---------------------------------------------------------------------------
# gev
# ---------------------------------------------------------------------------

def gev_oracle(data, maps, labels):
    """Direct evaluation: per_state[s] = sum_(label=s) (gfp * corr)^2 / sum gfp^2."""
    g = gfp_oracle(data)
    denom = sum(v * v for v in g)
    per_state = [0.0] * maps.shape[0]
    for t in range(data.shape[1]):
        if g[t] == 0.0:
            continue
        c = pearson_oracle(maps[labels[t]].tolist(), data[:, t].tolist())
        per_state[labels[t]] += (g[t] * c) ** 2
    per_state = [v / denom for v in per_state]
    return per_state, sum(per_state)


def test_gev_pure_archetypes_total_one():
    rec, model, _ = archetype_recording(8)
    seq = backfit(rec, model)
    report = gev(rec, model, seq)
    assert report.total == pytest.approx(1.0, abs=1e-9)


def test_gev_orthogonal_noise_low():
    # noise orthogonalized against every map explains almost nothing
    rng = np.random.default_rng(3)
    maps = orthonormal_maps(3, 12, 4)
    data = rng.normal(size=(12, 400))
    data -= data.mean(axis=0, keepdims=True)
    for m in maps:
        data -= np.outer(m, m @ data)
    rec = make_recording(data)
    model = model_from_maps(maps)
    seq = backfit(rec, model)
    report = gev(rec, model, seq)
    assert report.total < 0.05


def test_gev_matches_formula_oracle(rng):
    for seed in range(5):
        rec, model, _ = archetype_recording(seed + 40, n_t=120, noise=1.0)
        seq = backfit(rec, model)
        report = gev(rec, model, seq)
        per_state, total = gev_oracle(rec.data, model.as_matrix(), seq.labels)
        np.testing.assert_allclose(report.per_state, per_state, atol=1e-12)
        assert report.total == pytest.approx(total, abs=1e-12)
        assert report.total == pytest.approx(float(report.per_state.sum()), abs=1e-9)
        assert report.total <= 1 + 1e-9
        assert (report.per_state >= 0).all()


def test_gev_nonargmax_relabel_never_increases_total(rng):
    rec, model, _ = archetype_recording(50, n_t=200, noise=0.5)
    seq = backfit(rec, model)
    base = gev(rec, model, seq).total
    for _ in range(10):
        labels = seq.labels.copy()
        t = int(rng.integers(len(labels)))
        labels[t] = (labels[t] + 1 + int(rng.integers(model.k - 1))) % model.k
        perturbed = LabelSequence(labels, seq.corr, seq.sampling_rate_hz)
        assert gev(rec, model, perturbed).total <= base + 1e-12


def test_gev_zero_gfp_degenerate():
    rec = make_recording(np.ones((4, 50)))
    maps = orthonormal_maps(1, 4, 2)
    model = model_from_maps(maps)
    seq = LabelSequence(np.zeros(50, dtype=np.int64), np.zeros(50), 250.0)
    with pytest.raises(DegenerateInputError):
        gev(rec, model, seq)
