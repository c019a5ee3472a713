import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sotcam.array import ArrayConfig
from sotcam.device import X
from sotcam.similarity import (BitDataset, DimMismatch, LengthMismatch, LshEncoder,
                               RetrievalMetrics, fixed_radius_benchmark, fixed_radius_search,
                               hamming_many, hamming_oracle, load_embeddings, lsh_encode,
                               radius_threshold, recsys_eval, save_embeddings,
                               synthetic_recsys)


@pytest.mark.parametrize("a,b,d", [
    ([0, 1, 1, 0], [0, 1, 1, 0], 0),
    ([0, 1, 1, 0], [1, 0, 0, 1], 4),
    ([0, X, 1, 0], [1, 0, X, 0], 1),
    ([X, X], [0, 1], 0),
])
def test_hamming_examples(a, b, d):
    assert hamming_oracle(a, b) == d
    assert hamming_many([a], b)[0] == d


def test_hamming_length_mismatch():
    with pytest.raises(LengthMismatch):
        hamming_oracle([0, 1], [0, 1, 1])
    with pytest.raises(LengthMismatch):
        hamming_many([[0, 1]], [0, 1, 1])


def test_bank_layout_round_robin():
    ds = BitDataset(np.zeros((130, 8), dtype=np.int8))
    assert ds.n_banks == 3
    ids = np.concatenate([i for i, _ in ds.banks()])
    assert sorted(ids.tolist()) == list(range(130))
    assert ds.bank_ids(1)[:3].tolist() == [1, 4, 7]


def test_dataset_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    v = rng.integers(0, 3, (37, 13)).astype(np.int8)
    v[v == 2] = X
    BitDataset(v).save(tmp_path / "d.bin")
    back = BitDataset.load(tmp_path / "d.bin")
    np.testing.assert_array_equal(back.vectors, v)


def test_dataset_load_rejects_garbage(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        BitDataset.load(tmp_path / "bad.bin")


def test_planted_distances():
    ds, q = BitDataset.planted(200, 32, 4, seed=1)
    hd = hamming_many(ds.vectors[0::4], q[0])
    assert hd.min() >= 0 and hd.max() <= 16
    assert ds.vectors.shape == (200, 32)


def test_metrics_harmonic_mean():
    m = RetrievalMetrics.from_sets([1, 2, 3, 4], [3, 4, 5])
    assert m.precision == 0.5 and m.recall == pytest.approx(2 / 3)
    assert m.f_score == pytest.approx(2 * 0.5 * (2 / 3) / (0.5 + 2 / 3))
    assert RetrievalMetrics.from_sets([], []).f_score == 1.0
    assert RetrievalMetrics.from_counts(2, 4, 3) == m


def test_ideal_search_is_oracle():
    ds, q = BitDataset.planted(300, 64, 3, seed=2)
    found, m = fixed_radius_search(ds, q[0], 10)
    expected = [i for i in range(ds.n) if hamming_oracle(ds.vectors[i], q[0]) <= 10]
    assert found.tolist() == expected
    assert m.recall == m.precision == 1.0


def test_threshold_edges():
    cfg = ArrayConfig()
    assert radius_threshold(cfg, cfg.cols) == -math.inf
    assert radius_threshold(cfg, 0) == cfg.t_window
    assert radius_threshold(cfg, 5) > radius_threshold(cfg, 6)


def test_radius_at_word_length_returns_everything():
    ds, q = BitDataset.planted(100, 128, 2, seed=3)
    found, m = fixed_radius_search(ds, q[0], 128, ArrayConfig(), "realistic")
    assert found.size == 100 and m.precision == 1.0


def test_realistic_search_keeps_recall():
    cfg = ArrayConfig().with_preset("SRAM")
    ds, q = BitDataset.planted(128, 128, 2, seed=4)
    m = fixed_radius_benchmark(ds, q, 20, cfg, "realistic")
    assert m.recall == 1.0
    assert m.precision > 0.8


def test_realistic_needs_config():
    ds, q = BitDataset.planted(10, 8, 1)
    with pytest.raises(ValueError):
        fixed_radius_search(ds, q[0], 2, mode="realistic")
    with pytest.raises(ValueError):
        fixed_radius_search(ds, q[0], 2, mode="bogus")


def test_lsh_zero_vector_all_ones():
    enc = LshEncoder.create(16, 32, seed=0)
    assert lsh_encode(np.zeros(16), enc).tolist() == [1] * 32


def test_lsh_dim_mismatch():
    with pytest.raises(DimMismatch):
        LshEncoder.create(16).encode(np.ones(8))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0))
def test_lsh_scale_invariant(c):
    enc = LshEncoder.create(8, 64, seed=1)
    v = np.random.default_rng(2).standard_normal(8)
    np.testing.assert_array_equal(enc.encode(v), enc.encode(c * v))


def test_lsh_hamming_tracks_angle():
    # expected fraction of differing bits is angle / pi
    enc = LshEncoder.create(2, 20000, seed=3)
    a, b = np.array([1.0, 0.0]), np.array([math.cos(1.0), math.sin(1.0)])
    frac = hamming_oracle(enc.encode(a), enc.encode(b)) / 20000
    assert frac == pytest.approx(1.0 / math.pi, abs=0.015)


def test_embeddings_roundtrip(tmp_path):
    e = np.random.default_rng(0).standard_normal((5, 3)).astype(np.float32)
    save_embeddings(tmp_path / "e.bin", e)
    np.testing.assert_array_equal(load_embeddings(tmp_path / "e.bin"), e)
    np.savetxt(tmp_path / "e.txt", e)
    np.testing.assert_allclose(load_embeddings(tmp_path / "e.txt"), e, rtol=1e-6)


def test_recsys_full_radius_equals_full_ranking():
    items, q, gt, uni = synthetic_recsys(2000, 16, 10, 200, seed=1)
    r = recsys_eval(items, q, gt, uni, radius=128)
    assert r.hits == r.hits_full
    assert all(r.top_identical)
    assert r.dpr_reduction == pytest.approx(1.0)


def test_recsys_pool_containing_top_k_agrees():
    items, q, gt, uni = synthetic_recsys(2000, 16, 20, 200, seed=2)
    r = recsys_eval(items, q, gt, uni, radius=30)
    for c, s in zip(r.top_contained, r.top_identical):
        if c:
            assert s
    assert r.dpr_reduction * r.mean_pool_size == pytest.approx(r.universe_size)
    assert r.mean_pool_size < r.universe_size
