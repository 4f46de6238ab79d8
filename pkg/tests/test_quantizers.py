import warnings

import numpy as np
import pytest

from mmseeker.core import SequenceStore
from mmseeker.quantizers import (LSHHasher, PQCodebook, _derive_seed, kmeans_plus_plus, lsh_hamming,
                                 lsh_hash, pq_decode, pq_encode, residual_decode, residual_encode,
                                 train_kmeans, train_pq, train_residual)

from oracles import hamming_bits, nearest_index, reference_lloyd


def _store(rng, L=600, d=16, M=2):
    return SequenceStore(rng.normal(size=(L, M, d)).astype(np.float32))


class TestKMeans:
    def test_n_equals_k(self, rng):
        x = rng.normal(size=(12, 3))
        res = train_kmeans(x, 12, seed=1)
        assert res.distortions[-1] == pytest.approx(0.0, abs=1e-12)
        assert len({tuple(np.round(c, 9)) for c in res.centroids}) == 12

    def test_k1_is_mean(self, rng):
        x = rng.normal(size=(200, 5))
        np.testing.assert_allclose(train_kmeans(x, 1).centroids[0], x.mean(axis=0), atol=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_reference_lloyd(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(1000, 8))
        init = kmeans_plus_plus(x, 16, np.random.default_rng(seed))
        res = train_kmeans(x, 16, max_iters=10, init=init, tol=0.0)
        ref, ref_c = reference_lloyd(x, init, res.n_iter)
        np.testing.assert_allclose(res.distortions, ref, rtol=1e-9)
        np.testing.assert_allclose(res.centroids, ref_c, atol=1e-9)
        assert all(b <= a + 1e-12 for a, b in zip(res.distortions, res.distortions[1:]))

    def test_deterministic(self, rng):
        x = rng.normal(size=(300, 4))
        a, b = train_kmeans(x, 8, seed=5), train_kmeans(x, 8, seed=5)
        np.testing.assert_array_equal(a.centroids, b.centroids)

    def test_empty_cluster_reseeded(self):
        x = np.array([[0.0], [0.1], [10.0], [10.1]])
        init = np.array([[0.05], [10.05], [100.0]])
        res = train_kmeans(x, 3, init=init, max_iters=3)
        assert np.bincount(res.labels, minlength=3).min() >= 1
        assert res.distortions[-1] < res.distortions[0]

    def test_errors(self, rng):
        with pytest.raises(ValueError):
            train_kmeans(rng.normal(size=(3, 2)), 4)
        bad = rng.normal(size=(10, 2))
        bad[3, 1] = np.nan
        with pytest.raises(ValueError):
            train_kmeans(bad, 2)
        with pytest.raises(ValueError):
            train_kmeans(rng.normal(size=(10, 2)), 0)


class TestPQ:
    def test_layout(self, rng):
        store = SequenceStore(rng.normal(size=(600, 1, 64)).astype(np.float32))
        cb = train_pq(store, 0, 8, 32, seed=0)
        assert cb.centroids.shape == (8, 32, 8)
        assert (cb.n_subvectors, cb.sub_dim, cb.dim) == (8, 8, 64)

    def test_default_cardinality(self):
        import inspect
        assert inspect.signature(train_pq).parameters["cardinality"].default == 512
        assert inspect.signature(train_pq).parameters["n_subvectors"].default == 8

    def test_exact_cover(self, rng):
        vals = rng.normal(size=(4, 4, 16))  # 4 distinct values per subvector
        pick = rng.integers(4, size=(200, 4))
        x = np.stack([np.concatenate([vals[b, pick[l, b]] for b in range(4)])
                      for l in range(200)], axis=0)
        store = SequenceStore(x[:, None, :].astype(np.float32))
        cb = train_pq(store, 0, 4, 4, seed=3)
        rec = pq_decode(cb, pq_encode(cb, store.channel(0)))
        np.testing.assert_allclose(rec, store.channel(0), atol=1e-5)

    def test_clamps_with_warning(self, rng):
        store = _store(rng, L=20)
        with pytest.warns(RuntimeWarning, match="clamping"):
            cb = train_pq(store, 0, 4, 64)
        assert cb.cardinality == 20

    def test_errors(self, rng):
        store = _store(rng)
        with pytest.raises(ValueError):
            train_pq(store, 0, 5, 8)
        with pytest.raises(ValueError):
            train_pq(store, 3, 4, 8)

    def test_centroid_concatenation(self, rng):
        cb = PQCodebook(0, rng.normal(size=(4, 10, 3)))
        codes = np.array([3, 7, 0, 9])
        v = np.concatenate([cb.centroids[b, c] for b, c in enumerate(codes)])
        assert pq_encode(cb, v).tolist() == codes.tolist()
        np.testing.assert_array_equal(pq_decode(cb, codes), v)

    def test_ties_go_to_lowest_index(self):
        cents = np.zeros((1, 3, 2), dtype=np.float32)
        cents[0, 1] = [1, 0]
        cents[0, 2] = [-1, 0]
        cb = PQCodebook(0, cents)
        assert pq_encode(cb, np.array([0.0, 0.0]))[0] == 0
        cb2 = PQCodebook(0, cents[:, 1:])
        assert pq_encode(cb2, np.array([0.0, 5.0]))[0] == 0

    def test_cluster_radius_bound(self, rng):
        store = _store(rng, L=500, d=8, M=1)
        cb = train_pq(store, 0, 2, 16, seed=1)
        x = store.channel(0).astype(np.float64)
        sub = cb.sub_dim
        # brute-force cluster membership and radii per subvector
        radius = np.zeros((2, 16))
        for b in range(2):
            for p in x[:, b * sub:(b + 1) * sub]:
                c = nearest_index(p, cb.centroids[b].astype(np.float64))
                radius[b, c] = max(radius[b, c], np.linalg.norm(p - cb.centroids[b, c]))
        for p in x[rng.choice(500, 40, replace=False)]:
            codes = pq_encode(cb, p)
            err = p - pq_decode(cb, codes)
            for b in range(2):
                e = np.linalg.norm(err[b * sub:(b + 1) * sub])
                assert e <= radius[b].max() + 1e-6
                assert e <= radius[b, codes[b]] + 1e-6

    def test_idempotent(self, rng):
        store = _store(rng)
        cb = train_pq(store, 1, 4, 16)
        c1 = pq_encode(cb, store.channel(1))
        c2 = pq_encode(cb, pq_decode(cb, c1))
        np.testing.assert_array_equal(c1, c2)

    def test_decode_rejects_bad_codes(self, rng):
        cb = PQCodebook(0, rng.normal(size=(2, 4, 3)))
        with pytest.raises(ValueError):
            pq_decode(cb, [0, 4])
        with pytest.raises(ValueError):
            pq_decode(cb, [0, 1, 2])
        with pytest.raises(ValueError):
            pq_encode(cb, np.zeros(5))

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_rms_falls_when_cardinality_doubles(self, seed):
        store = _store(np.random.default_rng(seed), L=2000, d=16, M=1)
        x = store.channel(0)
        rms = []
        for card in (8, 16, 32, 64):
            cb = train_pq(store, 0, 4, card, seed=seed)
            rms.append(np.sqrt(((pq_decode(cb, pq_encode(cb, x)) - x) ** 2).sum(axis=1).mean()))
        assert all(b < a for a, b in zip(rms, rms[1:]))


class TestResidual:
    def test_one_stage_is_kmeans(self, rng):
        store = _store(rng, L=400, d=8, M=1)
        rq = train_residual(store, 0, stages=1, cardinality=16, seed=4)
        km = train_kmeans(store.channel(0), 16, seed=_derive_seed(4, 0, 1000))
        np.testing.assert_allclose(rq.centroids[0], km.centroids, atol=1e-6)
        codes = residual_encode(rq, store.channel(0))
        ref = [nearest_index(p, km.centroids) for p in store.channel(0)[:50].astype(np.float64)]
        assert codes[:50, 0].tolist() == ref

    def test_rms_non_increasing(self, rng):
        store = _store(rng, L=1000, d=16, M=1)
        rq = train_residual(store, 0, stages=4, cardinality=32, seed=0)
        x = store.channel(0).astype(np.float64)
        codes = residual_encode(rq, x)
        rms = [np.sqrt(((residual_decode(rq, codes[:, :s]) - x) ** 2).sum(axis=1).mean())
               for s in range(1, 5)]
        assert all(b <= a + 1e-9 for a, b in zip(rms, rms[1:]))
        assert rms[-1] < rms[0]

    def test_exact_first_stage(self, rng):
        store = _store(rng, L=300, d=8, M=1)
        rq = train_residual(store, 0, stages=3, cardinality=8, seed=0)
        v = rq.centroids[0, 5].astype(np.float64)
        codes = residual_encode(rq, v)
        assert codes[0] == 5
        # the residual after stage 0 is exactly zero: stage 1 picks the smallest centroid
        c1 = rq.centroids[1].astype(np.float64)
        assert codes[1] == nearest_index(np.zeros(8), c1)
        assert codes[2] == nearest_index(-c1[codes[1]], rq.centroids[2].astype(np.float64))
        np.testing.assert_allclose(residual_decode(rq, codes[:1]), v, atol=1e-6)

    def test_errors(self, rng):
        with pytest.raises(ValueError):
            train_residual(_store(rng), 0, stages=0)


class TestLSH:
    def test_identical(self, rng):
        h = LSHHasher.create(16, 128, seed=0)
        v = rng.normal(size=16)
        assert lsh_hamming(lsh_hash(h, v), lsh_hash(h, v)) == 0

    def test_negation_flips_all(self, rng):
        h = LSHHasher.create(16, 200, seed=0)
        v = rng.normal(size=16)
        assert lsh_hamming(lsh_hash(h, v), lsh_hash(h, -v)) == 200
        assert lsh_hamming(h.pack(v)[0], h.pack(-v)[0]) == 200

    def test_collision_rate_tracks_angle(self):
        theta = np.pi / 3
        a = np.zeros(32)
        b = np.zeros(32)
        a[0] = 1.0
        b[0], b[1] = np.cos(theta), np.sin(theta)
        h = LSHHasher.create(32, 1024, seed=7)
        agree = 1 - lsh_hamming(lsh_hash(h, a), lsh_hash(h, b)) / 1024
        assert abs(agree - 2 / 3) <= 0.05

    def test_pack_matches_bits(self, rng):
        h = LSHHasher.create(8, 130, seed=1)
        x, y = rng.normal(size=(2, 8))
        assert lsh_hamming(h.pack(x)[0], h.pack(y)[0]) == hamming_bits(h.bits(x), h.bits(y))
        assert h.pack(x).shape == (1, 3)

    def test_scale_invariant_and_deterministic(self, rng):
        v = rng.normal(size=8)
        h1, h2 = LSHHasher.create(8, 64, seed=3), LSHHasher.create(8, 64, seed=3)
        np.testing.assert_array_equal(h1.bits(v), h2.bits(3.7 * v))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            LSHHasher.create(8, 16).bits(np.zeros(7))
        with pytest.raises(ValueError):
            lsh_hamming(np.zeros(3, bool), np.zeros(4, bool))
