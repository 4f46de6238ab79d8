import numpy as np
import pytest

from mmseeker.cascade import ChannelIndex, LSHIndex, build_indexes, cascade_topk, lsh_topk
from mmseeker.core import FusionWeights, SequenceStore
from mmseeker.exact import exact_topk, fuse
from mmseeker.graph import GraphIndex, build_graph_index
from mmseeker.synth import SynthConfig, generate, generate_target

from oracles import full_sort_topk, hamming_bits


def _recall(a, b, k):
    return len(set(a.positions[:k].tolist()) & set(b.positions[:k].tolist())) / k


class TestCascade:
    def test_single_channel_is_exact(self, rng):
        store = SequenceStore(rng.normal(size=(200, 1, 8)).astype(np.float32))
        fw = FusionWeights(1.0, (), np.array([1.0]))
        t = rng.normal(size=(1, 8))
        res = cascade_topk(build_indexes(store), store, t, fw, 15)
        assert res.positions.tolist() == exact_topk(store, t, fw, 15).positions.tolist()

    def test_full_stage1_is_exact(self, rng, small_store, equal_fw):
        idx = build_indexes(small_store)
        for _ in range(5):
            t = rng.normal(size=(4, 8))
            res = cascade_topk(idx, small_store, t, equal_fw, 10, K_stage1=100)
            assert _recall(res, exact_topk(small_store, t, equal_fw, 10), 10) == 1.0
            assert res.counters["reranks"] == 100

    def test_candidate_bound_and_counters(self, rng, small_store, equal_fw):
        idx = build_indexes(small_store)
        for k1 in (3, 5, 10):
            res = cascade_topk(idx, small_store, rng.normal(size=(4, 8)), equal_fw, 3, K_stage1=k1)
            assert res.counters["probes"] == 16
            assert k1 <= res.counters["reranks"] <= 16 * k1
            assert res.method_tag == "cascade_flat"

    def test_candidates_match_direct_count(self, rng, small_store, equal_fw):
        t = rng.normal(size=(4, 8))
        union = set()
        for i in range(4):
            for j in range(4):
                s = small_store.vectors[:, j, :].astype(np.float64) @ t[i]
                union.update(full_sort_topk(s.tolist(), 7))
        res = cascade_topk(build_indexes(small_store), small_store, t, equal_fw, 7)
        assert res.counters["reranks"] == len(union)

    def test_recall_non_decreasing_in_stage1(self, rng, equal_fw):
        store = SequenceStore(rng.normal(1.0, 1.0, size=(500, 4, 16)).astype(np.float32))
        idx = build_indexes(store)
        for _ in range(3):
            t = rng.normal(1.0, 1.0, size=(4, 16))
            gt = exact_topk(store, t, equal_fw, 20)
            rec = [_recall(cascade_topk(idx, store, t, equal_fw, 20, k1), gt, 20)
                   for k1 in (20, 40, 80, 160, 500)]
            assert all(b >= a for a, b in zip(rec, rec[1:]))
            assert rec[-1] == 1.0

    def test_short_result_flagged(self, rng, small_store, equal_fw):
        class Tiny(ChannelIndex):
            def search(self, query, k):
                return np.array([0, 1])
        idx = [Tiny(m, small_store.channel(m)) for m in range(4)]
        res = cascade_topk(idx, small_store, rng.normal(size=(4, 8)), equal_fw, 5)
        assert res.short and len(res) == 2

    def test_errors(self, small_store, equal_fw):
        idx = build_indexes(small_store)
        with pytest.raises(ValueError):
            cascade_topk(idx, small_store, np.zeros((4, 8)), equal_fw, 10, K_stage1=5)
        with pytest.raises(ValueError):
            cascade_topk(idx[:3], small_store, np.zeros((4, 8)), equal_fw, 10)
        with pytest.raises(ValueError):
            ChannelIndex.build(small_store, 0, kind="tree")


class TestLSH:
    def test_identical_key_first(self, rng, small_store, equal_fw):
        idx = LSHIndex.build(small_store, equal_fw, 128, seed=0)
        res = lsh_topk(idx, small_store, small_store.vectors[41], equal_fw, 5)
        assert res.positions[0] == 42 and res.scores[0] == 0.0

    def test_matches_brute_force_hamming(self, rng, small_store, equal_fw):
        idx = LSHIndex.build(small_store, equal_fw, 256, seed=2)
        t = rng.normal(size=(4, 8))
        tb = idx.hasher.bits(fuse(t, equal_fw))
        ham = [hamming_bits(tb, idx.hasher.bits(fuse(small_store.vectors[l], equal_fw)))
               for l in range(100)]
        res = lsh_topk(idx, small_store, t, equal_fw, 20)
        assert res.positions.tolist() == full_sort_topk(ham, 20, largest=False)

    def test_recall_between_random_and_perfect(self, equal_fw):
        recalls = []
        for seed in range(5):
            rng = np.random.default_rng(seed)
            store = SequenceStore(rng.normal(size=(100, 4, 8)).astype(np.float32))
            idx = LSHIndex.build(store, equal_fw, 256, seed=seed)
            for _ in range(10):
                t = rng.normal(size=(4, 8))
                recalls.append(_recall(lsh_topk(idx, store, t, equal_fw, 10),
                                       exact_topk(store, t, equal_fw, 10), 10))
        assert 10 / 100 < np.mean(recalls) < 1.0

    def test_scale_invariant(self, rng, small_store, equal_fw):
        t = rng.normal(size=(4, 8))
        a = lsh_topk(LSHIndex.build(small_store, equal_fw, 64, 1), small_store, t, equal_fw, 10)
        big = SequenceStore(small_store.vectors * 4.0)
        b = lsh_topk(LSHIndex.build(big, equal_fw, 64, 1), big, 2.0 * t, equal_fw, 10)
        assert a.positions.tolist() == b.positions.tolist()

    def test_weights_must_match(self, small_store, equal_fw):
        idx = LSHIndex.build(small_store, equal_fw, 64)
        with pytest.raises(ValueError):
            lsh_topk(idx, small_store, np.zeros((4, 8)), FusionWeights.from_gamma([.1, .2, .3, .4]), 5)


class TestGraph:
    def test_exhaustive_limit(self, rng):
        x = rng.normal(size=(300, 8))
        g = build_graph_index(x, max_neighbors=4, ef_construction=20, seed=0)
        flat = ChannelIndex(0, x)
        for q in rng.normal(size=(10, 8)):
            ids, _ = g.search(q, 25, ef_search=300)
            assert ids.tolist() == flat.search(q, 25).tolist()

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_recall_at_64(self, seed):
        cfg = SynthConfig.preset("different", L=2000, seed=seed, trials=10)
        store = generate(cfg)
        targets = [generate_target(cfg, t).as_array() for t in range(10)]
        for ch in range(4):
            flat = ChannelIndex.build(store, ch)
            g = ChannelIndex.build(store, ch, kind="graph", seed=seed)
            recalls = [len(set(g.search(t[i], 64).tolist()) & set(flat.search(t[i], 64).tolist())) / 64
                       for t in targets for i in range(4)]
            assert np.mean(recalls) >= 0.9, (ch, np.mean(recalls))

    def test_single_vector(self):
        g = GraphIndex(np.ones((1, 3)))
        ids, sims = g.search(np.array([-1.0, 0, 2]), 5)
        assert ids.tolist() == [0] and sims[0] == pytest.approx(1.0)

    def test_no_duplicates_and_size(self, rng):
        g = GraphIndex(rng.normal(size=(50, 4)), max_neighbors=3, ef_construction=10, ef_search=8)
        for k in (1, 10, 50, 80):
            ids, _ = g.search(rng.normal(size=4), k)
            assert len(ids) == min(k, 50) and len(set(ids.tolist())) == len(ids)

    def test_every_node_reachable(self, rng):
        g = GraphIndex(rng.normal(size=(400, 6)), max_neighbors=4, ef_construction=16)
        ids = g.candidates(rng.normal(size=6), ef=400)
        assert sorted(ids.tolist()) == list(range(400))

    def test_numba_and_python_builds_agree(self, rng):
        x = rng.normal(size=(150, 5))
        a = GraphIndex(x, 4, 20, seed=3, use_numba=True)
        b = GraphIndex(x, 4, 20, seed=3, use_numba=False)
        np.testing.assert_array_equal(a.counts, b.counts)
        np.testing.assert_array_equal(a.neighbors, b.neighbors)
        q = rng.normal(size=5)
        assert a.search(q, 10)[0].tolist() == b.search(q, 10)[0].tolist()

    def test_errors(self):
        with pytest.raises(ValueError):
            GraphIndex(np.zeros((0, 3)))
        with pytest.raises(ValueError):
            GraphIndex(np.full((3, 2), np.nan))
