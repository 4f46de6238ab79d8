import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mmseeker.core import (EMPTY_QUERY, FusionWeights, InvalidSequenceError, MultiModalRecord,
                           SequenceStore, TopKResult, channel_name, derive_gamma, select_topk,
                           validate_sequence)

from oracles import full_sort_topk


def _records(rng, L=5, M=4, d=8):
    return [MultiModalRecord(p, rng.normal(size=(M, d)), query_id=p, item_id=p)
            for p in range(1, L + 1)]


class TestDeriveGamma:
    def test_half_lambda_equal_items(self):
        fw = derive_gamma(0.5, [1 / 3, 1 / 3, 1 / 3])
        np.testing.assert_allclose(fw.gamma, [0.5, 1 / 6, 1 / 6, 1 / 6], atol=1e-12)

    def test_query_only(self):
        np.testing.assert_allclose(derive_gamma(1.0, [0.2, 0.3, 0.5]).gamma, [1, 0, 0, 0])

    def test_item_only(self):
        np.testing.assert_allclose(derive_gamma(0.0, [0.2, 0.3, 0.5]).gamma, [0, 0.2, 0.3, 0.5])

    @pytest.mark.parametrize("lam,w", [(0.5, [-0.1, 0.6, 0.5]), (0.5, [0.5, 0.5, 0.1]),
                                       (1.5, [0.5, 0.5]), (-0.1, [1.0])])
    def test_rejects(self, lam, w):
        with pytest.raises(ValueError):
            derive_gamma(lam, w)

    def test_sum_tolerance(self):
        derive_gamma(0.5, [0.5, 0.5 + 5e-7])
        with pytest.raises(ValueError):
            derive_gamma(0.5, [0.5, 0.5 + 2e-6])

    @given(st.floats(0, 1), st.lists(st.floats(0, 10), min_size=1, max_size=6))
    def test_gamma_is_a_distribution(self, lam, raw):
        total = sum(raw)
        if total <= 1e-3:
            return
        fw = derive_gamma(lam, [x / total for x in raw])
        assert abs(fw.gamma.sum() - 1.0) <= 1e-9
        assert np.all(fw.gamma >= 0)
        assert fw.gamma[0] == lam

    def test_from_gamma_round_trip(self):
        fw = FusionWeights.from_gamma([0.1, 0.2, 0.3, 0.4])
        np.testing.assert_allclose(fw.gamma, [0.1, 0.2, 0.3, 0.4], atol=1e-12)
        assert fw.lam == 0.1

    def test_from_gamma_rejects_bad_sum(self):
        with pytest.raises(ValueError):
            FusionWeights.from_gamma([0.5, 0.6])


class TestValidate:
    def test_well_formed(self, rng):
        assert validate_sequence(_records(rng)) == []

    def test_dimension_mismatch(self, rng):
        recs = _records(rng, d=64)
        bad = [np.zeros(64)] * 3 + [np.zeros(63)]
        recs[2] = MultiModalRecord(3, bad, 3, 3)
        v = validate_sequence(recs)
        assert [x.kind for x in v] == ["dimension-mismatch"]
        assert v[0].position == 3

    def test_non_finite(self, rng):
        recs = _records(rng)
        arr = recs[1].as_array().copy()
        arr[2, 3] = np.nan
        recs[1] = MultiModalRecord(2, arr, 2, 2)
        assert [x.kind for x in validate_sequence(recs)] == ["non-finite"]

    def test_duplicate_and_order(self, rng):
        recs = _records(rng)
        recs[3] = MultiModalRecord(2, recs[3].vectors, 4, 4)
        assert [x.kind for x in validate_sequence(recs)] == ["duplicate-position"]
        recs = _records(rng)
        recs[1], recs[2] = recs[2], recs[1]
        assert [x.kind for x in validate_sequence(recs)] == ["order"]

    def test_padding_must_be_zero(self, rng):
        items = rng.normal(size=(3, 8))
        ok = MultiModalRecord.padded(1, items)
        assert ok.is_padded and ok.query_id is EMPTY_QUERY
        assert not np.any(ok.as_array()[0])
        assert validate_sequence([ok]) == []
        bad = MultiModalRecord(1, rng.normal(size=(4, 8)), EMPTY_QUERY, None)
        assert [x.kind for x in validate_sequence([bad])] == ["padding"]

    def test_empty(self):
        assert [x.kind for x in validate_sequence([])] == ["empty"]

    def test_from_records_raises(self, rng):
        recs = _records(rng)
        recs[0] = MultiModalRecord(1, np.full((4, 8), np.inf), 1, 1)
        with pytest.raises(InvalidSequenceError) as exc:
            SequenceStore.from_records(recs)
        assert exc.value.violations[0].kind == "non-finite"


class TestStore:
    def test_round_trip(self, rng):
        recs = _records(rng)
        store = SequenceStore.from_records(recs)
        assert (store.length, store.num_channels, store.dim) == (5, 4, 8)
        assert [r.position for r in store] == [1, 2, 3, 4, 5]
        np.testing.assert_allclose(store[2].as_array(), recs[2].as_array(), rtol=1e-6)
        assert store[4].query_id == 5

    def test_immutable(self, small_store):
        with pytest.raises(ValueError):
            small_store.vectors[0, 0, 0] = 1.0
        with pytest.raises(ValueError):
            small_store.channel(1)[0, 0] = 1.0

    def test_positions_must_start_at_one(self, rng):
        recs = [MultiModalRecord(p + 2, r.vectors, p, p) for p, r in enumerate(_records(rng))]
        with pytest.raises(InvalidSequenceError):
            SequenceStore.from_records(recs)

    def test_channel_names(self):
        assert channel_name(0, 4) == "query"
        assert channel_name(2, 4) == "image"
        assert channel_name(2, 3) == "item2"
        with pytest.raises(ValueError):
            channel_name(4, 4)


class TestTopK:
    @given(arrays(np.float64, st.integers(1, 60), elements=st.integers(-3, 3).map(float)),
           st.integers(1, 60))
    def test_matches_full_sort_with_ties(self, scores, k):
        k = min(k, scores.size)
        res = TopKResult.from_scores(scores, k, "t")
        assert res.positions.tolist() == full_sort_topk(scores.tolist(), k)
        assert np.all(np.diff(res.scores) <= 0)
        assert len(set(res.positions.tolist())) == len(res)

    @given(arrays(np.float64, st.integers(1, 40), elements=st.integers(0, 4).map(float)))
    def test_smallest(self, scores):
        k = max(1, scores.size // 2)
        sel = select_topk(scores, k, largest=False) + 1
        assert sel.tolist() == full_sort_topk(scores.tolist(), k, largest=False)

    def test_all_equal_gives_first_positions(self):
        res = TopKResult.from_scores(np.zeros(10), 5, "t")
        assert res.positions.tolist() == [1, 2, 3, 4, 5]
        assert res.entries[0] == (1, 0.0)

    def test_short_flag(self):
        res = TopKResult.from_scores(np.arange(3.0), 5, "t")
        assert res.short and len(res) == 3
