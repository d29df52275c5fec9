"""Compensated sums and mergeable accumulators."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import opekit as ok
from opekit.accumulators import CompensatedSum, StreamAccumulator, merge_accumulators

floats = st.floats(-1e9, 1e9, allow_nan=False)


class TestCompensatedSum:
    def test_matches_fsum_on_ill_conditioned_input(self):
        values = [1e16, 1.0, -1e16, 1.0] * 50
        acc = CompensatedSum()
        for v in values:
            acc.add(v)
        assert acc.value == math.fsum(values)

    def test_batch_adds_track_fsum_closely(self):
        rng = np.random.default_rng(3)
        chunks = [rng.normal(scale=10.0 ** rng.integers(0, 8), size=257) for _ in range(40)]
        acc = CompensatedSum()
        for chunk in chunks:
            acc.add_many(chunk)
        exact = math.fsum(float(v) for chunk in chunks for v in chunk)
        assert acc.value == pytest.approx(exact, rel=1e-12, abs=1e-9)

    @given(a=st.lists(floats, max_size=50), b=st.lists(floats, max_size=50))
    def test_merge_equals_concatenation(self, a, b):
        left, right, united = CompensatedSum(), CompensatedSum(), CompensatedSum()
        for v in a:
            left.add(v)
            united.add(v)
        for v in b:
            right.add(v)
            united.add(v)
        left.merge(right)
        assert left.value == pytest.approx(united.value, rel=1e-12, abs=1e-6)


def _fold(values, weights, key="k"):
    acc = StreamAccumulator(config_key=key)
    acc.add_batch(np.asarray(values, dtype=float), np.asarray(weights, dtype=float))
    return acc


class TestStreamAccumulator:
    def test_empty_is_merge_identity(self):
        acc = _fold([1.0, 2.0, 4.0], [1.0, 0.5, 2.0])
        merged = merge_accumulators(acc, StreamAccumulator(config_key="k"))
        assert merged.count == acc.count
        assert merged.sum_terms.value == acc.sum_terms.value
        assert merged.effective_sample_size() == acc.effective_sample_size()

    def test_merge_commutes(self):
        rng = np.random.default_rng(11)
        a = _fold(rng.normal(size=100), rng.uniform(0.1, 5.0, 100))
        b = _fold(rng.normal(size=57), rng.uniform(0.1, 5.0, 57))
        ab, ba = merge_accumulators(a, b), merge_accumulators(b, a)
        assert ab.count == ba.count
        assert ab.sum_terms.value == pytest.approx(ba.sum_terms.value, rel=1e-12)
        assert ab.sum_weight_sq.value == pytest.approx(ba.sum_weight_sq.value, rel=1e-12)

    def test_merge_associative_within_tolerance(self):
        rng = np.random.default_rng(12)
        parts = [_fold(rng.normal(size=40), rng.uniform(0.1, 3.0, 40)) for _ in range(3)]
        left = merge_accumulators(merge_accumulators(parts[0], parts[1]), parts[2])
        right = merge_accumulators(parts[0], merge_accumulators(parts[1], parts[2]))
        assert left.count == right.count
        assert left.sum_terms.value == pytest.approx(right.sum_terms.value, rel=1e-9)

    def test_counts_add_exactly(self):
        a, b = _fold([1.0], [1.0]), _fold([2.0, 3.0], [1.0, 1.0])
        a.note_skipped(3)
        b.clipped_count += 2
        merged = merge_accumulators(a, b)
        assert merged.count == 3 and merged.skipped_count == 3 and merged.clipped_count == 2

    def test_config_mismatch_rejected(self):
        with pytest.raises(ok.InputError):
            merge_accumulators(_fold([1.0], [1.0], key="a"), _fold([1.0], [1.0], key="b"))

    def test_variance_clamps_at_zero(self):
        acc = _fold([0.3] * 5, [1.0] * 5)
        assert acc.term_variance() >= 0.0

    def test_scalar_and_batch_paths_agree(self):
        values = [0.5, -1.5, 2.25, 8.0]
        weights = [1.0, 2.0, 0.25, 1.5]
        scalar = StreamAccumulator(config_key="k")
        for v, w in zip(values, weights):
            scalar.add(v, w)
        batch = _fold(values, weights)
        assert scalar.count == batch.count
        assert scalar.sum_terms.value == pytest.approx(batch.sum_terms.value, rel=1e-15)
        assert scalar.sum_cross.value == pytest.approx(batch.sum_cross.value, rel=1e-15)
