"""Greedy channel filtering: distances, scores, traces, aggregation."""

import numpy as np
import pytest
import yaml
from sklearn.base import clone

from vprfilter import (
    CalibConfig,
    CalibrationTriplet,
    FeatureMapFilter,
    aggregate,
    build_triplets,
    greedy_filter,
    l2_distance,
    load_filter_result,
    removal_scores,
    run_calibration,
    save_filter_result,
)
from vprfilter.pooling import PooledMatrix, flatten

from conftest import random_pooled, random_triplet


def worked_triplet():
    """Two single-slot channels: q=[1,0], r=[1,1], n=[0,1]."""
    return CalibrationTriplet(
        query=PooledMatrix(np.array([[1.0], [0.0]])),
        reference=PooledMatrix(np.array([[1.0], [1.0]])),
        negative=PooledMatrix(np.array([[0.0], [1.0]])),
    )


class TestL2Distance:
    def test_worked_example(self):
        a = PooledMatrix(np.array([[1.0], [0.0]]))
        b = PooledMatrix(np.array([[1.0], [1.0]]))
        assert l2_distance(a, b, [0, 1]) == 1.0
        assert l2_distance(a, b, [1]) == 1.0
        assert l2_distance(a, b, [0]) == 0.0

    def test_matches_flattened_norm(self, rng):
        a, b = random_pooled(rng, 8), random_pooled(rng, 8)
        kept = [0, 3, 5]
        expected = np.linalg.norm(flatten(a, kept) - flatten(b, kept))
        assert l2_distance(a, b, kept) == pytest.approx(expected, rel=1e-12)

    def test_zero_on_identical(self, rng):
        a = random_pooled(rng, 4)
        assert l2_distance(a, a, range(4)) == 0.0

    def test_grid_mismatch_rejected(self, rng):
        with pytest.raises(ValueError):
            l2_distance(random_pooled(rng, 4), random_pooled(rng, 5), [0])


class TestRemovalScores:
    def test_worked_example(self):
        scores = removal_scores(worked_triplet(), [0, 1])
        assert scores.tolist() == [-1.0, 1.0]

    def test_alignment_with_ascending_kept(self, rng):
        triplet = random_triplet(rng, 6)
        kept = [5, 1, 3]
        scores = removal_scores(triplet, kept)
        for pos, channel in enumerate(sorted(kept)):
            sub = [c for c in sorted(kept) if c != channel]
            expected = l2_distance(triplet.reference, triplet.negative, sub) - l2_distance(
                triplet.query, triplet.reference, sub
            )
            assert scores[pos] == pytest.approx(expected, rel=1e-9, abs=1e-12)

    def test_needs_two_channels(self, rng):
        with pytest.raises(ValueError):
            removal_scores(random_triplet(rng, 4), [2])


class TestGreedyFilter:
    def test_worked_example(self):
        outcome = greedy_filter(worked_triplet(), CalibConfig())
        assert outcome.removed == [1]
        assert outcome.objective_trace == [0.0, 1.0]
        assert outcome.separated_at_stop

    def test_huge_cutoff_removes_nothing(self, rng):
        triplet = random_triplet(rng, 8)
        outcome = greedy_filter(triplet, CalibConfig(gradient_cutoff=1e9))
        assert outcome.removed == []
        assert len(outcome.objective_trace) == 1

    def test_zero_cutoff_keeps_at_least_one_channel(self, rng):
        for _ in range(10):
            triplet = random_triplet(rng, 6)
            outcome = greedy_filter(triplet, CalibConfig(gradient_cutoff=0.0))
            assert len(outcome.removed) <= 5
            assert len(set(outcome.removed)) == len(outcome.removed)

    def test_trace_increments_meet_cutoff(self, rng):
        cutoff = 0.05
        for _ in range(10):
            triplet = random_triplet(rng, 12)
            outcome = greedy_filter(triplet, CalibConfig(gradient_cutoff=cutoff))
            trace = outcome.objective_trace
            assert len(trace) == len(outcome.removed) + 1
            for prev, cur in zip(trace, trace[1:]):
                assert cur - prev >= cutoff

    def test_tie_breaks_to_lowest_channel(self):
        # channels 0 and 1 are exact mirrors, so their removal scores tie
        triplet = CalibrationTriplet(
            query=PooledMatrix(np.array([[1.0], [1.0], [0.0]])),
            reference=PooledMatrix(np.array([[0.0], [0.0], [0.0]])),
            negative=PooledMatrix(np.array([[0.0], [0.0], [2.0]])),
        )
        outcome = greedy_filter(triplet, CalibConfig(gradient_cutoff=0.0))
        assert outcome.removed[0] == 0

    def test_recorded_distances_match_direct_evaluation(self, rng):
        triplet = random_triplet(rng, 8)
        outcome = greedy_filter(
            triplet, CalibConfig(gradient_cutoff=0.0), record_distances=True
        )
        assert outcome.iteration_distances is not None
        for kept, dist_rn, dist_qr in outcome.iteration_distances:
            for pos, channel in enumerate(kept):
                sub = [int(c) for c in kept if c != channel]
                assert dist_rn[pos] == pytest.approx(
                    l2_distance(triplet.reference, triplet.negative, sub), rel=1e-9
                )
                assert dist_qr[pos] == pytest.approx(
                    l2_distance(triplet.query, triplet.reference, sub), rel=1e-9
                )

    def test_single_slot_descriptors_supported(self, rng):
        triplet = random_triplet(rng, 6, slots=1)
        outcome = greedy_filter(triplet, CalibConfig())
        assert len(outcome.removed) < 6

    def test_too_few_channels_rejected(self, rng):
        with pytest.raises(ValueError):
            greedy_filter(random_triplet(rng, 1), CalibConfig())


class TestAggregate:
    def test_worked_example(self):
        result = aggregate([[0, 1], [1], [1, 2]], channels=4)
        assert result.removal_counts.tolist() == [1, 3, 1, 0]
        assert result.kept_count == 3
        assert result.kept_set.tolist() == [0, 2, 3]

    def test_kept_size_is_best_survivor_count(self):
        result = aggregate([[0, 1, 2], []], channels=4)
        assert result.kept_count == 4
        assert result.kept_set.tolist() == [0, 1, 2, 3]

    def test_count_ties_break_to_lower_index(self):
        # every channel removed once; K = 2 -> channels 0 and 1 survive
        result = aggregate([[0, 1], [2, 3]], channels=4)
        assert result.kept_set.tolist() == [0, 1]

    def test_triplet_order_does_not_matter(self, rng):
        lists = [[0, 1], [1], [1, 2], [3]]
        base = aggregate(lists, channels=5)
        for _ in range(5):
            perm = [lists[i] for i in rng.permutation(len(lists))]
            shuffled = aggregate(perm, channels=5)
            assert np.array_equal(shuffled.kept_set, base.kept_set)
            assert np.array_equal(shuffled.removal_counts, base.removal_counts)

    def test_rejects_duplicates_in_one_list(self):
        with pytest.raises(ValueError):
            aggregate([[1, 1]], channels=3)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            aggregate([[3]], channels=3)

    def test_rejects_full_removal(self):
        with pytest.raises(ValueError):
            aggregate([[0, 1, 2]], channels=3)

    def test_rejects_empty_input(self):
        with pytest.raises(ValueError):
            aggregate([], channels=3)


class TestBuildTriplets:
    def _pools(self, rng, n, channels=4):
        return [random_pooled(rng, channels) for _ in range(n)]

    def test_deterministic_for_fixed_seed(self, rng):
        refs = self._pools(rng, 60)
        queries = self._pools(rng, 10)
        corr = list(range(10))
        config = CalibConfig(num_calibration_images=10, rng_seed=7)
        first = build_triplets(queries, refs, corr, config)
        second = build_triplets(queries, refs, corr, config)
        for a, b in zip(first, second):
            assert a.negative is b.negative

    def test_negative_respects_exclusion_band(self, rng):
        refs = self._pools(rng, 80)
        queries = self._pools(rng, 30)
        corr = list(range(20, 50))
        config = CalibConfig(
            num_calibration_images=30, rng_seed=3, negative_exclusion_radius=15
        )
        triplets = build_triplets(queries, refs, corr, config)
        by_identity = {id(r): i for i, r in enumerate(refs)}
        for t, true_index in zip(triplets, corr):
            negative_index = by_identity[id(t.negative)]
            assert abs(negative_index - true_index) > 15

    def test_uses_at_most_configured_count(self, rng):
        refs = self._pools(rng, 60)
        queries = self._pools(rng, 20)
        config = CalibConfig(num_calibration_images=5)
        triplets = build_triplets(queries, refs, list(range(20)), config)
        assert len(triplets) == 5

    def test_errors_when_band_swallows_references(self, rng):
        refs = self._pools(rng, 10)
        queries = self._pools(rng, 1)
        config = CalibConfig(num_calibration_images=1, negative_exclusion_radius=20)
        with pytest.raises(ValueError):
            build_triplets(queries, refs, [5], config)

    def test_errors_on_short_correspondences(self, rng):
        refs = self._pools(rng, 60)
        queries = self._pools(rng, 5)
        config = CalibConfig(num_calibration_images=5)
        with pytest.raises(ValueError):
            build_triplets(queries, refs, [0, 1], config)

    def test_errors_on_out_of_range_correspondence(self, rng):
        refs = self._pools(rng, 30)
        queries = self._pools(rng, 1)
        config = CalibConfig(num_calibration_images=1)
        with pytest.raises(ValueError):
            build_triplets(queries, refs, [99], config)


class TestCalibrationRoundtrip:
    def test_run_calibration_joins_greedy_and_aggregate(self, rng):
        triplets = [random_triplet(rng, 8) for _ in range(5)]
        config = CalibConfig()
        result, outcomes = run_calibration(triplets, config)
        assert len(outcomes) == 5
        expected = aggregate([o.removed for o in outcomes], channels=8)
        assert np.array_equal(result.kept_set, expected.kept_set)

    def test_save_load_roundtrip(self, tmp_path, rng):
        triplets = [random_triplet(rng, 8) for _ in range(4)]
        config = CalibConfig(rng_seed=11)
        result, _ = run_calibration(triplets, config)
        path = tmp_path / "filter.yaml"
        save_filter_result(result, path, layer_name="conv3", config=config)
        back = load_filter_result(path)
        assert np.array_equal(back.kept_set, result.kept_set)
        assert np.array_equal(back.removal_counts, result.removal_counts)
        assert back.per_image_removed == result.per_image_removed
        doc = yaml.safe_load(path.read_text())
        assert doc["layer_name"] == "conv3"
        assert doc["config"]["rng_seed"] == 11

    def test_load_rejects_inconsistent_kept_count(self, tmp_path):
        doc = {"kept_set": [0, 1], "kept_count": 3, "removal_counts": [0, 0, 1]}
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump(doc))
        with pytest.raises(ValueError):
            load_filter_result(path)

    def test_load_rejects_non_filter_document(self, tmp_path):
        path = tmp_path / "junk.yaml"
        path.write_text(yaml.safe_dump({"foo": 1}))
        with pytest.raises(ValueError):
            load_filter_result(path)


class TestFeatureMapFilter:
    def test_fit_sets_attributes(self, rng):
        triplets = [random_triplet(rng, 8) for _ in range(6)]
        est = FeatureMapFilter().fit(triplets)
        assert est.n_channels_ == 8
        assert 1 <= est.kept_set_.size <= 8
        assert est.removal_counts_.size == 8
        assert len(est.outcomes_) == 6

    def test_fit_respects_calibration_budget(self, rng):
        triplets = [random_triplet(rng, 8) for _ in range(6)]
        est = FeatureMapFilter(num_calibration_images=3).fit(triplets)
        assert len(est.outcomes_) == 3

    def test_transform_selects_kept_channels(self, rng):
        triplets = [random_triplet(rng, 8) for _ in range(4)]
        est = FeatureMapFilter().fit(triplets)
        pooled = random_pooled(rng, 8)
        out = est.transform([pooled, pooled])
        assert out.shape == (2, est.kept_set_.size * 5)
        assert np.array_equal(out[0], flatten(pooled, est.kept_set_))

    def test_transform_before_fit_rejected(self, rng):
        with pytest.raises(ValueError):
            FeatureMapFilter().transform([random_pooled(rng, 4)])

    def test_fit_traverse_equals_manual_pipeline(self, rng):
        refs = [random_pooled(rng, 6) for _ in range(50)]
        queries = [random_pooled(rng, 6) for _ in range(8)]
        corr = list(range(8))
        est = FeatureMapFilter(num_calibration_images=8, random_state=5)
        est.fit_traverse(queries, refs, corr)
        config = CalibConfig(num_calibration_images=8, rng_seed=5)
        triplets = build_triplets(queries, refs, corr, config)
        result, _ = run_calibration(triplets, config)
        assert np.array_equal(est.kept_set_, result.kept_set)

    def test_get_params_roundtrip_and_clone(self):
        est = FeatureMapFilter(gradient_cutoff=0.2, random_state=9)
        params = est.get_params()
        assert params["gradient_cutoff"] == 0.2
        assert params["random_state"] == 9
        cloned = clone(est)
        assert cloned.get_params() == params
