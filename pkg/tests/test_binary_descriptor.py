import numpy as np
import pytest

from hypoquant.domain.entities import ClusterLabel, Clustering, HypoLoadResult
from hypoquant.services.binary_descriptor import (
    ThresholdSelectionError,
    adaptive_threshold_select,
    hypo_load,
    planted_threshold,
    rank_by_hypo_load,
    reference_threshold,
    subregion_counts,
    subregion_features,
    tessellate,
    tessellate_hemispheres,
)

from .conftest import mask_from


def _truth(labels):
    return Clustering(assignment={sid: ClusterLabel(label) for sid, label in labels.items()})


class TestHypoLoad:
    def test_reference_threshold(self):
        assert reference_threshold(100.0, 10.0) == 90.0
        assert planted_threshold(80.0, 100.0) == 30.0

    def test_strict_comparison(self):
        result = hypo_load([1, 2, 3, 2], 2.0, "s")
        assert (result.hypo_count, result.total) == (1, 4)
        assert result.hypo_load == 0.25

    def test_monotone_in_threshold(self):
        values = np.random.default_rng(4).normal(0, 1, size=200)
        loads = [hypo_load(values, t).hypo_load for t in np.linspace(-3, 3, 25)]
        assert all(a <= b for a, b in zip(loads, loads[1:]))

    def test_empty_roi_rejected(self):
        with pytest.raises(ThresholdSelectionError):
            hypo_load([], 0.0, "s")

    def test_ranking_ties_keep_dataset_order(self):
        results = [
            HypoLoadResult(subject_id=sid, threshold=0.0, hypo_count=count, total=4)
            for sid, count in [("a", 2), ("b", 1), ("c", 2), ("d", 0)]
        ]
        assert rank_by_hypo_load(results).ordered_ids == ["d", "b", "a", "c"]


class TestAdaptiveThreshold:
    def test_perfect_separation_found(self):
        ids, values, labels = [], [], {}
        for label, row in [
            ("dark", [-5, -5, -5, 5]),
            ("mid", [-5, 5, 5, 5]),
            ("light", [5, 5, 5, 5]),
        ]:
            for k in range(3):
                sid = f"{label}{k}"
                ids.append(sid)
                values.append(np.array(row, dtype=float))
                labels[sid] = label
        report = adaptive_threshold_select(ids, values, _truth(labels), candidates=3)
        assert [c.threshold for c in report.candidates] == [-5.0, 0.0, 5.0]
        assert report.chosen_index == 1
        assert report.chosen == 0.0
        chosen = report.chosen_candidate
        assert (chosen.tpr, chosen.fpr, chosen.accuracy) == (1.0, 0.0, 1.0)
        assert report.candidates[0].youden == -0.5

    def test_ties_resolve_to_smallest_threshold(self):
        ids = ["l", "m", "d"]
        values = [np.array([1.0, 2.0, 3.0])] * 3
        report = adaptive_threshold_select(
            ids, values, _truth({"l": "light", "m": "mid", "d": "dark"}), candidates=5
        )
        assert all(c.youden == 1.0 for c in report.candidates)
        assert report.chosen_index == 0

    def test_parallel_sweep_matches_serial(self):
        rng = np.random.default_rng(8)
        ids = [f"s{i}" for i in range(9)]
        values = [rng.normal(-0.1 * i, 0.3, size=40) for i in range(9)]
        truth = _truth({sid: ("light", "mid", "dark")[i // 3] for i, sid in enumerate(ids)})
        serial = adaptive_threshold_select(ids, values, truth, candidates=21)
        parallel = adaptive_threshold_select(ids, values, truth, candidates=21, workers=4)
        assert serial == parallel

    def test_unlabeled_subject_rejected(self):
        with pytest.raises(ThresholdSelectionError, match="unlabeled"):
            adaptive_threshold_select(
                ["a", "b"], [np.array([0.0, 1.0])] * 2, _truth({"a": "dark"})
            )

    def test_missing_dark_cluster_rejected(self):
        with pytest.raises(ThresholdSelectionError, match="dark"):
            adaptive_threshold_select(
                ["a", "b"],
                [np.array([0.0, 1.0])] * 2,
                _truth({"a": "light", "b": "mid"}),
            )


class TestTessellation:
    def test_row_mask_bands(self):
        tess = tessellate(mask_from(np.ones((1, 5))), 4)
        assert tess.center == (0, 0)
        assert tess.delta_r == 1.0
        assert tess.band_sizes == [1, 1, 1, 2]

    def test_center_is_posterior_then_leftmost(self):
        grid = np.zeros((4, 4), dtype=bool)
        grid[0:3, 1:4] = True
        grid[3, 2] = grid[3, 3] = True
        assert tessellate(mask_from(grid), 3).center == (3, 2)

    def test_bands_partition_the_mask(self):
        grid = np.zeros((9, 9), dtype=bool)
        grid[1:8, 2:7] = True
        tess = tessellate(mask_from(grid), 10)
        assert sum(tess.band_sizes) == int(grid.sum())
        members = {tuple(p) for band in tess.bands for p in band.tolist()}
        assert len(members) == int(grid.sum())

    def test_single_pixel_mask(self):
        grid = np.zeros((3, 3), dtype=bool)
        grid[1, 1] = True
        tess = tessellate(mask_from(grid), 4)
        assert tess.delta_r == 1.0
        assert tess.band_sizes == [1, 0, 0, 0]

    def test_band_counts_sum_to_whole_load(self):
        rng = np.random.default_rng(6)
        pixels = rng.uniform(0, 100, size=(8, 8))
        left = np.zeros((8, 8), dtype=bool)
        left[2:7, 1:4] = True
        right = np.zeros((8, 8), dtype=bool)
        right[2:7, 4:7] = True
        parts = tessellate_hemispheres([mask_from(left), mask_from(right)], 5)
        hypo, total = subregion_counts(pixels, parts, 40.0)
        whole = pixels[left | right]
        assert sum(total) == whole.size
        assert sum(hypo) == int(np.count_nonzero(whole < 40.0))

    def test_features_are_band_loads(self):
        pixels = np.array([[0.0, 0.0, 9.0, 9.0, 9.0]])
        tess = tessellate(mask_from(np.ones((1, 5))), 4)
        assert subregion_features(pixels, tess, 5.0) == [1.0, 1.0, 0.0, 0.0]
