import numpy as np
import pytest
from pydantic import ValidationError

from hypoquant.domain.entities import ClusterLabel, EllipseRoi, Hemisphere, PhantomSpec
from hypoquant.infrastructure.manifest import load_manifest
from hypoquant.infrastructure.reports import read_csv
from hypoquant.services import phantom
from hypoquant.services.binary_descriptor import hypo_load, planted_threshold
from hypoquant.services.preprocess import extract_roi
from hypoquant.services.phantom import (
    PhantomError,
    PhantomGenerator,
    grow_blob,
    planted_count,
    reference_rect,
    tercile_sizes,
)


def _small_spec(**overrides):
    values = dict(
        subject_count=6,
        width=32,
        height=32,
        fractions=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
        noise_sigma=0.0,
        seed=7,
    )
    values.update(overrides)
    return PhantomSpec(**values)


class TestHelpers:
    def test_planted_count_rounds_halves_up(self):
        assert planted_count(0.5, 5) == 3
        assert planted_count(0.0, 99) == 0
        assert planted_count(0.25, 10) == 3

    def test_blob_is_exact_and_inside_mask(self):
        mask = np.zeros((9, 9), dtype=bool)
        mask[2:7, 1:8] = True
        blob = grow_blob(mask, (4, 4), 17)
        assert int(blob.sum()) == 17
        assert not np.any(blob & ~mask)

    def test_blob_larger_than_region(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[1:3, 1:3] = True
        with pytest.raises(PhantomError):
            grow_blob(mask, (1, 1), 5)

    def test_terciles_give_remainder_to_dark(self):
        assert tercile_sizes(30) == [10, 10, 10]
        assert tercile_sizes(10) == [3, 3, 4]
        assert tercile_sizes(11) == [3, 3, 5]

    def test_reference_rect_for_64(self):
        assert reference_rect(64, 64) == (10, 28, 7, 9)


class TestPhantomSpec:
    def test_fractions_must_increase(self):
        with pytest.raises(ValidationError):
            _small_spec(fractions=[0.0, 0.2, 0.2, 0.3, 0.4, 0.5])

    def test_fraction_count_must_match(self):
        with pytest.raises(ValidationError):
            _small_spec(fractions=[0.0, 0.5])

    def test_separable_needs_wide_margin(self):
        with pytest.raises(ValidationError):
            _small_spec(dark_delta=30.0, noise_sigma=10.0)
        assert not _small_spec(dark_delta=30.0, noise_sigma=10.0, separable=False).separable

    def test_overlapping_rois_rejected(self):
        roi = EllipseRoi(center_row=0.5, center_col=0.5, radius_row=0.1, radius_col=0.1)
        with pytest.raises(PhantomError, match="overlap"):
            PhantomGenerator(_small_spec(left_roi=roi, right_roi=roi))

    def test_roi_outside_head_rejected(self):
        roi = EllipseRoi(center_row=0.1, center_col=0.1, radius_row=0.05, radius_col=0.05)
        with pytest.raises(PhantomError, match="head"):
            PhantomGenerator(_small_spec(left_roi=roi))


class TestGenerate:
    def test_noise_free_load_equals_planted_fraction(self, tmp_path):
        spec = _small_spec()
        study = phantom.generate(spec, tmp_path)
        dataset = load_manifest(study.manifest_path)
        threshold = planted_threshold(spec.base_intensity, spec.dark_delta)
        for subject in dataset.subjects:
            fraction = study.fractions[subject.id]
            left = extract_roi(subject.image, subject.mask(Hemisphere.LEFT))
            assert hypo_load(left.values, threshold).hypo_count == planted_count(
                fraction, len(left)
            )
            whole = extract_roi(subject.image, subject.mask(Hemisphere.WHOLE))
            result = hypo_load(whole.values, threshold, subject.id)
            assert result.hypo_count == planted_count(fraction, len(whole))
            assert abs(result.hypo_load - fraction) <= 0.5 / len(whole)

    def test_whole_roi_count_is_exact_for_default_study(self):
        spec = PhantomSpec(subject_count=30, noise_sigma=0.0, seed=42)
        generator = PhantomGenerator(spec)
        roi_size = sum(int(np.count_nonzero(roi)) for roi in generator.rois.values())
        for fraction in spec.planted_fractions():
            counts = generator.blob_counts(fraction)
            assert sum(counts.values()) == planted_count(fraction, roi_size)
            assert int(generator.blob(fraction).sum()) == planted_count(fraction, roi_size)

    def test_rim_is_noise_free(self, tmp_path):
        spec = _small_spec(noise_sigma=5.0, dark_delta=100.0)
        generator = PhantomGenerator(spec)
        image = generator.render(0, 0.3)
        assert np.all(image[generator.rim] == spec.rim_level)
        assert np.all(image[~(generator.rim | generator.tissue)] == 0)

    def test_planted_truth(self, tmp_path):
        study = phantom.generate(_small_spec(ordered=True), tmp_path)
        ids = [f"sub-{p:03d}" for p in range(6)]
        assert study.planted_ranking.ordered_ids == ids
        assert study.planted_clustering.members(ClusterLabel.DARK) == ids[4:]
        rows = read_csv(tmp_path / "planted.csv")
        assert [row["planted_rank"] for row in rows] == ["1", "2", "3", "4", "5", "6"]
        assert rows[5]["cluster"] == "dark"

    def test_shuffled_manifest_keeps_truth(self, tmp_path):
        study = phantom.generate(_small_spec(), tmp_path)
        dataset = load_manifest(study.manifest_path)
        assert sorted(dataset.ids) == sorted(study.planted_ranking.ordered_ids)
        truth = dataset.ground_truth()
        assert truth.assignment == study.planted_clustering.assignment
        ranked_fractions = [study.fractions[sid] for sid in study.planted_ranking.ordered_ids]
        assert ranked_fractions == sorted(ranked_fractions)

    def test_byte_identical_across_runs_and_workers(self, tmp_path):
        spec = _small_spec(noise_sigma=8.0)
        first = phantom.generate(spec, tmp_path / "a")
        second = phantom.generate(spec, tmp_path / "b", workers=4)
        names = sorted(
            p.relative_to(first.output_dir) for p in first.output_dir.rglob("*") if p.is_file()
        )
        assert names
        for name in names:
            assert (first.output_dir / name).read_bytes() == (
                second.output_dir / name
            ).read_bytes()

    def test_session_study_shape(self, phantom_study):
        dataset = load_manifest(phantom_study.manifest_path)
        assert len(dataset) == 30
        assert dataset.reference_rect == (10, 28, 7, 9)
        assert dataset.cluster_sizes == {
            ClusterLabel.LIGHT: 10,
            ClusterLabel.MID: 10,
            ClusterLabel.DARK: 10,
        }
