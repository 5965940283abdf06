import numpy as np
import pytest

from hypoquant.domain.entities import GrayImage, RoiIntensities
from hypoquant.services.preprocess import (
    RegionOutOfBoundsError,
    ZeroMeanError,
    extract_roi,
    normalize_intensity,
    normalize_roi,
    reference_region_stats,
    roi_value_grid,
)

from .conftest import mask_from


def _values(values):
    data = np.asarray(values, dtype=float)
    return RoiIntensities(values=data, coords=np.zeros((len(data), 2), dtype=int))


class TestNormalizeIntensity:
    def test_midpoint_of_range(self):
        image = GrayImage.from_array([[0, 600, 1200]])
        assert normalize_intensity(image).pixels.tolist() == [[0.0, 127.5, 255.0]]

    def test_constant_image_maps_to_zero(self):
        image = GrayImage.from_array(np.full((2, 3), 42))
        assert not normalize_intensity(image).pixels.any()

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        image = GrayImage.from_array(rng.uniform(-50, 900, size=(8, 8)))
        once = normalize_intensity(image)
        twice = normalize_intensity(once)
        np.testing.assert_allclose(twice.pixels, once.pixels, atol=1e-12)
        assert once.pixels.min() == 0.0 and once.pixels.max() == 255.0


class TestNormalizeRoi:
    def test_constant_roi(self):
        assert normalize_roi(_values([100, 100, 100])).tolist() == [0.0, 0.0, 0.0]

    def test_formula(self):
        assert normalize_roi(_values([50, 150])).tolist() == [-0.5, 0.5]

    def test_zero_mean_rejected(self):
        with pytest.raises(ZeroMeanError):
            normalize_roi(_values([0, 0]))

    def test_output_mean_is_zero_and_order_free(self):
        rng = np.random.default_rng(1)
        data = rng.uniform(1, 200, size=50)
        out = normalize_roi(_values(data))
        assert abs(out.mean()) < 1e-12
        np.testing.assert_allclose(np.sort(normalize_roi(_values(data[::-1]))), np.sort(out))


class TestExtractRoi:
    def test_raster_order(self):
        image = GrayImage.from_array([[1, 2], [3, 4]])
        roi = extract_roi(image, mask_from([[0, 1], [1, 0]]))
        assert roi.values.tolist() == [2.0, 3.0]
        assert roi.coords.tolist() == [[0, 1], [1, 0]]

    def test_full_mask_is_row_major_pixels(self):
        pixels = np.arange(12).reshape(3, 4)
        roi = extract_roi(GrayImage.from_array(pixels), mask_from(np.ones((3, 4))))
        assert roi.values.tolist() == list(range(12))

    def test_value_grid_scatters_back(self):
        image = GrayImage.from_array([[1, 2], [3, 4]])
        roi = extract_roi(image, mask_from([[0, 1], [1, 0]]))
        grid = roi_value_grid(image.shape, roi, np.array([-1.0, 1.0]))
        assert grid[0, 1] == -1.0 and grid[1, 0] == 1.0
        assert np.isnan(grid[0, 0]) and np.isnan(grid[1, 1])


class TestReferenceRegionStats:
    def test_constant_region(self):
        image = GrayImage.from_array([[100, 100, 100]])
        assert reference_region_stats(image, (0, 0, 1, 3)) == (100.0, 0.0)

    def test_population_std(self):
        image = GrayImage.from_array([[90, 100, 110]])
        mean, std = reference_region_stats(image, (0, 0, 1, 3))
        assert mean == pytest.approx(100.0)
        assert std == pytest.approx(8.164965809, rel=1e-9)

    def test_single_pixel(self):
        image = GrayImage.from_array([[1, 7], [3, 4]])
        assert reference_region_stats(image, (0, 1, 1, 1)) == (7.0, 0.0)

    def test_out_of_bounds(self):
        image = GrayImage.from_array(np.zeros((4, 4)))
        with pytest.raises(RegionOutOfBoundsError):
            reference_region_stats(image, (3, 3, 2, 1))
