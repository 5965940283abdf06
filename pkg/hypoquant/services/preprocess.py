"""Intensity normalization, ROI extraction and reference-region statistics."""

import logging
from typing import Tuple, Union

import numpy as np

from hypoquant.domain.entities import GrayImage, NormalizedImage, RoiIntensities, RoiMask
from hypoquant.domain.exceptions import DataError
from hypoquant.infrastructure.netpbm import DimensionMismatchError

logger = logging.getLogger(__name__)

OUTPUT_MAX = 255.0

Rect = Tuple[int, int, int, int]


class PreprocessError(DataError):
    """Base exception for preprocessing errors."""


class ZeroMeanError(PreprocessError):
    """ROI mean is zero; mean normalization is undefined."""


class RegionOutOfBoundsError(PreprocessError):
    """Reference rectangle does not fit the image."""


def normalize_intensity(image: GrayImage) -> NormalizedImage:
    """Map the image's own [min, max] range affinely onto [0, 255].

    A constant image maps to all zeros.
    """
    pixels = image.pixels
    low, high = float(pixels.min()), float(pixels.max())
    if high == low:
        out = np.zeros_like(pixels, dtype=np.float64)
    else:
        out = (pixels - low) * OUTPUT_MAX / (high - low)
        # pin the endpoints against rounding
        out[pixels == low] = 0.0
        out[pixels == high] = OUTPUT_MAX
    return NormalizedImage(width=image.width, height=image.height, pixels=out)


def normalize_roi(values: Union[RoiIntensities, np.ndarray]) -> np.ndarray:
    """Subtract the ROI mean and divide by it: (v - mean) / mean."""
    data = np.asarray(values.values if isinstance(values, RoiIntensities) else values,
                      dtype=np.float64)
    if data.size == 0:
        raise PreprocessError("cannot normalize an empty ROI")
    mean = float(data.mean())
    if mean == 0.0:
        raise ZeroMeanError("ROI mean is zero; mean normalization undefined")
    return (data - mean) / mean


def extract_roi(image: GrayImage, mask: RoiMask) -> RoiIntensities:
    """ROI pixel values in raster order (row-major, then column)."""
    if image.shape != mask.shape:
        raise DimensionMismatchError(image.shape, mask.shape)
    coords = mask.coords
    values = image.pixels[mask.grid]
    return RoiIntensities(values=values.astype(np.float64), coords=coords)


def reference_region_stats(image: GrayImage, rect: Rect) -> Tuple[float, float]:
    """Mean and population standard deviation over a (row0, col0, rows, cols) rectangle."""
    row0, col0, rows, cols = rect
    if rows < 1 or cols < 1:
        raise RegionOutOfBoundsError(f"reference rectangle {rect} has no area")
    if row0 < 0 or col0 < 0 or row0 + rows > image.height or col0 + cols > image.width:
        raise RegionOutOfBoundsError(
            f"reference rectangle {rect} exceeds image {image.width}x{image.height}",
            {"rect": rect},
        )
    block = image.pixels[row0 : row0 + rows, col0 : col0 + cols]
    mean = float(block.mean())
    std = float(np.sqrt(np.mean((block - mean) ** 2)))
    return mean, std


def roi_value_grid(shape: Tuple[int, int], roi: RoiIntensities, values: np.ndarray) -> np.ndarray:
    """Scatter per-pixel ROI values back onto the image grid; NaN outside the ROI."""
    if len(values) != len(roi):
        raise PreprocessError(f"{len(values)} values for {len(roi)} ROI pixels")
    grid = np.full(shape, np.nan, dtype=np.float64)
    if len(roi):
        grid[roi.coords[:, 0], roi.coords[:, 1]] = values
    return grid
