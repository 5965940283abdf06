"""Equalise ROI lengths: raster-shuffle subsets and spatially balanced interpolation.

Shuffle sampling uses numpy's PCG64 generator (``numpy.random.default_rng``)
driving an explicit Fisher-Yates pass, so a given seed selects the same raster
positions on every platform and numpy release that keeps PCG64 stable.
"""

import logging
from typing import List, Sequence

import numpy as np

from hypoquant.domain.entities import (
    Dataset,
    Hemisphere,
    RoiIntensities,
    RoiVector,
    SamplingMethod,
)
from hypoquant.domain.exceptions import DataError

logger = logging.getLogger(__name__)


class SamplingError(DataError):
    """Requested sample length cannot be produced."""


def min_roi_size(dataset: Dataset, hemisphere: Hemisphere) -> int:
    """Smallest ROI pixel count over the dataset for one hemisphere."""
    if not dataset.subjects:
        raise SamplingError("dataset has no subjects")
    return min(subject.mask(hemisphere).size for subject in dataset.subjects)


def fisher_yates_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform permutation of range(n), swapping from the last slot down."""
    order = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    return order


def subset_positions(order: Sequence[int], length: int) -> np.ndarray:
    """First `length` entries of a permutation, restored to raster order."""
    return np.sort(np.asarray(order[:length], dtype=np.int64))


def raster_shuffle_sample(
    values: RoiIntensities, length: int, seed: int, subject_id: str = ""
) -> RoiVector:
    """Random subset of `length` ROI pixels kept in raster order."""
    n = len(values)
    if length < 1:
        raise SamplingError(f"sample length must be >= 1, got {length}")
    if length > n:
        raise SamplingError(f"cannot draw {length} samples from an ROI of {n} pixels")
    order = fisher_yates_permutation(n, np.random.default_rng(seed))
    positions = subset_positions(order, length)
    return RoiVector(
        subject_id=subject_id,
        values=np.asarray(values.values, dtype=np.float64)[positions],
        method=SamplingMethod.SHUFFLE,
        seed=seed,
    )


def balanced_positions(n: int, length: int) -> np.ndarray:
    """Fractional raster positions k * (n - 1) / (length - 1), k = 0..length-1."""
    k = np.arange(length, dtype=np.int64)
    return (k * (n - 1)) / (length - 1)


def balanced_sample(values: RoiIntensities, length: int, subject_id: str = "") -> RoiVector:
    """Linear interpolation at evenly stepped raster positions.

    First and last ROI pixels are always kept; the nearer original pixel
    gets the larger weight.
    """
    data = np.asarray(values.values, dtype=np.float64)
    n = len(data)
    if n < 2 or length < 2:
        raise SamplingError(f"balanced sampling needs >= 2 pixels and length >= 2 (n={n}, L={length})")
    if length > n:
        raise SamplingError(f"cannot draw {length} samples from an ROI of {n} pixels")
    positions = balanced_positions(n, length)
    lower = np.floor(positions).astype(np.int64)
    upper = np.minimum(lower + 1, n - 1)
    frac = positions - lower
    sampled = (1.0 - frac) * data[lower] + frac * data[upper]
    return RoiVector(subject_id=subject_id, values=sampled, method=SamplingMethod.BALANCED)


def sample_roi(
    values: RoiIntensities,
    length: int,
    method: SamplingMethod,
    seed: int,
    subject_id: str = "",
) -> RoiVector:
    if method == SamplingMethod.SHUFFLE:
        return raster_shuffle_sample(values, length, seed, subject_id)
    return balanced_sample(values, length, subject_id)


def sample_rows(
    rois: Sequence[RoiIntensities],
    subject_ids: Sequence[str],
    length: int,
    method: SamplingMethod,
    seed: int,
) -> List[RoiVector]:
    """Sample every subject's ROI to `length`, in dataset order."""
    logger.debug(f"Sampling {len(rois)} ROIs to length {length} ({method.value})")
    return [
        sample_roi(roi, length, method, seed, sid) for roi, sid in zip(rois, subject_ids)
    ]
