"""Binary hypointensity description: thresholds, HypoLoad, adaptive selection and tessellation."""

import logging
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from hypoquant.domain.entities import (
    ClusterLabel,
    Clustering,
    GrayImage,
    HypoLoadResult,
    Ranking,
    RoiMask,
    Tessellation,
    ThresholdCandidate,
    ThresholdReport,
)
from hypoquant.domain.exceptions import DataError
from hypoquant.services.stats import accuracy, rank_to_clusters, value_ranking
from hypoquant.workers.pool import map_ordered

logger = logging.getLogger(__name__)


class ThresholdSelectionError(DataError):
    """Threshold cannot be computed or selected."""


def reference_threshold(ref_mean: float, ref_std: float) -> float:
    """Threshold = mean(I_ref) - std(I_ref)."""
    if ref_std < 0:
        raise ThresholdSelectionError(f"reference std must be >= 0, got {ref_std}")
    return ref_mean - ref_std


def hypo_load(values: Sequence[float], threshold: float, subject_id: str = "") -> HypoLoadResult:
    """Count pixels strictly below the threshold."""
    data = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        raise ThresholdSelectionError(f"no ROI values for subject '{subject_id}'")
    return HypoLoadResult(
        subject_id=subject_id,
        threshold=float(threshold),
        hypo_count=int(np.count_nonzero(data < threshold)),
        total=int(data.size),
    )


def rank_by_hypo_load(results: Sequence[HypoLoadResult]) -> Ranking:
    """Light-to-dark ranking: ascending HypoLoad, ties in dataset order."""
    return value_ranking(
        [r.subject_id for r in results], [r.hypo_load for r in results]
    )


class AdaptiveThresholdSelector:
    """Sweep evenly spaced thresholds and keep the best dark-vs-rest separation."""

    def __init__(self, candidates: int = 101, workers: int = 1):
        if candidates < 2:
            raise ThresholdSelectionError(f"need at least 2 candidates, got {candidates}")
        self.candidates = candidates
        self.workers = workers
        self.logger = logging.getLogger("services.binary_descriptor")

    def select(
        self,
        subject_ids: Sequence[str],
        values: Sequence[np.ndarray],
        ground_truth: Clustering,
    ) -> ThresholdReport:
        """
        Choose the threshold that best separates dark subjects from the rest.

        Args:
            subject_ids: Subject ids in dataset order
            values: Mean-normalized ROI values per subject
            ground_truth: Labels covering every subject, with a dark cluster

        Returns:
            ThresholdReport listing TPR, FPR and accuracy for every candidate;
            the chosen one maximizes TPR - FPR, ties going to the smaller threshold

        Raises:
            ThresholdSelectionError: If labels are missing or there is nothing to sweep
        """
        missing = [sid for sid in subject_ids if sid not in ground_truth.assignment]
        if missing:
            raise ThresholdSelectionError(
                f"adaptive selection needs labels for every subject; unlabeled: "
                f"{', '.join(missing[:5])}"
            )
        if ClusterLabel.DARK not in ground_truth.labels:
            raise ThresholdSelectionError("ground truth has no dark cluster")
        truth = Clustering(assignment={sid: ground_truth.assignment[sid] for sid in subject_ids})
        sizes = truth.sizes()
        positives = sizes[ClusterLabel.DARK]
        negatives = len(subject_ids) - positives
        if negatives == 0:
            raise ThresholdSelectionError("ground truth has no non-dark subjects")

        sorted_values = [np.sort(np.asarray(v, dtype=np.float64)) for v in values]
        low = min(float(v[0]) for v in sorted_values)
        high = max(float(v[-1]) for v in sorted_values)
        if low == high:
            raise ThresholdSelectionError(f"all ROI values equal {low}; nothing to sweep")
        thresholds = np.linspace(low, high, self.candidates)
        dark_truth = set(truth.members(ClusterLabel.DARK))

        def evaluate(threshold: float) -> Tuple[ThresholdCandidate, Fraction]:
            results = [
                HypoLoadResult(
                    subject_id=sid,
                    threshold=float(threshold),
                    hypo_count=int(np.searchsorted(v, threshold, side="left")),
                    total=len(v),
                )
                for sid, v in zip(subject_ids, sorted_values)
            ]
            predicted = rank_to_clusters(rank_by_hypo_load(results), sizes)
            dark_predicted = set(predicted.members(ClusterLabel.DARK))
            tp = len(dark_predicted & dark_truth)
            fp = len(dark_predicted - dark_truth)
            candidate = ThresholdCandidate(
                threshold=float(threshold),
                tpr=tp / positives,
                fpr=fp / negatives,
                accuracy=accuracy(predicted, truth).accuracy,
                true_positives=tp,
                false_positives=fp,
            )
            return candidate, Fraction(tp, positives) - Fraction(fp, negatives)

        evaluated = map_ordered(evaluate, list(thresholds), self.workers)
        best = 0
        for index, (_, score) in enumerate(evaluated):
            if score > evaluated[best][1]:
                best = index
        report = ThresholdReport(candidates=[c for c, _ in evaluated], chosen_index=best)
        chosen = report.chosen_candidate
        self.logger.info(
            f"Adaptive threshold {chosen.threshold:.6g} "
            f"(TPR={chosen.tpr:.3f}, FPR={chosen.fpr:.3f}) out of {self.candidates} candidates"
        )
        return report


def adaptive_threshold_select(
    subject_ids: Sequence[str],
    values: Sequence[np.ndarray],
    ground_truth: Clustering,
    candidates: int = 101,
    workers: int = 1,
) -> ThresholdReport:
    """Choose the candidate maximising TPR - FPR, dark as the positive class.

    Ties go to the smaller threshold.
    """
    return AdaptiveThresholdSelector(candidates, workers).select(
        subject_ids, values, ground_truth
    )


def tessellate(mask: RoiMask, bands: int) -> Tessellation:
    """Split a mask into `bands` rings of equal width around its posterior-most pixel.

    The center is the member with the largest row index, smallest column on
    ties. Pixels at the maximum distance go to the last band.
    """
    if bands < 1:
        raise ThresholdSelectionError(f"band count must be >= 1, got {bands}")
    coords = mask.coords
    last_row = int(coords[:, 0].max())
    center = (last_row, int(coords[coords[:, 0] == last_row][:, 1].min()))
    offsets = coords - np.array(center)
    distances = np.sqrt(np.sum(offsets.astype(np.float64) ** 2, axis=1))
    r_max = float(distances.max())
    if r_max == 0.0:
        delta_r = 1.0
        index = np.zeros(len(coords), dtype=np.int64)
    else:
        delta_r = r_max / bands
        index = np.minimum(np.floor(distances * bands / r_max).astype(np.int64), bands - 1)
    return Tessellation(
        center=center,
        delta_r=delta_r,
        bands=[coords[index == i] for i in range(bands)],
    )


def tessellate_hemispheres(masks: Sequence[RoiMask], bands: int) -> List[Tessellation]:
    """Tessellate each hemisphere mask around its own center."""
    return [tessellate(mask, bands) for mask in masks]


def _as_grid(values: Union[GrayImage, np.ndarray]) -> np.ndarray:
    return values.pixels if isinstance(values, GrayImage) else np.asarray(values)


def subregion_counts(
    values: Union[GrayImage, np.ndarray],
    tessellations: Union[Tessellation, Sequence[Tessellation]],
    threshold: float,
) -> Tuple[List[int], List[int]]:
    """Hypointense and total pixel counts per band, pooled across tessellations."""
    grid = _as_grid(values)
    parts = [tessellations] if isinstance(tessellations, Tessellation) else list(tessellations)
    count = max(t.band_count for t in parts)
    hypo = [0] * count
    total = [0] * count
    for part in parts:
        for i, band in enumerate(part.bands):
            if len(band) == 0:
                continue
            samples = grid[band[:, 0], band[:, 1]]
            hypo[i] += int(np.count_nonzero(samples < threshold))
            total[i] += len(band)
    return hypo, total


def subregion_features(
    values: Union[GrayImage, np.ndarray],
    tessellations: Union[Tessellation, Sequence[Tessellation]],
    threshold: float,
) -> List[float]:
    """HypoLoad of every band; empty bands give 0."""
    hypo, total = subregion_counts(values, tessellations, threshold)
    return [h / t if t else 0.0 for h, t in zip(hypo, total)]


def planted_threshold(base_intensity: float, dark_delta: float) -> float:
    """Midpoint between tissue and planted-blob intensity."""
    return base_intensity - dark_delta / 2


def optional_rect(
    cli_rect: Optional[Tuple[int, int, int, int]],
    manifest_rect: Optional[Tuple[int, int, int, int]],
) -> Tuple[int, int, int, int]:
    rect = cli_rect or manifest_rect
    if rect is None:
        raise ThresholdSelectionError(
            "reference threshold mode needs --rect or a manifest reference_rect"
        )
    return rect

