"""Pipeline orchestration for each CLI subcommand."""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from hypoquant.config import settings
from hypoquant.domain.entities import (
    CLUSTER_ORDER,
    ClusterLabel,
    Clustering,
    CorrMatrix,
    Dataset,
    EigenModel,
    Hemisphere,
    HypoLoadResult,
    NonbinaryResult,
    NormalizedImage,
    PhantomSpec,
    Projection,
    RankOrientation,
    RoiIntensities,
    RoiVector,
    RowNormalization,
    RunConfig,
    Tessellation,
    ThresholdMode,
    ThresholdReport,
)
from hypoquant.domain.exceptions import UsageError
from hypoquant.infrastructure.manifest import load_manifest
from hypoquant.infrastructure.netpbm import save_ppm
from hypoquant.infrastructure.reports import (
    read_ranking_csv,
    read_value_csv,
    write_csv,
    write_report,
)
from hypoquant.services import phantom
from hypoquant.services.binary_descriptor import (
    adaptive_threshold_select,
    hypo_load,
    optional_rect,
    rank_by_hypo_load,
    reference_threshold,
    subregion_features,
    tessellate,
    tessellate_hemispheres,
)
from hypoquant.services.eigen import (
    fit_pca,
    nonbinary_features,
    nonbinary_rank,
    project,
    variance_sweep,
)
from hypoquant.services.preprocess import (
    extract_roi,
    normalize_intensity,
    normalize_roi,
    reference_region_stats,
    roi_value_grid,
)
from hypoquant.services.run_logger import RunLogger
from hypoquant.services.sampling import min_roi_size, sample_rows
from hypoquant.services.stats import (
    accuracy,
    correlation_matrix,
    rank_to_clusters,
    render_heatmap,
    split_at_largest_gap,
)
from hypoquant.workers.pool import map_ordered

logger = logging.getLogger(__name__)

FEATURE_KINDS = ("binary", "nonbinary")


class PreparedDataset(BaseModel):
    """Min-max normalized images and raster-order ROI values, dataset order."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    dataset: Dataset
    hemisphere: Hemisphere
    normalized: List[NormalizedImage]
    rois: List[RoiIntensities]

    @property
    def ids(self) -> List[str]:
        return self.dataset.ids


class BinaryOutcome(BaseModel):
    """HypoLoad per subject plus the grids thresholds are applied to."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    results: List[HypoLoadResult]
    grids: List[np.ndarray]
    report: Optional[ThresholdReport] = None

    def loads(self) -> Dict[str, float]:
        return {r.subject_id: r.hypo_load for r in self.results}


class NonbinaryOutcome(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    rows: List[RoiVector]
    model: EigenModel
    projections: List[Projection]
    result: NonbinaryResult


class AnalysisWorker:
    """Runs descriptor, correlation and evaluation pipelines for one RunConfig."""

    def __init__(self, config: RunConfig, run_logger: Optional[RunLogger] = None):
        self.config = config
        self.run_logger = run_logger
        self.output_dir = Path(config.output_dir)
        self.logger = logging.getLogger("workers.analysis")

    # -- shared stages -------------------------------------------------

    def _progress(self, stage: str):
        if self.run_logger is None:
            return None
        run_logger = self.run_logger
        return lambda done, total: run_logger.log_progress(stage, done, total)

    def load_dataset(self, manifest: Optional[str] = None) -> Dataset:
        path = manifest or self.config.manifest
        if not path:
            raise UsageError("a manifest path is required")
        dataset = load_manifest(path, self.config.workers)
        if self.run_logger:
            self.run_logger.log_dataset_loaded(str(path), len(dataset), dataset.is_labeled)
        return dataset

    def prepare(self, dataset: Dataset) -> PreparedDataset:
        hemisphere = self.config.hemisphere

        def stage(index: int) -> Tuple[NormalizedImage, RoiIntensities]:
            subject = dataset.subjects[index]
            image = normalize_intensity(subject.image)
            return image, extract_roi(image, subject.mask(hemisphere))

        staged = map_ordered(
            stage, list(range(len(dataset))), self.config.workers, self._progress("normalize")
        )
        return PreparedDataset(
            dataset=dataset,
            hemisphere=hemisphere,
            normalized=[image for image, _ in staged],
            rois=[roi for _, roi in staged],
        )

    def tessellations(self, dataset: Dataset, bands: int) -> List[List[Tessellation]]:
        hemisphere = self.config.hemisphere
        result = []
        for subject in dataset.subjects:
            if hemisphere == Hemisphere.WHOLE:
                masks = [subject.mask(Hemisphere.LEFT), subject.mask(Hemisphere.RIGHT)]
                result.append(tessellate_hemispheres(masks, bands))
            else:
                result.append([tessellate(subject.mask(hemisphere), bands)])
        return result

    def binary_stage(self, prepared: PreparedDataset) -> BinaryOutcome:
        """Per-subject HypoLoad under the configured threshold mode."""
        dataset = prepared.dataset
        ids = prepared.ids
        if self.config.threshold_mode == ThresholdMode.REFERENCE:
            rect = optional_rect(self.config.reference_rect, dataset.reference_rect)
            results = []
            for sid, image, roi in zip(ids, prepared.normalized, prepared.rois):
                threshold = reference_threshold(*reference_region_stats(image, rect))
                results.append(hypo_load(roi.values, threshold, sid))
            if self.run_logger:
                self.run_logger.log_threshold_selected(
                    "reference", float(np.mean([r.threshold for r in results])), {"rect": list(rect)}
                )
            return BinaryOutcome(results=results, grids=[img.pixels for img in prepared.normalized])

        normalized = [normalize_roi(roi) for roi in prepared.rois]
        truth = dataset.ground_truth() if dataset.is_labeled else Clustering(assignment={})
        report = adaptive_threshold_select(
            ids, normalized, truth, self.config.candidates, self.config.workers
        )
        results = [
            hypo_load(values, report.chosen, sid) for sid, values in zip(ids, normalized)
        ]
        grids = [
            roi_value_grid(image.shape, roi, values)
            for image, roi, values in zip(prepared.normalized, prepared.rois, normalized)
        ]
        if self.run_logger:
            chosen = report.chosen_candidate
            self.run_logger.log_threshold_selected(
                "adaptive", chosen.threshold, {"tpr": chosen.tpr, "fpr": chosen.fpr}
            )
        return BinaryOutcome(results=results, grids=grids, report=report)

    def sampled_rows(self, prepared: PreparedDataset, seed: int) -> List[RoiVector]:
        if self.config.row_normalization == RowNormalization.ROI:
            rois = [
                RoiIntensities(values=normalize_roi(roi), coords=roi.coords)
                for roi in prepared.rois
            ]
        else:
            rois = prepared.rois
        length = min_roi_size(prepared.dataset, prepared.hemisphere)
        return sample_rows(rois, prepared.ids, length, self.config.sampling, seed)

    def nonbinary_stage(
        self, prepared: PreparedDataset, binary: BinaryOutcome, seed: Optional[int] = None
    ) -> NonbinaryOutcome:
        rows = self.sampled_rows(prepared, self.config.seed if seed is None else seed)
        model = fit_pca(rows, self.config.variance_fraction)
        if self.run_logger:
            self.run_logger.log_model_fitted(
                len(rows), model.length, model.component_count, model.retained
            )
        projections = [] if model.degenerate else map_ordered(
            lambda row: project(model, row), rows, self.config.workers
        )
        result = nonbinary_rank(projections, binary.loads(), model)
        return NonbinaryOutcome(
            rows=rows, model=model, projections=projections, result=result
        )

    def band_features(
        self, prepared: PreparedDataset, binary: BinaryOutcome, bands: int
    ) -> List[List[float]]:
        tessellations = self.tessellations(prepared.dataset, bands)
        return [
            subregion_features(grid, parts, result.threshold)
            for grid, parts, result in zip(binary.grids, tessellations, binary.results)
        ]

    def _finish(self, files: List[Path]) -> List[Path]:
        if self.run_logger:
            self.run_logger.log_outputs_written(files)
        return files

    # -- subcommands ---------------------------------------------------

    def run_phantom(self, spec: PhantomSpec) -> List[Path]:
        study = phantom.generate(spec, self.output_dir, self.config.workers)
        files = [study.manifest_path, study.output_dir / "planted.csv"]
        return self._finish(files)

    def run_binary(self) -> List[Path]:
        prepared = self.prepare(self.load_dataset())
        binary = self.binary_stage(prepared)
        bands = self.config.tessellation
        features = self.band_features(prepared, binary, bands)
        files = [
            write_csv(
                self.output_dir / "hypoload.csv",
                ["id", "threshold", "hypo_count", "total", "hypoload"]
                + [f"f{i + 1}" for i in range(bands)],
                [
                    [r.subject_id, r.threshold, r.hypo_count, r.total, r.hypo_load] + band
                    for r, band in zip(binary.results, features)
                ],
            ),
            self._write_ranking(rank_by_hypo_load(binary.results).ordered_ids),
        ]
        if binary.report is not None:
            files.append(self._write_threshold_report(binary.report))
        return self._finish(files)

    def run_nonbinary(self, fraction_sweep: Optional[Sequence[float]] = None) -> List[Path]:
        prepared = self.prepare(self.load_dataset())
        truth = prepared.dataset.ground_truth() if fraction_sweep else None
        binary = self.binary_stage(prepared)
        outcome = self.nonbinary_stage(prepared, binary)
        ranking = outcome.result.ranking
        rank_of = ranking.position()
        retained = outcome.model.retained
        files = [
            write_csv(
                self.output_dir / "projections.csv",
                ["id"] + [f"g{i + 1}" for i in range(retained)],
                [[p.subject_id] + nonbinary_features(p) for p in outcome.projections],
            ),
            write_csv(
                self.output_dir / "distances.csv",
                ["id", "distance", "rank"],
                [
                    [sid, outcome.result.distances[sid], rank_of[sid] + 1]
                    for sid in prepared.ids
                ],
            ),
            self._write_ranking(ranking.ordered_ids),
        ]
        if fraction_sweep and truth is not None:
            sweep = variance_sweep(
                outcome.model, outcome.rows, binary.loads(), truth, fraction_sweep
            )
            files.append(
                write_csv(
                    self.output_dir / "variance_sweep.csv",
                    ["fraction", "components", "accuracy"],
                    sweep,
                )
            )
        return self._finish(files)

    def run_features(self) -> List[Path]:
        prepared = self.prepare(self.load_dataset())
        binary = self.binary_stage(prepared)
        bands = self.config.tessellation
        band_rows = self.band_features(prepared, binary, bands)
        outcome = self.nonbinary_stage(prepared, binary)
        retained = outcome.model.retained
        files = [
            write_csv(
                self.output_dir / "features_binary.csv",
                ["id"] + [f"f{i + 1}" for i in range(bands)],
                [[sid] + row for sid, row in zip(prepared.ids, band_rows)],
            ),
            write_csv(
                self.output_dir / "features_nonbinary.csv",
                ["id"] + [f"g{i + 1}" for i in range(retained)],
                [[p.subject_id] + nonbinary_features(p) for p in outcome.projections],
            ),
        ]
        return self._finish(files)

    def correlation_features(
        self,
        prepared: PreparedDataset,
        binary: BinaryOutcome,
        kinds: Sequence[str],
        multiple: bool,
        max_description: int,
        seed: int,
    ) -> Dict[str, Dict[str, np.ndarray]]:
        """Feature sets keyed by kind; each maps a feature label to per-subject values."""
        sets: Dict[str, Dict[str, np.ndarray]] = {}
        if "binary" in kinds:
            if multiple:
                sets["binary"] = {
                    f"binary-{d}": np.array(self.band_features(prepared, binary, d))
                    for d in range(1, max_description + 1)
                }
            else:
                bands = np.array(self.band_features(prepared, binary, self.config.tessellation))
                sets["binary"] = {f"b{i + 1}": bands[:, i] for i in range(bands.shape[1])}
        if "nonbinary" in kinds:
            outcome = self.nonbinary_stage(prepared, binary, seed)
            model = outcome.model
            depth = min(max_description, model.component_count)
            coefficients = np.vstack(
                [project(model, row, components=depth).g for row in outcome.rows]
            )
            if multiple:
                sets["nonbinary"] = {
                    f"nonbinary-{d}": coefficients[:, :d] for d in range(1, depth + 1)
                }
            else:
                sets["nonbinary"] = {f"g{i + 1}": coefficients[:, i] for i in range(depth)}
        return sets

    def run_correlate(
        self,
        kinds: Sequence[str],
        multiple: bool = False,
        max_description: Optional[int] = None,
        runs: int = 1,
        orientation: RankOrientation = RankOrientation.QUERY,
    ) -> List[Path]:
        prepared = self.prepare(self.load_dataset())
        binary = self.binary_stage(prepared)
        depth = max_description or self.config.tessellation
        pairs = [(a, b) for a, b in (("binary", "binary"), ("nonbinary", "nonbinary"),
                                    ("binary", "nonbinary")) if a in kinds and b in kinds]
        totals: Dict[Tuple[str, str], CorrMatrix] = {}
        for run in range(runs):
            sets = self.correlation_features(
                prepared, binary, kinds, multiple, depth, self.config.seed + run
            )
            for a, b in pairs:
                matrix = correlation_matrix(
                    prepared.ids, sets[a], sets[b], orientation, self.config.workers
                )
                if (a, b) in totals:
                    previous = totals[(a, b)]
                    totals[(a, b)] = previous.model_copy(
                        update={"values": previous.values + matrix.values}
                    )
                else:
                    totals[(a, b)] = matrix
        files: List[Path] = []
        for (a, b), total in totals.items():
            averaged = total.values / runs
            stem = self.output_dir / f"heatmap_{a}_{b}"
            files.append(
                write_csv(
                    stem.with_suffix(".csv"),
                    ["feature"] + total.col_labels,
                    [[label] + list(row) for label, row in zip(total.row_labels, averaged)],
                )
            )
            save_ppm(stem.with_suffix(".ppm"), render_heatmap(averaged, settings.heatmap_cell_size))
            files.append(stem.with_suffix(".ppm"))
        return self._finish(files)

    def run_evaluate(
        self,
        predicted: Sequence[str],
        truth_manifest: Optional[str] = None,
        truth_ratios: Optional[str] = None,
    ) -> List[Path]:
        if truth_ratios:
            truth = split_at_largest_gap(read_value_csv(truth_ratios, "ratio"))
        else:
            truth = self.load_dataset(truth_manifest).ground_truth()
        sizes = truth.sizes()
        rows: List[List[object]] = []
        evaluations = []
        for path in predicted:
            ranking = read_ranking_csv(path)
            clustering = rank_to_clusters(ranking, sizes)
            result = accuracy(clustering, truth)
            name = Path(path).name
            for label in result.labels:
                rows.append([name, label, result.truth_sizes[label], result.common[label],
                             result.ratio(label)])
            rows.append([name, "all", len(ranking), sum(result.common.values()), result.accuracy])
            evaluations.append({
                "name": name,
                "accuracy": result.accuracy,
                "clusters": [
                    {
                        "label": label.value,
                        "truth": _ordered_members(truth, label, ranking.ordered_ids),
                        "predicted": clustering.members(label),
                        "common": result.common[label],
                        "size": result.truth_sizes[label],
                    }
                    for label in CLUSTER_ORDER
                    if label in result.labels
                ],
            })
            self.logger.info(f"{name}: accuracy {result.accuracy:.4f}")
        files = [
            write_csv(
                self.output_dir / "accuracy.csv",
                ["ranking", "cluster", "truth_size", "common", "ratio"],
                rows,
            ),
            write_report(
                self.output_dir / "accuracy_report.txt",
                "accuracy_report.txt.j2",
                evaluations=evaluations,
            ),
        ]
        return self._finish(files)

    # -- writers -------------------------------------------------------

    def _write_ranking(self, ordered_ids: Sequence[str]) -> Path:
        return write_csv(
            self.output_dir / "ranking.csv",
            ["rank", "id"],
            [[i + 1, sid] for i, sid in enumerate(ordered_ids)],
        )

    def _write_threshold_report(self, report: ThresholdReport) -> Path:
        return write_csv(
            self.output_dir / "threshold_report.csv",
            ["threshold", "tpr", "fpr", "youden", "accuracy", "chosen"],
            [
                [c.threshold, c.tpr, c.fpr, c.youden, c.accuracy, i == report.chosen_index]
                for i, c in enumerate(report.candidates)
            ],
        )


def _ordered_members(truth: Clustering, label: ClusterLabel, order: Sequence[str]) -> List[str]:
    """Ground-truth members of a cluster listed in the evaluated ranking's order."""
    members = set(truth.members(label))
    return [sid for sid in order if sid in members]
