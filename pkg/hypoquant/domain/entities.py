"""Domain entities representing images, ROIs, descriptors and evaluation results."""

from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from hypoquant.domain.exceptions import UnlabeledDatasetError


class Hemisphere(str, Enum):
    """ROI hemisphere selector."""
    LEFT = "left"
    RIGHT = "right"
    WHOLE = "whole"


class ClusterLabel(str, Enum):
    """Ground-truth darkness clusters, light to dark."""
    LIGHT = "light"
    MID = "mid"
    DARK = "dark"


CLUSTER_ORDER: Tuple[ClusterLabel, ...] = (
    ClusterLabel.LIGHT,
    ClusterLabel.MID,
    ClusterLabel.DARK,
)


class SamplingMethod(str, Enum):
    """ROI length-equalisation strategy."""
    SHUFFLE = "shuffle"
    BALANCED = "balanced"


class ThresholdMode(str, Enum):
    """How the hypointensity threshold is obtained."""
    REFERENCE = "reference"  # mean - std of a reference rectangle
    ADAPTIVE = "adaptive"  # TPR/FPR sweep over ROI-normalized values


class RowNormalization(str, Enum):
    """Normalization applied to ROI rows before PCA."""
    NONE = "none"
    ROI = "roi"


class RankOrientation(str, Enum):
    """How feature rankings are built for correlation matrices."""
    QUERY = "query"
    VALUE = "value"


class ArrayModel(BaseModel):
    """Immutable model that may hold numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class GrayImage(ArrayModel):
    """2D grid of finite intensities, row-major."""

    width: int = Field(ge=1)
    height: int = Field(ge=1)
    pixels: np.ndarray

    @model_validator(mode="after")
    def _check_pixels(self) -> "GrayImage":
        if self.pixels.shape != (self.height, self.width):
            raise ValueError(
                f"pixel grid {self.pixels.shape} does not match "
                f"{self.height}x{self.width}"
            )
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("image contains non-finite intensities")
        return self

    @classmethod
    def from_array(cls, pixels: np.ndarray) -> "GrayImage":
        grid = np.asarray(pixels, dtype=np.float64)
        if grid.ndim != 2:
            raise ValueError(f"expected a 2D array, got {grid.ndim}D")
        return cls(width=grid.shape[1], height=grid.shape[0], pixels=grid)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)


class NormalizedImage(GrayImage):
    """Image whose intensities were min-max mapped onto [0, 255]."""


class RoiMask(ArrayModel):
    """Set of in-ROI pixels over an image grid."""

    width: int = Field(ge=1)
    height: int = Field(ge=1)
    hemisphere: Hemisphere
    grid: np.ndarray

    @model_validator(mode="after")
    def _check_grid(self) -> "RoiMask":
        if self.grid.shape != (self.height, self.width):
            raise ValueError(
                f"mask grid {self.grid.shape} does not match {self.height}x{self.width}"
            )
        if self.grid.dtype != np.bool_:
            raise ValueError("mask grid must be boolean")
        if not self.grid.any():
            raise ValueError("mask has no member pixels")
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def coords(self) -> np.ndarray:
        """Member (row, col) pairs in raster order, shape (k, 2)."""
        return np.argwhere(self.grid)

    @property
    def members(self) -> List[Tuple[int, int]]:
        return [(int(r), int(c)) for r, c in self.coords]

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.grid))


class Subject(ArrayModel):
    """One subject: image, hemisphere masks and optional ground-truth label."""

    id: str = Field(min_length=1)
    image: GrayImage
    masks: Dict[Hemisphere, RoiMask]
    label: Optional[ClusterLabel] = None

    @model_validator(mode="after")
    def _check_masks(self) -> "Subject":
        for hemisphere, mask in self.masks.items():
            if mask.shape != self.image.shape:
                raise ValueError(
                    f"{hemisphere.value} mask {mask.width}x{mask.height} does not "
                    f"match image {self.image.width}x{self.image.height}"
                )
        return self

    def mask(self, hemisphere: Hemisphere) -> RoiMask:
        return self.masks[hemisphere]


class Dataset(ArrayModel):
    """Ordered collection of subjects."""

    subjects: List[Subject]
    reference_rect: Optional[Tuple[int, int, int, int]] = None

    @field_validator("subjects")
    @classmethod
    def _unique_ids(cls, subjects: List[Subject]) -> List[Subject]:
        seen = set()
        for subject in subjects:
            if subject.id in seen:
                raise ValueError(f"duplicate subject id '{subject.id}'")
            seen.add(subject.id)
        return subjects

    @property
    def ids(self) -> List[str]:
        return [s.id for s in self.subjects]

    @property
    def is_labeled(self) -> bool:
        return bool(self.subjects) and all(s.label is not None for s in self.subjects)

    @property
    def cluster_sizes(self) -> Optional[Dict[ClusterLabel, int]]:
        """Cluster cardinalities, defined only when every subject is labeled."""
        if not self.is_labeled:
            return None
        sizes: Dict[ClusterLabel, int] = {}
        for subject in self.subjects:
            assert subject.label is not None
            sizes[subject.label] = sizes.get(subject.label, 0) + 1
        return {label: sizes[label] for label in CLUSTER_ORDER if label in sizes}

    def ground_truth(self) -> "Clustering":
        unlabeled = [s.id for s in self.subjects if s.label is None]
        if unlabeled or not self.subjects:
            raise UnlabeledDatasetError(
                "ground truth needs every subject labeled; missing: "
                + ", ".join(unlabeled),
                {"unlabeled": unlabeled},
            )
        return Clustering(
            assignment={s.id: s.label for s in self.subjects if s.label is not None}
        )

    def __len__(self) -> int:
        return len(self.subjects)


class RoiIntensities(ArrayModel):
    """ROI pixel values with their coordinates, raster order."""

    values: np.ndarray
    coords: np.ndarray

    @model_validator(mode="after")
    def _check_lengths(self) -> "RoiIntensities":
        if len(self.values) != len(self.coords):
            raise ValueError("values and coords differ in length")
        return self

    def __len__(self) -> int:
        return len(self.values)


class RoiVector(ArrayModel):
    """Fixed-length sampled intensity row for one subject."""

    subject_id: str
    values: np.ndarray
    method: Optional[SamplingMethod] = None
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _check_finite(self) -> "RoiVector":
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"row for '{self.subject_id}' has non-finite values")
        return self

    def __len__(self) -> int:
        return len(self.values)


class HypoLoadResult(BaseModel):
    """Hypointense pixel count for one subject at one threshold."""

    subject_id: str
    threshold: float
    hypo_count: int = Field(ge=0)
    total: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_count(self) -> "HypoLoadResult":
        if self.hypo_count > self.total:
            raise ValueError("hypo_count exceeds total")
        return self

    @property
    def hypo_load(self) -> float:
        return self.hypo_count / self.total


class Tessellation(ArrayModel):
    """Radially equidistant bands around the posterior-most ROI pixel."""

    center: Tuple[int, int]
    delta_r: float = Field(gt=0.0)
    bands: List[np.ndarray]

    @property
    def band_count(self) -> int:
        return len(self.bands)

    @property
    def band_sizes(self) -> List[int]:
        return [len(band) for band in self.bands]


class ThresholdCandidate(BaseModel):
    """One point of the adaptive threshold sweep."""

    threshold: float
    tpr: float
    fpr: float
    accuracy: float
    true_positives: int
    false_positives: int

    @property
    def youden(self) -> float:
        return self.tpr - self.fpr


class ThresholdReport(BaseModel):
    """Adaptive sweep results and the selected threshold."""

    candidates: List[ThresholdCandidate]
    chosen_index: int

    @property
    def chosen(self) -> float:
        return self.candidates[self.chosen_index].threshold

    @property
    def chosen_candidate(self) -> ThresholdCandidate:
        return self.candidates[self.chosen_index]


class EigenModel(ArrayModel):
    """PCA model: mean row, eigenvectors as rows, descending eigenvalues."""

    mean: np.ndarray
    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    retained: int = Field(ge=0)
    degenerate: bool = False

    @model_validator(mode="after")
    def _check_shapes(self) -> "EigenModel":
        count = len(self.eigenvalues)
        if self.eigenvectors.shape != (count, len(self.mean)):
            raise ValueError(
                f"eigenvector block {self.eigenvectors.shape} does not match "
                f"{count} eigenvalues of length {len(self.mean)}"
            )
        if self.retained > count:
            raise ValueError("retained exceeds stored eigenvector count")
        if not self.degenerate and self.retained < 1:
            raise ValueError("non-degenerate model must retain a component")
        return self

    @property
    def length(self) -> int:
        return len(self.mean)

    @property
    def component_count(self) -> int:
        return len(self.eigenvalues)


class Projection(ArrayModel):
    """Eigenspace coefficients of one subject."""

    subject_id: str
    g: np.ndarray


class Ranking(BaseModel):
    """Subject ids ordered light to dark."""

    ordered_ids: List[str]

    @field_validator("ordered_ids")
    @classmethod
    def _no_duplicates(cls, ids: List[str]) -> List[str]:
        if len(set(ids)) != len(ids):
            raise ValueError("ranking contains duplicate ids")
        return ids

    def __len__(self) -> int:
        return len(self.ordered_ids)

    def position(self) -> Dict[str, int]:
        return {sid: i for i, sid in enumerate(self.ordered_ids)}


class NonbinaryResult(BaseModel):
    """Eigenspace distances to the darkest reference subject."""

    reference_id: str
    distances: Dict[str, float]
    ranking: Ranking


class Clustering(BaseModel):
    """Assignment of subject ids to darkness clusters."""

    assignment: Dict[str, ClusterLabel]

    @property
    def labels(self) -> List[ClusterLabel]:
        present = set(self.assignment.values())
        return [label for label in CLUSTER_ORDER if label in present]

    def members(self, label: ClusterLabel) -> List[str]:
        return [sid for sid, value in self.assignment.items() if value == label]

    def sizes(self) -> Dict[ClusterLabel, int]:
        return {label: len(self.members(label)) for label in self.labels}


class AccuracyResult(BaseModel):
    """Per-cluster overlap between a predicted and a ground-truth clustering."""

    labels: List[ClusterLabel]
    common: Dict[ClusterLabel, int]
    truth_sizes: Dict[ClusterLabel, int]
    accuracy: float

    def ratio(self, label: ClusterLabel) -> float:
        return self.common[label] / self.truth_sizes[label]


class CorrMatrix(ArrayModel):
    """Averaged Kendall tau between two feature sets."""

    row_labels: List[str]
    col_labels: List[str]
    values: np.ndarray
    flagged: List[Tuple[int, int]] = Field(default_factory=list)


class EllipseRoi(BaseModel):
    """Ellipse given as fractions of image height/width."""

    center_row: float = Field(gt=0.0, lt=1.0)
    center_col: float = Field(gt=0.0, lt=1.0)
    radius_row: float = Field(gt=0.0, lt=0.5)
    radius_col: float = Field(gt=0.0, lt=0.5)


class PhantomSpec(BaseModel):
    """Synthetic study parameters."""

    subject_count: int = Field(default=30, ge=2)
    width: int = Field(default=64, ge=16)
    height: int = Field(default=64, ge=16)
    left_roi: EllipseRoi = Field(
        default_factory=lambda: EllipseRoi(
            center_row=0.55, center_col=0.32, radius_row=0.2, radius_col=0.12
        )
    )
    right_roi: EllipseRoi = Field(
        default_factory=lambda: EllipseRoi(
            center_row=0.55, center_col=0.68, radius_row=0.2, radius_col=0.12
        )
    )
    base_intensity: float = Field(default=80.0, gt=0.0, le=255.0)
    dark_delta: float = Field(default=100.0, gt=0.0)
    rim_intensity: Optional[float] = Field(default=None, ge=0.0, le=255.0)
    noise_sigma: float = Field(default=10.0, ge=0.0)
    fraction_min: float = Field(default=0.0, ge=0.0, lt=1.0)
    fraction_max: float = Field(default=0.6, ge=0.0, lt=1.0)
    fractions: Optional[List[float]] = None
    seed: int = Field(default=42, ge=0)
    ordered: bool = False
    separable: bool = True

    @model_validator(mode="after")
    def _check_spec(self) -> "PhantomSpec":
        fractions = self.planted_fractions()
        if len(fractions) != self.subject_count:
            raise ValueError(
                f"{len(fractions)} fractions given for {self.subject_count} subjects"
            )
        if any(f < 0.0 or f >= 1.0 for f in fractions):
            raise ValueError("planted fractions must lie in [0, 1)")
        if any(b <= a for a, b in zip(fractions, fractions[1:])):
            raise ValueError("planted fractions must be strictly increasing")
        if self.separable and self.dark_delta <= 3 * self.noise_sigma:
            raise ValueError("dark_delta must exceed 3 * noise_sigma in separable mode")
        return self

    def planted_fractions(self) -> List[float]:
        if self.fractions is not None:
            return list(self.fractions)
        return [float(f) for f in np.linspace(
            self.fraction_min, self.fraction_max, self.subject_count
        )]

    @property
    def rim_level(self) -> float:
        if self.rim_intensity is not None:
            return self.rim_intensity
        return min(255.0, self.base_intensity + self.dark_delta / 2)


class RunConfig(BaseModel):
    """Resolved options of one CLI invocation."""

    manifest: Optional[str] = None
    hemisphere: Hemisphere = Hemisphere.WHOLE
    sampling: SamplingMethod = SamplingMethod.BALANCED
    seed: int = Field(default=42, ge=0)
    variance_fraction: float = Field(default=0.70, gt=0.0, le=1.0)
    threshold_mode: ThresholdMode = ThresholdMode.ADAPTIVE
    reference_rect: Optional[Tuple[int, int, int, int]] = None
    candidates: int = Field(default=101, ge=2)
    tessellation: int = Field(default=10, ge=1)
    row_normalization: RowNormalization = RowNormalization.NONE
    workers: int = Field(default=1, ge=1)
    output_dir: str = "results"
