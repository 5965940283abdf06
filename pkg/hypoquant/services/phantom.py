"""Synthetic studies with planted hypointense blobs and known ground truth."""

import logging
from collections import deque
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from hypoquant.domain.entities import (
    CLUSTER_ORDER,
    ClusterLabel,
    Clustering,
    EllipseRoi,
    PhantomSpec,
    Ranking,
)
from hypoquant.domain.exceptions import DataError
from hypoquant.infrastructure.manifest import ManifestEntry, save_manifest
from hypoquant.infrastructure.netpbm import save_pbm, save_pgm
from hypoquant.infrastructure.reports import write_csv
from hypoquant.services.sampling import fisher_yates_permutation
from hypoquant.workers.pool import map_ordered

logger = logging.getLogger(__name__)

HEAD_RADIUS = 0.47
RIM_START = 0.85  # squared normalized radius where the skull rim begins
MAX_SAMPLE = 255

_NEIGHBOURS = ((-1, 0), (1, 0), (0, -1), (0, 1))


class PhantomError(DataError):
    """Phantom specification cannot be realised."""


class PhantomStudy(BaseModel):
    """Files written for a phantom study and its planted truth."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    output_dir: Path
    manifest_path: Path
    planted_ranking: Ranking
    planted_clustering: Clustering
    fractions: Dict[str, float]


def _normalized_radius(shape: Tuple[int, int], center: Tuple[float, float],
                       radii: Tuple[float, float]) -> np.ndarray:
    rows, cols = np.indices(shape, dtype=np.float64)
    return ((rows - center[0]) / radii[0]) ** 2 + ((cols - center[1]) / radii[1]) ** 2


def head_regions(height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """Boolean grids of the head interior and its outer rim."""
    radius = _normalized_radius(
        (height, width),
        ((height - 1) / 2, (width - 1) / 2),
        (HEAD_RADIUS * height, HEAD_RADIUS * width),
    )
    head = radius <= 1.0
    rim = head & (radius > RIM_START)
    return head & ~rim, rim


def ellipse_mask(height: int, width: int, roi: EllipseRoi) -> np.ndarray:
    radius = _normalized_radius(
        (height, width),
        (roi.center_row * height, roi.center_col * width),
        (roi.radius_row * height, roi.radius_col * width),
    )
    return radius <= 1.0


def planted_count(fraction: float, roi_size: int) -> int:
    """round(f * |ROI|), halves rounded up."""
    return int(np.floor(fraction * roi_size + 0.5))


def grow_blob(mask: np.ndarray, seed: Tuple[int, int], count: int) -> np.ndarray:
    """Breadth-first region of `count` mask pixels starting at `seed`.

    Neighbours are visited up, down, left, right.
    """
    blob = np.zeros_like(mask, dtype=bool)
    if count == 0:
        return blob
    if not mask[seed]:
        raise PhantomError(f"blob seed {seed} lies outside the ROI")
    height, width = mask.shape
    visited = {seed}
    queue = deque([seed])
    taken = 0
    while queue and taken < count:
        row, col = queue.popleft()
        blob[row, col] = True
        taken += 1
        for dr, dc in _NEIGHBOURS:
            nxt = (row + dr, col + dc)
            if 0 <= nxt[0] < height and 0 <= nxt[1] < width and mask[nxt] and nxt not in visited:
                visited.add(nxt)
                queue.append(nxt)
    if taken < count:
        raise PhantomError(f"ROI region reachable from {seed} has only {taken} of {count} pixels")
    return blob


def _seed_point(height: int, width: int, roi: EllipseRoi) -> Tuple[int, int]:
    return (int(round(roi.center_row * height)), int(round(roi.center_col * width)))


def reference_rect(height: int, width: int) -> Tuple[int, int, int, int]:
    """Tissue rectangle above the ROIs, used as the default reference region."""
    return (
        int(round(0.16 * height)),
        int(round(0.44 * width)),
        max(1, int(round(0.11 * height))),
        max(1, int(round(0.14 * width))),
    )


def tercile_sizes(count: int) -> List[int]:
    """Light and mid get count // 3 each; dark takes the remainder."""
    third = count // 3
    return [third, third, count - 2 * third]


class PhantomGenerator:
    """Render and write phantom studies."""

    def __init__(self, spec: PhantomSpec, workers: int = 1):
        self.spec = spec
        self.workers = workers
        self.logger = logging.getLogger("services.phantom")
        h, w = spec.height, spec.width
        self.tissue, self.rim = head_regions(h, w)
        self.rois = {
            "left": ellipse_mask(h, w, spec.left_roi),
            "right": ellipse_mask(h, w, spec.right_roi),
        }
        self.seeds = {
            "left": _seed_point(h, w, spec.left_roi),
            "right": _seed_point(h, w, spec.right_roi),
        }
        if np.any(self.rois["left"] & self.rois["right"]):
            raise PhantomError("left and right ROI ellipses overlap")
        for side, roi in self.rois.items():
            if np.any(roi & ~self.tissue):
                raise PhantomError(f"{side} ROI ellipse leaves the head interior")

    def blob_counts(self, fraction: float) -> Dict[str, int]:
        """Split round(f * |ROI|) over the hemispheres; the right one takes the remainder."""
        left = int(np.count_nonzero(self.rois["left"]))
        right = int(np.count_nonzero(self.rois["right"]))
        total = planted_count(fraction, left + right)
        on_left = min(planted_count(fraction, left), total)
        return {"left": on_left, "right": total - on_left}

    def blob(self, fraction: float) -> np.ndarray:
        """Planted dark pixels for one fraction, one contiguous region per hemisphere."""
        grid = np.zeros((self.spec.height, self.spec.width), dtype=bool)
        for side, count in self.blob_counts(fraction).items():
            grid |= grow_blob(self.rois[side], self.seeds[side], count)
        return grid

    def render(self, index: int, fraction: float) -> np.ndarray:
        """Integer image of the planted subject `index`; noise stream keyed by (seed, index)."""
        spec = self.spec
        rng = np.random.default_rng([spec.seed, index])
        noise = rng.normal(0.0, spec.noise_sigma, size=(spec.height, spec.width))
        image = np.zeros((spec.height, spec.width), dtype=np.float64)
        image[self.rim] = spec.rim_level
        image[self.tissue] = spec.base_intensity + noise[self.tissue]
        dark = self.blob(fraction)
        image[dark] = spec.base_intensity - spec.dark_delta + noise[dark]
        return np.clip(np.rint(image), 0, MAX_SAMPLE)

    def generate(self, output_dir: Union[str, Path]) -> PhantomStudy:
        """
        Render every subject and write the study to disk.

        Args:
            output_dir: Directory receiving manifest.json, images/, masks/
                and planted.csv

        Returns:
            PhantomStudy with the planted ranking, tercile clustering and
            per-subject fractions
        """
        spec = self.spec
        out = Path(output_dir)
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "masks").mkdir(parents=True, exist_ok=True)

        fractions = spec.planted_fractions()
        count = spec.subject_count
        if spec.ordered:
            order = np.arange(count)
        else:
            order = fisher_yates_permutation(count, np.random.default_rng(spec.seed))
        # manifest position p holds planted subject order[p]
        ids = [f"sub-{p:03d}" for p in range(count)]
        planted_index = {ids[p]: int(order[p]) for p in range(count)}
        by_planted = {index: sid for sid, index in planted_index.items()}
        ranking = Ranking(ordered_ids=[by_planted[i] for i in range(count)])

        cluster_of: Dict[str, ClusterLabel] = {}
        start = 0
        for label, size in zip(CLUSTER_ORDER, tercile_sizes(count)):
            for sid in ranking.ordered_ids[start : start + size]:
                cluster_of[sid] = label
            start += size

        def write_subject(sid: str) -> ManifestEntry:
            index = planted_index[sid]
            save_pgm(out / "images" / f"{sid}.pgm", self.render(index, fractions[index]), 255)
            save_pbm(out / "masks" / f"{sid}_left.pbm", self.rois["left"])
            save_pbm(out / "masks" / f"{sid}_right.pbm", self.rois["right"])
            return ManifestEntry(
                id=sid,
                image=f"images/{sid}.pgm",
                roi_left=f"masks/{sid}_left.pbm",
                roi_right=f"masks/{sid}_right.pbm",
                label=cluster_of[sid],
            )

        entries = map_ordered(write_subject, ids, self.workers)
        manifest_path = out / "manifest.json"
        save_manifest(manifest_path, entries, reference_rect(spec.height, spec.width))
        write_csv(
            out / "planted.csv",
            ["id", "fraction", "planted_rank", "cluster"],
            [
                (sid, fractions[planted_index[sid]], planted_index[sid] + 1, cluster_of[sid])
                for sid in ids
            ],
        )
        self.logger.info(
            f"Wrote {count} phantom subjects to {out} "
            f"(fractions {fractions[0]:.3g}..{fractions[-1]:.3g}, seed {spec.seed})"
        )
        return PhantomStudy(
            output_dir=out,
            manifest_path=manifest_path,
            planted_ranking=ranking,
            planted_clustering=Clustering(assignment=cluster_of),
            fractions={sid: fractions[planted_index[sid]] for sid in ids},
        )


def generate(spec: PhantomSpec, output_dir: Union[str, Path], workers: int = 1) -> PhantomStudy:
    """Write manifest, PGM images, PBM masks and planted.csv under `output_dir`."""
    return PhantomGenerator(spec, workers).generate(output_dir)
