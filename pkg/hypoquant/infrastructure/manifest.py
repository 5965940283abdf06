"""JSON dataset manifest: subject ids, image and mask paths, optional labels."""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator

from hypoquant.domain.entities import (
    ClusterLabel,
    Dataset,
    Hemisphere,
    RoiMask,
    Subject,
)
from hypoquant.infrastructure.netpbm import DatasetIOError, load_mask, load_pgm
from hypoquant.workers.pool import map_ordered

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ManifestError(DatasetIOError):
    """Manifest or one of its subjects cannot be loaded."""

    def __init__(self, message: str, subject_id: Optional[str] = None):
        self.subject_id = subject_id
        prefix = f"subject '{subject_id}': " if subject_id else ""
        super().__init__(f"{prefix}{message}", {"subject_id": subject_id})


class ManifestEntry(BaseModel):
    """One subject record as written in the manifest."""

    id: str = Field(min_length=1)
    image: str
    roi_left: str
    roi_right: str
    label: Optional[ClusterLabel] = None


class Manifest(BaseModel):
    subjects: List[ManifestEntry] = Field(min_length=1)
    reference_rect: Optional[Tuple[int, int, int, int]] = None

    @field_validator("reference_rect")
    @classmethod
    def _positive_area(
        cls, rect: Optional[Tuple[int, int, int, int]]
    ) -> Optional[Tuple[int, int, int, int]]:
        if rect is not None and (rect[2] < 1 or rect[3] < 1):
            raise ValueError("reference_rect needs rows >= 1 and cols >= 1")
        return rect


def _subject_id_of(raw: Any, index: int) -> str:
    if isinstance(raw, dict) and isinstance(raw.get("id"), str) and raw["id"]:
        return str(raw["id"])
    return f"#{index}"


def _parse_manifest(document: Any) -> Manifest:
    if not isinstance(document, dict) or not isinstance(document.get("subjects"), list):
        raise ManifestError("manifest must be an object with a 'subjects' list")
    entries: List[ManifestEntry] = []
    for index, raw in enumerate(document["subjects"]):
        try:
            entries.append(ManifestEntry.model_validate(raw))
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
            )
            raise ManifestError(problems, _subject_id_of(raw, index)) from e
    seen = set()
    for entry in entries:
        if entry.id in seen:
            raise ManifestError("duplicate subject id", entry.id)
        seen.add(entry.id)
    try:
        return Manifest(subjects=entries, reference_rect=document.get("reference_rect"))
    except ValidationError as e:
        raise ManifestError(f"invalid manifest: {e.errors()[0]['msg']}") from e


def _load_subject(entry: ManifestEntry, root: Path) -> Subject:
    def resolve(name: str) -> Path:
        path = root / name
        if not path.is_file():
            raise ManifestError(f"missing file {name}", entry.id)
        return path

    try:
        image = load_pgm(resolve(entry.image))
        left = load_mask(resolve(entry.roi_left), image, Hemisphere.LEFT)
        right = load_mask(resolve(entry.roi_right), image, Hemisphere.RIGHT)
    except ManifestError:
        raise
    except DatasetIOError as e:
        raise ManifestError(e.message, entry.id) from e

    overlap = int(np.count_nonzero(left.grid & right.grid))
    if overlap:
        raise ManifestError(f"left and right masks share {overlap} pixels", entry.id)
    whole = RoiMask(
        width=image.width,
        height=image.height,
        hemisphere=Hemisphere.WHOLE,
        grid=left.grid | right.grid,
    )
    return Subject(
        id=entry.id,
        image=image,
        masks={Hemisphere.LEFT: left, Hemisphere.RIGHT: right, Hemisphere.WHOLE: whole},
        label=entry.label,
    )


def load_manifest(path: PathLike, workers: int = 1) -> Dataset:
    """Load every subject referenced by a manifest, preserving manifest order."""
    manifest_path = Path(path)
    if not manifest_path.is_file():
        raise ManifestError(f"manifest not found: {manifest_path}")
    try:
        document = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ManifestError(f"invalid JSON in {manifest_path}: {e}") from e

    manifest = _parse_manifest(document)
    root = manifest_path.parent
    subjects = map_ordered(
        lambda entry: _load_subject(entry, root), manifest.subjects, workers
    )
    dataset = Dataset(subjects=subjects, reference_rect=manifest.reference_rect)
    logger.info(
        f"Loaded {len(dataset)} subjects from {manifest_path} "
        f"(labeled: {dataset.is_labeled})"
    )
    return dataset


def save_manifest(
    path: PathLike,
    entries: List[ManifestEntry],
    reference_rect: Optional[Tuple[int, int, int, int]] = None,
) -> None:
    """Write a manifest with stable key order and LF line endings."""
    document: Dict[str, Any] = {
        "subjects": [entry.model_dump(mode="json", exclude_none=True) for entry in entries]
    }
    if reference_rect is not None:
        document["reference_rect"] = list(reference_rect)
    Path(path).write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
