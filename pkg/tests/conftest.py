"""Shared fixtures: tiny hand-built inputs and a generated phantom study."""

import json
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pytest

from hypoquant.domain.entities import Hemisphere, PhantomSpec, RoiMask
from hypoquant.infrastructure.netpbm import save_pbm, save_pgm
from hypoquant.services import phantom


def mask_from(grid) -> RoiMask:
    cells = np.asarray(grid, dtype=bool)
    return RoiMask(
        width=cells.shape[1], height=cells.shape[0], hemisphere=Hemisphere.WHOLE, grid=cells
    )


def write_study(
    root: Path,
    subjects: List[Dict[str, object]],
    reference_rect: Optional[List[int]] = None,
    shape=(4, 4),
) -> Path:
    """Write a small manifest; each subject dict may override image/mask/label."""
    (root / "img").mkdir(parents=True, exist_ok=True)
    height, width = shape
    left = np.zeros(shape, dtype=bool)
    left[:, : width // 2] = True
    right = ~left
    records = []
    for index, subject in enumerate(subjects):
        sid = str(subject["id"])
        name = f"{sid}_{index}"
        pixels = subject.get("pixels")
        if pixels is None:
            pixels = np.arange(height * width).reshape(shape) + 10 * index
        save_pgm(root / "img" / f"{name}.pgm", np.asarray(pixels))
        save_pbm(root / "img" / f"{name}_l.pbm", subject.get("left", left))
        save_pbm(root / "img" / f"{name}_r.pbm", subject.get("right", right))
        record = {
            "id": sid,
            "image": f"img/{name}.pgm",
            "roi_left": f"img/{name}_l.pbm",
            "roi_right": f"img/{name}_r.pbm",
        }
        if subject.get("label") is not None:
            record["label"] = subject["label"]
        records.append(record)
    document: Dict[str, object] = {"subjects": records}
    if reference_rect is not None:
        document["reference_rect"] = reference_rect
    path = root / "manifest.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


@pytest.fixture
def study_writer(tmp_path):
    def _write(subjects, reference_rect=None, shape=(4, 4)):
        return write_study(tmp_path, subjects, reference_rect, shape)

    return _write


@pytest.fixture(scope="session")
def phantom_study(tmp_path_factory):
    """The 30-subject 64x64 separable phantom, noise sigma = dark delta / 10, seed 42."""
    spec = PhantomSpec(
        subject_count=30,
        width=64,
        height=64,
        fraction_min=0.0,
        fraction_max=0.6,
        dark_delta=100.0,
        noise_sigma=10.0,
        seed=42,
    )
    return phantom.generate(spec, tmp_path_factory.mktemp("phantom"))
