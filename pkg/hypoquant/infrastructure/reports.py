"""CSV result files and Jinja2 text reports."""

import csv
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np
from jinja2 import Environment, FileSystemLoader, StrictUndefined

from hypoquant.config import settings
from hypoquant.domain.entities import Ranking
from hypoquant.infrastructure.netpbm import DatasetIOError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TEMPLATE_DIR = Path(__file__).parent.parent / "templates"


def format_value(value: Any) -> str:
    """Render one CSV cell; floats use the configured significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if math.isnan(number):
            return "nan"
        text = format(number, settings.float_format)
        return "0" if text == "-0" else text
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write comma-separated rows with a header row and LF line endings."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    logger.debug(f"Wrote {out}")
    return out


def read_csv(path: PathLike) -> List[Dict[str, str]]:
    source = Path(path)
    if not source.is_file():
        raise DatasetIOError(f"CSV file not found: {source}")
    with open(source, encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def read_ranking_csv(path: PathLike, rank_column: str = "rank") -> Ranking:
    """Read a light-to-dark ranking from an `id` column, ordered by `rank_column`."""
    rows = read_csv(path)
    if not rows or "id" not in rows[0]:
        raise DatasetIOError(f"{path}: ranking CSV needs an 'id' column")
    if rank_column in rows[0]:
        try:
            rows = sorted(rows, key=lambda row: int(row[rank_column]))
        except ValueError as e:
            raise DatasetIOError(f"{path}: non-integer {rank_column}: {e}") from e
    try:
        return Ranking(ordered_ids=[row["id"] for row in rows])
    except ValueError as e:
        raise DatasetIOError(f"{path}: {e}") from e


def read_value_csv(path: PathLike, column: str) -> Dict[str, float]:
    """Read an `id` -> float mapping from a CSV column, preserving file order."""
    rows = read_csv(path)
    if not rows or "id" not in rows[0] or column not in rows[0]:
        raise DatasetIOError(f"{path}: expected columns 'id' and '{column}'")
    values: Dict[str, float] = {}
    for row in rows:
        try:
            values[row["id"]] = float(row[column])
        except ValueError as e:
            raise DatasetIOError(f"{path}: bad value for '{row['id']}': {e}") from e
    return values


_environment = Environment(
    loader=FileSystemLoader(str(TEMPLATE_DIR)),
    undefined=StrictUndefined,
    keep_trailing_newline=True,
    trim_blocks=True,
    lstrip_blocks=True,
)
_environment.filters["num"] = format_value


def render_report(template_name: str, **context: Any) -> str:
    """Render a text report template shipped with the package."""
    return _environment.get_template(template_name).render(**context)


def write_report(path: PathLike, template_name: str, **context: Any) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        f.write(render_report(template_name, **context))
    return out
