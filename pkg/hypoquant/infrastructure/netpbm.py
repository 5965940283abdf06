"""Binary Netpbm codec: PGM (P5) images, PBM (P4) / PGM masks and PPM (P6) heat maps."""

import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from hypoquant.domain.entities import GrayImage, Hemisphere, RoiMask
from hypoquant.domain.exceptions import DataError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_WHITESPACE = b" \t\n\r\x0b\x0c"


class DatasetIOError(DataError):
    """Base exception for dataset loading and writing errors."""


class PGMFormatError(DatasetIOError):
    """Malformed or unsupported Netpbm file."""

    def __init__(self, message: str, offset: int, path: str = ""):
        self.offset = offset
        self.path = path
        where = f"{path}: " if path else ""
        super().__init__(
            f"{where}{message} at byte offset {offset}",
            {"offset": offset, "path": path},
        )


class DimensionMismatchError(DatasetIOError):
    """Mask and image grids differ in size."""

    def __init__(self, expected: Tuple[int, int], actual: Tuple[int, int], path: str = ""):
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"mask {actual[1]}x{actual[0]} does not match image "
            f"{expected[1]}x{expected[0]}" + (f" ({path})" if path else ""),
            {"expected": expected, "actual": actual, "path": path},
        )


class EmptyRoiError(DatasetIOError):
    """Mask has no member pixels."""


def _parse_header(data: bytes, fields: int, path: str) -> Tuple[List[int], int]:
    """Read `fields` decimal header tokens after the magic number.

    Returns the values and the offset of the first payload byte.
    """
    pos = 2
    values: List[int] = []
    while len(values) < fields:
        while pos < len(data) and (data[pos] in _WHITESPACE or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < len(data) and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        if pos >= len(data):
            raise PGMFormatError("truncated header", pos, path)
        start = pos
        while pos < len(data) and data[pos] in b"0123456789":
            pos += 1
        if pos == start:
            raise PGMFormatError(f"unexpected byte {data[pos]!r} in header", pos, path)
        values.append(int(data[start:pos]))
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise PGMFormatError("missing whitespace after header", pos, path)
    return values, pos + 1


def _read_magic(data: bytes, path: str, allowed: Tuple[bytes, ...]) -> bytes:
    if len(data) < 2:
        raise PGMFormatError("file too short for magic number", 0, path)
    magic = data[:2]
    if magic not in allowed:
        raise PGMFormatError(
            f"unsupported magic {magic.decode('latin-1')!r}, expected "
            + " or ".join(m.decode() for m in allowed),
            0,
            path,
        )
    return magic


def _decode_graymap(data: bytes, path: str) -> np.ndarray:
    (width, height, maxval), offset = _parse_header(data, 3, path)
    if width < 1 or height < 1:
        raise PGMFormatError(f"invalid dimensions {width}x{height}", 3, path)
    if not 1 <= maxval <= 65535:
        raise PGMFormatError(f"invalid maxval {maxval}", offset - 1, path)
    sample_bytes = 1 if maxval < 256 else 2
    needed = width * height * sample_bytes
    if len(data) - offset < needed:
        raise PGMFormatError(
            f"truncated payload: {len(data) - offset} of {needed} bytes",
            len(data),
            path,
        )
    dtype = np.uint8 if sample_bytes == 1 else np.dtype(">u2")
    samples = np.frombuffer(data, dtype=dtype, count=width * height, offset=offset)
    if samples.size and int(samples.max()) > maxval:
        bad = int(np.argmax(samples > maxval))
        raise PGMFormatError(
            f"sample exceeds maxval {maxval}", offset + bad * sample_bytes, path
        )
    return samples.reshape(height, width)


def _decode_bitmap(data: bytes, path: str) -> np.ndarray:
    (width, height), offset = _parse_header(data, 2, path)
    if width < 1 or height < 1:
        raise PGMFormatError(f"invalid dimensions {width}x{height}", 3, path)
    row_bytes = (width + 7) // 8
    needed = row_bytes * height
    if len(data) - offset < needed:
        raise PGMFormatError(
            f"truncated payload: {len(data) - offset} of {needed} bytes",
            len(data),
            path,
        )
    packed = np.frombuffer(data, dtype=np.uint8, count=needed, offset=offset)
    bits = np.unpackbits(packed.reshape(height, row_bytes), axis=1)
    return bits[:, :width].astype(bool)


def load_pgm(path: PathLike) -> GrayImage:
    """Load a binary PGM (P5) image, 8 or 16 bit big-endian."""
    name = str(path)
    data = Path(path).read_bytes()
    _read_magic(data, name, (b"P5",))
    samples = _decode_graymap(data, name)
    logger.debug(f"Loaded {name}: {samples.shape[1]}x{samples.shape[0]}")
    return GrayImage.from_array(samples.astype(np.float64))


def load_mask(
    path: PathLike, image: GrayImage, hemisphere: Hemisphere = Hemisphere.WHOLE
) -> RoiMask:
    """Load a PGM or PBM mask; nonzero samples are ROI members."""
    name = str(path)
    data = Path(path).read_bytes()
    magic = _read_magic(data, name, (b"P5", b"P4"))
    grid = _decode_bitmap(data, name) if magic == b"P4" else _decode_graymap(data, name) != 0
    if grid.shape != image.shape:
        raise DimensionMismatchError(image.shape, grid.shape, name)
    if not grid.any():
        raise EmptyRoiError(f"{name}: mask has no member pixels", {"path": name})
    return RoiMask(
        width=image.width, height=image.height, hemisphere=hemisphere, grid=grid
    )


def save_pgm(path: PathLike, image: Union[GrayImage, np.ndarray], maxval: int = 0) -> None:
    """Write a binary PGM; maxval defaults to 255 or 65535 by sample range."""
    pixels = image.pixels if isinstance(image, GrayImage) else np.asarray(image)
    if pixels.ndim != 2:
        raise DatasetIOError(f"expected a 2D image, got shape {pixels.shape}")
    if not np.all(np.isfinite(pixels)) or np.any(pixels != np.round(pixels)):
        raise DatasetIOError("PGM samples must be integers")
    low, high = float(pixels.min()), float(pixels.max())
    if maxval == 0:
        maxval = 255 if high <= 255 else 65535
    if low < 0 or high > maxval or maxval > 65535:
        raise DatasetIOError(f"samples [{low:g}, {high:g}] outside [0, {maxval}]")
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    height, width = pixels.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + pixels.astype(dtype).tobytes())


def save_pbm(path: PathLike, grid: np.ndarray) -> None:
    """Write a boolean grid as a binary PBM (P4); 1 bits are members."""
    bits = np.asarray(grid, dtype=bool)
    height, width = bits.shape
    packed = np.packbits(bits.astype(np.uint8), axis=1)
    header = f"P4\n{width} {height}\n".encode("ascii")
    Path(path).write_bytes(header + packed.tobytes())


def save_ppm(path: PathLike, rgb: np.ndarray) -> None:
    """Write an (h, w, 3) uint8 array as a binary PPM (P6)."""
    pixels = np.asarray(rgb)
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise DatasetIOError(f"expected (h, w, 3) uint8 pixels, got {pixels.shape}")
    height, width = pixels.shape[:2]
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + pixels.tobytes())
