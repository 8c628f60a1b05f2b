"""Raster input/output.

Images are stored as a JSON header next to a raw little-endian band-sequential
payload::

    scene.json  {"rows": 400, "cols": 400, "bands": 6, "dtype": "f32", "layout": "bsq"}
    scene.bin   rows * cols * bands floats

Maps meant for viewing (intensity, masks, confusion colouring) are written as
8-bit PGM/PPM through Pillow.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Literal

import numpy as np
from numpy.typing import NDArray
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .core import (
    BinaryMask,
    DegenerateInputError,
    FloatArray,
    PixelMatrix,
    RasterFormatError,
    ShapeMismatchError,
    as_pixel_matrix,
)
from .evaluation import GroundTruth, Label

logger = logging.getLogger(__name__)

PAYLOAD_DTYPES: dict[str, str] = {"f32": "<f4", "f64": "<f8"}

# RGB legend of the confusion map
CONFUSION_COLOURS: dict[str, tuple[int, int, int]] = {
    "tn": (0, 255, 0),
    "tp": (255, 0, 0),
    "fn": (255, 255, 255),
    "fp": (128, 0, 128),
    "unsampled": (128, 128, 128),
}


class RasterHeader(BaseModel):
    """JSON sidecar describing a raster payload."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    rows: int = Field(..., ge=1, description="Image height in pixels")
    cols: int = Field(..., ge=1, description="Image width in pixels")
    bands: int = Field(..., ge=1, description="Number of spectral bands")
    dtype: Literal["f32", "f64"] = Field("f32", description="Payload sample type")
    layout: Literal["bsq"] = Field("bsq", description="Band-sequential layout")

    @property
    def sample_count(self) -> int:
        return self.rows * self.cols * self.bands

    @property
    def payload_bytes(self) -> int:
        return self.sample_count * np.dtype(PAYLOAD_DTYPES[self.dtype]).itemsize


class MultibandImage(BaseModel):
    """A rows x cols raster with ``bands`` values per pixel, band-sequential."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    rows: int = Field(..., ge=1, description="Image height in pixels")
    cols: int = Field(..., ge=1, description="Image width in pixels")
    bands: int = Field(..., ge=1, description="Number of spectral bands")
    values: NDArray[np.float64] = Field(..., description="Band-major, then row-major samples")

    @field_validator("values", mode="before")
    @classmethod
    def _coerce_values(cls, value: Any) -> NDArray[np.float64]:
        values = np.array(value, dtype=np.float64).reshape(-1)
        finite = np.isfinite(values)
        if not finite.all():
            bad = int(np.flatnonzero(~finite)[0])
            raise ValueError(f"non-finite value {values[bad]} at index {bad}")
        values.flags.writeable = False
        return values

    @model_validator(mode="after")
    def _check_length(self) -> MultibandImage:
        expected = self.rows * self.cols * self.bands
        if self.values.size != expected:
            raise ValueError(
                f"values length {self.values.size} != rows*cols*bands = {expected}"
            )
        return self

    @property
    def pixels(self) -> int:
        return self.rows * self.cols

    @property
    def cube(self) -> NDArray[np.float64]:
        """Read-only (bands, rows, cols) view."""
        return self.values.reshape(self.bands, self.rows, self.cols)

    def __repr__(self) -> str:
        return f"MultibandImage(rows={self.rows}, cols={self.cols}, bands={self.bands})"


class BandStats(BaseModel):
    """Per-band statistics used by z-score standardization."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    means: NDArray[np.float64] = Field(..., description="Per-band mean")
    stds: NDArray[np.float64] = Field(..., description="Per-band population standard deviation")
    degenerate: NDArray[np.bool_] = Field(..., description="Bands with zero spread, emitted as zeros")

    @model_validator(mode="after")
    def _check_stats(self) -> BandStats:
        if not (self.means.shape == self.stds.shape == self.degenerate.shape):
            raise ValueError("means, stds and degenerate flags must have equal length")
        if (self.stds < 0).any():
            raise ValueError("standard deviations must be non-negative")
        return self

    @property
    def degenerate_bands(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.degenerate)]


def _raster_paths(path: str | Path) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix in (".json", ".bin"):
        path = path.with_suffix("")
    return path.with_name(path.name + ".json"), path.with_name(path.name + ".bin")


def load_image(path: str | Path) -> MultibandImage:
    """Load a raster from its header (``.json``), payload (``.bin``) or stem path.

    Raises:
        RasterFormatError: Missing files, malformed header, size mismatch or
            non-finite samples (the message names the offending index)
    """
    header_path, payload_path = _raster_paths(path)
    for required in (header_path, payload_path):
        if not required.is_file():
            raise RasterFormatError(f"raster file not found: {required}", context={"path": str(required)})

    try:
        header = RasterHeader.model_validate(json.loads(header_path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, ValidationError) as e:
        raise RasterFormatError(f"invalid raster header {header_path}: {e}") from e

    payload = payload_path.read_bytes()
    if len(payload) != header.payload_bytes:
        raise RasterFormatError(
            f"payload {payload_path} has {len(payload)} bytes, header expects {header.payload_bytes}",
            context={"expected": header.payload_bytes, "actual": len(payload)},
        )

    samples = np.frombuffer(payload, dtype=PAYLOAD_DTYPES[header.dtype]).astype(np.float64)
    finite = np.isfinite(samples)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise RasterFormatError(
            f"non-finite value {samples[bad]} at index {bad} in {payload_path}", context={"index": bad}
        )

    image = MultibandImage(rows=header.rows, cols=header.cols, bands=header.bands, values=samples)
    logger.debug("Loaded %r from %s (%s)", image, payload_path, header.dtype)
    return image


def save_image(image: MultibandImage, path: str | Path) -> Path:
    """Write header and payload, creating parent directories.

    Samples are stored as 32-bit floats when that is lossless and as 64-bit
    floats otherwise. Returns the header path.
    """
    header_path, payload_path = _raster_paths(path)
    header_path.parent.mkdir(parents=True, exist_ok=True)

    as_f32 = image.values.astype(np.float32)
    dtype = "f32" if np.array_equal(as_f32.astype(np.float64), image.values) else "f64"
    header = RasterHeader(rows=image.rows, cols=image.cols, bands=image.bands, dtype=dtype)

    payload_path.write_bytes(image.values.astype(PAYLOAD_DTYPES[dtype]).tobytes())
    header_path.write_text(json.dumps(header.model_dump(), indent=2) + "\n", encoding="utf-8")
    logger.debug("Saved %r to %s (%s)", image, payload_path, dtype)
    return header_path


def flatten(image: MultibandImage) -> PixelMatrix:
    """Bands x pixels matrix; column j is pixel j in row-major order."""
    return image.values.reshape(image.bands, image.pixels).copy()


def unflatten(X: PixelMatrix, rows: int, cols: int) -> MultibandImage:
    """Inverse of :func:`flatten`."""
    matrix = as_pixel_matrix(X, "X")
    if matrix.shape[1] != rows * cols:
        raise ShapeMismatchError(f"{matrix.shape[1]} pixels cannot fill a {rows}x{cols} image")
    return MultibandImage(rows=rows, cols=cols, bands=matrix.shape[0], values=matrix.reshape(-1))


def zscore_standardize(X: PixelMatrix) -> tuple[PixelMatrix, BandStats]:
    """Standardize each band to zero mean and unit population std.

    Bands with zero spread come out as zeros and are flagged in the returned
    stats.

    Raises:
        DegenerateInputError: With fewer than two pixels
    """
    matrix = as_pixel_matrix(X, "X")
    if matrix.shape[1] < 2:
        raise DegenerateInputError(f"z-score needs at least 2 pixels, got {matrix.shape[1]}")

    means = matrix.mean(axis=1)
    stds = matrix.std(axis=1)
    degenerate = stds <= 1e-12 * np.maximum(1.0, np.abs(means))
    if degenerate.any():
        logger.warning("Constant bands %s standardized to zeros", np.flatnonzero(degenerate).tolist())

    scale = np.where(degenerate, 1.0, stds)
    standardized = (matrix - means[:, None]) / scale[:, None]
    standardized[degenerate] = 0.0
    return standardized, BandStats(means=means, stds=stds, degenerate=degenerate)


def to_gray_levels(values: FloatArray) -> NDArray[np.uint8]:
    """Min-max scale to 0..255 with round-half-up; constant input maps to 0."""
    values = np.asarray(values, dtype=np.float64)
    if not np.isfinite(values).all():
        raise DegenerateInputError("gray map values must be finite")
    low, high = float(values.min()), float(values.max())
    if high == low:
        return np.zeros(values.shape, dtype=np.uint8)
    scaled = (values - low) / (high - low)
    return np.floor(scaled * 255.0 + 0.5).astype(np.uint8)


def save_gray_map(values: FloatArray, rows: int, cols: int, path: str | Path) -> Path:
    """Write an 8-bit binary PGM (P5) of a per-pixel map."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size != rows * cols:
        raise ShapeMismatchError(f"{values.size} values cannot fill a {rows}x{cols} map")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_gray_levels(values).reshape(rows, cols)).save(path, format="PPM")
    return path


def load_gray_map(path: str | Path) -> NDArray[np.uint8]:
    """Read a PGM/PPM written by this module as a uint8 array."""
    with Image.open(path) as img:
        return np.array(img, dtype=np.uint8)


def save_confusion_map(
    pred: BinaryMask, gt: GroundTruth, rows: int, cols: int, path: str | Path
) -> Path:
    """Write an RGB PPM colouring each pixel by its confusion outcome."""
    pred = np.asarray(pred, dtype=bool).reshape(-1)
    if pred.size != rows * cols or gt.size != rows * cols:
        raise ShapeMismatchError(
            f"prediction ({pred.size}) and ground truth ({gt.size}) must cover {rows}x{cols} pixels"
        )
    rgb = np.empty((rows * cols, 3), dtype=np.uint8)
    rgb[:] = CONFUSION_COLOURS["unsampled"]
    rgb[gt.unchanged & ~pred] = CONFUSION_COLOURS["tn"]
    rgb[gt.changed & pred] = CONFUSION_COLOURS["tp"]
    rgb[gt.changed & ~pred] = CONFUSION_COLOURS["fn"]
    rgb[gt.unchanged & pred] = CONFUSION_COLOURS["fp"]

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(rgb.reshape(rows, cols, 3)).save(path, format="PPM")
    return path


def load_ground_truth(path: str | Path) -> tuple[GroundTruth, int, int]:
    """Load a single-band label raster (0 unsampled, 1 unchanged, 2 changed).

    Returns:
        The labels together with the raster's rows and cols
    """
    image = load_image(path)
    if image.bands != 1:
        raise RasterFormatError(f"ground truth must have one band, got {image.bands}")
    codes = image.values
    valid = np.isin(codes, [label.value for label in Label])
    if not valid.all():
        bad = int(np.flatnonzero(~valid)[0])
        raise RasterFormatError(
            f"ground truth value {codes[bad]} at index {bad} is not 0, 1 or 2", context={"index": bad}
        )
    return GroundTruth(labels=codes.astype(np.uint8)), image.rows, image.cols


def save_ground_truth(gt: GroundTruth, rows: int, cols: int, path: str | Path) -> Path:
    """Write labels as a one-band raster that ``load_ground_truth`` reads back."""
    if gt.size != rows * cols:
        raise ShapeMismatchError(f"{gt.size} labels cannot fill a {rows}x{cols} raster")
    image = MultibandImage(rows=rows, cols=cols, bands=1, values=gt.labels.astype(np.float64))
    return save_image(image, path)
