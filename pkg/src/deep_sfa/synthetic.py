"""Synthetic bi-temporal scenes with planted changes.

The first date is a smooth multiband field built from a few low-frequency
cosines mixed across bands. The second date repeats it with additive noise,
and every rectangular change blob gets its own spectral shift. A non-zero
``spectral_drift`` also leaks a little of every band into the others on the
second date, so unchanged pixels differ between dates the way they do under
uncalibrated sensors or changed illumination.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .config import SynthConfig
from .core import BinaryMask, FloatArray, SynthesisError
from .evaluation import GroundTruth
from .raster_io import MultibandImage, save_ground_truth, save_image

logger = logging.getLogger(__name__)


def _smooth_field(config: SynthConfig, rng: np.random.Generator) -> FloatArray:
    rows = np.arange(config.rows)[:, None] / config.rows
    cols = np.arange(config.cols)[None, :] / config.cols
    bases = np.stack(
        [
            np.cos(2.0 * np.pi * (fy * rows + fx * cols) + phase)
            for fy, fx, phase in zip(
                rng.uniform(0.5, 3.0, config.field_components),
                rng.uniform(0.5, 3.0, config.field_components),
                rng.uniform(0.0, 2.0 * np.pi, config.field_components),
            )
        ]
    )
    mixing = rng.normal(size=(config.bands, config.field_components))
    offsets = rng.uniform(-1.0, 1.0, config.bands)
    field = np.tensordot(mixing, bases, axes=1) + offsets[:, None, None]
    return field


def _plant_blobs(config: SynthConfig, rng: np.random.Generator) -> tuple[BinaryMask, list[tuple[slice, slice]]]:
    """Non-overlapping rectangles covering about ``change_fraction`` of the scene.

    A leftover smaller than half a typical blob is not planted.
    """
    pixels = config.rows * config.cols
    target = max(1, round(config.change_fraction * pixels))
    typical = max(4, target // 4)
    changed = np.zeros((config.rows, config.cols), dtype=bool)
    blobs: list[tuple[slice, slice]] = []
    failures = 0

    while (covered := int(changed.sum())) < target:
        if blobs and target - covered < typical // 2:
            break
        area = min(target - covered, typical)
        aspect = rng.uniform(0.5, 2.0)
        height = int(np.clip(round(np.sqrt(area * aspect)), 1, config.rows))
        width = int(np.clip(round(area / height), 1, config.cols))
        top = int(rng.integers(0, config.rows - height + 1))
        left = int(rng.integers(0, config.cols - width + 1))
        window = (slice(top, top + height), slice(left, left + width))
        if changed[window].any():
            failures += 1
            if failures > config.max_attempts:
                raise SynthesisError(
                    f"could not place change blobs after {config.max_attempts} attempts "
                    f"({covered}/{target} pixels covered)",
                    context={"covered": covered, "target": target},
                )
            continue
        changed[window] = True
        blobs.append(window)
    return changed, blobs


def generate_scene(config: SynthConfig) -> tuple[MultibandImage, MultibandImage, GroundTruth]:
    """Build both dates and the fully sampled ground truth.

    Raises:
        SynthesisError: If blob placement exhausts its retry budget
    """
    rng = np.random.default_rng(config.seed)
    first = _smooth_field(config, rng)
    changed, blobs = _plant_blobs(config, rng)

    second = first.copy()
    for rows, cols in blobs:
        direction = rng.normal(size=config.bands)
        direction *= config.shift_magnitude / np.linalg.norm(direction)
        second[:, rows, cols] += direction[:, None, None]
    if config.noise_std > 0:
        second += rng.normal(scale=config.noise_std, size=second.shape)
    if config.band_noise is not None:
        band_std = np.asarray(config.band_noise)[:, None, None]
        second += band_std * rng.normal(size=second.shape)
    if config.spectral_drift > 0:
        drift = rng.normal(scale=1.0 / np.sqrt(config.bands), size=(config.bands, config.bands))
        second += config.spectral_drift * np.tensordot(drift, first, axes=1)

    realized = changed.mean()
    logger.info(
        "Synthesized %dx%dx%d scene: %d blobs, changed fraction %.4f (target %.4f)",
        config.rows, config.cols, config.bands, len(blobs), realized, config.change_fraction,
    )
    shape = {"rows": config.rows, "cols": config.cols, "bands": config.bands}
    return (
        MultibandImage(**shape, values=first.reshape(-1)),
        MultibandImage(**shape, values=second.reshape(-1)),
        GroundTruth.from_masks(changed.reshape(-1)),
    )


def synth_generate(
    rows: int,
    cols: int,
    bands: int,
    change_fraction: float,
    noise_std: float,
    seed: int,
    *,
    shift_magnitude: float = 1.0,
    band_noise: tuple[float, ...] | None = None,
    field_components: int = 6,
    spectral_drift: float = 0.0,
) -> tuple[MultibandImage, MultibandImage, GroundTruth]:
    config = SynthConfig(
        rows=rows,
        cols=cols,
        bands=bands,
        change_fraction=change_fraction,
        noise_std=noise_std,
        seed=seed,
        shift_magnitude=shift_magnitude,
        band_noise=band_noise,
        field_components=field_components,
        spectral_drift=spectral_drift,
    )
    return generate_scene(config)


def write_scene(config: SynthConfig, out_dir: str | Path) -> dict[str, Path]:
    """Generate a scene and store ``t1``, ``t2`` and ``gt`` rasters in ``out_dir``."""
    out = Path(out_dir)
    first, second, gt = generate_scene(config)
    paths = {
        "t1": save_image(first, out / "t1"),
        "t2": save_image(second, out / "t2"),
        "gt": save_ground_truth(gt, config.rows, config.cols, out / "gt"),
    }
    (out / "synth.json").write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return paths
