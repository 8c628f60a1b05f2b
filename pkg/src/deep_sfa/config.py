"""Configuration models and enumerations for deep_sfa."""

from __future__ import annotations

import json
import re
from enum import Enum
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

PRESET_PATTERN = re.compile(r"^DSFA-(?P<width>\d+)-(?P<depth>\d+)$")
PRESETS = ("DSFA-64-2", "DSFA-128-2", "DSFA-256-2")
DEFAULT_PRESET = "DSFA-128-2"


class Activation(str, Enum):
    """Nonlinearity applied after every layer, output layer included."""
    TANH = "tanh"
    SIGMOID = "sigmoid"


class Method(str, Enum):
    """Change-detection methods."""
    CVA = "cva"
    PCA = "pca"
    USFA = "usfa"
    ISFA = "isfa"
    DSFA = "dsfa"


class ThresholdMethod(str, Enum):
    """How the intensity map is turned into a binary change mask."""
    OTSU = "otsu"
    KMEANS = "kmeans"
    BEST = "best"


class SamplingStrategy(str, Enum):
    """Where DSFA training pairs are drawn from."""
    CVA = "cva"
    GROUND_TRUTH = "ground_truth"
    RANDOM = "random"
    NEGATIVE = "negative"

    @property
    def needs_labels(self) -> bool:
        return self in (SamplingStrategy.GROUND_TRUTH, SamplingStrategy.NEGATIVE)


class Criterion(str, Enum):
    """Metric maximized by the exhaustive threshold search."""
    OA = "oa"
    KAPPA = "kappa"
    F1 = "f1"


class TrainConfig(BaseModel):
    """Network architecture and gradient-descent settings for one DSFA training run."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    hidden_sizes: tuple[int, ...] = Field((128, 128), description="Hidden layer widths h1..hl")
    out_dim: int | None = Field(None, ge=1, description="Output feature count o; None means the input band count")
    learning_rate: float = Field(1e-4, ge=0.0, description="Fixed gradient-descent step size")
    max_epochs: int = Field(2000, ge=1, description="Number of full-batch updates")
    reg_r: float = Field(1e-4, gt=0.0, description="Covariance regularization constant r")
    seed: int = Field(0, description="Seed for weight initialization")
    activation: Activation = Field(Activation.TANH, description="Activation function")
    log_every: int = Field(100, ge=1, description="Epoch interval for debug progress logging")

    @field_validator("hidden_sizes")
    @classmethod
    def _positive_widths(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if any(width < 1 for width in value):
            raise ValueError(f"hidden sizes must be positive, got {value}")
        return value

    @classmethod
    def from_preset(cls, name: str, **overrides: Any) -> TrainConfig:
        """Build a config from a ``DSFA-<width>-<depth>`` architecture name.

        Args:
            name: Preset name such as ``DSFA-128-2`` (two hidden layers of 128 nodes)
            **overrides: Any other TrainConfig field

        Raises:
            ValueError: If the name does not follow the preset pattern
        """
        match = PRESET_PATTERN.match(name.strip())
        if match is None:
            raise ValueError(f"Unknown architecture preset '{name}'; expected e.g. {', '.join(PRESETS)}")
        width, depth = int(match["width"]), int(match["depth"])
        return cls(hidden_sizes=(width,) * depth, **overrides)

    def resolved_out_dim(self, input_dim: int) -> int:
        return self.out_dim if self.out_dim is not None else input_dim

    @property
    def architecture(self) -> str:
        widths = set(self.hidden_sizes)
        if len(widths) == 1:
            return f"DSFA-{self.hidden_sizes[0]}-{len(self.hidden_sizes)}"
        return "DSFA-" + "x".join(str(w) for w in self.hidden_sizes)


class PipelineConfig(BaseModel):
    """Everything one detection run needs.

    Paths are kept as given; the pipeline resolves them when loading. The
    training config only matters for the ``dsfa`` method, and ``runs`` above
    one is only accepted for ``dsfa`` since the other methods are deterministic.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    method: Method = Field(Method.DSFA, description="Change-detection method")
    t1: Path = Field(..., description="Raster header of the first date")
    t2: Path = Field(..., description="Raster header of the second date")
    ground_truth: Path | None = Field(None, description="Optional tri-state ground-truth raster")
    output_dir: Path = Field(Path("out"), description="Directory receiving all outputs")
    train: TrainConfig = Field(default_factory=TrainConfig, description="DSFA training settings")
    sample_count: int = Field(4000, ge=2, description="Training pairs drawn for DSFA")
    strategy: SamplingStrategy = Field(SamplingStrategy.CVA, description="Training sample selection strategy")
    threshold: ThresholdMethod = Field(ThresholdMethod.OTSU, description="Thresholding algorithm")
    criterion: Criterion = Field(Criterion.KAPPA, description="Criterion for the best-threshold search")
    runs: int = Field(1, ge=1, description="Independent DSFA runs whose intensities are summed")
    seed: int = Field(0, description="Base seed; run i uses seed + i")
    pca_components: int | None = Field(None, ge=1, description="PCA components; None keeps all bands")
    isfa_max_iter: int = Field(50, ge=1, description="ISFA iteration cap")
    isfa_tol: float = Field(1e-6, gt=0.0, description="ISFA weight-change tolerance")
    write_report: bool = Field(True, description="Render the Markdown run report")
    save_params: bool = Field(False, description="Checkpoint trained DSFA parameters under output_dir/params")

    @model_validator(mode="after")
    def _check_consistency(self) -> PipelineConfig:
        if self.t1 == self.t2:
            raise ValueError("t1 and t2 must be distinct images")
        if self.runs > 1 and self.method is not Method.DSFA:
            raise ValueError(f"runs > 1 requires method 'dsfa', got '{self.method.value}'")
        if self.strategy.needs_labels and self.method is Method.DSFA and self.ground_truth is None:
            raise ValueError(f"strategy '{self.strategy.value}' needs ground truth")
        if self.threshold is ThresholdMethod.BEST and self.ground_truth is None:
            raise ValueError("threshold 'best' needs ground truth")
        return self

    @classmethod
    def from_json(cls, path: str | Path, **overrides: Any) -> PipelineConfig:
        """Load a config file; keyword overrides win over file values."""
        data: dict[str, Any] = json.loads(Path(path).read_text(encoding="utf-8"))
        train_overrides = overrides.pop("train", None)
        if train_overrides:
            data["train"] = {**data.get("train", {}), **train_overrides}
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.model_validate(data)


class SynthConfig(BaseModel):
    """Parameters of a synthetic bi-temporal scene with planted changes."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    rows: int = Field(64, ge=2, description="Scene height")
    cols: int = Field(64, ge=2, description="Scene width")
    bands: int = Field(6, ge=1, description="Spectral band count")
    change_fraction: float = Field(0.1, gt=0.0, lt=1.0, description="Target share of changed pixels")
    noise_std: float = Field(0.05, ge=0.0, description="Noise std added to the second date")
    seed: int = Field(0, description="Generator seed")
    shift_magnitude: float = Field(1.0, gt=0.0, description="Norm of the planted spectral shift")
    band_noise: tuple[float, ...] | None = Field(
        None, description="Extra per-band noise std on the second date"
    )
    field_components: int = Field(6, ge=1, description="Latent cosine components mixed into the bands")
    spectral_drift: float = Field(
        0.0, ge=0.0, description="Strength of the cross-band mixing applied to the second date"
    )
    max_attempts: int = Field(1000, ge=1, description="Blob placement retry budget")

    @model_validator(mode="after")
    def _check_band_noise(self) -> SynthConfig:
        if self.band_noise is not None:
            if len(self.band_noise) != self.bands:
                raise ValueError(f"band_noise needs {self.bands} entries, got {len(self.band_noise)}")
            if any(std < 0 for std in self.band_noise):
                raise ValueError("band_noise entries must be non-negative")
        return self
