"""Deep slow feature analysis for unsupervised change detection.

Two co-registered multiband rasters go in; a change intensity map, a binary
change mask and (given ground truth) accuracy metrics come out. DSFA maps
both dates through small fully-connected networks trained to make unchanged
pixels slow features, then thresholds the chi-square distance of their SFA
projection. CVA, PCA and linear SFA (USFA/ISFA) are available as baselines.
"""

__version__ = "0.1.0"

from .config import (
    Activation,
    Criterion,
    Method,
    PipelineConfig,
    SamplingStrategy,
    SynthConfig,
    ThresholdMethod,
    TrainConfig,
)
from .core import (
    ChangeDetectionError,
    ConvergenceError,
    DegenerateInputError,
    ErrorDetail,
    NotPositiveDefiniteError,
    PipelineError,
    RasterFormatError,
    SamplingError,
    ShapeMismatchError,
    StageError,
    SynthesisError,
    TrainingDivergenceError,
    UndefinedMetricError,
)
from .evaluation import ConfusionCounts, GroundTruth, MetricBundle, evaluate
from .pipeline import (
    RunReport,
    compare_methods,
    multi_run,
    run_intensities,
    run_pipeline,
    run_pipeline_safe,
    sweep_r,
    sweep_strategy,
)
from .raster_io import MultibandImage, load_image, save_image
from .synthetic import synth_generate

__all__ = [
    "Activation",
    "ChangeDetectionError",
    "ConfusionCounts",
    "ConvergenceError",
    "Criterion",
    "DegenerateInputError",
    "ErrorDetail",
    "GroundTruth",
    "Method",
    "MetricBundle",
    "MultibandImage",
    "NotPositiveDefiniteError",
    "PipelineConfig",
    "PipelineError",
    "RasterFormatError",
    "RunReport",
    "SamplingError",
    "SamplingStrategy",
    "ShapeMismatchError",
    "StageError",
    "SynthConfig",
    "SynthesisError",
    "ThresholdMethod",
    "TrainConfig",
    "TrainingDivergenceError",
    "UndefinedMetricError",
    "__version__",
    "compare_methods",
    "evaluate",
    "load_image",
    "multi_run",
    "run_intensities",
    "run_pipeline",
    "run_pipeline_safe",
    "save_image",
    "sweep_r",
    "sweep_strategy",
    "synth_generate",
]
