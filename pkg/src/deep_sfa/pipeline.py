"""End-to-end change detection.

``run_pipeline`` loads both dates, standardizes them, computes the change
intensity with the configured method (summing several DSFA runs when asked),
thresholds it, scores it against ground truth when available and writes every
output into the configured directory. Sweeps and method comparisons are
repeated pipeline runs with one setting varied.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import Method, PipelineConfig, SamplingStrategy, ThresholdMethod
from .core import (
    BinaryMask,
    ChangeDetectionError,
    FloatArray,
    PipelineError,
    PixelMatrix,
    SamplingError,
    ShapeMismatchError,
    StageError,
    error_from_exception,
)
from .dsfa_net import project_dsfa, save_params, train
from .evaluation import ConfusionCounts, GroundTruth, MetricBundle, evaluate, metrics_record
from .linear_sfa import fit_isfa, fit_sfa, transform_diff
from .predetect import cva_magnitude, cva_predetect, lloyd_1d, pca_diff, sample_pool, select_samples
from .raster_io import (
    MultibandImage,
    flatten,
    load_ground_truth,
    load_image,
    save_confusion_map,
    save_gray_map,
    save_image,
    zscore_standardize,
)
from .reporting import RUN_TEMPLATE, SWEEP_TEMPLATE, ReportTemplates
from .segment import best_threshold, binarize, chi2_intensity, otsu_threshold

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("oa_chg", "oa_un", "oa", "kappa", "f1")


class StageTiming(BaseModel):
    """Wall-clock duration of one pipeline stage."""
    model_config = ConfigDict(frozen=True)

    stage: str = Field(..., description="Stage name, suffixed with the run index for repeated stages")
    seconds: float = Field(..., ge=0.0, description="Elapsed wall-clock seconds")


class RunReport(BaseModel):
    """Summary of one pipeline invocation."""
    model_config = ConfigDict(frozen=True)

    config: PipelineConfig = Field(..., description="Configuration that produced the run")
    rows: int = Field(..., description="Scene height")
    cols: int = Field(..., description="Scene width")
    bands: int = Field(..., description="Input band count")
    run_seeds: list[int] = Field(default_factory=list, description="Seed of each run")
    loss_histories: list[list[float]] = Field(default_factory=list, description="DSFA loss per epoch, per run")
    isfa_iterations: int | None = Field(None, description="Iterations ISFA needed")
    sample_count: int | None = Field(None, description="Training pairs actually drawn per run")
    threshold: float = Field(..., description="Threshold applied to the intensity")
    changed_pixels: int = Field(..., description="Pixels flagged as changed")
    counts: ConfusionCounts | None = Field(None, description="Confusion counts against ground truth")
    metrics: MetricBundle | None = Field(None, description="Accuracy against ground truth")
    timings: list[StageTiming] = Field(default_factory=list, description="Per-stage wall-clock timings")
    manifest: dict[str, Path] = Field(default_factory=dict, description="Output name to file path")

    @property
    def total_seconds(self) -> float:
        return sum(t.seconds for t in self.timings)


class SweepRow(BaseModel):
    """One setting of a sweep or method comparison."""
    model_config = ConfigDict(frozen=True)

    value: str = Field(..., description="Setting that was varied")
    threshold: float = Field(..., description="Applied threshold")
    changed_pixels: int = Field(..., description="Pixels flagged as changed")
    seconds: float = Field(..., description="Wall-clock time of the run")
    metrics: MetricBundle | None = Field(None, description="Accuracy, when ground truth exists")

    def record(self, key: str) -> dict[str, Any]:
        row: dict[str, Any] = {key: self.value}
        row.update({name: getattr(self.metrics, name) if self.metrics else "" for name in METRIC_COLUMNS})
        row.update(threshold=self.threshold, changed_pixels=self.changed_pixels, seconds=round(self.seconds, 3))
        return row


class _StageClock:
    """Times stages and tags their failures with the stage name."""

    def __init__(self) -> None:
        self.timings: list[StageTiming] = []
        self._logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            raise StageError(name, e) from e
        finally:
            elapsed = time.perf_counter() - start
            self.timings.append(StageTiming(stage=name, seconds=elapsed))
        self._logger.info("Stage %s finished in %.3fs", name, elapsed)


class _Scene(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    first: MultibandImage
    second: MultibandImage
    gt: GroundTruth | None


class PipelineRunner:
    """Runs the configured method on one scene.

    The runner keeps the loaded scene and standardized matrices so the
    intensity can be recomputed (for instance per run) without reloading.
    """

    def __init__(self, config: PipelineConfig) -> None:
        self.config = config
        self.clock = _StageClock()
        self.loss_histories: list[list[float]] = []
        self.run_seeds: list[int] = []
        self.isfa_iterations: int | None = None
        self.sample_count: int | None = None
        self._scene: _Scene | None = None
        self._X: PixelMatrix | None = None
        self._Y: PixelMatrix | None = None
        self._predetected: BinaryMask | None = None
        self._logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")

    @property
    def scene(self) -> _Scene:
        if self._scene is None:
            self.load()
        assert self._scene is not None
        return self._scene

    def load(self) -> None:
        config = self.config
        with self.clock.stage("load"):
            first = load_image(config.t1)
            second = load_image(config.t2)
            if (first.rows, first.cols, first.bands) != (second.rows, second.cols, second.bands):
                raise ShapeMismatchError(
                    f"dates differ: {first.rows}x{first.cols}x{first.bands} vs "
                    f"{second.rows}x{second.cols}x{second.bands}"
                )
            gt = None
            if config.ground_truth is not None:
                gt, rows, cols = load_ground_truth(config.ground_truth)
                if (rows, cols) != (first.rows, first.cols):
                    raise ShapeMismatchError(f"ground truth is {rows}x{cols}, images are {first.rows}x{first.cols}")
            self._scene = _Scene(first=first, second=second, gt=gt)

        with self.clock.stage("standardize"):
            self._X, _ = zscore_standardize(flatten(first))
            self._Y, _ = zscore_standardize(flatten(second))

    @property
    def matrices(self) -> tuple[PixelMatrix, PixelMatrix]:
        if self._X is None or self._Y is None:
            self.load()
        assert self._X is not None and self._Y is not None
        return self._X, self._Y

    def _chi2(self, D: PixelMatrix) -> FloatArray:
        return np.asarray(chi2_intensity(D).values, dtype=np.float64)

    def _dsfa_run(self, index: int) -> FloatArray:
        config = self.config
        X, Y = self.matrices
        seed = config.seed + index
        train_config = config.train.model_copy(update={"seed": seed})

        with self.clock.stage(f"sample[{index}]"):
            if config.strategy is SamplingStrategy.CVA and self._predetected is None:
                self._predetected = cva_predetect(X, Y, config.seed)
            unchanged = None if self._predetected is None else ~self._predetected
            pool = sample_pool(config.strategy, X.shape[1], unchanged, self.scene.gt)
            if pool.size < 2:
                raise SamplingError(f"'{config.strategy.value}' pool holds only {pool.size} pixels")
            count = config.sample_count
            if count > pool.size:
                self._logger.warning(
                    "Requested %d samples but the '%s' pool has %d pixels; using the whole pool",
                    count, config.strategy.value, pool.size,
                )
                count = int(pool.size)
            samples = select_samples(X, Y, unchanged, count, seed, config.strategy, self.scene.gt)
            self.sample_count = samples.count

        with self.clock.stage(f"train[{index}]"):
            theta1, theta2, history = train(samples.xs, samples.ys, train_config)
            self.loss_histories.append(history)
            self.run_seeds.append(seed)
            if config.save_params:
                params_dir = config.output_dir / "params"
                save_params(theta1, params_dir / f"theta1_run{index}", seed=seed, epoch=len(history))
                save_params(theta2, params_dir / f"theta2_run{index}", seed=seed, epoch=len(history))

        with self.clock.stage(f"project[{index}]"):
            return self._chi2(project_dsfa(theta1, theta2, X, Y, train_config.reg_r))

    def intensities(self) -> list[FloatArray]:
        """Change intensity of every run (one entry unless DSFA runs repeat)."""
        config = self.config
        X, Y = self.matrices
        if np.array_equal(X, Y):
            self._logger.info("Standardized dates are identical; intensity is zero everywhere")
            return [np.zeros(X.shape[1]) for _ in range(config.runs)]

        if config.method is Method.DSFA:
            return [self._dsfa_run(index) for index in range(config.runs)]

        with self.clock.stage("intensity"):
            if config.method is Method.CVA:
                return [cva_magnitude(X, Y)]
            if config.method is Method.PCA:
                return [pca_diff(X, Y, config.pca_components)]
            if config.method is Method.USFA:
                return [self._chi2(transform_diff(fit_sfa(X, Y), X, Y))]
            model, _, iterations = fit_isfa(X, Y, config.isfa_max_iter, config.isfa_tol)
            self.isfa_iterations = iterations
            return [self._chi2(transform_diff(model, X, Y))]

    def threshold(self, intensity: FloatArray) -> float:
        config = self.config
        with self.clock.stage("threshold"):
            if intensity.min() == intensity.max():
                self._logger.warning("Intensity is constant; no pixel is flagged as changed")
                return float(intensity.max())
            if config.threshold is ThresholdMethod.OTSU:
                return otsu_threshold(intensity)
            if config.threshold is ThresholdMethod.KMEANS:
                return lloyd_1d(intensity, config.seed).threshold
            if self.scene.gt is None:
                raise ChangeDetectionError("threshold 'best' needs ground truth")
            value, _ = best_threshold(intensity, self.scene.gt, config.criterion)
            return value

    def run(self) -> RunReport:
        config = self.config
        scene = self.scene
        per_run = self.intensities()
        intensity = np.sum(per_run, axis=0)
        threshold = self.threshold(intensity)
        mask = binarize(intensity, threshold)

        counts = bundle = None
        if scene.gt is not None:
            with self.clock.stage("evaluate"):
                counts, bundle = evaluate(mask, scene.gt)
            self._logger.info(
                "%s: OA %.4f, kappa %.4f, F1 %.4f", config.method.value, bundle.oa, bundle.kappa, bundle.f1
            )

        with self.clock.stage("write"):
            manifest = self._write_outputs(intensity, mask, counts, bundle)

        report = RunReport(
            config=config,
            rows=scene.first.rows,
            cols=scene.first.cols,
            bands=scene.first.bands,
            run_seeds=self.run_seeds,
            loss_histories=self.loss_histories,
            isfa_iterations=self.isfa_iterations,
            sample_count=self.sample_count,
            threshold=threshold,
            changed_pixels=int(mask.sum()),
            counts=counts,
            metrics=bundle,
            timings=self.clock.timings,
            manifest=manifest,
        )
        self._finish_reports(report)
        return report

    def _write_outputs(
        self,
        intensity: FloatArray,
        mask: BinaryMask,
        counts: ConfusionCounts | None,
        bundle: MetricBundle | None,
    ) -> dict[str, Path]:
        config = self.config
        scene = self.scene
        rows, cols = scene.first.rows, scene.first.cols
        out = config.output_dir
        out.mkdir(parents=True, exist_ok=True)

        manifest = {
            "intensity_map": save_gray_map(intensity, rows, cols, out / "intensity.pgm"),
            "mask": save_gray_map(mask.astype(np.float64), rows, cols, out / "mask.pgm"),
            "intensity": save_image(
                MultibandImage(rows=rows, cols=cols, bands=1, values=intensity), out / "intensity"
            ),
        }
        if scene.gt is not None and counts is not None and bundle is not None:
            metrics_path = out / "metrics.json"
            metrics_path.write_text(
                json.dumps(metrics_record(counts, bundle), indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            manifest["metrics"] = metrics_path
            manifest["confusion_map"] = save_confusion_map(mask, scene.gt, rows, cols, out / "confusion.ppm")
        if self.loss_histories:
            manifest["loss_history"] = self._write_loss_history(out / "loss_history.csv")
        if config.save_params:
            for path in sorted((out / "params").glob("*.json")):
                manifest[f"params_{path.stem}"] = path
        manifest["report"] = out / "report.json"
        if config.write_report:
            manifest["report_md"] = out / "report.md"
        return manifest

    def _write_loss_history(self, path: Path) -> Path:
        epochs = max(len(history) for history in self.loss_histories)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["epoch", *(f"run_{i}" for i in range(len(self.loss_histories)))])
            for epoch in range(epochs):
                writer.writerow(
                    [epoch, *(repr(h[epoch]) if epoch < len(h) else "" for h in self.loss_histories)]
                )
        return path

    def _finish_reports(self, report: RunReport) -> None:
        out = self.config.output_dir
        (out / "report.json").write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
        if not self.config.write_report:
            return
        written, error = ReportTemplates().write_report(RUN_TEMPLATE, {"report": report}, out / "report.md")
        if error is not None or written is None:
            if error is not None:
                self._logger.warning("Run report not written: %s", error.error.message)
            report.manifest.pop("report_md", None)
            (out / "report.json").write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")


def run_pipeline(config: PipelineConfig) -> RunReport:
    """Load, standardize, detect, threshold, evaluate and write one scene.

    Raises:
        StageError: Wrapping whatever failed, with the stage name
    """
    logger.info("Running %s on %s / %s", config.method.value, config.t1, config.t2)
    return PipelineRunner(config).run()


def multi_run(config: PipelineConfig, runs: int | None = None) -> RunReport:
    """Sum the intensities of ``runs`` independently seeded DSFA runs before thresholding."""
    if runs is not None:
        config = PipelineConfig.model_validate({**config.model_dump(), "runs": runs})
    return run_pipeline(config)


def run_intensities(config: PipelineConfig) -> list[FloatArray]:
    """Per-run intensity maps without thresholding or writing anything."""
    return PipelineRunner(config).intensities()


def run_pipeline_safe(config: PipelineConfig) -> tuple[RunReport | None, PipelineError | None]:
    """Like :func:`run_pipeline` but returns ``(None, error)`` instead of raising."""
    try:
        return run_pipeline(config), None
    except ChangeDetectionError as e:
        logger.error("Pipeline failed: %s", e.message)
        return None, error_from_exception(e, debug_info={"method": config.method.value})
    except Exception as e:
        logger.exception("Unexpected pipeline failure")
        return None, error_from_exception(e, debug_info={"method": config.method.value})


def _variant(config: PipelineConfig, subdir: str, **updates: Any) -> PipelineConfig:
    data = config.model_dump()
    train_updates = updates.pop("train", None)
    if train_updates:
        data["train"] = {**data["train"], **train_updates}
    data.update(updates)
    data["output_dir"] = config.output_dir / subdir
    return PipelineConfig.model_validate(data)


def _write_sweep(
    rows: Sequence[SweepRow], key: str, title: str, config: PipelineConfig, name: str
) -> Path:
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as handle:
        fieldnames = [key, *METRIC_COLUMNS, "threshold", "changed_pixels", "seconds"]
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.record(key))
    if config.write_report:
        context = {"title": title, "key": key, "columns": METRIC_COLUMNS, "rows": rows, "config": config}
        ReportTemplates().write_report(SWEEP_TEMPLATE, context, out / f"{name}.md")
    return csv_path


def _sweep_row(value: str, report: RunReport) -> SweepRow:
    return SweepRow(
        value=value,
        threshold=report.threshold,
        changed_pixels=report.changed_pixels,
        seconds=report.total_seconds,
        metrics=report.metrics,
    )


def sweep_r(config: PipelineConfig, r_values: Sequence[float]) -> list[SweepRow]:
    """Run DSFA once per regularization constant and tabulate accuracy in ``sweep_r.csv``."""
    if config.method is not Method.DSFA:
        raise ChangeDetectionError(f"sweep-r needs method 'dsfa', got '{config.method.value}'")
    if config.ground_truth is None:
        raise ChangeDetectionError("sweep-r needs ground truth to score each run")
    rows = []
    for r in r_values:
        report = run_pipeline(_variant(config, f"r_{r:g}", train={"reg_r": r}))
        rows.append(_sweep_row(f"{r:g}", report))
    _write_sweep(rows, "r", "Regularization sweep", config, "sweep_r")
    return rows


def sweep_strategy(config: PipelineConfig, strategies: Sequence[SamplingStrategy]) -> list[SweepRow]:
    """Run DSFA once per sampling strategy and tabulate accuracy in ``sweep_strategy.csv``."""
    if config.ground_truth is None:
        raise SamplingError("sweep-strategy needs ground truth")
    rows = []
    for strategy in strategies:
        report = run_pipeline(_variant(config, f"strategy_{strategy.value}", method=Method.DSFA, strategy=strategy))
        rows.append(_sweep_row(strategy.value, report))
    _write_sweep(rows, "strategy", "Training sample selection", config, "sweep_strategy")
    return rows


def compare_methods(config: PipelineConfig, methods: Sequence[Method]) -> list[SweepRow]:
    """Run several methods on one scene; writes ``compare.csv`` and ``compare.md``."""
    rows = []
    for method in methods:
        runs = config.runs if method is Method.DSFA else 1
        report = run_pipeline(_variant(config, f"method_{method.value}", method=method, runs=runs))
        rows.append(_sweep_row(method.value, report))
    _write_sweep(rows, "method", "Method comparison", config, "compare")
    return rows
