"""Accuracy assessment against tri-state ground truth.

Unsampled pixels never enter a count. Changed is the positive class.
"""

from __future__ import annotations

import logging
from enum import IntEnum
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import Criterion
from .core import BinaryMask, DegenerateInputError, FloatArray, ShapeMismatchError, UndefinedMetricError

logger = logging.getLogger(__name__)


class Label(IntEnum):
    """Ground-truth states, stored with this encoding on disk too."""
    UNSAMPLED = 0
    UNCHANGED = 1
    CHANGED = 2


class GroundTruth(BaseModel):
    """Per-pixel reference labels (row-major pixel order)."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    labels: NDArray[np.uint8] = Field(..., description="Label code per pixel")

    @field_validator("labels", mode="before")
    @classmethod
    def _coerce_labels(cls, value: Any) -> NDArray[np.uint8]:
        raw = np.asarray(value)
        if raw.ndim != 1:
            raw = raw.reshape(-1)
        if raw.size and (raw.min() < Label.UNSAMPLED or raw.max() > Label.CHANGED):
            bad = int(np.flatnonzero((raw < Label.UNSAMPLED) | (raw > Label.CHANGED))[0])
            raise ValueError(f"invalid label {raw[bad]} at pixel {bad}; expected 0, 1 or 2")
        labels = raw.astype(np.uint8)
        labels.flags.writeable = False
        return labels

    @classmethod
    def from_masks(cls, changed: BinaryMask, sampled: BinaryMask | None = None) -> GroundTruth:
        """Build labels from a change mask, optionally restricted to sampled pixels."""
        changed = np.asarray(changed, dtype=bool)
        labels = np.where(changed, Label.CHANGED, Label.UNCHANGED).astype(np.uint8)
        if sampled is not None:
            sampled = np.asarray(sampled, dtype=bool)
            if sampled.shape != changed.shape:
                raise ShapeMismatchError(
                    f"sampled mask shape {sampled.shape} != changed mask shape {changed.shape}"
                )
            labels[~sampled] = Label.UNSAMPLED
        return cls(labels=labels)

    @property
    def size(self) -> int:
        return int(self.labels.size)

    @property
    def changed(self) -> BinaryMask:
        return self.labels == Label.CHANGED

    @property
    def unchanged(self) -> BinaryMask:
        return self.labels == Label.UNCHANGED

    @property
    def sampled(self) -> BinaryMask:
        return self.labels != Label.UNSAMPLED

    def __repr__(self) -> str:
        return (
            f"GroundTruth(n={self.size}, changed={int(self.changed.sum())}, "
            f"unchanged={int(self.unchanged.sum())})"
        )


class ConfusionCounts(BaseModel):
    """Binary confusion counts over sampled pixels."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    tp: int = Field(..., ge=0, description="Changed pixels predicted changed")
    tn: int = Field(..., ge=0, description="Unchanged pixels predicted unchanged")
    fp: int = Field(..., ge=0, description="Unchanged pixels predicted changed")
    fn: int = Field(..., ge=0, description="Changed pixels predicted unchanged")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


class MetricBundle(BaseModel):
    """The five accuracy figures reported for a change map."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    oa_chg: float = Field(..., ge=0.0, le=1.0, description="Accuracy on sampled changed pixels")
    oa_un: float = Field(..., ge=0.0, le=1.0, description="Accuracy on sampled unchanged pixels")
    oa: float = Field(..., ge=0.0, le=1.0, description="Overall accuracy")
    kappa: float = Field(..., ge=-1.0, le=1.0, description="Cohen's kappa")
    f1: float = Field(..., ge=0.0, le=1.0, description="F1 score of the changed class")

    @model_validator(mode="after")
    def _oa_between_class_rates(self) -> MetricBundle:
        low, high = sorted((self.oa_chg, self.oa_un))
        if not low - 1e-12 <= self.oa <= high + 1e-12:
            raise ValueError(f"oa {self.oa} outside [{low}, {high}]")
        return self

    def criterion(self, criterion: Criterion) -> float:
        return float(getattr(self, criterion.value))


def confusion(pred: BinaryMask, gt: GroundTruth) -> ConfusionCounts:
    """Count prediction outcomes on the sampled pixels of ``gt``.

    Raises:
        ShapeMismatchError: If the mask and labels differ in length
        DegenerateInputError: If no pixel is sampled
    """
    pred = np.asarray(pred, dtype=bool).reshape(-1)
    if pred.size != gt.size:
        raise ShapeMismatchError(f"prediction has {pred.size} pixels, ground truth {gt.size}")
    sampled = gt.sampled
    if not sampled.any():
        raise DegenerateInputError("ground truth has no sampled pixels")

    # rows: unchanged/changed truth, cols: predicted unchanged/changed
    truth = gt.changed[sampled].astype(np.int64)
    table = np.bincount(2 * truth + pred[sampled], minlength=4).reshape(2, 2)
    return ConfusionCounts(
        tn=int(table[0, 0]), fp=int(table[0, 1]), fn=int(table[1, 0]), tp=int(table[1, 1])
    )


def metrics(counts: ConfusionCounts) -> MetricBundle:
    """Compute OA_CHG, OA_UN, OA, kappa and F1 from confusion counts.

    Raises:
        UndefinedMetricError: If a metric's denominator is zero
    """
    tp, tn, fp, fn = counts.tp, counts.tn, counts.fp, counts.fn
    n = counts.total
    if n == 0:
        raise UndefinedMetricError("oa", "no sampled pixels")
    if tp + fn == 0:
        raise UndefinedMetricError("oa_chg", "no sampled changed pixels")
    if tn + fp == 0:
        raise UndefinedMetricError("oa_un", "no sampled unchanged pixels")

    oa = (tp + tn) / n
    expected = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n)
    if expected == 1.0:
        raise UndefinedMetricError("kappa", "expected agreement is 1")
    f1_denominator = 2 * tp + fp + fn
    if f1_denominator == 0:
        raise UndefinedMetricError("f1", "no positive predictions or references")

    return MetricBundle(
        oa_chg=tp / (tp + fn),
        oa_un=tn / (tn + fp),
        oa=oa,
        kappa=(oa - expected) / (1.0 - expected),
        f1=2 * tp / f1_denominator,
    )


def evaluate(pred: BinaryMask, gt: GroundTruth) -> tuple[ConfusionCounts, MetricBundle]:
    counts = confusion(pred, gt)
    return counts, metrics(counts)


def criterion_values(
    criterion: Criterion,
    tp: NDArray[np.int64],
    tn: NDArray[np.int64],
    fp: NDArray[np.int64],
    fn: NDArray[np.int64],
) -> FloatArray:
    """Vectorized criterion over many confusion tables; undefined entries are -inf."""
    tp_f, tn_f, fp_f, fn_f = (np.asarray(a, dtype=np.float64) for a in (tp, tn, fp, fn))
    n = tp_f + tn_f + fp_f + fn_f
    with np.errstate(divide="ignore", invalid="ignore"):
        if criterion is Criterion.OA:
            values = (tp_f + tn_f) / n
        elif criterion is Criterion.F1:
            values = 2 * tp_f / (2 * tp_f + fp_f + fn_f)
        else:
            oa = (tp_f + tn_f) / n
            expected = ((tp_f + fp_f) * (tp_f + fn_f) + (fn_f + tn_f) * (fp_f + tn_f)) / (n * n)
            values = (oa - expected) / (1.0 - expected)
    return np.where(np.isfinite(values), values, -np.inf)


def metrics_record(counts: ConfusionCounts, bundle: MetricBundle) -> dict[str, float | int]:
    """Flat record: the five metrics plus raw counts."""
    return {**bundle.model_dump(), **counts.model_dump()}
