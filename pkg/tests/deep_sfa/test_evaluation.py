"""
Test cases for accuracy assessment.

Test Categories:
- GroundTruth: label validation and masks
- Confusion: counting on sampled pixels only
- Metrics: hand-computed bundles, published-table consistency, undefined cases
- Criterion Values: vectorized scoring used by the threshold search
"""

from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from deep_sfa.config import Criterion
from deep_sfa.core import DegenerateInputError, ShapeMismatchError, UndefinedMetricError
from deep_sfa.evaluation import (
    ConfusionCounts,
    GroundTruth,
    Label,
    MetricBundle,
    confusion,
    criterion_values,
    evaluate,
    metrics,
    metrics_record,
)


def reference_bundle(tp: int, tn: int, fp: int, fn: int) -> dict[str, float]:
    """Textbook formulas written out independently of the package."""
    n = tp + tn + fp + fn
    po = (tp + tn) / n
    p_yes = ((tp + fp) / n) * ((tp + fn) / n)
    p_no = ((tn + fn) / n) * ((tn + fp) / n)
    pe = p_yes + p_no
    return {
        "oa_chg": tp / (tp + fn),
        "oa_un": tn / (tn + fp),
        "oa": po,
        "kappa": (po - pe) / (1 - pe),
        "f1": 2 * tp / (2 * tp + fp + fn),
    }


class TestGroundTruth:
    """Test tri-state label storage."""

    def test_masks(self):
        """Changed, unchanged and sampled masks follow the 0/1/2 encoding."""
        gt = GroundTruth(labels=[0, 1, 2, 2, 1])
        assert gt.size == 5
        assert gt.changed.tolist() == [False, False, True, True, False]
        assert gt.unchanged.tolist() == [False, True, False, False, True]
        assert gt.sampled.tolist() == [False, True, True, True, True]

    def test_invalid_label(self):
        """Codes outside 0..2 are rejected with their position."""
        with pytest.raises(ValidationError, match="pixel 2"):
            GroundTruth(labels=[0, 1, 3])

    def test_labels_read_only(self):
        """Stored labels cannot be modified in place."""
        gt = GroundTruth(labels=[1, 2])
        with pytest.raises(ValueError):
            gt.labels[0] = 2

    def test_from_masks(self):
        """Unsampled pixels override the change mask."""
        gt = GroundTruth.from_masks(np.array([True, False, True]), sampled=np.array([True, True, False]))
        assert gt.labels.tolist() == [Label.CHANGED, Label.UNCHANGED, Label.UNSAMPLED]

    def test_from_masks_shape_mismatch(self):
        """Mask shapes must agree."""
        with pytest.raises(ShapeMismatchError):
            GroundTruth.from_masks(np.zeros(3, dtype=bool), sampled=np.ones(2, dtype=bool))

    def test_repr(self):
        """The repr summarizes class sizes."""
        assert repr(GroundTruth(labels=[0, 1, 2, 2])) == "GroundTruth(n=4, changed=2, unchanged=1)"


class TestConfusion:
    """Test confusion counting."""

    def test_counts(self):
        """Every outcome is counted once; unsampled pixels are ignored."""
        gt = GroundTruth(labels=[2, 2, 1, 1, 0, 0])
        pred = np.array([True, False, True, False, True, False])
        counts = confusion(pred, gt)
        assert (counts.tp, counts.fn, counts.fp, counts.tn) == (1, 1, 1, 1)
        assert counts.total == 4

    def test_length_mismatch(self):
        """Prediction and labels must cover the same pixels."""
        with pytest.raises(ShapeMismatchError):
            confusion(np.zeros(3, dtype=bool), GroundTruth(labels=[1, 2]))

    def test_nothing_sampled(self):
        """Metrics need at least one sampled pixel."""
        with pytest.raises(DegenerateInputError):
            confusion(np.zeros(2, dtype=bool), GroundTruth(labels=[0, 0]))


class TestMetrics:
    """Test metric computation."""

    def test_perfect_prediction(self):
        """A perfect map scores 1 everywhere."""
        counts, bundle = evaluate(np.array([True, False, True]), GroundTruth(labels=[2, 1, 2]))
        assert counts == ConfusionCounts(tp=2, tn=1, fp=0, fn=0)
        assert (bundle.oa, bundle.oa_chg, bundle.oa_un, bundle.kappa, bundle.f1) == (1.0, 1.0, 1.0, 1.0, 1.0)

    def test_random_counts_match_reference(self, rng: np.random.Generator):
        """Ten random confusion tables match the textbook formulas."""
        for _ in range(10):
            tp, tn, fp, fn = (int(v) for v in rng.integers(1, 500, size=4))
            bundle = metrics(ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn))
            expected = reference_bundle(tp, tn, fp, fn)
            for name, value in expected.items():
                assert getattr(bundle, name) == pytest.approx(value, abs=1e-12)

    def test_published_table_row(self):
        """Integer counts over 4227 changed / 17163 unchanged pixels reproduce the DSFA-128-2 row."""
        counts = ConfusionCounts(tp=3798, fn=429, tn=17084, fp=79)
        assert counts.tp + counts.fn == 4227
        assert counts.tn + counts.fp == 17163
        bundle = metrics(counts)
        assert round(bundle.oa_chg, 4) == 0.8985
        assert round(bundle.oa_un, 4) == 0.9954
        assert round(bundle.oa, 4) == 0.9763
        assert round(bundle.kappa, 4) == 0.9227
        # the published F1 is not consistent with the other four figures at 4 decimals
        assert bundle.f1 == pytest.approx(0.9372, abs=2e-4)

    def test_oa_between_class_rates(self, rng: np.random.Generator):
        """Overall accuracy is a weighted mean of the two class accuracies."""
        for _ in range(20):
            tp, tn, fp, fn = (int(v) for v in rng.integers(1, 100, size=4))
            bundle = metrics(ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn))
            assert min(bundle.oa_chg, bundle.oa_un) - 1e-12 <= bundle.oa <= max(bundle.oa_chg, bundle.oa_un) + 1e-12

    @pytest.mark.parametrize(
        "counts,metric",
        [
            (ConfusionCounts(tp=0, tn=5, fp=1, fn=0), "oa_chg"),
            (ConfusionCounts(tp=3, tn=0, fp=0, fn=1), "oa_un"),
            (ConfusionCounts(tp=0, tn=0, fp=0, fn=0), "oa"),
        ],
    )
    def test_undefined(self, counts, metric):
        """Zero denominators raise with the metric named."""
        with pytest.raises(UndefinedMetricError) as excinfo:
            metrics(counts)
        assert excinfo.value.metric == metric

    def test_single_class_truth(self):
        """A reference with one class leaves the metrics undefined."""
        with pytest.raises(UndefinedMetricError):
            metrics(ConfusionCounts(tp=0, tn=0, fp=4, fn=0))

    def test_bundle_validation(self):
        """A bundle with OA outside the class rates is rejected."""
        with pytest.raises(ValidationError):
            MetricBundle(oa_chg=0.5, oa_un=0.6, oa=0.9, kappa=0.1, f1=0.5)

    def test_criterion_lookup(self):
        """Bundles expose each criterion by enum."""
        bundle = MetricBundle(oa_chg=0.5, oa_un=0.9, oa=0.8, kappa=0.4, f1=0.55)
        assert bundle.criterion(Criterion.KAPPA) == 0.4
        assert bundle.criterion(Criterion.OA) == 0.8
        assert bundle.criterion(Criterion.F1) == 0.55

    def test_metrics_record(self):
        """The flat record holds the five metrics and the four counts."""
        counts = ConfusionCounts(tp=2, tn=3, fp=1, fn=1)
        record = metrics_record(counts, metrics(counts))
        assert set(record) == {"oa_chg", "oa_un", "oa", "kappa", "f1", "tp", "tn", "fp", "fn"}
        assert record["tp"] == 2


class TestCriterionValues:
    """Test vectorized scoring."""

    @pytest.mark.parametrize("criterion", list(Criterion))
    def test_matches_scalar_metrics(self, criterion, rng: np.random.Generator):
        """Vectorized values agree with the scalar bundle."""
        table = rng.integers(1, 200, size=(4, 12))
        values = criterion_values(criterion, *table)
        for j in range(table.shape[1]):
            tp, tn, fp, fn = (int(v) for v in table[:, j])
            bundle = metrics(ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn))
            assert values[j] == pytest.approx(bundle.criterion(criterion), abs=1e-12)

    def test_undefined_entries_are_negative_infinity(self):
        """Tables with zero denominators never win the search."""
        zeros = np.zeros(1, dtype=np.int64)
        assert criterion_values(Criterion.F1, zeros, np.array([5]), zeros, zeros)[0] == -np.inf
        assert criterion_values(Criterion.KAPPA, zeros, np.array([5]), zeros, zeros)[0] == -np.inf
