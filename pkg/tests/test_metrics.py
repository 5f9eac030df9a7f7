"""Tests for classification metrics."""

import pytest

from src.lccs_adapt.harness.metrics import METRICS, compute_all, compute_metrics
from src.lccs_adapt.utils.errors import ContractError


class TestComputeMetrics:
    """Test metric values on small hand-checked cases."""

    def test_constant_prediction(self):
        scores = compute_all([0, 0, 0, 0], [0, 0, 1, 1])
        assert scores["accuracy"] == pytest.approx(0.5)
        assert scores["avg_per_class_accuracy"] == pytest.approx(0.5)
        assert scores["macro_f1"] == pytest.approx(1 / 3)
        assert scores["avg_precision"] == pytest.approx(0.25)

    def test_perfect_prediction(self):
        scores = compute_all([2, 0, 1, 1], [2, 0, 1, 1])
        assert all(value == 1.0 for value in scores.values())
        assert set(scores) == set(METRICS)

    def test_classes_absent_from_labels_are_skipped(self):
        """Class 1 is predicted but never occurs, so only class 0 is averaged."""
        assert compute_metrics([0, 1], [0, 0], "macro_f1") == pytest.approx(2 / 3)
        assert compute_metrics([0, 1], [0, 0], "avg_per_class_accuracy") == pytest.approx(0.5)

    def test_imbalanced_accuracy_differs_from_class_average(self):
        labels = [0] * 9 + [1]
        predictions = [0] * 10
        assert compute_metrics(predictions, labels, "accuracy") == pytest.approx(0.9)
        assert compute_metrics(predictions, labels, "avg_per_class_accuracy") == pytest.approx(0.5)

    def test_subset_of_metrics(self):
        assert list(compute_all([0], [0], ["macro_f1"])) == ["macro_f1"]

    def test_rejects_unknown_metric(self):
        with pytest.raises(ContractError):
            compute_metrics([0], [0], "auc")

    def test_rejects_length_mismatch(self):
        with pytest.raises(ContractError):
            compute_metrics([0, 1], [0], "accuracy")

    def test_rejects_empty(self):
        with pytest.raises(ContractError):
            compute_metrics([], [], "accuracy")
