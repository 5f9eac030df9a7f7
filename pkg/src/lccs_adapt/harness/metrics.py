"""Classification metrics over predicted and true labels."""

from typing import Dict, Iterable, Optional

import numpy as np

from ..utils.errors import ContractError

METRICS = ("accuracy", "macro_f1", "avg_per_class_accuracy", "avg_precision")


def _per_class_counts(predictions: np.ndarray, labels: np.ndarray, label: int):
    true_positive = int(np.sum((predictions == label) & (labels == label)))
    predicted = int(np.sum(predictions == label))
    actual = int(np.sum(labels == label))
    return true_positive, predicted, actual


def compute_metrics(predictions, labels, metric: str) -> float:
    """One metric in [0, 1]. Per-class averages run over the classes present in labels."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ContractError(f"predictions {predictions.shape} and labels {labels.shape} must be equal-length vectors")
    if len(labels) == 0:
        raise ContractError("metrics need at least one sample")
    if metric == "accuracy":
        return float(np.mean(predictions == labels))
    if metric not in METRICS:
        raise ContractError(f"unknown metric {metric!r}; expected one of {METRICS}")

    scores = []
    for label in np.unique(labels):
        true_positive, predicted, actual = _per_class_counts(predictions, labels, label)
        if metric == "avg_per_class_accuracy":
            scores.append(true_positive / actual)
        elif metric == "avg_precision":
            scores.append(true_positive / predicted if predicted else 0.0)
        else:
            scores.append(2 * true_positive / (predicted + actual))
    return float(np.mean(scores))


def compute_all(predictions, labels, metrics: Optional[Iterable[str]] = None) -> Dict[str, float]:
    return {metric: compute_metrics(predictions, labels, metric) for metric in (metrics or METRICS)}
