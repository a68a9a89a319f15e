"""Classification metrics."""

from typing import Sequence

import numpy as np

from crossl.core.errors import LabelError, ShapeError


def confusion_matrix(predictions: Sequence[int] | np.ndarray, labels: Sequence[int] | np.ndarray, num_classes: int) -> np.ndarray:
    """Counts [true class, predicted class]."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ShapeError(f"predictions {predictions.shape} and labels {labels.shape} must be equal-length vectors")
    for name, values in (("predictions", predictions), ("labels", labels)):
        if values.size and (values.min() < 0 or values.max() >= num_classes):
            raise LabelError(f"{name} must lie in [0, {num_classes})")
    flat = np.bincount(labels * num_classes + predictions, minlength=num_classes * num_classes)
    return flat.reshape(num_classes, num_classes)


def macro_f1(
    predictions: Sequence[int] | np.ndarray,
    labels: Sequence[int] | np.ndarray,
    num_classes: int,
) -> tuple[float, list[float]]:
    """
    Unweighted mean of per-class F1 over all ``num_classes`` classes.

    A class with precision + recall == 0 (including one that never appears
    in labels or predictions) scores 0 and still counts in the mean.

    Args:
        predictions: Predicted class per window
        labels: True class per window
        num_classes: Number of classes C

    Returns:
        (macro-F1, per-class F1 list of length C)

    Raises:
        ShapeError: If the lengths differ
        LabelError: If a value lies outside [0, C)
    """
    confusion = confusion_matrix(predictions, labels, num_classes)
    true_positive = np.diag(confusion).astype(np.float64)
    # 2PR/(P+R) == 2TP / (2TP + FP + FN)
    denominator = confusion.sum(axis=0) + confusion.sum(axis=1)
    per_class = np.divide(2.0 * true_positive, denominator, out=np.zeros(num_classes), where=denominator > 0)
    return float(per_class.mean()), [float(v) for v in per_class]
