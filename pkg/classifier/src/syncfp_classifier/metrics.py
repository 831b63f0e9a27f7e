"""Macro-averaged multi-class metrics from a confusion matrix.

Macro averaging weighs every class equally, the stricter choice for
balanced fingerprinting datasets.  A class never predicted scores zero
precision; a class with no true samples scores zero recall.
"""

from __future__ import annotations

import numpy as np


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    mat = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(np.asarray(y_true).ravel(), np.asarray(y_pred).ravel()):
        mat[int(t), int(p)] += 1
    return mat


def macro_scores(y_true, y_pred, n_classes: int) -> tuple[float, float, float]:
    """(f1, precision, recall), each in [0, 1], macro-averaged."""
    mat = confusion_matrix(y_true, y_pred, n_classes)
    precisions, recalls, f1s = [], [], []
    for c in range(n_classes):
        tp = mat[c, c]
        fp = mat[:, c].sum() - tp
        fn = mat[c, :].sum() - tp
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        precisions.append(p)
        recalls.append(r)
        f1s.append(f)
    return float(np.mean(f1s)), float(np.mean(precisions)), float(np.mean(recalls))
