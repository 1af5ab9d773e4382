"""Classification accuracy metrics.

The headline metric everywhere is the macro average: accuracy computed
within each class, then averaged over classes. On class-balanced data it
coincides with plain accuracy; on unbalanced data it does not reward
majority-class bias. Both are reported.
"""

from __future__ import annotations

import numpy as np


def macro_accuracy(y_true, y_pred, n_classes):
    """Mean over classes (present in y_true) of within-class accuracy, as %."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if len(y_true) == 0:
        raise ValueError("cannot score an empty label set")
    per_class = []
    for c in range(n_classes):
        mask = y_true == c
        if mask.any():
            per_class.append(float((y_pred[mask] == c).mean()))
    return 100.0 * float(np.mean(per_class))


def plain_accuracy(y_true, y_pred):
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if len(y_true) == 0:
        raise ValueError("cannot score an empty label set")
    return 100.0 * float((y_true == y_pred).mean())
