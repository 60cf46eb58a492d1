"""Input validation shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import ColumnMismatchError, EmptyTrainingError, LabelOutOfRangeError

__all__ = ["check_features", "check_labels", "check_columns", "check_is_fitted"]


def check_features(X, allow_nan: bool = False) -> np.ndarray:
    if X is None or np.size(X) == 0:
        raise EmptyTrainingError("no rows to work with")
    return check_array(
        X, dtype=np.float64, ensure_all_finite="allow-nan" if allow_nan else True
    )


def check_labels(y, n_rows: int, n_classes: int | None = None) -> tuple[np.ndarray, int]:
    """Return ``y`` as an int array and the class count K.

    Labels must be integers in ``0..K-1``; K defaults to ``max(y) + 1``.
    """
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_rows:
        raise ValueError(f"y must be 1-D with {n_rows} entries, got shape {y.shape}")
    if y.size == 0:
        raise EmptyTrainingError("no labels to train on")
    if not np.issubdtype(y.dtype, np.integer):
        as_int = y.astype(np.int64)
        if not np.array_equal(as_int, y):
            raise LabelOutOfRangeError("labels must be integer class ordinals")
        y = as_int
    y = y.astype(np.int64)
    if y.min() < 0:
        raise LabelOutOfRangeError(f"negative label {y.min()}")
    k = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if y.max() >= k:
        raise LabelOutOfRangeError(f"label {y.max()} >= n_classes={k}")
    if n_rows < k:
        raise EmptyTrainingError(f"{n_rows} rows is fewer than {k} classes")
    return y, k


def check_columns(X, n_features: int) -> np.ndarray:
    X = check_features(X)
    if X.shape[1] != n_features:
        raise ColumnMismatchError(f"model was trained on {n_features} columns, got {X.shape[1]}")
    return X
