from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .._validation import check_columns, check_features, check_is_fitted, check_labels


class RankClassifier(ClassifierMixin, BaseEstimator):
    """Shared fit/predict plumbing for the four learners.

    Subclasses implement ``_fit(X, y)`` and ``_predict_proba(X)``.  Labels are
    class ordinals ``0..K-1`` with K inferred as ``max(y) + 1``.
    """

    variant: str = ""

    def fit(self, X, y, column_names=None):
        X = check_features(X)
        y, k = check_labels(y, X.shape[0])
        self.n_classes_ = k
        self.classes_ = np.arange(k)
        self.n_features_in_ = X.shape[1]
        if column_names is None:
            column_names = [f"x{j}" for j in range(X.shape[1])]
        if len(column_names) != X.shape[1]:
            raise ValueError("column_names length differs from the number of columns")
        self.column_names_ = list(column_names)
        self._fit(X, y)
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "n_classes_")
        X = check_columns(X, self.n_features_in_)
        return self._predict_proba(X)

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest class ordinal on ties
        return np.argmax(self.predict_proba(X), axis=1)

    def _fit(self, X, y):
        raise NotImplementedError

    def _predict_proba(self, X):
        raise NotImplementedError

    # serialization hooks
    def _get_state(self) -> dict:
        raise NotImplementedError

    def _set_state(self, state: dict) -> None:
        raise NotImplementedError


def softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def log_softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    return Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
