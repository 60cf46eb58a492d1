from __future__ import annotations

import numpy as np

from ..errors import KnnKTooLargeError
from .base import RankClassifier


class NearestNeighbors(RankClassifier):
    """Majority vote over the ``k`` Euclidean-nearest training rows.

    Equal distances are broken toward the lower training-row index.
    """

    variant = "knn"

    def __init__(self, k=5, chunk_size=512):
        self.k = k
        self.chunk_size = chunk_size

    def _fit(self, X, y):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.k > X.shape[0]:
            raise KnnKTooLargeError(f"k={self.k} exceeds {X.shape[0]} training rows")
        self.X_train_ = X.copy()
        self.y_train_ = y.copy()

    def kneighbors(self, X) -> np.ndarray:
        out = []
        for start in range(0, X.shape[0], self.chunk_size):
            block = X[start:start + self.chunk_size]
            d2 = ((block[:, None, :] - self.X_train_[None, :, :]) ** 2).sum(axis=2)
            out.append(np.argsort(d2, axis=1, kind="stable")[:, :self.k])
        return np.vstack(out)

    def _predict_proba(self, X):
        labels = self.y_train_[self.kneighbors(X)]
        proba = np.zeros((X.shape[0], self.n_classes_))
        for c in range(self.n_classes_):
            proba[:, c] = (labels == c).sum(axis=1)
        return proba / self.k

    def _get_state(self):
        return {"X_train": self.X_train_, "y_train": self.y_train_}

    def _set_state(self, state):
        self.X_train_ = np.asarray(state["X_train"], dtype=np.float64).reshape(-1, self.n_features_in_)
        self.y_train_ = np.asarray(state["y_train"], dtype=np.int64)
