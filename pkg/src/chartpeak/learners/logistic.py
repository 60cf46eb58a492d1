from __future__ import annotations

import numpy as np

from .base import RankClassifier, log_softmax, softmax


def softmax_loss(W, b, X, Y, l2_lambda):
    """Mean cross-entropy plus ``l2_lambda / 2 * ||W||^2`` (bias unpenalized)."""
    logp = log_softmax(X @ W + b)
    return -np.sum(Y * logp) / X.shape[0] + 0.5 * l2_lambda * np.sum(W * W)


def softmax_gradient(W, b, X, Y, l2_lambda):
    """Analytic gradient of :func:`softmax_loss` with respect to ``(W, b)``."""
    residual = softmax(X @ W + b) - Y
    n = X.shape[0]
    return X.T @ residual / n + l2_lambda * W, residual.sum(axis=0) / n


class SoftmaxRegression(RankClassifier):
    """Multinomial logistic regression fitted by full-batch gradient descent.

    Parameters
    ----------
    l2_lambda : float
        Ridge penalty on the weight matrix.
    learning_rate : float
        Fixed step size.
    max_iters : int
        Iteration cap; 0 leaves all weights at zero (uniform probabilities).
    tol : float
        Stop once the full gradient norm drops below this.
    """

    variant = "logreg"

    def __init__(self, l2_lambda=1e-4, learning_rate=0.1, max_iters=2000, tol=1e-6):
        self.l2_lambda = l2_lambda
        self.learning_rate = learning_rate
        self.max_iters = max_iters
        self.tol = tol

    def _fit(self, X, y):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        Y = np.eye(self.n_classes_)[y]
        W = np.zeros((X.shape[1], self.n_classes_))
        b = np.zeros(self.n_classes_)
        self.n_iter_ = 0
        for _ in range(self.max_iters):
            gW, gb = softmax_gradient(W, b, X, Y, self.l2_lambda)
            if np.sqrt(np.sum(gW * gW) + np.sum(gb * gb)) < self.tol:
                break
            W -= self.learning_rate * gW
            b -= self.learning_rate * gb
            self.n_iter_ += 1
        self.coef_ = W
        self.intercept_ = b

    def _predict_proba(self, X):
        return softmax(X @ self.coef_ + self.intercept_)

    def _get_state(self):
        return {"coef": self.coef_, "intercept": self.intercept_, "n_iter": self.n_iter_}

    def _set_state(self, state):
        self.coef_ = np.asarray(state["coef"], dtype=np.float64).reshape(self.n_features_in_, self.n_classes_)
        self.intercept_ = np.asarray(state["intercept"], dtype=np.float64)
        self.n_iter_ = state["n_iter"]
