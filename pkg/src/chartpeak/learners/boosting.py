from __future__ import annotations

import numpy as np

from ._tree import Tree, grow_newton_tree
from .base import RankClassifier, log_softmax, softmax

MIN_PRIOR = 1e-12


def softmax_gradients(scores: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample gradient ``p - y`` and hessian ``2 p (1 - p)`` of the softmax loss.

    The doubled diagonal hessian bounds the coupling between the K class
    trees that are updated together each round and keeps full-size steps
    (learning rate 1) from overshooting, where the plain ``p (1 - p)``
    diverges on pure leaves.
    """
    P = softmax(scores)
    return P - Y, 2.0 * P * (1.0 - P)


def softmax_cross_entropy(scores: np.ndarray, y: np.ndarray) -> float:
    return float(-log_softmax(scores)[np.arange(len(y)), y].mean())


class GradientBoostedTrees(RankClassifier):
    """Second-order boosting of regression trees on the multiclass softmax loss.

    Each round fits one tree per class to the current gradients and
    hessians; leaves carry ``-G/(H + reg_lambda)`` and scores move by
    ``learning_rate`` times the tree output.  Scores start at the log class
    priors.

    Parameters
    ----------
    n_rounds : int
    learning_rate : float
        Shrinkage (eta); 0 freezes the model at its starting scores.
    reg_lambda : float
        L2 penalty on leaf weights.
    gamma : float
        Minimum gain a split must clear.
    max_depth : int
        0 gives single-leaf trees.
    seed : int
        Kept for a uniform interface; training itself is deterministic.
    """

    variant = "gbt"

    def __init__(self, n_rounds=200, learning_rate=0.1, reg_lambda=1.0, gamma=0.0,
                 max_depth=6, seed=42):
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.reg_lambda = reg_lambda
        self.gamma = gamma
        self.max_depth = max_depth
        self.seed = seed

    def _fit(self, X, y):
        if self.reg_lambda < 0 or self.gamma < 0:
            raise ValueError("reg_lambda and gamma must be non-negative")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        k = self.n_classes_
        prior = np.bincount(y, minlength=k) / len(y)
        self.base_score_ = np.log(np.maximum(prior, MIN_PRIOR))
        Y = np.eye(k)[y]
        scores = np.tile(self.base_score_, (len(y), 1))
        self.trees_ = []
        self.train_loss_ = [softmax_cross_entropy(scores, y)]
        for _ in range(self.n_rounds):
            grad, hess = softmax_gradients(scores, Y)
            round_trees = []
            for c in range(k):
                tree = grow_newton_tree(
                    X, grad[:, c], hess[:, c],
                    reg_lambda=self.reg_lambda, gamma=self.gamma, max_depth=self.max_depth,
                )
                round_trees.append(tree)
            for c, tree in enumerate(round_trees):
                scores[:, c] += self.learning_rate * tree.predict(X)[:, 0]
            self.trees_.append(round_trees)
            self.train_loss_.append(softmax_cross_entropy(scores, y))

    def decision_function(self, X) -> np.ndarray:
        scores = np.tile(self.base_score_, (X.shape[0], 1))
        for round_trees in self.trees_:
            for c, tree in enumerate(round_trees):
                scores[:, c] += self.learning_rate * tree.predict(X)[:, 0]
        return scores

    def _predict_proba(self, X):
        return softmax(self.decision_function(X))

    def raw_importances(self) -> np.ndarray:
        """Split gain summed per column over every tree."""
        total = np.zeros(self.n_features_in_)
        for round_trees in self.trees_:
            for tree in round_trees:
                split = tree.feature >= 0
                np.add.at(total, tree.feature[split], tree.gain[split])
        return total

    def _get_state(self):
        return {
            "base_score": self.base_score_,
            "train_loss": self.train_loss_,
            "trees": [[t.to_dict() for t in r] for r in self.trees_],
        }

    def _set_state(self, state):
        self.base_score_ = np.asarray(state["base_score"], dtype=np.float64)
        self.train_loss_ = list(state["train_loss"])
        self.trees_ = [[Tree.from_dict(t) for t in r] for r in state["trees"]]
