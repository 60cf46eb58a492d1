from __future__ import annotations

import math

import numpy as np

from ._tree import Tree, grow_gini_tree
from .base import RankClassifier


class RandomForest(RankClassifier):
    """Bagged CART trees with Gini splits over a random column subset per node.

    Parameters
    ----------
    n_estimators : int
    max_depth : int or None
        ``None`` grows every tree until its leaves are pure or too small.
    min_samples_split : int
    features_per_split : int or None
        Columns drawn at each node; ``None`` means ``ceil(sqrt(p))``.
    bootstrap : bool
        Draw n rows with replacement per tree.  Turning it off (together with
        ``features_per_split=p``) reduces a one-tree forest to plain CART.
    seed : int
        Tree ``i`` draws from its own stream spawned from ``seed``, so results
        do not depend on the order trees are grown in.
    """

    variant = "rf"

    def __init__(self, n_estimators=100, max_depth=None, min_samples_split=2,
                 features_per_split=None, bootstrap=True, seed=42):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.features_per_split = features_per_split
        self.bootstrap = bootstrap
        self.seed = seed

    def _fit(self, X, y):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        n, p = X.shape
        m = self.features_per_split or math.ceil(math.sqrt(p))
        self.features_per_split_ = min(m, p)
        streams = np.random.SeedSequence(self.seed).spawn(self.n_estimators)
        self.trees_ = []
        for stream in streams:
            rng = np.random.default_rng(stream)
            rows = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
            self.trees_.append(grow_gini_tree(
                X[rows], y[rows], self.n_classes_,
                max_depth=self.max_depth,
                min_samples_split=self.min_samples_split,
                max_features=self.features_per_split_,
                rng=rng,
            ))

    def _predict_proba(self, X):
        proba = np.zeros((X.shape[0], self.n_classes_))
        for tree in self.trees_:
            proba += tree.predict(X)
        return proba / len(self.trees_)

    def raw_importances(self) -> np.ndarray:
        """Sample-weighted Gini decrease summed per column over all trees."""
        total = np.zeros(self.n_features_in_)
        for tree in self.trees_:
            split = tree.feature >= 0
            np.add.at(total, tree.feature[split], tree.gain[split] * tree.n_samples[split])
        return total

    def _get_state(self):
        return {"features_per_split": self.features_per_split_,
                "trees": [t.to_dict() for t in self.trees_]}

    def _set_state(self, state):
        self.features_per_split_ = state["features_per_split"]
        self.trees_ = [Tree.from_dict(t) for t in state["trees"]]
