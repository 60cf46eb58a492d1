"""Binary decision trees stored as flat arrays, plus exact greedy split search.

Two split criteria share the same sorted-prefix machinery:

* Gini impurity decrease on class labels (random forest trees);
* second-order gain ``0.5 * [G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - G^2/(H+lam)] - gamma``
  on per-sample gradients/hessians (boosted trees).

Candidate thresholds are midpoints between consecutive distinct sorted
values.  Among splits whose gain is within ``GAIN_TOL`` of the best, the
first in (feature ascending, threshold ascending) order wins, which makes
ties resolve toward the lower feature index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

GAIN_TOL = 1e-12
LEAF = -1


class Split(NamedTuple):
    feature: int
    threshold: float
    gain: float


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    gain: np.ndarray
    n_samples: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row; ``x <= threshold`` goes left."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "gain": self.gain.tolist(),
            "n_samples": self.n_samples.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Tree":
        value = np.asarray(obj["value"], dtype=np.float64)
        return cls(
            np.asarray(obj["feature"], dtype=np.int64),
            np.asarray([np.nan if t is None else t for t in obj["threshold"]], dtype=np.float64),
            np.asarray(obj["left"], dtype=np.int64),
            np.asarray(obj["right"], dtype=np.int64),
            np.asarray(obj["gain"], dtype=np.float64),
            np.asarray(obj["n_samples"], dtype=np.int64),
            value.reshape(len(obj["feature"]), -1),
        )


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.gain, self.n_samples, self.value = [], [], []

    def add(self, n_samples: int, value) -> int:
        self.feature.append(LEAF)
        self.threshold.append(np.nan)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.gain.append(0.0)
        self.n_samples.append(n_samples)
        self.value.append(np.atleast_1d(np.asarray(value, dtype=np.float64)))
        return len(self.feature) - 1

    def build(self) -> Tree:
        return Tree(
            np.array(self.feature, dtype=np.int64),
            np.array(self.threshold, dtype=np.float64),
            np.array(self.left, dtype=np.int64),
            np.array(self.right, dtype=np.int64),
            np.array(self.gain, dtype=np.float64),
            np.array(self.n_samples, dtype=np.int64),
            np.vstack(self.value),
        )


def _pick(gains: np.ndarray, xs: np.ndarray, features: np.ndarray) -> Split | None:
    """Choose from a (positions, features) gain table; ``-inf`` marks invalid cells."""
    by_feature = gains.T
    best = by_feature.max()
    if not np.isfinite(best) or best <= GAIN_TOL:
        return None
    flat = np.flatnonzero(by_feature.ravel() >= best - GAIN_TOL)[0]
    f, pos = divmod(int(flat), by_feature.shape[1])
    lo, hi = xs[pos, f], xs[pos + 1, f]
    threshold = lo + (hi - lo) / 2.0
    if not lo <= threshold < hi:
        threshold = lo
    return Split(int(features[f]), float(threshold), float(by_feature[f, pos]))


def _sorted_columns(X: np.ndarray, features: np.ndarray):
    cols = X[:, features]
    order = np.argsort(cols, axis=0, kind="stable")
    xs = np.take_along_axis(cols, order, axis=0)
    distinct = xs[1:] > xs[:-1]
    return order, xs, distinct


def gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - (p * p).sum())


def gini_best_split(X: np.ndarray, y: np.ndarray, n_classes: int,
                    features=None) -> Split | None:
    """Best Gini split; gain is ``gini(parent) - n_L/n gini(L) - n_R/n gini(R)``."""
    n = X.shape[0]
    features = np.arange(X.shape[1]) if features is None else np.asarray(features)
    if n < 2 or features.size == 0:
        return None
    onehot = np.eye(n_classes)[y]
    total = onehot.sum(axis=0)
    if np.count_nonzero(total) <= 1:
        return None
    order, xs, distinct = _sorted_columns(X, features)
    left = np.cumsum(onehot[order], axis=0)[:-1]
    right = total - left
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    gini_left = 1.0 - (left ** 2).sum(axis=2) / n_left ** 2
    gini_right = 1.0 - (right ** 2).sum(axis=2) / n_right ** 2
    parent = 1.0 - (total ** 2).sum() / n ** 2
    decrease = parent - (n_left / n) * gini_left - (n_right / n) * gini_right
    return _pick(np.where(distinct, decrease, -np.inf), xs, features)


def newton_best_split(X: np.ndarray, grad: np.ndarray, hess: np.ndarray,
                      reg_lambda: float, gamma: float = 0.0, features=None) -> Split | None:
    """Best second-order split; ``None`` unless the gain (net of ``gamma``) is positive."""
    n = X.shape[0]
    features = np.arange(X.shape[1]) if features is None else np.asarray(features)
    if n < 2 or features.size == 0:
        return None
    G, H = grad.sum(), hess.sum()
    order, xs, distinct = _sorted_columns(X, features)
    GL = np.cumsum(grad[order], axis=0)[:-1]
    HL = np.cumsum(hess[order], axis=0)[:-1]
    GR, HR = G - GL, H - HL
    dl, dr = HL + reg_lambda, HR + reg_lambda
    ok = distinct & (dl > 0) & (dr > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = GL ** 2 / dl + GR ** 2 / dr
    parent = G ** 2 / (H + reg_lambda) if H + reg_lambda > 0 else 0.0
    gain = 0.5 * (score - parent) - gamma
    return _pick(np.where(ok, gain, -np.inf), xs, features)


def newton_leaf_weight(grad_sum: float, hess_sum: float, reg_lambda: float) -> float:
    denom = hess_sum + reg_lambda
    return -grad_sum / denom if denom > 0 else 0.0


def grow_gini_tree(X: np.ndarray, y: np.ndarray, n_classes: int, *,
                   max_depth: int | None = None, min_samples_split: int = 2,
                   max_features: int | None = None, rng: np.random.Generator | None = None) -> Tree:
    """Grow a CART classification tree depth first; leaves hold class proportions.

    With ``max_features`` below the column count, each node draws that many
    candidate columns from ``rng`` without replacement.
    """
    n_features = X.shape[1]
    m = n_features if max_features is None else min(max_features, n_features)
    builder = _Builder()
    root_counts = np.bincount(y, minlength=n_classes)
    root = builder.add(len(y), root_counts / len(y))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        counts = np.bincount(y[rows], minlength=n_classes)
        if (len(rows) < max(min_samples_split, 2) or np.count_nonzero(counts) <= 1
                or (max_depth is not None and depth >= max_depth)):
            continue
        if m < n_features:
            features = np.sort(rng.choice(n_features, size=m, replace=False))
        else:
            features = np.arange(n_features)
        split = gini_best_split(X[rows], y[rows], n_classes, features)
        if split is None:
            continue
        go_left = X[rows, split.feature] <= split.threshold
        children = []
        for part in (rows[go_left], rows[~go_left]):
            c = np.bincount(y[part], minlength=n_classes)
            children.append((builder.add(len(part), c / len(part)), part))
        builder.feature[node] = split.feature
        builder.threshold[node] = split.threshold
        builder.gain[node] = split.gain
        builder.left[node], builder.right[node] = children[0][0], children[1][0]
        # right pushed first so the left subtree is numbered first
        stack.append((children[1][0], children[1][1], depth + 1))
        stack.append((children[0][0], children[0][1], depth + 1))
    return builder.build()


def grow_newton_tree(X: np.ndarray, grad: np.ndarray, hess: np.ndarray, *,
                     reg_lambda: float, gamma: float, max_depth: int) -> Tree:
    """Grow a regression tree on gradients/hessians; leaves hold ``-G/(H+lam)``."""
    builder = _Builder()
    root = builder.add(len(grad), newton_leaf_weight(grad.sum(), hess.sum(), reg_lambda))
    stack = [(root, np.arange(len(grad)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if len(rows) < 2 or depth >= max_depth:
            continue
        split = newton_best_split(X[rows], grad[rows], hess[rows], reg_lambda, gamma)
        if split is None:
            continue
        go_left = X[rows, split.feature] <= split.threshold
        children = []
        for part in (rows[go_left], rows[~go_left]):
            w = newton_leaf_weight(grad[part].sum(), hess[part].sum(), reg_lambda)
            children.append((builder.add(len(part), w), part))
        builder.feature[node] = split.feature
        builder.threshold[node] = split.threshold
        builder.gain[node] = split.gain + gamma
        builder.left[node], builder.right[node] = children[0][0], children[1][0]
        stack.append((children[1][0], children[1][1], depth + 1))
        stack.append((children[0][0], children[0][1], depth + 1))
    return builder.build()
