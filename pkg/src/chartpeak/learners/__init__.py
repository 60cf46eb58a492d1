"""The four classifiers behind one fit/predict interface, plus model (de)serialization."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .. import _jsonio
from ..errors import UnsupportedVariantError
from .base import RankClassifier
from .boosting import GradientBoostedTrees
from .forest import RandomForest
from .knn import NearestNeighbors
from .logistic import SoftmaxRegression

LEARNERS: dict[str, type[RankClassifier]] = {
    "logreg": SoftmaxRegression,
    "knn": NearestNeighbors,
    "rf": RandomForest,
    "gbt": GradientBoostedTrees,
}

__all__ = [
    "LEARNERS", "RankClassifier", "SoftmaxRegression", "NearestNeighbors", "RandomForest",
    "GradientBoostedTrees", "make_learner", "train", "feature_importance",
    "model_to_dict", "model_from_dict", "save_model", "load_model",
]


def make_learner(variant: str, **params) -> RankClassifier:
    try:
        cls = LEARNERS[variant]
    except KeyError:
        raise UnsupportedVariantError(
            f"unknown model {variant!r}; choose from {', '.join(LEARNERS)}"
        ) from None
    return cls(**params)


def train(variant: str, X, y, column_names=None, **params) -> RankClassifier:
    return make_learner(variant, **params).fit(X, y, column_names=column_names)


def feature_importance(model: RankClassifier) -> list[tuple[str, float]]:
    """Normalized per-column importances, largest first (ties keep column order).

    Only the tree ensembles carry importances.  A model that never split
    reports zeros.
    """
    if not hasattr(model, "raw_importances"):
        raise UnsupportedVariantError(f"{type(model).__name__} has no feature importances")
    raw = model.raw_importances()
    total = raw.sum()
    values = raw / total if total > 0 else raw
    order = sorted(range(len(values)), key=lambda j: (-values[j], j))
    return [(model.column_names_[j], float(values[j])) for j in order]


def model_to_dict(model: RankClassifier) -> dict:
    return {
        "variant": model.variant,
        "params": model.get_params(),
        "n_classes": model.n_classes_,
        "n_features": model.n_features_in_,
        "column_names": model.column_names_,
        "state": model._get_state(),
    }


def model_from_dict(obj: dict) -> RankClassifier:
    model = make_learner(obj["variant"], **obj["params"])
    model.n_classes_ = int(obj["n_classes"])
    model.classes_ = np.arange(model.n_classes_)
    model.n_features_in_ = int(obj["n_features"])
    model.column_names_ = list(obj["column_names"])
    model._set_state(obj["state"])
    return model


def save_model(model: RankClassifier, path: str | Path) -> None:
    _jsonio.dump(model_to_dict(model), path)


def load_model(path: str | Path) -> RankClassifier:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
