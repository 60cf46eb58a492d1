"""Predict a track's peak chart tier from chart metadata and audio features.

Pipeline stages live in their own modules: :mod:`~chartpeak.charts` (daily
chart files to per-track records), :mod:`~chartpeak.enrich` (paced audio
feature client), :mod:`~chartpeak.dataset` (join, preprocessing, splits),
:mod:`~chartpeak.learners` (four from-scratch classifiers) and
:mod:`~chartpeak.evaluation` (metrics, CV, grid search).
"""

from .charts import RankClass, TrackRecord, label_rank_class
from .dataset import Dataset, Preprocessor
from .evaluation import cross_validate, grid_search, metrics
from .learners import (
    GradientBoostedTrees,
    NearestNeighbors,
    RandomForest,
    SoftmaxRegression,
    feature_importance,
    load_model,
    save_model,
)

__version__ = "0.1.0"

__all__ = [
    "RankClass", "TrackRecord", "label_rank_class", "Dataset", "Preprocessor",
    "cross_validate", "grid_search", "metrics", "GradientBoostedTrees", "NearestNeighbors",
    "RandomForest", "SoftmaxRegression", "feature_importance", "load_model", "save_model",
]
