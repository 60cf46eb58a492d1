"""Confusion-matrix metrics, stratified cross-validation and grid search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from sklearn.base import clone

from .dataset import Dataset, apply_preprocess, fit_preprocess, stratified_holdout, stratified_kfold
from .errors import (
    ChartpeakError,
    EmptyGridError,
    EmptyMatrixError,
    LabelOutOfRangeError,
    LengthMismatchError,
)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]


@dataclass
class EvalReport:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float
    confusion: ConfusionMatrix

    @property
    def per_class(self) -> list[tuple[float, float, float]]:
        return [(float(p), float(r), float(f)) for p, r, f in zip(self.precision, self.recall, self.f1)]

    def to_dict(self, class_names: Sequence[str] | None = None) -> dict:
        names = class_names or [str(c) for c in range(len(self.f1))]
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": [
                {"class": name, "precision": p, "recall": r, "f1": f}
                for name, (p, r, f) in zip(names, self.per_class)
            ],
            "confusion": self.confusion.counts.tolist(),
        }


@dataclass
class CvResult:
    fold_scores: np.ndarray
    mean: float
    std: float
    reports: list[EvalReport] = field(default_factory=list)

    def to_dict(self, class_names=None) -> dict:
        return {
            "k": len(self.fold_scores),
            "fold_macro_f1": self.fold_scores.tolist(),
            "mean": self.mean,
            "std": self.std,
            "folds": [r.to_dict(class_names) for r in self.reports],
        }


@dataclass
class GridResult:
    evaluated: list[tuple[dict, CvResult]]
    best_config: dict
    best_score: float

    def to_dict(self) -> dict:
        return {
            "evaluated": [
                {"params": params, "mean": cv.mean, "std": cv.std} for params, cv in self.evaluated
            ],
            "best_config": self.best_config,
            "best_score": self.best_score,
        }


def confusion(y_true, y_pred, n_classes: int) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise LengthMismatchError(f"{len(y_true)} true labels vs {len(y_pred)} predictions")
    for name, arr in (("true", y_true), ("predicted", y_pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise LabelOutOfRangeError(f"{name} label outside 0..{n_classes - 1}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def metrics(cm: ConfusionMatrix | np.ndarray) -> EvalReport:
    """Accuracy and per-class precision/recall/F1; any 0/0 ratio counts as 0."""
    if not isinstance(cm, ConfusionMatrix):
        cm = ConfusionMatrix(np.asarray(cm, dtype=np.int64))
    counts = cm.counts.astype(np.float64)
    if counts.size == 0 or counts.sum() == 0:
        raise EmptyMatrixError("confusion matrix is empty")
    tp = np.diag(counts)
    precision = _ratio(tp, counts.sum(axis=0))
    recall = _ratio(tp, counts.sum(axis=1))
    f1 = _ratio(2 * precision * recall, precision + recall)
    return EvalReport(
        accuracy=float(tp.sum() / counts.sum()),
        precision=precision,
        recall=recall,
        f1=f1,
        macro_f1=float(f1.mean()),
        confusion=cm,
    )


def score(y_true, y_pred, n_classes: int) -> EvalReport:
    return metrics(confusion(y_true, y_pred, n_classes))


def _as_arrays(data, y=None, column_names=None):
    if isinstance(data, Dataset):
        return data.X, data.y, list(data.column_names)
    X = np.asarray(data, dtype=np.float64)
    return X, np.asarray(y, dtype=np.int64), column_names


def fit_on_rows(estimator, X, y, rows, column_names=None):
    """Fit preprocessing and a fresh clone of ``estimator`` on ``rows`` only."""
    state = fit_preprocess(X[rows], column_names or ())
    model = clone(estimator)
    model.fit(apply_preprocess(state, X[rows]), y[rows], column_names=column_names)
    return state, model


def _evaluate_rows(estimator, X, y, train, test, n_classes, column_names):
    state, model = fit_on_rows(estimator, X, y, train, column_names)
    pred = model.predict(apply_preprocess(state, X[test]))
    return score(y[test], pred, n_classes), state, model


def holdout_evaluate(estimator, data, y=None, *, train_fraction: float = 0.8, seed: int = 42,
                     column_names=None):
    """Stratified holdout: returns ``(report, fitted_model, preprocess_state, split)``."""
    X, y, column_names = _as_arrays(data, y, column_names)
    split = stratified_holdout(y, train_fraction, seed)
    k = int(y.max()) + 1
    report, state, model = _evaluate_rows(estimator, X, y, split.train, split.test, k, column_names)
    return report, model, state, split


def cross_validate(estimator, data, y=None, *, k: int = 5, seed: int = 42,
                   column_names=None) -> CvResult:
    """Stratified k-fold CV of macro-F1; preprocessing is refitted inside every fold."""
    X, y, column_names = _as_arrays(data, y, column_names)
    n_classes = int(y.max()) + 1
    reports = []
    for i, (train, test) in enumerate(stratified_kfold(y, k, seed)):
        try:
            report, _, _ = _evaluate_rows(estimator, X, y, train, test, n_classes, column_names)
        except ChartpeakError as exc:
            exc.fold = i
            raise
        reports.append(report)
    scores = np.array([r.macro_f1 for r in reports])
    return CvResult(scores, float(scores.mean()), float(scores.std(ddof=1)), reports)


def parameter_grid(param_grid: Mapping[str, Sequence[Any]]) -> list[dict]:
    """Cartesian product in declared parameter order, values in given order."""
    if not param_grid or any(len(v) == 0 for v in param_grid.values()):
        raise EmptyGridError("parameter grid is empty")
    names = list(param_grid)
    return [dict(zip(names, combo)) for combo in itertools.product(*(param_grid[n] for n in names))]


def grid_search(estimator, param_grid: Mapping[str, Sequence[Any]], data, y=None, *,
                k: int = 5, seed: int = 42, column_names=None) -> GridResult:
    """Exhaustive CV over the grid; the earliest config wins ties on mean macro-F1."""
    configs = parameter_grid(param_grid)
    X, y, column_names = _as_arrays(data, y, column_names)
    evaluated = []
    best_config, best_score = None, -np.inf
    for config in configs:
        candidate = clone(estimator).set_params(**config)
        cv = cross_validate(candidate, X, y, k=k, seed=seed, column_names=column_names)
        evaluated.append((config, cv))
        if cv.mean > best_score:
            best_config, best_score = config, cv.mean
    return GridResult(evaluated, best_config, float(best_score))
