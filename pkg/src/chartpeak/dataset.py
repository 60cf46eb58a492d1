"""Feature matrix assembly, train-only preprocessing, stratified splits and correlation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import _jsonio
from ._validation import check_features, check_is_fitted
from .charts import RankClass, TrackRecord
from .enrich import AUDIO_FEATURES, AudioFeatures
from .errors import (
    AllMissingColumnError,
    BadKError,
    ClassSmallerThanKError,
    ClassTooSmallError,
    ColumnMismatchError,
    DatasetError,
    DuplicateFeatureRowError,
    EmptyDatasetError,
    MissingAudioColumnError,
    TooFewRowsError,
)

N_CLASSES = len(RankClass)
METADATA_COLUMNS = ("streams", "previous_rank", "days_on_chart")


def full_columns(include_peak_rank: bool = False) -> tuple[str, ...]:
    if include_peak_rank:
        return ("streams", "previous_rank", "peak_rank", "days_on_chart") + AUDIO_FEATURES
    return METADATA_COLUMNS + AUDIO_FEATURES


@dataclass(frozen=True)
class Dataset:
    """Rows are tracks; missing cells are NaN until preprocessing fills them."""

    column_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    row_ids: tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        if X.ndim != 2 or X.shape[1] != len(self.column_names):
            raise DatasetError(f"X shape {X.shape} does not match {len(self.column_names)} columns")
        if not X.shape[0] == len(y) == len(self.row_ids):
            raise DatasetError("X, y and row_ids differ in length")
        if len(y) and (y.min() < 0 or y.max() >= N_CLASSES):
            raise DatasetError("labels must be rank-class ordinals 0..2")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=N_CLASSES)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.column_names, self.X[rows], self.y[rows],
                       tuple(self.row_ids[i] for i in rows))

    def select(self, columns: Sequence[str]) -> "Dataset":
        index = [self.column_names.index(c) for c in columns]
        return Dataset(tuple(columns), self.X[:, index], self.y, self.row_ids)


def join_on_uri(tracks: Sequence[TrackRecord], features: Iterable[AudioFeatures],
                include_peak_rank: bool = False) -> Dataset:
    """Attach audio features to every track; tracks without features keep NaN audio cells.

    An absent ``previous_rank`` is also stored as NaN and imputed later.
    """
    if not tracks:
        raise EmptyDatasetError("no tracks to join")
    table: dict[str, AudioFeatures] = {}
    for f in features:
        if f.track_uri in table:
            raise DuplicateFeatureRowError(f"two feature rows for {f.track_uri}")
        table[f.track_uri] = f

    columns = full_columns(include_peak_rank)
    X = np.full((len(tracks), len(columns)), np.nan)
    for i, t in enumerate(tracks):
        meta = {
            "streams": t.streams,
            "previous_rank": np.nan if t.previous_rank is None else t.previous_rank,
            "peak_rank": t.peak_rank,
            "days_on_chart": t.days_on_chart,
        }
        audio = table.get(t.track_uri)
        for j, name in enumerate(columns):
            if name in meta:
                X[i, j] = meta[name]
            elif audio is not None:
                X[i, j] = getattr(audio, name)
    y = np.array([int(t.label) for t in tracks], dtype=np.int64)
    return Dataset(columns, X, y, tuple(t.track_uri for t in tracks))


def filter_audio_only(dataset: Dataset) -> Dataset:
    missing = [c for c in AUDIO_FEATURES if c not in dataset.column_names]
    if missing:
        raise MissingAudioColumnError(f"dataset lacks audio columns {missing}")
    return dataset.select(AUDIO_FEATURES)


# -- preprocessing -----------------------------------------------------------

@dataclass
class PreprocessState:
    column_means: np.ndarray
    scaler_mean: np.ndarray
    scaler_scale: np.ndarray
    column_names: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "columns": list(self.column_names),
            "fill_values": self.column_means,
            "scaler_mean": self.scaler_mean,
            "scaler_scale": self.scaler_scale,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PreprocessState":
        return cls(
            np.asarray(obj["fill_values"], dtype=np.float64),
            np.asarray(obj["scaler_mean"], dtype=np.float64),
            np.asarray(obj["scaler_scale"], dtype=np.float64),
            tuple(obj.get("columns", ())),
        )


def fit_preprocess(X, column_names: Sequence[str] = ()) -> PreprocessState:
    """Learn fill values and scaler parameters from training rows only.

    Missing cells take the column mean of the observed training values; the
    scaler then uses the mean and sample (n-1) standard deviation of the
    imputed columns.  Zero-variance columns get scale 1.
    """
    X = check_features(X, allow_nan=True)
    observed = ~np.isnan(X)
    counts = observed.sum(axis=0)
    if np.any(counts == 0):
        bad = [column_names[j] if column_names else j for j in np.flatnonzero(counts == 0)]
        raise AllMissingColumnError(f"no observed training values in columns {bad}")
    fill = np.where(observed, X, 0.0).sum(axis=0) / counts
    filled = np.where(observed, X, fill)
    mean = filled.mean(axis=0)
    if X.shape[0] > 1:
        scale = filled.std(axis=0, ddof=1)
    else:
        scale = np.zeros(X.shape[1])
    scale = np.where(scale > 0, scale, 1.0)
    return PreprocessState(fill, mean, scale, tuple(column_names))


def apply_preprocess(state: PreprocessState, X) -> np.ndarray:
    X = check_features(X, allow_nan=True)
    if X.shape[1] != len(state.scaler_mean):
        raise ColumnMismatchError(
            f"preprocessing was fitted on {len(state.scaler_mean)} columns, got {X.shape[1]}"
        )
    filled = np.where(np.isnan(X), state.column_means, X)
    return (filled - state.scaler_mean) / state.scaler_scale


class Preprocessor(TransformerMixin, BaseEstimator):
    """Mean imputation followed by standardization, as an sklearn transformer."""

    def fit(self, X, y=None):
        self.state_ = fit_preprocess(X)
        self.n_features_in_ = len(self.state_.scaler_mean)
        return self

    def transform(self, X):
        check_is_fitted(self, "state_")
        return apply_preprocess(self.state_, X)


# -- splits ------------------------------------------------------------------

@dataclass(frozen=True)
class HoldoutSplit:
    train: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class FoldSplit:
    folds: tuple[np.ndarray, ...]
    n_rows: int = field(default=0)

    def __len__(self) -> int:
        return len(self.folds)

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield ``(train_rows, test_rows)`` per fold."""
        for i, test in enumerate(self.folds):
            train = np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))
            yield train, test


def _labels(data) -> np.ndarray:
    y = data.y if isinstance(data, Dataset) else data
    return np.asarray(y, dtype=np.int64)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_holdout(data, train_fraction: float = 0.8, seed: int = 42) -> HoldoutSplit:
    """Shuffle each class and send ``round(fraction * count)`` of it to training."""
    y = _labels(data)
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(y):
        rows = np.flatnonzero(y == cls)
        if len(rows) < 2:
            raise ClassTooSmallError(f"class {cls} has {len(rows)} row(s); need at least 2")
        rows = rng.permutation(rows)
        n_train = min(max(_round_half_up(train_fraction * len(rows)), 1), len(rows) - 1)
        train.append(rows[:n_train])
        test.append(rows[n_train:])
    return HoldoutSplit(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)))


def stratified_kfold(data, k: int = 5, seed: int = 42) -> FoldSplit:
    """Deal each shuffled class round-robin across ``k`` folds.

    Classes are laid end to end before dealing, so each class's remainder
    starts where the previous class stopped and fold sizes stay balanced too.
    """
    y = _labels(data)
    if k < 2:
        raise BadKError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    order = []
    for cls in np.unique(y):
        rows = np.flatnonzero(y == cls)
        if len(rows) < k:
            raise ClassSmallerThanKError(f"class {cls} has {len(rows)} rows, fewer than k={k}")
        order.append(rng.permutation(rows))
    order = np.concatenate(order)
    assignment = np.arange(len(order)) % k
    folds = tuple(np.sort(order[assignment == f]) for f in range(k))
    return FoldSplit(folds, len(y))


# -- correlation -------------------------------------------------------------

def correlation_matrix(data) -> np.ndarray:
    """Pearson correlation between columns; constant columns correlate 0 with the rest."""
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise TooFewRowsError("correlation needs at least two rows")
    if np.isnan(X).any():
        raise DatasetError("correlation input has missing cells; impute first")
    centered = X - X.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    safe = np.where(norms > 0, norms, 1.0)
    unit = centered / safe
    r = unit.T @ unit
    r[:, norms == 0] = 0.0
    r[norms == 0, :] = 0.0
    r = np.clip((r + r.T) / 2, -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return r


# -- files -------------------------------------------------------------------

def write_dataset_csv(dataset: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("uri", "label") + dataset.column_names)
        for uri, label, row in zip(dataset.row_ids, dataset.y, dataset.X):
            cells = ["" if np.isnan(v) else repr(float(v)) for v in row]
            writer.writerow([uri, RankClass(int(label)).name] + cells)


def read_dataset_csv(path: str | Path) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["uri", "label"]:
            raise DatasetError(f"{path}: expected a header starting with uri,label")
        ids, labels, rows = [], [], []
        for row in reader:
            ids.append(row[0])
            labels.append(int(RankClass.from_label(row[1])))
            rows.append([float(v) if v.strip() else np.nan for v in row[2:]])
    if not ids:
        raise EmptyDatasetError(f"{path} has no rows")
    return Dataset(tuple(header[2:]), np.array(rows, dtype=np.float64), np.array(labels), tuple(ids))


def write_preprocess_json(states: dict[str, PreprocessState], path: str | Path, **extra) -> None:
    payload = dict(extra)
    payload.update({name: s.to_dict() for name, s in states.items()})
    _jsonio.dump(payload, path)
