"""Reference sets that attribution methods contrast the explained sample against."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import CATEGORICAL, Dataset
from .errors import BaselineUnavailable, SpecError
from .model import DenseModel, predict

CONSTANT_MEDIAN = "constant_median"
TRAINING = "training"
OPPOSITE_CLASS = "opposite_class"
NEAREST_NEIGHBORS = "nearest_neighbors"
KINDS = (CONSTANT_MEDIAN, TRAINING, OPPOSITE_CLASS, NEAREST_NEIGHBORS)
DEFAULT_K = 5


@dataclass(frozen=True, eq=False)
class BaselineSet:
    kind: str
    references: np.ndarray
    anchor: Optional[np.ndarray] = None
    seed: Optional[int] = None
    rows: Optional[np.ndarray] = None  # dataset row indices of the references
    short: bool = False
    label_source: str = "predicted"

    @property
    def k(self) -> int:
        return self.references.shape[0]


def constant_median(ds: Dataset) -> BaselineSet:
    """Column medians over the train split; categorical columns and one-hot groups take the mode."""
    Xt = ds.X_train
    if Xt.shape[0] == 0:
        raise BaselineUnavailable("train split is empty")
    ref = np.median(Xt, axis=0)
    for j, col in enumerate(ds.schema.columns):
        if col.kind == CATEGORICAL:
            vals, counts = np.unique(Xt[:, j], return_counts=True)
            ref[j] = vals[np.argmax(counts)]
    for idx in ds.schema.one_hot_groups():
        idx = list(idx)
        counts = Xt[:, idx].sum(axis=0)
        ref[idx] = 0.0
        ref[idx[int(np.argmax(counts))]] = 1.0
    return BaselineSet(CONSTANT_MEDIAN, ref[None, :])


def training_sample(ds: Dataset, k: int = DEFAULT_K, seed: int = 0) -> BaselineSet:
    train = ds.train_index
    if k < 1 or k > train.size:
        raise SpecError(f"cannot draw k={k} rows from {train.size} train rows")
    rows = np.random.default_rng(seed).choice(train, size=k, replace=False)
    return BaselineSet(TRAINING, ds.X[rows], seed=seed, rows=rows)


def _nearest(candidates: np.ndarray, X: np.ndarray, anchor: np.ndarray, k: int) -> np.ndarray:
    dist = np.sqrt(((X[candidates] - anchor) ** 2).sum(axis=1))
    # stable sort on ascending row index = lowest index wins ties
    order = np.argsort(dist, kind="stable")
    return candidates[order[:k]]


def opposite_class(ds: Dataset, model: DenseModel, anchor, k: int = DEFAULT_K, seed: int = 0,
                   train_pred: Optional[np.ndarray] = None) -> BaselineSet:
    """The k train rows of opposite *predicted* class nearest to the anchor.

    Fewer than k eligible rows is not an error: all of them are returned and
    the set is flagged ``short``.
    """
    anchor = np.asarray(anchor, dtype=np.float64)
    train = ds.train_index
    if train_pred is None:
        train_pred = predict(model, ds.X[train])
    anchor_cls = predict(model, anchor) >= 0.5
    eligible = train[(np.asarray(train_pred) >= 0.5) != anchor_cls]
    if eligible.size == 0:
        raise BaselineUnavailable("no train row has the opposite predicted class")
    rows = _nearest(eligible, ds.X, anchor, k)
    return BaselineSet(OPPOSITE_CLASS, ds.X[rows], anchor=anchor, seed=seed, rows=rows,
                       short=rows.size < k)


def nearest_neighbors(ds: Dataset, anchor, k: int = DEFAULT_K, seed: int = 0) -> BaselineSet:
    anchor = np.asarray(anchor, dtype=np.float64)
    train = ds.train_index
    eligible = train[~np.all(ds.X[train] == anchor, axis=1)]
    if k < 1 or k > eligible.size:
        raise SpecError(f"k={k} exceeds the {eligible.size} eligible train rows")
    rows = _nearest(eligible, ds.X, anchor, k)
    return BaselineSet(NEAREST_NEIGHBORS, ds.X[rows], anchor=anchor, seed=seed, rows=rows)


def build(kind: str, ds: Dataset, model: DenseModel, anchor, k: int = DEFAULT_K, seed: int = 0,
          train_pred=None, median: Optional[BaselineSet] = None) -> BaselineSet:
    """Dispatch by kind; ``median`` lets callers reuse the anchor-free constant baseline."""
    if kind == CONSTANT_MEDIAN:
        return median if median is not None else constant_median(ds)
    if kind == TRAINING:
        return training_sample(ds, k, seed)
    if kind == OPPOSITE_CLASS:
        return opposite_class(ds, model, anchor, k, seed, train_pred=train_pred)
    if kind == NEAREST_NEIGHBORS:
        return nearest_neighbors(ds, anchor, k, seed)
    raise SpecError(f"unknown baseline kind {kind!r}")
