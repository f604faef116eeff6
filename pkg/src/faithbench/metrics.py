"""Perturbation-based faithfulness metrics: PGI and the area under the ablation curve."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from ._seeds import derive_seed
from .attribution import AttributionTable
from .data import Dataset, FeatureSchema
from .errors import ConfigError, MetricError
from .model import DenseModel, predict
from .perturb import (PerturbSpec, apply, draw, perturb_batch, rank_units, top_k_mask,
                      unit_scores, units_for)

PGI = "PGI"
ABC = "ABC"
BND = "BND"
HIGHER_BETTER = "higher_better"
LOWER_BETTER = "lower_better"
DIRECTIONS = {PGI: HIGHER_BETTER, ABC: LOWER_BETTER, BND: LOWER_BETTER}

GLOBAL = "global"
PER_ROW = "per_row"


@dataclass(frozen=True)
class MetricScore:
    metric: str
    value: float
    method: str = ""
    baseline: Optional[str] = None
    repeat: int = 0
    k: Optional[int] = None
    fingerprint: str = ""
    direction: str = field(default="")

    def __post_init__(self):
        if self.metric not in DIRECTIONS:
            raise MetricError(f"unknown metric {self.metric!r}")
        object.__setattr__(self, "direction", DIRECTIONS[self.metric])
        object.__setattr__(self, "value", float(self.value))
        if not np.isfinite(self.value):
            raise MetricError(f"{self.metric} value is not finite")

    @property
    def candidate(self) -> str:
        return self.method if self.baseline is None else f"{self.method}/{self.baseline}"

    @classmethod
    def for_table(cls, metric: str, value: float, table: AttributionTable, **kw) -> "MetricScore":
        return cls(metric, value, table.method, table.baseline_kind, table.repeat, **kw)

    def to_row(self) -> dict:
        return {"metric": self.metric, "method": self.method, "baseline": self.baseline or "",
                "repeat": self.repeat, "k": "" if self.k is None else self.k,
                "value": repr(self.value), "direction": self.direction}


def fingerprint(**parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def default_k(schema: FeatureSchema, aggregate_categorical: bool = False) -> int:
    return max(1, int(round(0.25 * len(units_for(schema, aggregate_categorical)))))


def _check_table(ds: Dataset, table: AttributionTable) -> None:
    if table.values.shape != ds.X_test.shape:
        raise ConfigError(f"table shape {table.values.shape} does not match the test split "
                          f"{ds.X_test.shape}")


def _eval_rows(n: int, max_rows: int, seed: int) -> np.ndarray:
    if n <= max_rows:
        return np.arange(n)
    return np.sort(np.random.default_rng(derive_seed(seed, "pgi-rows")).choice(
        n, size=max_rows, replace=False))


def pgi_per_row(model: DenseModel, ds: Dataset, table: AttributionTable, spec: PerturbSpec,
                k: int, m: int = 10, aggregate_categorical: bool = False,
                max_rows: int = 1000) -> tuple:
    """Per-sample prediction gaps; returns (evaluated row positions, gaps)."""
    _check_table(ds, table)
    n_units = len(units_for(ds.schema, aggregate_categorical))
    if k < 1 or k > n_units:
        raise ConfigError(f"k={k} outside 1..{n_units} selectable units "
                          f"(aggregate_categorical={aggregate_categorical})")
    X = ds.X_test
    rows = _eval_rows(X.shape[0], max_rows, spec.seed)
    gaps = np.empty(rows.size)
    for t, i in enumerate(rows):
        mask = top_k_mask(table.values[i], ds.schema, k, aggregate_categorical)
        row_spec = replace(spec, seed=derive_seed(spec.seed, "pgi", int(i)))
        xt = perturb_batch(X[i], mask, row_spec, ds, m)
        f = predict(model, np.vstack([X[i], xt]))
        # unchanged inputs have no gap; BLAS row blocking could otherwise leave ~1e-17
        gap = np.where(np.all(xt == X[i], axis=1), 0.0, np.abs(f[0] - f[1:]))
        gaps[t] = np.mean(gap)
    return rows, gaps


def pgi(model: DenseModel, ds: Dataset, table: AttributionTable, spec: PerturbSpec,
        k: Optional[int] = None, m: int = 10, aggregate_categorical: bool = False,
        max_rows: int = 1000) -> MetricScore:
    """Prediction gap on the top-k features, averaged over m runs and the test rows."""
    if k is None:
        k = default_k(ds.schema, aggregate_categorical)
    _, gaps = pgi_per_row(model, ds, table, spec, k, m, aggregate_categorical, max_rows)
    fp = fingerprint(spec=spec.to_dict(), k=k, m=m, agg=aggregate_categorical)
    return MetricScore.for_table(PGI, float(gaps.mean()), table, k=k, fingerprint=fp)


def pgi_sweep(model, ds, table, spec: PerturbSpec, k_values: Sequence[int], m: int = 10,
              aggregate_categorical: bool = False, max_rows: int = 1000) -> list:
    if not len(k_values):
        raise ConfigError("k_values is empty")
    return [(int(k), pgi(model, ds, table, spec, int(k), m, aggregate_categorical, max_rows))
            for k in k_values]


def auroc(y, scores) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties count one half)."""
    y = np.asarray(y)
    n1 = int((y == 1).sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise MetricError("AUROC is undefined on a single-class split")
    r = rankdata(scores)
    return float((r[y == 1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def normalized_area(performance) -> float:
    """Trapezoid area with the step axis rescaled to [0, 1]."""
    perf = np.asarray(performance, dtype=np.float64)
    if perf.size == 1:
        return float(perf[0])
    x = np.linspace(0.0, 1.0, perf.size)
    return float(np.sum((perf[1:] + perf[:-1]) * np.diff(x)) / 2.0)


@dataclass(frozen=True)
class AblationCurve:
    steps: np.ndarray
    performance: np.ndarray
    auc: float
    order: Optional[np.ndarray] = None  # global unit order, when one exists

    def rows(self) -> list:
        return [(int(s), float(p)) for s, p in zip(self.steps, self.performance)]


def ablation_order(table: AttributionTable, schema: FeatureSchema, aggregate_categorical: bool,
                   ordering: str) -> np.ndarray:
    """Unit orders, shape (n_units,) for global ordering or (n, n_units) per row."""
    units = units_for(schema, aggregate_categorical)
    scores = unit_scores(table.values, units)
    if ordering == GLOBAL:
        return rank_units(scores.mean(axis=0))
    if ordering == PER_ROW:
        return rank_units(scores)
    raise ConfigError(f"unknown ablation ordering {ordering!r}")


def ablation_curve(model: DenseModel, ds: Dataset, table: AttributionTable, spec: PerturbSpec,
                   aggregate_categorical: bool = True, ordering: str = PER_ROW,
                   cumulative: bool = True, runs: int = 10) -> AblationCurve:
    """AUROC on the test split as units are perturbed in attribution order.

    Cumulative mode draws the perturbation once per run, so step s extends
    step s-1; otherwise every step redraws from the clean input. The curve is
    the mean over `runs` independent draws.
    """
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    _check_table(ds, table)
    X, y = ds.X_test, ds.y_test
    n, d = X.shape
    units = units_for(ds.schema, aggregate_categorical)
    order = ablation_order(table, ds.schema, aggregate_categorical, ordering)
    order2d = np.broadcast_to(order, (n, len(units)))
    unit_cols = np.zeros((len(units), d), dtype=bool)
    for u, (_, idx) in enumerate(units):
        unit_cols[u, list(idx)] = True
    n_train = ds.X_train.shape[0]
    clean = auroc(y, predict(model, X))
    curves = []
    for run in range(runs):
        rng = np.random.default_rng(derive_seed(spec.seed, "ablation", run))
        dr = draw(rng, n, d, n_train)
        perf = [clean]
        selected = np.zeros((n, d), dtype=bool)
        for s in range(len(units)):
            selected |= unit_cols[order2d[:, s]]
            if not cumulative:
                dr = draw(rng, n, d, n_train)
            Xs = apply(X, selected, spec, ds, dr, aggregate_categorical)
            perf.append(auroc(y, predict(model, Xs)))
        curves.append(perf)
    perf = np.mean(np.array(curves), axis=0)
    return AblationCurve(np.arange(perf.size), perf, normalized_area(perf),
                         order if ordering == GLOBAL else None)


def abc(curve: AblationCurve, table: Optional[AttributionTable] = None, **kw) -> MetricScore:
    if table is None:
        return MetricScore(ABC, curve.auc, **kw)
    return MetricScore.for_table(ABC, curve.auc, table, **kw)


def random_feature_cutoff(tables: Sequence[AttributionTable], schema: FeatureSchema) -> float:
    """Best (smallest) mean 1-based rank achieved by an injected random feature."""
    injected = schema.random_feature_indices()
    if not injected:
        raise MetricError("dataset has no injected random features")
    if isinstance(tables, AttributionTable):
        tables = [tables]
    vals = np.vstack([t.values for t in tables])
    order = np.argsort(-np.abs(vals), axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(vals.shape[0])[:, None]
    ranks[rows, order] = np.arange(1, vals.shape[1] + 1)[None, :]
    return float(ranks[:, injected].mean(axis=0).min())
