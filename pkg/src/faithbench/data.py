"""Datasets: schema handling, CSV ingestion, standardization, synthetic generation.

Feature matrices are plain float64 numpy arrays. A `Dataset` is immutable once
built; every transform returns a new instance.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import IntegrityError, LabelError, SchemaError, SpecError

NUMERIC = "numeric"
CATEGORICAL = "categorical"
ONE_HOT = "one_hot_member"
KINDS = (NUMERIC, CATEGORICAL, ONE_HOT)

RANDOM_PREFIX = "__rnd_"
TEST_FRACTION = 0.2


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = NUMERIC
    parent: Optional[str] = None
    cardinality: Optional[int] = None

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "parent": self.parent,
                "cardinality": self.cardinality}


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")
        for c in self.columns:
            if c.kind not in KINDS:
                raise SchemaError(f"unknown column kind {c.kind!r} for {c.name!r}")
            if c.kind == CATEGORICAL and (c.cardinality is None or c.cardinality < 2):
                raise SchemaError(f"categorical column {c.name!r} needs cardinality >= 2")
            if c.kind == ONE_HOT and not c.parent:
                raise SchemaError(f"one-hot member {c.name!r} has no parent")
        # one-hot groups: contiguous, size == cardinality
        seen = set()
        i = 0
        cols = self.columns
        while i < len(cols):
            c = cols[i]
            if c.kind != ONE_HOT:
                i += 1
                continue
            parent = c.parent
            if parent in seen:
                raise SchemaError(f"one-hot group {parent!r} is not contiguous")
            seen.add(parent)
            j = i
            while j < len(cols) and cols[j].kind == ONE_HOT and cols[j].parent == parent:
                j += 1
            size = j - i
            cards = {cols[t].cardinality for t in range(i, j)}
            if cards != {size}:
                raise SchemaError(
                    f"one-hot group {parent!r} has {size} members but cardinality {cards}")
            i = j

    @classmethod
    def numeric(cls, names: Sequence[str]) -> "FeatureSchema":
        return cls(tuple(Column(n) for n in names))

    @classmethod
    def from_dicts(cls, items) -> "FeatureSchema":
        return cls(tuple(Column(d["name"], d.get("kind", NUMERIC), d.get("parent"),
                                d.get("cardinality")) for d in items))

    @property
    def names(self) -> list:
        return [c.name for c in self.columns]

    @property
    def d(self) -> int:
        return len(self.columns)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def units(self) -> list:
        """Selectable units as (label, column-index tuple); one-hot groups are one unit."""
        out = []
        i = 0
        cols = self.columns
        while i < len(cols):
            c = cols[i]
            if c.kind == ONE_HOT:
                j = i
                while j < len(cols) and cols[j].kind == ONE_HOT and cols[j].parent == c.parent:
                    j += 1
                out.append((c.parent, tuple(range(i, j))))
                i = j
            else:
                out.append((c.name, (i,)))
                i += 1
        return out

    def columns_as_units(self) -> list:
        return [(c.name, (i,)) for i, c in enumerate(self.columns)]

    def one_hot_groups(self) -> list:
        return [idx for _, idx in self.units() if self.columns[idx[0]].kind == ONE_HOT]

    def numeric_mask(self) -> np.ndarray:
        return np.array([c.kind == NUMERIC for c in self.columns], dtype=bool)

    def random_feature_indices(self) -> list:
        return [i for i, c in enumerate(self.columns) if c.name.startswith(RANDOM_PREFIX)]

    def to_dicts(self) -> list:
        return [c.to_dict() for c in self.columns]


@dataclass(frozen=True, eq=False)
class Dataset:
    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    is_train: np.ndarray
    standardization: dict = field(default_factory=dict)
    label: str = "label"

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.asarray(self.y).astype(np.int64)
        is_train = np.asarray(self.is_train, dtype=bool)
        X.setflags(write=False)
        y.setflags(write=False)
        is_train.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "is_train", is_train)
        n = X.shape[0]
        if X.ndim != 2 or n == 0 or X.shape[1] == 0:
            raise SchemaError(f"feature matrix must be non-empty 2-d, got shape {X.shape}")
        if X.shape[1] != self.schema.d:
            raise SchemaError(f"matrix has {X.shape[1]} columns, schema has {self.schema.d}")
        if y.shape != (n,) or is_train.shape != (n,):
            raise SchemaError("labels and split tags must have one entry per row")
        if not np.all(np.isfinite(X)):
            raise IntegrityError("feature matrix contains missing or non-finite values")
        if not np.isin(y, (0, 1)).all():
            raise LabelError("labels must be binary 0/1")
        for idx in self.schema.one_hot_groups():
            sums = X[:, list(idx)].sum(axis=1)
            if not np.all(sums == 1.0):
                bad = int(np.flatnonzero(sums != 1.0)[0])
                parent = self.schema.columns[idx[0]].parent
                raise IntegrityError(f"one-hot group {parent!r} sums to {sums[bad]} on row {bad}")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def split(self) -> np.ndarray:
        return np.where(self.is_train, "train", "test")

    @property
    def X_train(self) -> np.ndarray:
        return self.X[self.is_train]

    @property
    def X_test(self) -> np.ndarray:
        return self.X[~self.is_train]

    @property
    def y_train(self) -> np.ndarray:
        return self.y[self.is_train]

    @property
    def y_test(self) -> np.ndarray:
        return self.y[~self.is_train]

    @property
    def train_index(self) -> np.ndarray:
        return np.flatnonzero(self.is_train)

    @property
    def test_index(self) -> np.ndarray:
        return np.flatnonzero(~self.is_train)

    def hash(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.schema.to_dicts(), sort_keys=True).encode())
        h.update(self.X.tobytes())
        h.update(self.y.tobytes())
        h.update(self.is_train.tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 1000
    n_features: int = 24
    coefficient_vector: Optional[tuple] = None
    noise_std: float = 0.5
    seed: int = 0

    def coefficients(self) -> np.ndarray:
        if self.coefficient_vector is None:
            return default_coefficients(self.n_features)
        c = np.asarray(self.coefficient_vector, dtype=np.float64)
        if c.shape != (self.n_features,):
            raise SpecError(f"coefficient vector has length {c.size}, expected {self.n_features}")
        return c


def default_coefficients(d: int) -> np.ndarray:
    """Alternating-sign, slowly decaying weights so every feature carries signal."""
    j = np.arange(d)
    return 1.5 * 0.93 ** j * np.where(j % 2 == 0, 1.0, -1.0)


def split_mask(n: int, seed: int, test_fraction: float = TEST_FRACTION) -> np.ndarray:
    """Seeded 80/20 split; True marks a train row."""
    n_test = int(round(test_fraction * n))
    if n > 1:
        n_test = min(max(n_test, 1), n - 1)
    else:
        n_test = 0
    order = np.random.default_rng(seed).permutation(n)
    is_train = np.ones(n, dtype=bool)
    is_train[order[:n_test]] = False
    return is_train


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    if spec.n_samples < 1 or spec.n_features < 1:
        raise SpecError("n_samples and n_features must be positive")
    if spec.noise_std < 0:
        raise SpecError("noise_std must be non-negative")
    c = spec.coefficients()
    if not np.any(c != 0):
        raise SpecError("coefficient vector is all zeros")
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n_samples, spec.n_features))
    noise = spec.noise_std * rng.standard_normal(spec.n_samples)
    y = (X @ c + noise > 0).astype(np.int64)
    if spec.n_samples >= 100:
        balance = y.mean()
        if not 0.4 <= balance <= 0.6:
            raise SpecError(f"class balance {balance:.3f} outside [0.4, 0.6]")
    schema = FeatureSchema.numeric([f"x{j}" for j in range(spec.n_features)])
    return Dataset(schema, X, y, split_mask(spec.n_samples, spec.seed))


def standardize(ds: Dataset) -> Dataset:
    """Z-score numeric columns with train-split mean and population std."""
    X = ds.X.copy()
    stats = dict(ds.standardization)
    train = ds.is_train
    for j, col in enumerate(ds.schema.columns):
        if col.kind != NUMERIC:
            continue
        mu = float(X[train, j].mean())
        sd = float(X[train, j].std())
        if sd == 0.0:
            sd = 1.0
        X[:, j] = (X[:, j] - mu) / sd
        stats[col.name] = (mu, sd)
    return replace(ds, X=X, standardization=stats)


def inject_random_features(ds: Dataset, count: int, seed: int) -> Dataset:
    """Append `count` standard-normal sanity columns named with the reserved prefix."""
    if count < 1:
        raise SpecError("count must be >= 1")
    if any(n.startswith(RANDOM_PREFIX) for n in ds.schema.names):
        raise SchemaError(f"dataset already has columns with reserved prefix {RANDOM_PREFIX!r}")
    rng = np.random.default_rng(seed)
    extra = rng.standard_normal((ds.n, count))
    cols = ds.schema.columns + tuple(Column(f"{RANDOM_PREFIX}{i}") for i in range(count))
    return replace(ds, schema=FeatureSchema(cols), X=np.hstack([ds.X, extra]))


# --- files -----------------------------------------------------------------

def _sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_suffix(".schema.json")


def load_schema(path) -> tuple:
    """Read a schema sidecar; returns (schema, label column)."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return FeatureSchema.from_dicts(doc["columns"]), doc.get("label", "label")


def write_csv(ds: Dataset, path) -> Path:
    """Write features + label as CSV and the schema as a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ds.schema.names + [ds.label])
        for row, lab in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])
    sidecar = {"columns": ds.schema.to_dicts(), "label": ds.label}
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2), encoding="utf-8")
    return path


def load_csv(path, schema: Optional[FeatureSchema] = None, label_column: Optional[str] = None,
             seed: int = 0) -> Dataset:
    path = Path(path)
    if schema is None:
        schema, side_label = load_schema(_sidecar_path(path))
        label_column = label_column or side_label
    label_column = label_column or "label"
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    missing = [n for n in schema.names + [label_column] if n not in header]
    if missing:
        raise SchemaError(f"columns missing from {path}: {missing}")
    pos = [header.index(n) for n in schema.names]
    lpos = header.index(label_column)
    try:
        X = np.array([[float(r[p]) for p in pos] for r in body], dtype=np.float64)
        raw_y = np.array([float(r[lpos]) for r in body])
    except (ValueError, IndexError) as exc:
        raise IntegrityError(f"unparseable value in {path}: {exc}") from exc
    if not np.isin(raw_y, (0.0, 1.0)).all():
        raise LabelError(f"label column {label_column!r} is not binary")
    X = X.reshape(len(body), len(pos))
    return Dataset(schema, X, raw_y.astype(np.int64), split_mask(len(body), seed),
                   label=label_column)
