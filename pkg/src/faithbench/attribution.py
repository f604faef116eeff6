"""Local attribution tables: integrated gradients, KernelSHAP, random and ground-truth controls.

Every table explains the test split of a dataset, one row per test sample.
Deep SHAP is not computed here; tables produced by an external tool enter
through `import_table`.
"""
from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field, replace
from math import comb
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import baselines as bl
from ._seeds import derive_seed
from .data import Dataset
from .errors import NumericalError, ShapeError, SpecError, TableImportError
from .model import LINEAR, LOGIT, PROBABILITY, DenseModel, evaluate, input_gradient, predict

INTEGRATED_GRADIENTS = "integrated_gradients"
KERNEL_SHAP = "kernel_shap"
RANDOM = "random"
GROUND_TRUTH = "ground_truth"
IMPORTED_PREFIX = "imported:"
COMPUTED_METHODS = (INTEGRATED_GRADIENTS, KERNEL_SHAP)

META_KEYS = ("method", "baseline_kind", "k", "repeat", "seed", "dataset_hash", "target")


@dataclass(frozen=True, eq=False)
class AttributionTable:
    values: np.ndarray
    method: str
    baseline_kind: Optional[str] = None
    k: Optional[int] = None
    repeat: int = 0
    seed: Optional[int] = None
    dataset_hash: Optional[str] = None
    target: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeError(f"attribution values must be 2-d, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def candidate(self) -> str:
        """Identity shared by all repeats of one (method, baseline) pair."""
        if self.baseline_kind is None:
            return self.method
        return f"{self.method}/{self.baseline_kind}"

    @property
    def key(self) -> str:
        return f"{self.candidate.replace('/', '__').replace(':', '-')}__r{self.repeat}"

    def metadata(self) -> dict:
        meta = {k: getattr(self, k) for k in META_KEYS}
        meta.update(self.extra)
        return meta

    def with_values(self, values, **changes) -> "AttributionTable":
        return replace(self, values=values, **changes)


@dataclass(frozen=True)
class IGConfig:
    steps: int = 50

    def __post_init__(self):
        if self.steps < 2:
            raise SpecError("integrated gradients needs steps >= 2")


@dataclass(frozen=True)
class KernelShapConfig:
    n_coalitions: int = 2048
    ridge: float = 1e-6
    seed: int = 0
    max_exact_features: int = 12  # full enumeration when 2**d <= 4096

    def __post_init__(self):
        if self.ridge < 0:
            raise SpecError("ridge must be non-negative")


def default_target(model: DenseModel) -> str:
    return LOGIT if model.tag == LINEAR else PROBABILITY


def _refs(baselines, d: int) -> np.ndarray:
    refs = baselines.references if isinstance(baselines, bl.BaselineSet) else baselines
    refs = np.atleast_2d(np.asarray(refs, dtype=np.float64))
    if refs.shape[1] != d:
        raise ShapeError(f"baseline width {refs.shape[1]} != input width {d}")
    return refs


def integrated_gradients(model: DenseModel, x, baselines, cfg: IGConfig = IGConfig(),
                         target: str = PROBABILITY) -> np.ndarray:
    """Midpoint-rule integrated gradients, averaged over the reference rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != model.input_dim:
        raise ShapeError(f"expected a {model.input_dim}-vector, got shape {x.shape}")
    refs = _refs(baselines, x.size)
    alphas = (np.arange(1, cfg.steps + 1) - 0.5) / cfg.steps
    diff = x - refs  # (k, d)
    path = refs[:, None, :] + alphas[None, :, None] * diff[:, None, :]
    grads = input_gradient(model, path.reshape(-1, x.size), target)
    mean_grad = grads.reshape(refs.shape[0], cfg.steps, x.size).mean(axis=1)
    return (diff * mean_grad).mean(axis=0)


def shapley_kernel_weight(d: int, s: int) -> float:
    return (d - 1) / (comb(d, s) * s * (d - s))


def _coalitions(d: int, cfg: KernelShapConfig) -> tuple:
    """Coalition matrix (M, d) with regression weights, empty and full coalitions excluded."""
    if d <= cfg.max_exact_features:
        Z = np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.float64)
        sizes = Z.sum(axis=1)
        keep = (sizes > 0) & (sizes < d)
        Z = Z[keep]
        w = np.array([shapley_kernel_weight(d, int(s)) for s in Z.sum(axis=1)])
        return Z, w
    rng = np.random.default_rng(cfg.seed)
    sizes = np.arange(1, d)
    p = (d - 1) / (sizes * (d - sizes))
    p = p / p.sum()
    half = max(1, cfg.n_coalitions // 2)
    drawn = rng.choice(sizes, size=half, p=p)
    Z = np.zeros((2 * half, d))
    for i, s in enumerate(drawn):
        on = rng.choice(d, size=s, replace=False)
        Z[2 * i, on] = 1.0
        Z[2 * i + 1] = 1.0 - Z[2 * i]  # paired complement
    Z, counts = np.unique(Z, axis=0, return_counts=True)
    # sampling already follows the kernel, so multiplicity is the weight
    return Z, counts.astype(np.float64)


def _constrained_wls(Z, y, w, total, ridge) -> np.ndarray:
    """min sum w (y - Z phi)^2  s.t.  sum(phi) = total, by eliminating the last coordinate."""
    d = Z.shape[1]
    if d == 1:
        return np.array([total])
    A = Z[:, :-1] - Z[:, -1:]
    b = y - Z[:, -1] * total
    AtW = A.T * w
    G = AtW @ A
    rhs = AtW @ b
    for bump in (0.0, ridge, ridge * 1e3, ridge * 1e6):
        try:
            head = np.linalg.solve(G + bump * np.eye(d - 1), rhs)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(head)):
            return np.append(head, total - head.sum())
    raise NumericalError("KernelSHAP regression system is singular")


def kernel_shap(model: DenseModel, x, baselines, cfg: KernelShapConfig = KernelShapConfig(),
                target: str = PROBABILITY) -> np.ndarray:
    """KernelSHAP with interventional masking; masked features take each reference row's value."""
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    if x.ndim != 1 or d != model.input_dim:
        raise ShapeError(f"expected a {model.input_dim}-vector, got shape {x.shape}")
    refs = _refs(baselines, d)
    v_empty = float(np.mean(evaluate(model, refs, target)))
    v_full = float(evaluate(model, x, target))
    total = v_full - v_empty
    if d == 1:
        return np.array([total])
    Z, w = _coalitions(d, cfg)
    k = refs.shape[0]
    masked = Z[:, None, :] * x + (1.0 - Z[:, None, :]) * refs[None, :, :]
    v = evaluate(model, masked.reshape(-1, d), target).reshape(Z.shape[0], k).mean(axis=1)
    return _constrained_wls(Z, v - v_empty, w, total, cfg.ridge)


def exact_shapley(model: DenseModel, x, baselines, target: str = PROBABILITY) -> np.ndarray:
    """Shapley values of the same masked value function by subset enumeration (O(2^d))."""
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    refs = _refs(baselines, d)
    Z = np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.float64)
    masked = Z[:, None, :] * x + (1.0 - Z[:, None, :]) * refs[None, :, :]
    v = evaluate(model, masked.reshape(-1, d), target).reshape(Z.shape[0], -1).mean(axis=1)
    index = {tuple(z.astype(int)): i for i, z in enumerate(Z)}
    phi = np.zeros(d)
    for i, z in enumerate(Z):
        s = int(z.sum())
        for j in range(d):
            if z[j]:
                continue
            with_j = z.copy()
            with_j[j] = 1
            weight = 1.0 / (d * comb(d - 1, s))
            phi[j] += weight * (v[index[tuple(with_j.astype(int))]] - v[i])
    return phi


def random_explanations(n: int, d: int, seed: int, **meta) -> AttributionTable:
    values = np.random.default_rng(seed).random((n, d))
    return AttributionTable(values, RANDOM, seed=seed, **meta)


def ground_truth_linear(model: DenseModel, ds_or_X, **meta) -> AttributionTable:
    """x_ij * c_j for a linear model; rows are the test split when given a Dataset."""
    if model.tag != LINEAR:
        raise SpecError("ground-truth explanations exist only for linear models")
    if isinstance(ds_or_X, Dataset):
        X = ds_or_X.X_test
        meta.setdefault("dataset_hash", ds_or_X.hash())
    else:
        X = np.atleast_2d(np.asarray(ds_or_X, dtype=np.float64))
    if X.shape[1] != model.input_dim:
        raise ShapeError(f"input width {X.shape[1]} != model width {model.input_dim}")
    meta.setdefault("target", LOGIT)
    return AttributionTable(X * model.coefficients, GROUND_TRUTH, **meta)


def explain_rows(model: DenseModel, ds: Dataset, method: str, baseline_kind: str, *,
                 k: int = bl.DEFAULT_K, seed: int = 0, target: Optional[str] = None,
                 ig: IGConfig = IGConfig(), ks: Optional[KernelShapConfig] = None,
                 repeat: int = 0) -> AttributionTable:
    """Explain every test row with one (method, baseline) pair."""
    target = target or default_target(model)
    if method == INTEGRATED_GRADIENTS:
        fn = lambda x, refs: integrated_gradients(model, x, refs, ig, target)  # noqa: E731
    elif method == KERNEL_SHAP:
        ks = ks or KernelShapConfig(seed=derive_seed(seed, "kernel_shap"))
        fn = lambda x, refs: kernel_shap(model, x, refs, ks, target)  # noqa: E731
    else:
        raise SpecError(f"method {method!r} is not computed by the engine")
    train_pred = predict(model, ds.X_train) if baseline_kind == bl.OPPOSITE_CLASS else None
    median = bl.constant_median(ds) if baseline_kind == bl.CONSTANT_MEDIAN else None
    rows = []
    n_short = 0
    for x in ds.X_test:
        refs = bl.build(baseline_kind, ds, model, x, k=k, seed=seed, train_pred=train_pred,
                        median=median)
        n_short += refs.short
        rows.append(fn(x, refs))
    extra = {"explained_rows": "test"}
    if baseline_kind == bl.OPPOSITE_CLASS:
        extra.update(label_source="predicted", short_rows=int(n_short))
    return AttributionTable(np.array(rows), method, baseline_kind,
                            k=1 if baseline_kind == bl.CONSTANT_MEDIAN else k, repeat=repeat,
                            seed=seed, dataset_hash=ds.hash(), target=target, extra=extra)


def grid_cells(tag: str, methods: Sequence[str], baseline_kinds: Sequence[str],
               repeats: int = 3) -> list:
    """(method, baseline_kind, repeat) cells of a grid, random control and ground truth included."""
    if repeats < 1:
        raise SpecError("repeats must be >= 1")
    if GROUND_TRUTH in methods and tag != LINEAR:
        raise SpecError("ground truth requested for a non-linear model")
    cells = []
    for r in range(repeats):
        for m in methods:
            if m == GROUND_TRUTH:
                continue
            for b in baseline_kinds:
                cells.append((m, b, r))
        cells.append((RANDOM, None, r))
        if GROUND_TRUTH in methods:
            cells.append((GROUND_TRUTH, None, r))
    return cells


def compute_cell(ds: Dataset, model: DenseModel, method: str, baseline_kind: Optional[str],
                 repeat: int, master_seed: int = 0, *, k: int = bl.DEFAULT_K,
                 ig: IGConfig = IGConfig(), ks_coalitions: int = 2048,
                 importer: Optional[Callable] = None) -> AttributionTable:
    seed = derive_seed(master_seed, "table", model.tag, method, baseline_kind, repeat)
    if method == RANDOM:
        return random_explanations(ds.X_test.shape[0], ds.d, seed, repeat=repeat,
                                   dataset_hash=ds.hash())
    if method == GROUND_TRUTH:
        return ground_truth_linear(model, ds, repeat=repeat, seed=seed)
    if method.startswith(IMPORTED_PREFIX):
        if importer is None:
            raise TableImportError(f"no importer configured for {method!r}")
        table = importer(method[len(IMPORTED_PREFIX):], baseline_kind, repeat)
        n, d = ds.X_test.shape
        if table.values.shape != (n, d):
            raise TableImportError(f"imported table shape {table.values.shape} != {(n, d)}")
        return table
    ks = KernelShapConfig(n_coalitions=ks_coalitions, seed=derive_seed(seed, "coalitions"))
    return explain_rows(model, ds, method, baseline_kind, k=k, seed=seed, ig=ig, ks=ks,
                        repeat=repeat)


def generate_grid(ds: Dataset, model: DenseModel, methods: Sequence[str],
                  baseline_kinds: Sequence[str] = bl.KINDS, repeats: int = 3,
                  master_seed: int = 0, **kw) -> list:
    return [compute_cell(ds, model, m, b, r, master_seed, **kw)
            for m, b, r in grid_cells(model.tag, methods, baseline_kinds, repeats)]


# --- files -----------------------------------------------------------------

def export_table(table: AttributionTable, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j}" for j in range(table.values.shape[1])])
        for row in table.values:
            w.writerow([repr(float(v)) for v in row])
    path.with_suffix(".json").write_text(json.dumps(table.metadata(), indent=2, sort_keys=True),
                                         encoding="utf-8")
    return path


def _read_values(path: Path) -> np.ndarray:
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        body = rows[1:] if rows and not _is_number(rows[0][0]) else rows
        return np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    except (OSError, ValueError, IndexError) as exc:
        raise TableImportError(f"cannot read attribution values from {path}: {exc}") from exc


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_table(path) -> AttributionTable:
    """Reload a table written by `export_table`, metadata included."""
    path = Path(path)
    try:
        meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise TableImportError(f"missing or malformed sidecar for {path}: {exc}") from exc
    values = _read_values(path)
    core = {k: meta.pop(k) for k in META_KEYS if k in meta}
    return AttributionTable(values, extra=meta, **core)


def import_table(path, metadata: Optional[dict] = None, shape: Optional[tuple] = None
                 ) -> AttributionTable:
    """Import an externally produced table, tagged ``imported:<label>``.

    Metadata comes from the argument or, failing that, the JSON sidecar; it must
    name a label plus baseline_kind, k, repeat, seed, dataset_hash and target.
    """
    path = Path(path)
    if metadata is None:
        side = path.with_suffix(".json")
        if not side.exists():
            raise TableImportError(f"no metadata given and no sidecar at {side}")
        metadata = json.loads(side.read_text(encoding="utf-8"))
    meta = dict(metadata)
    label = meta.pop("label", None)
    method = meta.pop("method", None)
    if label is None and method and method.startswith(IMPORTED_PREFIX):
        label = method[len(IMPORTED_PREFIX):]
    required = ("baseline_kind", "k", "repeat", "seed", "dataset_hash", "target")
    missing = [k for k in required if k not in meta] + ([] if label else ["label"])
    if missing:
        raise TableImportError(f"import metadata incomplete, missing {missing}")
    values = _read_values(path)
    if shape is not None and values.shape != tuple(shape):
        raise TableImportError(f"table shape {values.shape} != expected {tuple(shape)}")
    core = {k: meta.pop(k) for k in required}
    return AttributionTable(values, IMPORTED_PREFIX + label, extra=meta, **core)
