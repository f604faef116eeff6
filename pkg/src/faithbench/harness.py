"""Experiment configs, the ground-truth permutation experiment and the full grid runner.

A grid run writes a report bundle::

    <out>/models/        trained models (JSON)
    <out>/attributions/  one CSV + JSON sidecar per attribution table
    <out>/scores/        PGI and ABC per table, BND per table, consolidated scores.csv
    <out>/tda/           resolution stability, distance matrices, persistence diagrams
    <out>/rank/          top-3 tables, slope-chart and heatmap CSVs
    <out>/permutation/   metric-vs-fraction rows of the permutation experiment
    <out>/manifest.json

Every artifact carries the fingerprint of the inputs that produced it, so a
rerun skips work whose inputs are unchanged and redoes anything downstream of
a changed input. Nothing time- or path-dependent is written, which keeps two
runs of the same config byte-identical.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import attribution as at
from . import baselines as bl
from . import model as mdl
from ._seeds import derive_seed
from .data import Dataset, SyntheticSpec, generate_synthetic, load_csv, standardize
from .errors import ConfigError, FaithbenchError, IncompleteGridError, TableImportError
from .metrics import ABC, BND, PGI, MetricScore, abc, ablation_curve, pgi
from .perturb import MARGINAL, PerturbSpec
from .rank import CORRELATIONS, agreement, agreement_per_repeat, rank_candidates, report_artifacts
from .tda.selection import (COLUMN, RESOLUTION_GRID, TABLE, bnd_scores, diagram, prepare_cloud,
                            select_resolution)
from .tda.bottleneck import bottleneck

SYNTHETIC = "synthetic"
METRICS = (PGI, ABC, BND)
DEEP_SHAP = at.IMPORTED_PREFIX + "deep_shap"
DEFAULT_FRACTIONS = (0.0, 0.25, 0.5, 0.75, 1.0)
ANOMALY_LEVEL = 0.9
UNFINGERPRINTED = ("output_dir", "workers")


def _sha(blob) -> str:
    if not isinstance(blob, (bytes, bytearray)):
        blob = json.dumps(blob, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _file_sha(path: Path) -> str:
    return _sha(Path(path).read_bytes())


@dataclass(frozen=True)
class TDAConfig:
    resolutions: tuple = RESOLUTION_GRID
    bootstraps: int = 30
    gain: float = 0.4
    bins: int = 10
    scaling: str = COLUMN
    resolution: Optional[int] = None  # fixed resolution, skips the bootstrap selection

    def __post_init__(self):
        object.__setattr__(self, "resolutions", tuple(int(r) for r in self.resolutions))
        if not self.resolutions:
            raise ConfigError("resolution grid is empty")
        if self.bootstraps < 1:
            raise ConfigError("bootstraps must be >= 1")
        if self.scaling not in (COLUMN, TABLE):
            raise ConfigError(f"unknown cloud scaling {self.scaling!r}")


@dataclass(frozen=True)
class PermutationExperiment:
    fractions: tuple = DEFAULT_FRACTIONS
    repeats: int = 3
    seed: int = 0

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        object.__setattr__(self, "fractions", fr)
        if not fr:
            raise ConfigError("no fractions given")
        if any(not 0.0 <= f <= 1.0 for f in fr):
            raise ConfigError(f"fractions must lie in [0, 1], got {fr}")
        if list(fr) != sorted(fr):
            raise ConfigError("fractions must be sorted ascending")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = SYNTHETIC  # "synthetic" or a CSV path with a schema sidecar
    synthetic: SyntheticSpec = SyntheticSpec()
    label_column: Optional[str] = None
    architectures: tuple = (mdl.LINEAR, mdl.DENSE3)
    methods: tuple = (at.INTEGRATED_GRADIENTS, at.KERNEL_SHAP, DEEP_SHAP)
    baseline_kinds: tuple = bl.KINDS
    ground_truth: bool = True  # linear models only
    repeats: int = 3
    baseline_k: int = bl.DEFAULT_K
    train: mdl.TrainConfig = mdl.TrainConfig()
    ig_steps: int = 50
    ks_coalitions: int = 2048
    perturb: PerturbSpec = PerturbSpec()
    pgi_k: Optional[int] = None
    pgi_m: int = 10
    aggregate_categorical: bool = False
    ablation: PerturbSpec = PerturbSpec(numeric_mode=MARGINAL)
    ablation_runs: int = 10
    tda: TDAConfig = TDAConfig()
    correlations: tuple = CORRELATIONS
    permutation: PermutationExperiment = PermutationExperiment()
    imports: dict = field(default_factory=dict)  # label -> directory of imported tables
    output_dir: str = "faithbench_out"
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        for name in ("architectures", "methods", "baseline_kinds", "correlations"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        bad = [a for a in self.architectures if a not in mdl.TAGS]
        if bad or not self.architectures:
            raise ConfigError(f"unknown architectures {bad}")
        for m in self.methods:
            if m not in at.COMPUTED_METHODS and not m.startswith(at.IMPORTED_PREFIX):
                raise ConfigError(f"unknown method {m!r}")
        bad = [b for b in self.baseline_kinds if b not in bl.KINDS]
        if bad:
            raise ConfigError(f"unknown baseline kinds {bad}")
        bad = [c for c in self.correlations if c not in CORRELATIONS]
        if bad:
            raise ConfigError(f"unknown correlation kinds {bad}")
        if self.ig_steps < 1 or self.ks_coalitions < 2 or self.pgi_m < 1 or self.ablation_runs < 1:
            raise ConfigError("ig_steps, pgi_m, ablation_runs must be >= 1, ks_coalitions >= 2")
        if self.baseline_k < 1:
            raise ConfigError("baseline_k must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.dataset != SYNTHETIC and not Path(self.dataset).exists():
            raise ConfigError(f"dataset {self.dataset!r} not found")

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self), default=list))

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        unknown = set(doc) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        nested = {"synthetic": SyntheticSpec, "train": mdl.TrainConfig, "perturb": PerturbSpec,
                  "ablation": PerturbSpec, "tda": TDAConfig,
                  "permutation": PermutationExperiment}
        try:
            for key, typ in nested.items():
                if key in doc and isinstance(doc[key], dict):
                    sub = dict(doc[key])
                    for k, v in sub.items():
                        if isinstance(v, list):
                            sub[k] = tuple(v)
                    doc[key] = typ(**sub)
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        except FaithbenchError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        return path

    def fingerprint(self) -> str:
        doc = {k: v for k, v in self.to_dict().items() if k not in UNFINGERPRINTED}
        return _sha(doc)[:16]

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    def import_dir(self, label: str) -> Path:
        d = Path(self.imports.get(label, Path("imports") / label))
        return d if d.is_absolute() else self.out / d


# --- data and models ---------------------------------------------------------

def load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.dataset == SYNTHETIC:
        return standardize(generate_synthetic(cfg.synthetic))
    return standardize(load_csv(cfg.dataset, label_column=cfg.label_column, seed=cfg.master_seed))


def _worker_count(cfg: ExperimentConfig) -> int:
    env = os.environ.get("FAITHBENCH_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"FAITHBENCH_WORKERS={env!r} is not an integer") from exc
        if n < 1:
            raise ConfigError("FAITHBENCH_WORKERS must be >= 1")
        return n
    return cfg.workers


def _stamp_matches(meta_path: Path, fp: str) -> bool:
    if not meta_path.exists():
        return False
    try:
        return json.loads(meta_path.read_text(encoding="utf-8")).get("cell_fingerprint") == fp
    except json.JSONDecodeError:
        return False


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def train_model(cfg: ExperimentConfig, ds: Dataset, tag: str) -> tuple:
    """Train (or reuse) one model; returns (model, path)."""
    path = cfg.out / "models" / f"{tag}.json"
    meta = path.with_suffix(".meta.json")
    train_cfg = replace(cfg.train, seed=derive_seed(cfg.master_seed, "train", tag))
    fp = _sha({"dataset": ds.hash(), "train": dataclasses.asdict(train_cfg), "tag": tag})
    if path.exists() and _stamp_matches(meta, fp):
        return mdl.load(path), path
    model = mdl.train(ds, train_cfg, tag)
    mdl.save(model, path)
    _write_json(meta, {"cell_fingerprint": fp, "tag": tag,
                       "test_log_loss": mdl.log_loss(model, ds.X_test, ds.y_test)})
    return model, path


def prepare(cfg: ExperimentConfig) -> tuple:
    """Dataset plus one trained model per architecture, written into the bundle."""
    ds = load_dataset(cfg)
    models = {tag: train_model(cfg, ds, tag)[0] for tag in cfg.architectures}
    return ds, models


# --- attribution grid ----------------------------------------------------------

def import_path(cfg: ExperimentConfig, label: str, tag: str, baseline_kind: Optional[str],
                repeat: int) -> Path:
    return cfg.import_dir(label) / f"{tag}__{baseline_kind}__r{repeat}.csv"


def _table_path(cfg: ExperimentConfig, tag: str, key: str) -> Path:
    return cfg.out / "attributions" / tag / f"{key}.csv"


def _cells(cfg: ExperimentConfig, tag: str) -> list:
    methods = list(cfg.methods)
    if cfg.ground_truth and tag == mdl.LINEAR:
        methods.append(at.GROUND_TRUTH)
    return at.grid_cells(tag, methods, cfg.baseline_kinds, cfg.repeats)


def _cell_key(method: str, baseline: Optional[str], repeat: int) -> str:
    cand = method if baseline is None else f"{method}/{baseline}"
    return f"{cand.replace('/', '__').replace(':', '-')}__r{repeat}"


def _cell_fp(cfg, tag, model_sha, method, baseline, repeat) -> str:
    parts = {"model": model_sha, "method": method, "baseline": baseline, "repeat": repeat,
             "k": cfg.baseline_k, "seed": cfg.master_seed}
    if method == at.INTEGRATED_GRADIENTS:
        parts["ig_steps"] = cfg.ig_steps
    if method == at.KERNEL_SHAP:
        parts["ks_coalitions"] = cfg.ks_coalitions
    if method.startswith(at.IMPORTED_PREFIX):
        src = import_path(cfg, method[len(at.IMPORTED_PREFIX):], tag, baseline, repeat)
        parts["import"] = _file_sha(src) if src.exists() else None
    return _sha(parts)


def _compute_cell_job(args) -> tuple:
    cfg, ds, model, method, baseline, repeat = args
    tag = model.tag

    def importer(label, baseline_kind, rep):
        src = import_path(cfg, label, tag, baseline_kind, rep)
        if not src.exists():
            raise TableImportError(f"no imported table at {src}")
        table = at.import_table(src, shape=ds.X_test.shape)
        if table.dataset_hash != ds.hash():
            raise TableImportError(f"{src} was produced for a different dataset")
        return table

    try:
        table = at.compute_cell(ds, model, method, baseline, repeat, cfg.master_seed,
                                k=cfg.baseline_k, ig=at.IGConfig(cfg.ig_steps),
                                ks_coalitions=cfg.ks_coalitions, importer=importer)
        return table, None
    except Exception as exc:  # a failing cell must not stop the grid
        return None, f"{type(exc).__name__}: {exc}"


def attribution_grid(cfg: ExperimentConfig, ds: Dataset, model: mdl.DenseModel) -> tuple:
    """Compute or reuse every table of one architecture's grid.

    Returns (tables, failures, recomputed keys).
    """
    tag = model.tag
    model_sha = _file_sha(cfg.out / "models" / f"{tag}.json")
    tables, failures, todo, fresh = {}, {}, [], []
    for method, baseline, repeat in _cells(cfg, tag):
        key = _cell_key(method, baseline, repeat)
        fp = _cell_fp(cfg, tag, model_sha, method, baseline, repeat)
        path = _table_path(cfg, tag, key)
        stamp = path.with_suffix(".stamp.json")
        if path.exists() and _stamp_matches(stamp, fp):
            tables[key] = at.load_table(path)
        else:
            todo.append((key, fp, (cfg, ds, model, method, baseline, repeat)))
    workers = _worker_count(cfg)
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 and len(todo) > 1 else None
    try:
        jobs = [t[2] for t in todo]
        results = pool.map(_compute_cell_job, jobs) if pool else map(_compute_cell_job, jobs)
        # each table is written as soon as it arrives, so an interrupted run resumes
        for (key, fp, _), (table, err) in zip(todo, results):
            path = _table_path(cfg, tag, key)
            if err is not None:
                failures[key] = err
                for stale in (path, path.with_suffix(".json"), path.with_suffix(".stamp.json")):
                    stale.unlink(missing_ok=True)
                continue
            at.export_table(table, path)
            _write_json(path.with_suffix(".stamp.json"), {"cell_fingerprint": fp})
            tables[key] = at.load_table(path)
            fresh.append(key)
    finally:
        if pool:
            pool.shutdown()
    return tables, failures, fresh


# --- scoring ---------------------------------------------------------------------

def _pgi_spec(cfg: ExperimentConfig, repeat: int) -> PerturbSpec:
    return replace(cfg.perturb, seed=derive_seed(cfg.master_seed, "pgi", cfg.perturb.seed, repeat))


def _ablation_spec(cfg: ExperimentConfig, repeat: int) -> PerturbSpec:
    return replace(cfg.ablation,
                   seed=derive_seed(cfg.master_seed, "ablation", cfg.ablation.seed, repeat))


def perturbation_scores(cfg: ExperimentConfig, ds: Dataset, model: mdl.DenseModel,
                        table: at.AttributionTable) -> list:
    """PGI and ABC of one table."""
    p = pgi(model, ds, table, _pgi_spec(cfg, table.repeat), k=cfg.pgi_k, m=cfg.pgi_m,
            aggregate_categorical=cfg.aggregate_categorical)
    curve = ablation_curve(model, ds, table, _ablation_spec(cfg, table.repeat),
                           runs=cfg.ablation_runs)
    return [p, abc(curve, table, fingerprint=cfg.fingerprint())], curve


def _score_from_row(row: dict) -> MetricScore:
    return MetricScore(row["metric"], float(row["value"]), row["method"], row["baseline"] or None,
                       int(row["repeat"]), None if row["k"] in ("", None) else int(row["k"]),
                       row.get("fingerprint", ""))


def _score_doc(scores: Sequence[MetricScore], fp: str, extra: Optional[dict] = None) -> dict:
    doc = {"cell_fingerprint": fp,
           "scores": [{**s.to_row(), "fingerprint": s.fingerprint} for s in scores]}
    doc.update(extra or {})
    return doc


def score_tables(cfg: ExperimentConfig, ds: Dataset, model: mdl.DenseModel,
                 tables: dict) -> tuple:
    """PGI/ABC per table (resumable). Returns (scores, failures, rescored keys)."""
    tag = model.tag
    out, failures, fresh = [], {}, []
    spec_fp = {"pgi": cfg.perturb.to_dict(), "abl": cfg.ablation.to_dict(), "k": cfg.pgi_k,
               "m": cfg.pgi_m, "agg": cfg.aggregate_categorical, "runs": cfg.ablation_runs,
               "seed": cfg.master_seed}
    for key in sorted(tables):
        path = cfg.out / "scores" / tag / f"{key}.json"
        fp = _sha({**spec_fp, "table": _file_sha(_table_path(cfg, tag, key)),
                   "model": _file_sha(cfg.out / "models" / f"{tag}.json")})
        if _stamp_matches(path, fp):
            doc = json.loads(path.read_text(encoding="utf-8"))
            out.extend(_score_from_row(r) for r in doc["scores"])
            continue
        try:
            scores, curve = perturbation_scores(cfg, ds, model, tables[key])
        except Exception as exc:
            failures[f"score:{key}"] = f"{type(exc).__name__}: {exc}"
            path.unlink(missing_ok=True)
            continue
        _write_json(path, _score_doc(scores, fp, {"ablation_curve": [repr(float(v))
                                                                      for v in curve.performance]}))
        out.extend(scores)
        fresh.append(key)
    return out, failures, fresh


def complete_candidates(tables: dict, repeats: int) -> dict:
    """Keep candidates present in every repeat; maps repeat -> list of tables."""
    by_cand = {}
    for t in tables.values():
        by_cand.setdefault(t.candidate, {})[t.repeat] = t
    keep = sorted(c for c, reps in by_cand.items() if set(reps) == set(range(repeats)))
    return {r: [by_cand[c][r] for c in keep] for r in range(repeats)}


def _write_rows(path: Path, rows: list, header: Sequence[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(header), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def tda_scores(cfg: ExperimentConfig, ds: Dataset, model: mdl.DenseModel,
               by_repeat: dict) -> list:
    """BND per table (resumable). The resolution is chosen once, on the repeat-0 candidates.

    Returns (scores, whether anything was recomputed).
    """
    tag = model.tag
    tda = cfg.tda
    lens = mdl.predict(model, ds.X_test)
    out_dir = cfg.out / "tda" / tag
    keys = [t.key for r in sorted(by_repeat) for t in by_repeat[r]]
    fp = _sha({"tables": [_file_sha(_table_path(cfg, tag, k)) for k in keys],
               "tda": dataclasses.asdict(tda), "seed": cfg.master_seed, "lens": _sha(lens.tobytes())})
    state = out_dir / "bnd.json"
    if _stamp_matches(state, fp):
        return [_score_from_row(r) for r in
                json.loads(state.read_text(encoding="utf-8"))["scores"]], False
    first = by_repeat[0]
    if tda.resolution is not None:
        resolution, records = tda.resolution, []
    else:
        resolution, records = select_resolution(
            [prepare_cloud(t.values, tda.scaling) for t in first], lens, tda.resolutions,
            tda.bootstraps, derive_seed(cfg.master_seed, "tda", tag), tda.gain, tda.bins,
            names=[t.candidate for t in first])
    _write_rows(out_dir / "stability.csv",
                [{"resolution": s.resolution, "candidate": s.candidate, "stability": s.stability}
                 for s in records], ["resolution", "candidate", "stability"])
    scores = []
    for r in sorted(by_repeat):
        tables = by_repeat[r]
        sc, D, diagrams = bnd_scores(tables, lens, resolution, tda.gain, tda.bins, tda.scaling)
        sc = [replace(s, fingerprint=f"r{resolution}") for s in sc]
        scores.extend(sc)
        names = [t.candidate for t in tables]
        _write_rows(out_dir / f"distances__r{r}.csv",
                    [{"candidate": a, **{b: float(D[i, j]) for j, b in enumerate(names)}}
                     for i, a in enumerate(names)], ["candidate", *names])
        for t, dg in zip(tables, diagrams):
            dg.to_csv(out_dir / "diagrams" / f"{t.key}.csv")
    _write_json(state, _score_doc(scores, fp, {"resolution": int(resolution)}))
    return scores, True


# --- ranking and the report ---------------------------------------------------------

def _offdiag(M: np.ndarray) -> np.ndarray:
    return M[~np.eye(M.shape[0], dtype=bool)]


def agreement_anomalies(agreements: dict) -> list:
    """(label, kind) pairs whose off-diagonal entries all exceed the anomaly level."""
    out = []
    for label, am in sorted(agreements.items()):
        for kind, M in am.matrices.items():
            off = _offdiag(M)
            if off.size and np.all(off > ANOMALY_LEVEL):
                out.append(f"{label}:{kind}")
    return out


def rank_architecture(scores: Sequence[MetricScore], correlations: Sequence[str]) -> dict:
    metrics = [m for m in METRICS if any(s.metric == m for s in scores)]
    rankings = [rank_candidates([s for s in scores if s.metric == m]) for m in metrics]
    cell = {"rankings": rankings, "agreement": {}}
    if len(rankings) >= 2:
        cell["agreement"]["aggregate"] = agreement(rankings, correlations)
        cell["agreement"]["per_repeat"] = agreement_per_repeat(scores, metrics, correlations)
    return cell


@dataclass
class GridResult:
    out: Path
    tables: dict  # tag -> {key: AttributionTable}
    scores: dict  # tag -> [MetricScore]
    cells: dict  # (dataset, tag) -> ranking cell
    failures: dict  # tag -> {cell: message}
    manifest: dict
    recomputed: dict  # tag -> {"tables": [...], "scores": [...], "tda": bool}

    @property
    def ok(self) -> bool:
        return not any(self.failures.values())


def dataset_label(cfg: ExperimentConfig) -> str:
    return SYNTHETIC if cfg.dataset == SYNTHETIC else Path(cfg.dataset).stem


def run_grid(cfg: ExperimentConfig) -> GridResult:
    cfg.out.mkdir(parents=True, exist_ok=True)
    ds, models = prepare(cfg)
    label = dataset_label(cfg)
    all_tables, all_scores, cells, failures, recomputed = {}, {}, {}, {}, {}
    for tag in cfg.architectures:
        model = models[tag]
        tables, fail, fresh = attribution_grid(cfg, ds, model)
        scores, sfail, rescored = score_tables(cfg, ds, model, tables)
        fail.update(sfail)
        by_repeat = complete_candidates(tables, cfg.repeats)
        tda_fresh = False
        if len(by_repeat[0]) >= 2:
            try:
                bnd, tda_fresh = tda_scores(cfg, ds, model, by_repeat)
                scores = scores + bnd
            except Exception as exc:
                fail["tda"] = f"{type(exc).__name__}: {exc}"
        keep = {t.candidate for t in by_repeat[0]}
        scores = [s for s in scores if s.candidate in keep]
        _write_rows(cfg.out / "scores" / tag / "scores.csv",
                    sorted((s.to_row() for s in scores),
                           key=lambda r: (r["metric"], r["method"], r["baseline"], r["repeat"])),
                    ["metric", "method", "baseline", "repeat", "k", "value", "direction"])
        if scores:
            try:
                cells[(label, tag)] = rank_architecture(scores, cfg.correlations)
            except (IncompleteGridError, FaithbenchError) as exc:
                fail["rank"] = f"{type(exc).__name__}: {exc}"
        all_tables[tag], all_scores[tag], failures[tag] = tables, scores, fail
        recomputed[tag] = {"tables": fresh, "scores": rescored, "tda": tda_fresh}
    if cells:
        report_artifacts(cfg.out / "rank", cells, cfg.fingerprint())
    anomalies = {f"{d}/{a}": agreement_anomalies(c["agreement"]) for (d, a), c in cells.items()}
    manifest = {
        "config_fingerprint": cfg.fingerprint(),
        "dataset": label,
        "dataset_hash": ds.hash(),
        "architectures": list(cfg.architectures),
        "table_counts": {tag: len(all_tables[tag]) for tag in cfg.architectures},
        "failures": {tag: dict(sorted(f.items())) for tag, f in failures.items()},
        "agreement_anomaly": {k: v for k, v in sorted(anomalies.items()) if v},
        "layout": ["models", "attributions", "scores", "tda", "rank", "permutation"],
    }
    perm = cfg.out / "permutation" / "metrics.csv"
    if perm.exists():
        manifest["permutation"] = "permutation/metrics.csv"
    _write_json(cfg.out / "manifest.json", manifest)
    return GridResult(cfg.out, all_tables, all_scores, cells, failures, manifest, recomputed)


# --- permutation experiment -------------------------------------------------------------

def permute_rows(table: at.AttributionTable, fraction: float, seed: int) -> at.AttributionTable:
    """Misalign floor(fraction * n) rows by a cyclic shift among themselves.

    The chosen rows are a prefix of one seeded permutation, so with a shared
    seed larger fractions extend the misaligned set of smaller ones.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"fraction {fraction} outside [0, 1]")
    values = np.array(table.values)
    n = values.shape[0]
    m = int(np.floor(fraction * n))
    idx = np.random.default_rng(seed).permutation(n)[:m]
    if m > 1:
        values[idx] = table.values[np.roll(idx, -1)]
    extra = dict(table.extra, permuted_fraction=float(fraction), permuted_rows=int(m if m > 1 else 0))
    return table.with_values(values, extra=extra)


def run_permutation_experiment(cfg: ExperimentConfig,
                               exp: Optional[PermutationExperiment] = None) -> list:
    """PGI, ABC and BND of increasingly misaligned ground-truth tables.

    BND of a permuted table is its bottleneck distance to the diagram of the
    unpermuted table. Returns rows (fraction, metric, repeat, value), also
    written to ``<out>/permutation/metrics.csv``.
    """
    exp = exp or cfg.permutation
    ds = load_dataset(cfg)
    model, _ = train_model(cfg, ds, mdl.LINEAR)
    base = at.ground_truth_linear(model, ds)
    lens = mdl.predict(model, ds.X_test)
    tda = cfg.tda
    reference = prepare_cloud(base.values, tda.scaling)
    if tda.resolution is not None:
        resolution, records = tda.resolution, []
    else:
        resolution, records = select_resolution([reference], lens, tda.resolutions,
                                                tda.bootstraps,
                                                derive_seed(exp.seed, "tda"), tda.gain, tda.bins,
                                                names=[at.GROUND_TRUTH])
    ref_diagram = diagram(reference, lens, resolution, tda.gain, tda.bins)
    rows = []
    for repeat in range(exp.repeats):
        pseed = derive_seed(exp.seed, "permute", repeat)
        for f in exp.fractions:
            try:
                table = replace(permute_rows(base, f, pseed), repeat=repeat)
                p = pgi(model, ds, table, _pgi_spec(cfg, repeat), k=cfg.pgi_k, m=cfg.pgi_m,
                        aggregate_categorical=cfg.aggregate_categorical)
                curve = ablation_curve(model, ds, table, _ablation_spec(cfg, repeat),
                                       runs=cfg.ablation_runs)
                dg = diagram(prepare_cloud(table.values, tda.scaling), lens, resolution,
                             tda.gain, tda.bins)
                b = bottleneck(dg, ref_diagram)
            except FaithbenchError as exc:
                raise type(exc)(f"fraction {f}: {exc}") from exc
            for metric, value in ((PGI, p.value), (ABC, curve.auc), (BND, b)):
                rows.append({"fraction": f, "metric": metric, "repeat": repeat,
                             "value": float(value)})
    out = cfg.out / "permutation"
    _write_rows(out / "metrics.csv", rows, ["fraction", "metric", "repeat", "value"])
    _write_json(out / "meta.json", {"config_fingerprint": cfg.fingerprint(),
                                    "fractions": list(exp.fractions), "repeats": exp.repeats,
                                    "seed": exp.seed, "resolution": int(resolution),
                                    "scaling": tda.scaling})
    if records:
        _write_rows(out / "stability.csv",
                    [{"resolution": s.resolution, "stability": s.stability} for s in records],
                    ["resolution", "stability"])
    return rows


def fraction_means(rows: Sequence[dict], metric: str) -> tuple:
    """(fractions, mean over repeats, per-repeat matrix) for one metric."""
    sel = [r for r in rows if r["metric"] == metric]
    fr = sorted({r["fraction"] for r in sel})
    reps = sorted({r["repeat"] for r in sel})
    M = np.full((len(reps), len(fr)), np.nan)
    for r in sel:
        M[reps.index(r["repeat"]), fr.index(r["fraction"])] = r["value"]
    return np.array(fr), M.mean(axis=0), M
