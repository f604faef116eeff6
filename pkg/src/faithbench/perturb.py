"""Perturbation engine shared by PGI and ablation.

All randomness for a call is drawn up front at full width (every column gets a
noise value, a marginal draw, a flip coin and a replacement category), and the
mask only decides which of those draws are applied. Two masks evaluated under
one seed therefore see common random numbers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._seeds import derive_seed
from .data import CATEGORICAL, NUMERIC, Dataset, FeatureSchema
from .errors import SpecError

GAUSSIAN = "gaussian"
MARGINAL = "marginal"


@dataclass(frozen=True)
class PerturbSpec:
    numeric_mode: str = GAUSSIAN
    sigma: float = 0.1
    categorical_flip_prob: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.numeric_mode not in (GAUSSIAN, MARGINAL):
            raise SpecError(f"unknown numeric mode {self.numeric_mode!r}")
        if self.sigma < 0:
            raise SpecError("sigma must be >= 0")
        if not 0.0 <= self.categorical_flip_prob <= 1.0:
            raise SpecError("flip probability must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {"numeric_mode": self.numeric_mode, "sigma": self.sigma,
                "categorical_flip_prob": self.categorical_flip_prob, "seed": self.seed}


@dataclass(frozen=True)
class TopKMask:
    selected: tuple  # unit labels, most important first
    columns: tuple  # column indices covered by the selected units
    k: int
    aggregate: bool

    def column_mask(self, d: int) -> np.ndarray:
        m = np.zeros(d, dtype=bool)
        m[list(self.columns)] = True
        return m


def units_for(schema: FeatureSchema, aggregate_categorical: bool) -> list:
    return schema.units() if aggregate_categorical else schema.columns_as_units()


def unit_scores(attributions: np.ndarray, units: list) -> np.ndarray:
    """Summed |attribution| per unit; works on a row or on an (n, d) matrix."""
    a = np.abs(np.asarray(attributions, dtype=np.float64))
    return np.stack([a[..., list(idx)].sum(axis=-1) for _, idx in units], axis=-1)


def rank_units(scores: np.ndarray) -> np.ndarray:
    """Unit order by descending score, lower index first on ties (row-wise for 2-d)."""
    return np.argsort(-scores, axis=-1, kind="stable")


def top_k_mask(attribution_row, schema: FeatureSchema, k: int,
               aggregate_categorical: bool = False) -> TopKMask:
    if k < 1:
        raise SpecError("k must be >= 1")
    units = units_for(schema, aggregate_categorical)
    order = rank_units(unit_scores(attribution_row, units))[: min(k, len(units))]
    chosen = [units[i] for i in order]
    cols = tuple(sorted(c for _, idx in chosen for c in idx))
    return TopKMask(tuple(lbl for lbl, _ in chosen), cols, len(chosen), aggregate_categorical)


@dataclass(frozen=True)
class Draws:
    noise: np.ndarray
    marginal: np.ndarray
    coin: np.ndarray
    shift: np.ndarray


def draw(rng: np.random.Generator, n: int, d: int, n_train: int) -> Draws:
    return Draws(rng.standard_normal((n, d)), rng.integers(0, max(n_train, 1), (n, d)),
                 rng.random((n, d)), rng.random((n, d)))


def _other_category(cur: np.ndarray, shift: np.ndarray, card: int) -> np.ndarray:
    """A uniformly chosen category different from `cur`."""
    step = 1 + np.minimum((shift * (card - 1)).astype(np.int64), card - 2)
    return (cur + step) % card


def apply(X: np.ndarray, selected: np.ndarray, spec: PerturbSpec, ds: Dataset, draws: Draws,
          aggregate_categorical: bool = False) -> np.ndarray:
    """Perturb the selected cells of X (n, d) given pre-drawn randomness.

    `selected` is a boolean (n, d) column mask; for aggregated one-hot groups it
    must cover whole groups.
    """
    X = np.asarray(X, dtype=np.float64)
    sel = np.broadcast_to(selected, X.shape)
    out = X.copy()
    schema = ds.schema
    Xtr = ds.X_train
    p = spec.categorical_flip_prob
    for j, col in enumerate(schema.columns):
        s = sel[:, j]
        if not s.any():
            continue
        if col.kind == NUMERIC:
            if spec.numeric_mode == GAUSSIAN:
                out[s, j] = X[s, j] + spec.sigma * draws.noise[s, j]
            else:
                out[s, j] = Xtr[draws.marginal[s, j], j]
        elif col.kind == CATEGORICAL:
            flip = s & (draws.coin[:, j] < p)
            cur = X[flip, j].astype(np.int64)
            out[flip, j] = _other_category(cur, draws.shift[flip, j], col.cardinality)
    for idx in schema.one_hot_groups():
        idx = list(idx)
        card = len(idx)
        gsel = sel[:, idx]
        if not gsel.any():
            continue
        cur = np.argmax(X[:, idx], axis=1)
        if aggregate_categorical:
            lead = idx[0]
            flip = gsel[:, 0] & (draws.coin[:, lead] < p)
            cur = np.where(flip, _other_category(cur, draws.shift[:, lead], card), cur)
        else:
            # member-wise: an active member moves the group elsewhere, an inactive one
            # takes over; a group moves at most once per draw
            moved_once = np.zeros(X.shape[0], dtype=bool)
            for t, j in enumerate(idx):
                act = gsel[:, t] & (draws.coin[:, j] < p) & ~moved_once
                moved = np.where(cur == t, _other_category(cur, draws.shift[:, j], card), t)
                cur = np.where(act, moved, cur)
                moved_once |= act
        block = np.zeros((X.shape[0], card))
        block[np.arange(X.shape[0]), cur] = 1.0
        rows = gsel.any(axis=1)
        out[np.ix_(rows, idx)] = block[rows]
    return out


def perturb(x, mask: TopKMask, spec: PerturbSpec, ds: Dataset, seed: Optional[int] = None
            ) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    dr = draw(rng, 1, x.size, ds.X_train.shape[0])
    return apply(x[None, :], mask.column_mask(x.size)[None, :], spec, ds, dr, mask.aggregate)[0]


def child_seed(seed: int, run: int) -> int:
    return derive_seed(seed, "run", run)


def perturb_batch(x, mask: TopKMask, spec: PerturbSpec, ds: Dataset, m: int) -> np.ndarray:
    """m independent perturbations of x; run i uses child_seed(spec.seed, i)."""
    if m < 1:
        raise SpecError("m must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    n_train = ds.X_train.shape[0]
    dr = [draw(np.random.default_rng(child_seed(spec.seed, i)), 1, d, n_train) for i in range(m)]
    stacked = Draws(*(np.concatenate([getattr(t, f) for t in dr]) for f in
                      ("noise", "marginal", "coin", "shift")))
    sel = np.broadcast_to(mask.column_mask(d), (m, d))
    return apply(np.broadcast_to(x, (m, d)), sel, spec, ds, stacked, mask.aggregate)
