"""Dense binary classifiers with exact input gradients.

Two families: ``linear`` (one identity layer, i.e. logistic regression) and
``dense3`` (two relu hidden layers plus the output layer). Everything is numpy;
forward and backward passes accept a single row or a batch.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import Dataset
from .errors import ParseError, ShapeError, TrainingError

LINEAR = "linear"
DENSE3 = "dense3"
TAGS = (LINEAR, DENSE3)
PROBABILITY = "probability"
LOGIT = "logit"


@dataclass(frozen=True, eq=False)
class DenseModel:
    weights: tuple  # each (in, out)
    biases: tuple
    activations: tuple
    tag: str

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        bs = tuple(np.array(b, dtype=np.float64).reshape(-1) for b in self.biases)
        for a in ws + bs:
            a.setflags(write=False)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        object.__setattr__(self, "activations", tuple(self.activations))
        if not (len(ws) == len(bs) == len(self.activations)) or not ws:
            raise ShapeError("weights, biases and activations must have equal non-zero length")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and ws[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"layer {i} input {w.shape[0]} != previous output {ws[i-1].shape[1]}")
        if ws[-1].shape[1] != 1:
            raise ShapeError("output layer must have width 1")
        if self.tag == LINEAR:
            if len(ws) != 1 or self.activations != ("identity",):
                raise ShapeError("linear model is exactly one identity layer")
        elif self.tag == DENSE3:
            if len(ws) != 3 or self.activations != ("relu", "relu", "identity"):
                raise ShapeError("dense3 model is relu, relu, identity")
        else:
            raise ShapeError(f"unknown architecture tag {self.tag!r}")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def dims(self) -> list:
        return [self.input_dim] + [w.shape[1] for w in self.weights]

    @property
    def coefficients(self) -> np.ndarray:
        """Learned coefficient vector of a linear model."""
        if self.tag != LINEAR:
            raise ShapeError("coefficients are defined for linear models only")
        return self.weights[0][:, 0]

    @classmethod
    def linear(cls, w, b=0.0) -> "DenseModel":
        w = np.asarray(w, dtype=np.float64).reshape(-1, 1)
        return cls((w,), (np.array([b], dtype=np.float64),), ("identity",), LINEAR)

    def _check(self, x) -> tuple:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = x[None, :] if single else x
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ShapeError(f"expected input width {self.input_dim}, got shape {x.shape}")
        return X, single

    def _forward(self, X):
        zs = []
        h = X
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = h @ w + b
            zs.append(z)
            h = np.maximum(z, 0.0) if act == "relu" else z
        return zs


def logit(model: DenseModel, x) -> np.ndarray:
    X, single = model._check(x)
    out = model._forward(X)[-1][:, 0]
    return out[0] if single else out


def predict(model: DenseModel, x) -> np.ndarray:
    return expit(logit(model, x))


def evaluate(model: DenseModel, x, target: str = PROBABILITY) -> np.ndarray:
    if target == LOGIT:
        return logit(model, x)
    if target == PROBABILITY:
        return predict(model, x)
    raise ValueError(f"unknown target {target!r}")


def input_gradient(model: DenseModel, x, target: str = PROBABILITY) -> np.ndarray:
    """Exact d(target)/dx by reverse accumulation; relu'(0) := 0."""
    X, single = model._check(x)
    zs = model._forward(X)
    g = np.ones((X.shape[0], 1))
    if target == PROBABILITY:
        p = expit(zs[-1])
        g = p * (1.0 - p)
    elif target != LOGIT:
        raise ValueError(f"unknown target {target!r}")
    for i in range(len(model.weights) - 1, -1, -1):
        if model.activations[i] == "relu":
            g = g * (zs[i] > 0)
        g = g @ model.weights[i].T
    return g[0] if single else g


def log_loss(model: DenseModel, X, y) -> float:
    z = logit(model, X)
    # log(1+e^z) - y z, stable
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def constant_log_loss(y) -> float:
    p = float(np.clip(np.mean(y), 1e-12, 1 - 1e-12))
    return -(p * np.log(p) + (1 - p) * np.log(1 - p))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch_size: int = 64
    learning_rate: float = 0.1
    hidden_widths: tuple = (64, 32)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1, learning_rate > 0 required")
        if len(self.hidden_widths) != 2 or min(self.hidden_widths) < 1:
            raise ValueError("hidden_widths must be two positive widths")


def _init(d: int, cfg: TrainConfig, tag: str, rng: np.random.Generator):
    if tag == LINEAR:
        return [np.zeros((d, 1))], [np.zeros(1)], ["identity"]
    if tag != DENSE3:
        raise ValueError(f"unknown architecture tag {tag!r}")
    dims = [d, *cfg.hidden_widths]
    ws, bs = [], []
    for a, b in zip(dims[:-1], dims[1:]):
        ws.append(rng.standard_normal((a, b)) * np.sqrt(2.0 / a))
        bs.append(np.zeros(b))
    # zero output layer: the untrained net is the constant 0.5 predictor
    ws.append(np.zeros((dims[-1], 1)))
    bs.append(np.zeros(1))
    return ws, bs, ["relu", "relu", "identity"]


def train(ds: Dataset, cfg: TrainConfig, tag: str) -> DenseModel:
    """Mini-batch gradient descent on the train split's binary cross-entropy."""
    rng = np.random.default_rng(cfg.seed)
    X, y = ds.X_train, ds.y_train.astype(np.float64)
    ws, bs, acts = _init(ds.d, cfg, tag, rng)
    n = X.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            hs = [X[idx]]
            zs = []
            for w, b, act in zip(ws, bs, acts):
                z = hs[-1] @ w + b
                zs.append(z)
                hs.append(np.maximum(z, 0.0) if act == "relu" else z)
            g = (expit(zs[-1][:, 0]) - y[idx])[:, None] / len(idx)
            for i in range(len(ws) - 1, -1, -1):
                if acts[i] == "relu":
                    g = g * (zs[i] > 0)
                gw = hs[i].T @ g
                gb = g.sum(axis=0)
                g = g @ ws[i].T
                ws[i] -= cfg.learning_rate * gw
                bs[i] -= cfg.learning_rate * gb
        if not all(np.all(np.isfinite(w)) for w in ws):
            raise TrainingError("training diverged (non-finite weights)")
    model = DenseModel(tuple(ws), tuple(bs), tuple(acts), tag)
    if not np.isfinite(log_loss(model, X, y)):
        raise TrainingError("training loss is NaN")
    return model


def to_dict(model: DenseModel) -> dict:
    return {
        "tag": model.tag,
        "dims": model.dims,
        "activations": list(model.activations),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def from_dict(doc: dict) -> DenseModel:
    try:
        model = DenseModel(tuple(np.array(w, dtype=np.float64) for w in doc["weights"]),
                           tuple(np.array(b, dtype=np.float64) for b in doc["biases"]),
                           tuple(doc["activations"]), doc["tag"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model document: {exc}") from exc
    if list(doc.get("dims", model.dims)) != model.dims:
        raise ParseError(f"declared dims {doc['dims']} do not match weights {model.dims}")
    return model


def save(model: DenseModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_dict(model)), encoding="utf-8")
    return path


def load(path) -> DenseModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return from_dict(doc)
