#!/usr/bin/env python3
"""Produce Deep SHAP tables with captum and drop them where the grid runner imports them.

Trains (or reuses) the models of a grid config, then for every architecture,
baseline kind and repeat writes ``<tag>__<baseline>__r<repeat>.csv`` plus a JSON
sidecar into the config's ``deep_shap`` import directory. The baselines are the
same reference rows the engine uses for its own methods, so imported and
computed tables are comparable cell by cell.

    python scripts/export_deep_shap.py --config grid.json

Needs the optional extra: ``pip install -e .[deepshap]``.
"""
from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

from faithbench import attribution as at
from faithbench import baselines as bl
from faithbench import harness
from faithbench._seeds import derive_seed
from faithbench.model import LOGIT, predict

LABEL = "deep_shap"


def torch_module(model):
    """float64 torch replica of a DenseModel, ending in the model's explanation target."""
    import torch
    from torch import nn

    layers = []
    for W, b, act in zip(model.weights, model.biases, model.activations):
        lin = nn.Linear(W.shape[0], W.shape[1]).double()
        with torch.no_grad():
            lin.weight.copy_(torch.tensor(np.array(W.T)))
            lin.bias.copy_(torch.tensor(np.array(b)))
        layers.append(lin)
        if act == "relu":
            layers.append(nn.ReLU())
    if at.default_target(model) != LOGIT:
        layers.append(nn.Sigmoid())
    return nn.Sequential(*layers).eval()


def deep_shap_rows(model, ds, baseline_kind: str, k: int, seed: int) -> np.ndarray:
    import torch
    from captum.attr import DeepLift, DeepLiftShap

    net = torch_module(model)
    train_pred = predict(model, ds.X_train) if baseline_kind == bl.OPPOSITE_CLASS else None
    median = bl.constant_median(ds) if baseline_kind == bl.CONSTANT_MEDIAN else None
    rows = []
    for x in ds.X_test:
        refs = bl.build(baseline_kind, ds, model, x, k=k, seed=seed, train_pred=train_pred,
                        median=median).references
        xt = torch.tensor(x[None, :], requires_grad=True)
        rt = torch.tensor(np.array(refs))
        explainer = DeepLift(net) if rt.shape[0] == 1 else DeepLiftShap(net)
        with warnings.catch_warnings():
            # captum announces every hook it installs on the activations
            warnings.simplefilter("ignore", UserWarning)
            attr = explainer.attribute(xt, baselines=rt, target=0)
        rows.append(attr.detach().numpy()[0])
    return np.array(rows)


def export(cfg: harness.ExperimentConfig, tags=None) -> list:
    ds, models = harness.prepare(cfg)
    written = []
    for tag in tags or cfg.architectures:
        model = models[tag]
        for repeat in range(cfg.repeats):
            for kind in cfg.baseline_kinds:
                path = harness.import_path(cfg, LABEL, tag, kind, repeat)
                if path.exists():
                    continue
                seed = derive_seed(cfg.master_seed, "table", tag, at.IMPORTED_PREFIX + LABEL,
                                   kind, repeat)
                values = deep_shap_rows(model, ds, kind, cfg.baseline_k, seed)
                table = at.AttributionTable(
                    values, at.IMPORTED_PREFIX + LABEL, kind,
                    k=1 if kind == bl.CONSTANT_MEDIAN else cfg.baseline_k, repeat=repeat,
                    seed=seed, dataset_hash=ds.hash(), target=at.default_target(model),
                    extra={"label": LABEL, "producer": "captum"})
                at.export_table(table, path)
                written.append(path)
    return written


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="grid config JSON (defaults to the built-in config)")
    ap.add_argument("--out", help="override the output directory")
    ap.add_argument("--arch", action="append", help="restrict to an architecture tag")
    args = ap.parse_args(argv)
    cfg = harness.ExperimentConfig.load(args.config) if args.config else harness.ExperimentConfig()
    if args.out:
        cfg = harness.replace(cfg, output_dir=args.out)
    paths = export(cfg, args.arch)
    print(f"wrote {len(paths)} deep shap tables")
    return 0


if __name__ == "__main__":
    sys.exit(main())
