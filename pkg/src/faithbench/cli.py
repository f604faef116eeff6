"""Command line entry point: ``faithbench <subcommand> [--config c.json] [overrides]``.

Exit codes: 0 success, 1 partial failure (some grid cells failed), 2 usage or
validation error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import harness
from . import model as mdl
from .data import generate_synthetic, write_csv
from .errors import ConfigError, FaithbenchError

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(f"{self.prog}: error: {message}") from None

    def exit(self, status=0, message=None):
        if message:
            sys.stderr.write(message)
        raise SystemExit(EXIT_USAGE if status else EXIT_OK)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--repeats", type=int, help="repeats per grid cell")
    p.add_argument("--arch", action="append", choices=mdl.TAGS, help="architecture tag")
    p.add_argument("--method", action="append", help="attribution method")
    p.add_argument("--workers", type=int, help="parallel attribution workers")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="faithbench", description="Faithfulness metric benchmark for tabular "
                 "feature attributions.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("synth", help="write the synthetic dataset as CSV + schema sidecar")
    _common(p)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--n-features", type=int)
    p.add_argument("--noise-std", type=float)
    p.add_argument("--dest", required=True, help="CSV path to write")

    for name, text in (("train", "train the configured models"),
                       ("explain", "compute the attribution grid"),
                       ("score", "PGI and ABC for every attribution table"),
                       ("tda", "BND for every attribution table"),
                       ("rank", "rankings and agreement matrices"),
                       ("grid", "run everything and write the report bundle"),
                       ("report", "rebuild the report bundle from cached artifacts")):
        _common(sub.add_parser(name, help=text))

    p = sub.add_parser("permute-exp", help="ground-truth permutation experiment")
    _common(p)
    p.add_argument("--fractions", type=float, nargs="+")
    return ap


def load_config(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.load(args.config) if args.config else harness.ExperimentConfig()
    changes = {}
    if args.out:
        changes["output_dir"] = args.out
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.repeats is not None:
        changes["repeats"] = args.repeats
    if args.arch:
        changes["architectures"] = tuple(args.arch)
    if args.method:
        changes["methods"] = tuple(args.method)
    if args.workers is not None:
        changes["workers"] = args.workers
    if getattr(args, "fractions", None):
        changes["permutation"] = replace(cfg.permutation, fractions=tuple(args.fractions))
    return replace(cfg, **changes) if changes else cfg


def _report(status: dict) -> None:
    print(json.dumps(status, indent=2, sort_keys=True))


def _grid_stage(cfg, stage: str) -> int:
    ds, models = harness.prepare(cfg)
    failed = False
    for tag in cfg.architectures:
        model = models[tag]
        tables, fail, fresh = harness.attribution_grid(cfg, ds, model)
        status = {"architecture": tag, "tables": len(tables), "computed": len(fresh),
                  "failures": fail}
        if stage in ("score", "tda"):
            if stage == "score":
                scores, sfail, _ = harness.score_tables(cfg, ds, model, tables)
                fail.update(sfail)
            else:
                by_repeat = harness.complete_candidates(tables, cfg.repeats)
                scores, _ = harness.tda_scores(cfg, ds, model, by_repeat)
            status["scores"] = len(scores)
        failed |= bool(fail)
        _report(status)
    return EXIT_PARTIAL if failed else EXIT_OK


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args)
    if args.command == "synth":
        spec = cfg.synthetic
        over = {k: v for k, v in (("n_samples", args.n_samples), ("n_features", args.n_features),
                                  ("noise_std", args.noise_std)) if v is not None}
        if args.seed is not None:
            over["seed"] = args.seed
        if over.get("n_features") and spec.coefficient_vector is not None:
            over["coefficient_vector"] = None
        ds = generate_synthetic(replace(spec, **over) if over else spec)
        path = write_csv(ds, args.dest)
        _report({"dataset": str(path), "rows": ds.n, "features": ds.d})
        return EXIT_OK
    if args.command == "train":
        ds = harness.load_dataset(cfg)
        out = {}
        for tag in cfg.architectures:
            model, path = harness.train_model(cfg, ds, tag)
            out[tag] = {"path": str(path), "test_log_loss": mdl.log_loss(model, ds.X_test, ds.y_test)}
        _report(out)
        return EXIT_OK
    if args.command in ("explain", "score", "tda"):
        return _grid_stage(cfg, args.command)
    if args.command == "permute-exp":
        rows = harness.run_permutation_experiment(cfg)
        summary = {}
        for metric in harness.METRICS:
            fr, mean, _ = harness.fraction_means(rows, metric)
            summary[metric] = dict(zip((str(f) for f in fr), (float(v) for v in mean)))
        _report({"output": str(cfg.out / "permutation" / "metrics.csv"), "means": summary})
        return EXIT_OK
    # rank, grid and report all assemble the full bundle; cached cells are reused
    res = harness.run_grid(cfg)
    _report({"output": str(res.out), "table_counts": res.manifest["table_counts"],
             "failures": res.manifest["failures"],
             "agreement_anomaly": res.manifest["agreement_anomaly"]})
    return EXIT_OK if res.ok else EXIT_PARTIAL


def main(argv=None) -> int:
    try:
        return run(argv)
    except SystemExit as exc:
        if exc.code in (None, 0):
            return EXIT_OK
        if isinstance(exc.code, str):
            sys.stderr.write(exc.code + "\n")
        return EXIT_USAGE
    except ConfigError as exc:
        sys.stderr.write(f"faithbench: invalid configuration: {exc}\n")
        return EXIT_USAGE
    except FaithbenchError as exc:
        sys.stderr.write(f"faithbench: {type(exc).__name__}: {exc}\n")
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
