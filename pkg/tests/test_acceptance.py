"""End-to-end acceptance checks, one test per criterion.

The full synthetic grid (both architectures, all four baselines, three
repeats, Deep SHAP imported from captum) runs once per session and is shared
by the grid-level criteria. A summary line per criterion is printed at the end
of the pytest run.
"""
import importlib.util
import itertools
import shutil
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from faithbench import attribution as at
from faithbench import harness as hs
from faithbench import rank as rk
from faithbench.metrics import ABC, BND, PGI, default_k, pgi, pgi_sweep
from faithbench.model import DenseModel, evaluate, predict
from faithbench.perturb import PerturbSpec
from faithbench.tda.bottleneck import bottleneck
from faithbench.tda.persistence import BRANCH, COMPONENT, graph_persistence

from conftest import random_dense3
from test_bottleneck import _random_diagram, brute_force
from test_rank import naive_kendall_b, naive_spearman, naive_weighted_tau

ROOT = Path(__file__).resolve().parents[1]
BUDGET_S = 600


def _load_exporter():
    spec = importlib.util.spec_from_file_location("export_deep_shap",
                                                  ROOT / "scripts" / "export_deep_shap.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def _report(criterion, ok, detail):
    print(f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def full_grid(tmp_path_factory):
    pytest.importorskip("captum")
    cfg = hs.ExperimentConfig(output_dir=str(tmp_path_factory.mktemp("full") / "bundle"))
    start = time.perf_counter()
    _load_exporter().export(cfg)
    res = hs.run_grid(cfg)
    return cfg, res, time.perf_counter() - start


@pytest.fixture(scope="session")
def permutation_rows(tmp_path_factory):
    cfg = hs.ExperimentConfig(output_dir=str(tmp_path_factory.mktemp("perm")))
    return hs.run_permutation_experiment(cfg)


@pytest.mark.slow
def test_criterion_01_grid_cardinality(full_grid):
    cfg, res, elapsed = full_grid
    counts = res.manifest["table_counts"]
    ok = counts == {"linear": 42, "dense3": 39} and res.ok and elapsed <= BUDGET_S
    _report(1, ok, f"tables {counts}, failures {res.manifest['failures']}, {elapsed:.0f}s")
    assert counts == {"linear": 42, "dense3": 39}
    assert res.ok, res.failures
    assert elapsed <= BUDGET_S


def test_criterion_02_abc_increases_with_permutation(permutation_rows):
    fr, mean, M = hs.fraction_means(permutation_rows, ABC)
    assert list(fr) == [0.0, 0.25, 0.5, 0.75, 1.0]
    strict = []
    for row in M:
        tol = 1e-4 * (row.max() - row.min())
        strict.append(bool(np.all(np.diff(row) > tol)))
    ok = sum(strict) >= 2 and bool(np.all(np.diff(mean) > 0))
    _report(2, ok, f"strict per repeat {strict}, mean {np.round(mean, 4).tolist()}")
    assert sum(strict) >= 2
    assert np.all(np.diff(mean) > 0)


def test_criterion_03_bnd_plateau(permutation_rows):
    fr, mean, M = hs.fraction_means(permutation_rows, BND)
    low = mean[:3]
    spread = max(abs(a - b) for a, b in itertools.combinations(low, 2))
    ok = spread <= 0.1 * mean[-1] and mean[-1] > mean[2]
    _report(3, ok, f"mean BND {np.round(mean, 4).tolist()}, spread over f<=0.5 {spread:.4f} "
                   f"vs 10% of BND(1) {0.1 * mean[-1]:.4f}")
    assert spread <= 0.1 * mean[-1]
    assert mean[-1] > mean[2]


@pytest.mark.slow
def test_criterion_04_ground_truth_first_random_last(full_grid):
    _, res, _ = full_grid
    rankings = {r.metric: r for r in res.cells[("synthetic", "linear")]["rankings"]}
    gt = at.GROUND_TRUTH
    rnd = at.RANDOM
    detail, ok = [], True
    for metric in (ABC, PGI):
        order = rankings[metric].candidates
        good = order[0] == gt and order[-1] == rnd
        ok &= good
        detail.append(f"{metric}: first {order[0]}, ground truth at {order.index(gt)}, "
                      f"last {order[-1]}")
    _report(4, ok, "; ".join(detail))
    for metric in (ABC, PGI):
        order = rankings[metric].candidates
        assert order[-1] == rnd, metric
        assert order[0] == gt, metric


@pytest.mark.slow
def test_criterion_05_metric_disagreement(full_grid):
    _, res, _ = full_grid
    cell = res.cells[("synthetic", "dense3")]
    agg = cell["agreement"]["aggregate"]
    assert agg.metrics == (PGI, ABC, BND)
    mins = {}
    for kind in rk.CORRELATIONS:
        M = agg.matrices[kind]
        assert M.shape == (3, 3)
        mins[kind] = float(M[~np.eye(3, dtype=bool)].min())
    ok = all(v < 0.9 for v in mins.values())
    flagged = res.manifest["agreement_anomaly"]
    _report(5, ok, f"smallest off-diagonal per kind {mins}, anomaly flags {flagged}")
    assert ok


@pytest.mark.slow
def test_criterion_06_integrated_gradients(full_grid):
    _, res, _ = full_grid
    cfg = full_grid[0]
    ds, models = hs.prepare(cfg)
    rng = np.random.default_rng(6)
    c = rng.normal(size=ds.d)
    lin = DenseModel.linear(c, 0.3)
    worst_lin = 0.0
    for x, b in zip(ds.X_test[:100], ds.X_train[:100]):
        phi = at.integrated_gradients(lin, x, b[None, :], at.IGConfig(steps=50), target="logit")
        worst_lin = max(worst_lin, float(np.max(np.abs(phi - (x - b) * c))))
    dense = models["dense3"]
    median = np.median(ds.X_train, axis=0)[None, :]
    rows = rng.choice(ds.X_test.shape[0], 100, replace=False)
    gaps = []
    for x in ds.X_test[rows]:
        phi = at.integrated_gradients(dense, x, median, at.IGConfig(steps=300))
        gaps.append(abs(phi.sum() - (predict(dense, x) - predict(dense, median)[0])))
    ok = worst_lin <= 1e-10 and max(gaps) <= 1e-2
    _report(6, ok, f"linear max error {worst_lin:.2e}, dense3 max completeness gap {max(gaps):.2e}")
    assert worst_lin <= 1e-10
    assert max(gaps) <= 1e-2


def subset_shapley(model, x, refs, target="probability"):
    """Shapley values from all 2^d coalition values and the factorial weights."""
    d = x.size
    from math import factorial
    masks = np.array(list(itertools.product((0, 1), repeat=d)), dtype=float)
    v = {}
    for m in masks:
        v[tuple(m.astype(int))] = float(np.mean(evaluate(model, m * x + (1 - m) * refs, target)))
    phi = np.zeros(d)
    for key, val in v.items():
        s = sum(key)
        for j in range(d):
            if key[j]:
                continue
            w = factorial(s) * factorial(d - s - 1) / factorial(d)
            with_j = key[:j] + (1,) + key[j + 1:]
            phi[j] += w * (v[with_j] - val)
    return phi


def test_criterion_07_kernel_shap_exact():
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(20):
        model = random_dense3(8, seed=100 + i, widths=(12, 8))
        x = rng.normal(size=8)
        refs = rng.normal(size=(3, 8))
        phi = at.kernel_shap(model, x, refs)
        worst = max(worst, float(np.max(np.abs(phi - subset_shapley(model, x, refs)))))
    _report(7, worst <= 1e-6, f"max deviation from 2^d Shapley {worst:.2e}")
    assert worst <= 1e-6


def test_criterion_08_bottleneck_oracle():
    rng = np.random.default_rng(8)
    corpus = [(_random_diagram(rng), _random_diagram(rng)) for _ in range(200)]
    mismatch = sum(bottleneck(a, b) != brute_force(a, b) for a, b in corpus)
    asym = max(abs(bottleneck(a, b) - bottleneck(b, a)) for a, b in corpus)
    tri = 0.0
    for (a, b), (c, _) in zip(corpus, corpus[1:] + corpus[:1]):
        tri = max(tri, bottleneck(a, b) - bottleneck(a, c) - bottleneck(c, b))
    ok = mismatch == 0 and asym <= 1e-12 and tri <= 1e-12
    _report(8, ok, f"oracle mismatches {mismatch}/200, asymmetry {asym:.1e}, "
                   f"triangle excess {max(tri, 0.0):.1e}")
    assert mismatch == 0
    assert asym <= 1e-12 and tri <= 1e-12


def test_criterion_09_persistence_hand_cases():
    def pairs(d):
        return sorted((float(b), float(e), c) for (b, e), c in zip(d.points, d.classes))
    cases = [
        (pairs(graph_persistence([0.7], [])), [(0.7, 0.7, COMPONENT)]),
        (pairs(graph_persistence([0, 1, 2], [(0, 1), (1, 2)])), [(0, 2, COMPONENT)]),
        (pairs(graph_persistence([0, 0.5, 2, 1], [(0, 3), (1, 3), (2, 3)])),
         [(0, 2, COMPONENT), (0.5, 1, BRANCH)]),
    ]
    ok = all(got == want for got, want in cases)
    _report(9, ok, f"{sum(g == w for g, w in cases)}/3 hand cases exact")
    for got, want in cases:
        assert got == want


def test_criterion_10_rank_correlation_oracles():
    worst = 0.0
    exact = True
    for n in range(2, 7):
        base = np.arange(n, dtype=float)
        for perm in itertools.permutations(range(n)):
            p = np.array(perm, dtype=float)
            for fn, naive in ((rk.spearman, naive_spearman), (rk.kendall, naive_kendall_b),
                              (rk.weighted_kendall, naive_weighted_tau)):
                err = abs(fn(base, p) - naive(base, p))
                worst = max(worst, err)
                exact &= err <= 1e-12
    rng = np.random.default_rng(10)
    worst13 = 0.0
    for _ in range(50):
        a, b = rng.permutation(13).astype(float), rng.permutation(13).astype(float)
        for fn, naive in ((rk.spearman, naive_spearman), (rk.kendall, naive_kendall_b),
                          (rk.weighted_kendall, naive_weighted_tau)):
            worst13 = max(worst13, abs(fn(a, b) - naive(a, b)))
    ok = exact and worst13 <= 1e-12
    _report(10, ok, f"n<=6 max error {worst:.1e}, n=13 max error {worst13:.1e}")
    assert exact and worst13 <= 1e-12


def test_criterion_11_pgi_contracts(tmp_path):
    cfg = hs.ExperimentConfig(output_dir=str(tmp_path))
    ds = hs.load_dataset(cfg)
    model, _ = hs.train_model(cfg, ds, "linear")
    gt = at.ground_truth_linear(model, ds)
    rnd = at.random_explanations(*ds.X_test.shape, seed=1)
    identity = PerturbSpec(sigma=0.0, categorical_flip_prob=0.0, seed=3)
    zero_id = [pgi(model, ds, t, identity, k=k).value for t in (gt, rnd) for k in (1, default_k(ds.schema), ds.d)]
    const = DenseModel.linear(np.zeros(ds.d), 0.8)
    zero_const = [pgi(const, ds, t, PerturbSpec(sigma=1.0)).value for t in (gt, rnd)]
    sweep = pgi_sweep(model, ds, gt, PerturbSpec(seed=5), range(1, ds.d + 1))
    ks = [k for k, _ in sweep]
    first, last = sweep[0][1].value, sweep[-1][1].value
    ok = (max(zero_id) == 0.0 and max(zero_const) == 0.0 and ks == list(range(1, ds.d + 1))
          and last >= first)
    _report(11, ok, f"identity max {max(zero_id)}, constant max {max(zero_const)}, "
                    f"{len(ks)}-point sweep k=1 {first:.4f} k=d {last:.4f}")
    assert max(zero_id) == 0.0 and max(zero_const) == 0.0
    assert ks == list(range(1, ds.d + 1))
    assert last >= first


@pytest.mark.slow
def test_criterion_12_determinism(full_grid, tmp_path):
    cfg, _, _ = full_grid
    other = replace(cfg, output_dir=str(tmp_path / "bundle"))
    shutil.copytree(cfg.out / "imports", other.out / "imports")
    assert other.fingerprint() == cfg.fingerprint()
    hs.run_grid(other)
    files = sorted(p.relative_to(cfg.out) for p in cfg.out.rglob("*") if p.is_file())
    other_files = sorted(p.relative_to(other.out) for p in other.out.rglob("*") if p.is_file())
    differing = [str(f) for f in files if f in other_files
                 and (cfg.out / f).read_bytes() != (other.out / f).read_bytes()]
    ok = files == other_files and not differing
    _report(12, ok, f"{len(files)} files compared, {len(differing)} differ")
    assert files == other_files
    assert not differing
