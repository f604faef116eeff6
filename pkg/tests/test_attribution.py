import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from faithbench import attribution as at
from faithbench.errors import ShapeError, SpecError, TableImportError
from faithbench.model import DenseModel, evaluate, predict

from conftest import random_dense3


def shapley_by_permutations(model, x, refs, target):
    """Independent oracle: average marginal contribution over all feature orderings."""
    d = x.size
    cache = {}

    def v(mask):
        if mask not in cache:
            m = np.array(mask, dtype=float)
            cache[mask] = float(np.mean(evaluate(model, m * x + (1 - m) * refs, target)))
        return cache[mask]

    phi = np.zeros(d)
    for perm in itertools.permutations(range(d)):
        mask = [0] * d
        prev = v(tuple(mask))
        for j in perm:
            mask[j] = 1
            cur = v(tuple(mask))
            phi[j] += cur - prev
            prev = cur
    return phi / math.factorial(d)


def test_ig_linear_examples():
    m = DenseModel.linear([2.0, -1.0])
    np.testing.assert_array_equal(
        at.integrated_gradients(m, [1.0, 3.0], [[0.0, 0.0]], target="logit"), [2, -3])
    np.testing.assert_array_equal(
        at.integrated_gradients(m, [1.0, 3.0], [[1.0, 3.0]], target="logit"), [0, 0])


@given(arrays(np.float64, 5, elements=st.floats(-3, 3)),
       arrays(np.float64, (3, 5), elements=st.floats(-3, 3)))
def test_ig_linear_is_exact(x, refs):
    c = np.array([0.5, -2.0, 1.5, 0.0, 3.0])
    m = DenseModel.linear(c, 0.7)
    got = at.integrated_gradients(m, x, refs, at.IGConfig(steps=7), target="logit")
    np.testing.assert_allclose(got, ((x - refs) * c).mean(axis=0), atol=1e-10, rtol=0)


def test_ig_completeness_dense3():
    rng = np.random.default_rng(5)
    model = random_dense3(6, seed=8)
    for _ in range(20):
        x = rng.normal(size=6)
        refs = rng.normal(size=(2, 6))
        phi = at.integrated_gradients(model, x, refs, at.IGConfig(steps=300))
        gap = phi.sum() - (predict(model, x) - predict(model, refs).mean())
        assert abs(gap) <= 1e-2


def test_kernel_shap_examples():
    m = DenseModel.linear([1.0, 1.0])
    np.testing.assert_allclose(at.kernel_shap(m, [2.0, 0.0], [[0.0, 0.0]], target="logit"),
                               [2, 0], atol=1e-12)
    model = random_dense3(4, seed=1)
    np.testing.assert_allclose(at.kernel_shap(model, np.ones(4), np.ones((1, 4))), 0, atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_kernel_shap_exact_matches_permutation_oracle(seed):
    rng = np.random.default_rng(seed)
    model = random_dense3(6, seed=seed + 10)
    x = rng.normal(size=6)
    refs = rng.normal(size=(3, 6))
    phi = at.kernel_shap(model, x, refs)
    np.testing.assert_allclose(phi, shapley_by_permutations(model, x, refs, "probability"),
                               atol=1e-9, rtol=0)
    np.testing.assert_allclose(at.exact_shapley(model, x, refs), phi, atol=1e-9, rtol=0)


def test_kernel_shap_sampled_is_efficient_and_close():
    rng = np.random.default_rng(3)
    model = random_dense3(14, seed=2)
    x, refs = rng.normal(size=14), rng.normal(size=(2, 14))
    cfg = at.KernelShapConfig(n_coalitions=4096, seed=1)
    phi = at.kernel_shap(model, x, refs, cfg)
    total = predict(model, x) - predict(model, refs).mean()
    assert phi.sum() == pytest.approx(total, abs=1e-10)
    exact = at.exact_shapley(model, x, refs)
    assert np.max(np.abs(phi - exact)) <= 0.1 * np.max(np.abs(exact)) + 1e-3


def test_kernel_shap_linear_sampled_is_exact():
    c = np.linspace(-1, 1, 16)
    m = DenseModel.linear(c)
    rng = np.random.default_rng(0)
    x, ref = rng.normal(size=16), rng.normal(size=(1, 16))
    phi = at.kernel_shap(m, x, ref, at.KernelShapConfig(n_coalitions=512, seed=4), target="logit")
    np.testing.assert_allclose(phi, (x - ref[0]) * c, atol=1e-8)


def test_random_explanations():
    t = at.random_explanations(200, 60, seed=3)
    assert t.values.min() >= 0 and t.values.max() < 1
    assert abs(t.values.mean() - 0.5) <= 0.02
    np.testing.assert_array_equal(t.values, at.random_explanations(200, 60, seed=3).values)


def test_ground_truth_linear():
    m = DenseModel.linear([0.5, -1.0])
    np.testing.assert_array_equal(at.ground_truth_linear(m, [[2.0, 3.0], [0, 0]]).values,
                                  [[1, -3], [0, 0]])
    with pytest.raises(SpecError):
        at.ground_truth_linear(random_dense3(2, 0), [[1.0, 1.0]])


def test_ground_truth_on_dataset_uses_test_rows(small_ds, small_linear):
    t = at.ground_truth_linear(small_linear, small_ds)
    np.testing.assert_array_equal(t.values, small_ds.X_test * small_linear.coefficients)


def test_grid_counts():
    methods = (at.INTEGRATED_GRADIENTS, at.KERNEL_SHAP, "imported:deep_shap")
    assert len(at.grid_cells("dense3", methods, ("a", "b", "c", "d"), 3)) == 39
    assert len(at.grid_cells("linear", methods + (at.GROUND_TRUTH,), ("a", "b", "c", "d"), 3)) == 42
    assert len(at.grid_cells("dense3", (at.KERNEL_SHAP,), ("a",), 1)) == 2
    with pytest.raises(SpecError):
        at.grid_cells("dense3", (at.GROUND_TRUTH,), ("a",), 1)


def test_small_grid_tables_match_dataset(small_ds, small_dense):
    tables = at.generate_grid(small_ds, small_dense, (at.INTEGRATED_GRADIENTS,),
                              ("constant_median", "opposite_class"), repeats=1,
                              ig=at.IGConfig(steps=10))
    assert len(tables) == 3
    for t in tables:
        assert t.values.shape == small_ds.X_test.shape
        assert np.all(np.isfinite(t.values))


def test_export_import_round_trip(tmp_path, small_ds, small_linear):
    t = at.ground_truth_linear(small_linear, small_ds, repeat=2, seed=1)
    p = at.export_table(t, tmp_path / "gt.csv")
    back = at.load_table(p)
    np.testing.assert_array_equal(back.values, t.values)
    assert back.metadata() == t.metadata()
    meta = {"label": "ext", "baseline_kind": "training", "k": 5, "repeat": 0, "seed": 1,
            "dataset_hash": small_ds.hash(), "target": "logit"}
    imp = at.import_table(p, meta, shape=small_ds.X_test.shape)
    assert imp.method == "imported:ext" and imp.candidate == "imported:ext/training"
    np.testing.assert_array_equal(imp.values, t.values)


def test_import_rejects_wrong_shape(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("f0,f1\n1,2\n3,4\n")
    meta = {"label": "ext", "baseline_kind": None, "k": 1, "repeat": 0, "seed": 0,
            "dataset_hash": "x", "target": "logit"}
    assert at.import_table(p, meta, shape=(2, 2)).values.shape == (2, 2)
    with pytest.raises(TableImportError):
        at.import_table(p, meta, shape=(3, 2))
    with pytest.raises(TableImportError):
        at.import_table(p, {"label": "ext"})
    with pytest.raises(TableImportError):
        at.import_table(p)


def test_table_must_be_two_dimensional():
    with pytest.raises(ShapeError):
        at.AttributionTable(np.zeros(3), "x")
