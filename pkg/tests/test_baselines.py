import numpy as np
import pytest
from hypothesis import given, strategies as st

from faithbench import baselines as bl
from faithbench.data import ONE_HOT, Column, Dataset, FeatureSchema
from faithbench.errors import BaselineUnavailable
from faithbench.model import DenseModel, predict


def _ds(X, y=None, train=None):
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    y = np.arange(n) % 2 if y is None else y
    train = np.ones(n, bool) if train is None else train
    return Dataset(FeatureSchema.numeric([f"x{j}" for j in range(X.shape[1])]), X, y, train)


def test_constant_median_examples():
    ref = bl.constant_median(_ds([[1, 5], [3, 7], [100, 9]])).references
    np.testing.assert_array_equal(ref, [[3, 7]])
    assert bl.constant_median(_ds([[1], [2]])).references[0, 0] == 1.5
    schema = FeatureSchema((Column("gA", ONE_HOT, "g", 2), Column("gB", ONE_HOT, "g", 2)))
    ds = Dataset(schema, [[1, 0], [1, 0], [0, 1]], [0, 1, 0], [True] * 3)
    np.testing.assert_array_equal(bl.constant_median(ds).references, [[1, 0]])
    assert bl.constant_median(ds).k == 1


def test_training_sample():
    ds = _ds(np.arange(100.0)[:, None])
    s = bl.training_sample(ds, 5, seed=3)
    assert len(set(s.rows.tolist())) == 5
    assert set(bl.training_sample(ds, 100, seed=1).rows.tolist()) == set(range(100))
    np.testing.assert_array_equal(s.rows, bl.training_sample(ds, 5, seed=3).rows)


def test_opposite_class_nearest_and_short():
    # model predicts class 1 iff x > 0
    model = DenseModel.linear([1.0])
    X = np.concatenate([-np.arange(1.0, 11.0), np.arange(1.0, 6.0)])[:, None]
    ds = _ds(X)
    s = bl.opposite_class(ds, model, [3.0], k=5)
    # brute force: the 5 negatives nearest to 3 are -1..-5
    assert sorted(ds.X[s.rows, 0].tolist()) == [-5, -4, -3, -2, -1]
    assert not s.short
    s = bl.opposite_class(_ds(np.array([[-1.0], [-2.0], [-3.0], [4.0]])), model, [3.0], k=5)
    assert s.k == 3 and s.short
    with pytest.raises(BaselineUnavailable):
        bl.opposite_class(_ds(np.array([[1.0], [2.0]])), model, [3.0], k=1)


def test_nearest_neighbors_examples():
    ds = _ds([[0.0], [1.0], [10.0]])
    assert sorted(bl.nearest_neighbors(ds, [0.4], k=2).rows.tolist()) == [0, 1]
    assert bl.nearest_neighbors(ds, [1.0], k=1).rows.tolist() == [0]  # self excluded
    tie = _ds([[-1.0], [1.0], [5.0]])
    assert bl.nearest_neighbors(tie, [0.0], k=1).rows.tolist() == [0]


@given(st.integers(0, 500), st.integers(1, 6))
def test_reference_set_properties(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 3))
    ds = _ds(X, train=np.arange(40) < 30)
    model = DenseModel.linear(rng.normal(size=3))
    anchor = ds.X_test[0]
    train_rows = set(ds.train_index.tolist())
    for kind in bl.KINDS:
        try:
            s = bl.build(kind, ds, model, anchor, k=k, seed=seed)
        except BaselineUnavailable:
            assert kind == bl.OPPOSITE_CLASS
            continue
        if kind == bl.CONSTANT_MEDIAN:
            assert s.k == 1
            continue
        assert set(s.rows.tolist()) <= train_rows
        if kind == bl.OPPOSITE_CLASS:
            assert s.k <= k
            cls = predict(model, anchor) >= 0.5
            assert np.all((predict(model, s.references) >= 0.5) != cls)
        else:
            assert s.k == k
        if kind == bl.NEAREST_NEIGHBORS:
            d = np.linalg.norm(ds.X_train - anchor, axis=1)
            assert np.sort(np.linalg.norm(s.references - anchor, axis=1))[-1] <= np.sort(d)[k - 1] + 1e-12
