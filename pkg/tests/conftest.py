import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from faithbench.data import Column, Dataset, FeatureSchema, SyntheticSpec, generate_synthetic, standardize
from faithbench.model import DenseModel, TrainConfig, train

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_ds():
    return standardize(generate_synthetic(SyntheticSpec(n_samples=300, n_features=6, seed=3)))


@pytest.fixture(scope="session")
def small_linear(small_ds):
    return train(small_ds, TrainConfig(epochs=40, seed=1), "linear")


@pytest.fixture(scope="session")
def small_dense(small_ds):
    return train(small_ds, TrainConfig(epochs=20, hidden_widths=(16, 8), seed=2), "dense3")


def random_dense3(d, seed, widths=(8, 6)):
    """Untrained dense3 network with He-scaled random weights and biases."""
    rng = np.random.default_rng(seed)
    dims = (d, *widths, 1)
    Ws = tuple(rng.normal(0, np.sqrt(2.0 / a), (a, b)) for a, b in zip(dims[:-1], dims[1:]))
    bs = tuple(rng.normal(0, 0.3, b) for b in dims[1:])
    return DenseModel(Ws, bs, ("relu", "relu", "identity"), "dense3")


@pytest.fixture(scope="session")
def mixed_ds():
    """Two numeric columns, a 3-way one-hot group and a label-encoded categorical."""
    rng = np.random.default_rng(11)
    n = 120
    cols = (Column("a"), Column("b"),
            Column("c_x", "one_hot_member", "c", 3), Column("c_y", "one_hot_member", "c", 3),
            Column("c_z", "one_hot_member", "c", 3), Column("e", "categorical", None, 4))
    cat = rng.integers(0, 3, n)
    X = np.column_stack([rng.normal(size=n), rng.normal(size=n), np.eye(3)[cat],
                         rng.integers(0, 4, n)])
    y = (X[:, 0] + X[:, 2] - X[:, 4] > 0).astype(int)
    return Dataset(FeatureSchema(cols), X, y, np.arange(n) % 5 != 0)


_CRITERIA = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        name = report.nodeid.split("::")[-1][len("test_criterion_"):]
        _CRITERIA.setdefault(name, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        num, _, label = name.partition("_")
        terminalreporter.write_line(f"criterion {int(num):2d} {_CRITERIA[name]}  {label}")
