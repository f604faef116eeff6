import numpy as np
import pytest

from faithbench.tda.bottleneck import bottleneck
from faithbench.tda.persistence import BRANCH, COMPONENT, LOOP, PersistenceDiagram


def brute_force(a, b):
    """Minimum over every partial matching; unmatched points pay their diagonal distance."""
    a, b = np.asarray(a, float).reshape(-1, 2), np.asarray(b, float).reshape(-1, 2)
    best = [np.inf]

    def rec(i, used, cost):
        if cost >= best[0]:
            return
        if i == len(a):
            rest = [(b[j, 1] - b[j, 0]) / 2 for j in range(len(b)) if j not in used]
            best[0] = min(best[0], max([cost, *map(abs, rest)]))
            return
        rec(i + 1, used, max(cost, abs(a[i, 1] - a[i, 0]) / 2))
        for j in range(len(b)):
            if j not in used:
                rec(i + 1, used | {j}, max(cost, np.abs(a[i] - b[j]).max()))

    rec(0, frozenset(), 0.0)
    return best[0]


def _random_diagram(rng):
    n = int(rng.integers(0, 7))
    birth = rng.random(n) * 4
    return np.column_stack([birth, birth + rng.normal(0, 1, n)]).round(int(rng.integers(1, 4)))


def test_examples():
    d = PersistenceDiagram.from_pairs([(0, 2, COMPONENT), (0.5, 1, BRANCH)])
    assert bottleneck(d, d) == 0.0
    assert bottleneck([(1, 3)], np.empty((0, 2))) == 1.0
    assert bottleneck([(0, 4)], [(0, 2)]) == 2.0
    assert bottleneck(np.empty((0, 2)), np.empty((0, 2))) == 0.0


def test_by_class_never_crosses_classes():
    a = PersistenceDiagram.from_pairs([(0, 2, COMPONENT)])
    b = PersistenceDiagram.from_pairs([(0, 2, LOOP)])
    assert bottleneck(a, b) == 0.0
    assert bottleneck(a, b, by_class=True) == 1.0


def test_against_brute_force_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        a, b = _random_diagram(rng), _random_diagram(rng)
        assert bottleneck(a, b) == pytest.approx(brute_force(a, b), abs=1e-12)


def test_pseudometric_axioms():
    rng = np.random.default_rng(7)
    for _ in range(150):
        a, b, c = (_random_diagram(rng) for _ in range(3))
        ab = bottleneck(a, b)
        assert bottleneck(a, a) == 0.0
        assert ab >= 0
        assert ab == pytest.approx(bottleneck(b, a), abs=1e-12)
        assert ab <= bottleneck(a, c) + bottleneck(c, b) + 1e-12
