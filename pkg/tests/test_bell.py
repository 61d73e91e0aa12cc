import itertools

import numpy as np
import pytest

from mmmbounds.bell import _from_entry, get_functional, load_registry

from conftest import deterministic_table


@pytest.mark.parametrize("name", sorted(load_registry()))
def test_declared_local_bound(name):
    """Declared local bounds agree with a brute-force maximum over deterministic tables."""
    f = get_functional(name)
    X, Y = f.scenario.settings
    best = max(f.value(deterministic_table(la, lb, X, Y))
               for la in itertools.product((0, 1), repeat=X)
               for lb in itertools.product((0, 1), repeat=Y))
    declared = load_registry()[name].get("local_bound")
    assert best == pytest.approx(f.local_value(), abs=1e-12)
    if declared is not None and "parameters" not in load_registry()[name]:
        assert best == pytest.approx(float(declared), abs=1e-12)


def test_elegant_is_relative_violation():
    raw = {"name": "el", "settings": [3, 4], "form": "correlator",
           "AB": [[1, 1, -1, -1], [1, -1, 1, -1], [1, -1, -1, 1]]}
    g = _from_entry(raw, {})
    f = get_functional("i_elegant")
    rng = np.random.default_rng(0)
    for _ in range(5):
        P = rng.random((2, 2, 3, 4))
        P /= P.sum(axis=(0, 1))
        assert f.value(P) == pytest.approx((g.value(P) - 6) / 6, abs=1e-12)
