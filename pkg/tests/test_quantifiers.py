import numpy as np
import pytest

from mmmbounds.algebra import Scenario, generate_word_list
from mmmbounds.bell import get_functional
from mmmbounds.oracle import (
    Realization,
    born_rule,
    gmir_device,
    ir_device,
    pauli,
    sample_random_realization,
    tilted_chsh_realization,
)
from mmmbounds.quantifiers import (
    VARIANTS,
    BisectionSettings,
    InfeasibleTarget,
    assemble_ir_di_given_P,
    assemble_variant,
    gmir_di_given_P,
    ir_di_given_P,
    ir_given_violation,
    max_violation,
    min_ir_given_violation,
    npa_max,
    resolve_level,
    swap_table,
    tradeoff_curve,
    variant_di_given_P,
)
from mmmbounds.solve import OPTIMAL

from conftest import deterministic_table

SQ2 = np.sqrt(2)
MUB_IR = 3 - 2 * SQ2


def spectral(O):
    I = np.eye(2)
    return [(I + O) / 2, (I - O) / 2]


def test_block_count_full_outcomes(chsh, max_chsh_table):
    p = assemble_ir_di_given_P(chsh, max_chsh_table, 2, reduced=False)
    # moment matrices only; the remaining blocks are chi[E] - chi[G] dominations
    sizes = [b.size for b in p.blocks if b.label.startswith("chi[")]
    assert sizes == [41] * 9


def test_level_parsing(chsh):
    assert resolve_level("2", chsh).level == 2
    assert resolve_level(1, chsh).level == 1
    lv = resolve_level("2+", Scenario.bell(3, 3))
    assert len(generate_word_list(Scenario.bell(3, 3), lv, reduced=True)) == 34


@pytest.mark.parametrize("variant", VARIANTS)
def test_local_table_gives_zero(chsh, variant):
    P = deterministic_table((0, 1), (1, 1))
    assert abs(variant_di_given_P(variant, chsh, P, 2).value) < 1e-6


def test_unknown_variant(chsh, max_chsh_table):
    with pytest.raises(ValueError):
        assemble_variant("XYZ", chsh, max_chsh_table)


def test_max_chsh_saturates_device(chsh, max_chsh_table):
    r = ir_di_given_P(chsh, max_chsh_table, 2, party="B")
    assert r.status == OPTIMAL
    assert r.value == pytest.approx(MUB_IR, abs=1e-3)
    # Alice's pair is also a MUB pair
    assert ir_di_given_P(chsh, max_chsh_table, 2).value == pytest.approx(MUB_IR, abs=1e-3)


def test_party_swap_consistency(chsh):
    r = sample_random_realization(2, chsh, seed=21)
    P = born_rule(r)
    a = ir_di_given_P(chsh, P, 1, party="B").value
    b = ir_di_given_P(chsh, swap_table(P), 1, party="A").value
    assert a == pytest.approx(b, abs=1e-7)


def test_max_violation_endpoints():
    f = get_functional("chsh")
    assert max_violation(f, 0.0, 2).value == pytest.approx(2.0, abs=1e-4)
    assert max_violation(f, 1.0, 2).value == pytest.approx(2 * SQ2, abs=1e-3)
    assert npa_max(f, 2).value == pytest.approx(2 * SQ2, abs=1e-6)
    t = get_functional("tilted_chsh", alpha=1.0)
    assert max_violation(t, 1.0, 2).value == pytest.approx(np.sqrt(10), abs=1e-3)


def test_min_ir_given_violation():
    f = get_functional("chsh")
    bis = BisectionSettings(tol=1e-4)
    assert min_ir_given_violation(f, 2.0, 2, bisection=bis).value == pytest.approx(0, abs=1e-4)
    top = min_ir_given_violation(f, 2 * SQ2 - 1e-5, 2, bisection=bis).value
    assert top == pytest.approx(MUB_IR, abs=1e-3)
    mid1 = min_ir_given_violation(f, 2.4, 1, bisection=bis).value
    mid2 = min_ir_given_violation(f, 2.6, 1, bisection=bis).value
    assert mid1 <= mid2
    with pytest.raises(InfeasibleTarget):
        min_ir_given_violation(f, 2.9, 2, bisection=bis)


def test_direct_given_violation_matches_curve():
    f = get_functional("chsh")
    direct = ir_given_violation(f, 2.6, 2).value
    assert max_violation(f, direct, 2).value == pytest.approx(2.6, abs=1e-4)


def test_tradeoff_curve_monotone():
    f = get_functional("chsh")
    rows = tradeoff_curve(f, 1, ir_grid=[0.0, 0.05, 0.1, 0.2])
    assert rows[0]["ir"] == 0.0 and rows[0]["violation"] == pytest.approx(2.0, abs=1e-4)
    v = [r["violation"] for r in rows]
    assert all(b >= a - 1e-7 for a, b in zip(v, v[1:]))
    with pytest.raises(ValueError):
        tradeoff_curve(f, 1, ir_grid=[0.2, 0.1])


@pytest.mark.parametrize("seed", range(3))
def test_level_monotonicity(chsh, seed):
    P = born_rule(sample_random_realization(2, chsh, seed=100 + seed))
    b1 = ir_di_given_P(chsh, P, 1).value
    b2 = ir_di_given_P(chsh, P, 2).value
    assert b2 >= b1 - 1e-7


def test_bob_only_words_are_weaker(chsh, max_chsh_table):
    words = generate_word_list(chsh, 2, reduced=True)
    bob = [w for w in words if len(w[0]) == 0]
    full = ir_di_given_P(chsh, max_chsh_table, 2).value
    restricted = ir_di_given_P(chsh, max_chsh_table, 2, words=bob).value
    assert full >= restricted - 1e-7


def xyz_realization(third):
    """Alice measures X, Z and ``third`` on a maximally entangled pair; Bob X, Z, (X+Z)/sqrt2."""
    I, X, Y, Z = pauli()
    phi = np.array([1, 0, 0, 1]) / SQ2
    rho = np.outer(phi, phi).astype(complex)
    A = [spectral(X), spectral(Z), spectral(third)]
    B = [spectral(X), spectral(Z), spectral((X + Z) / SQ2)]
    return Realization((2, 2), rho, [A, B])


def test_gmir_trivial_triples():
    _, X, _, Z = pauli()
    s = Scenario.bell(3, 3)
    for third in (X, Z):
        P = born_rule(xyz_realization(third))
        assert abs(gmir_di_given_P(s, P, 1).value) < 1e-6
    same = xyz_realization(X)
    same.measurements[0] = [same.measurements[0][0]] * 3
    assert abs(gmir_di_given_P(s, born_rule(same), 1).value) < 1e-6


def test_gmir_bounds():
    _, X, _, Z = pauli()
    s = Scenario.bell(3, 3)
    r = xyz_realization((X - Z) / SQ2)
    P = born_rule(r)
    g = gmir_di_given_P(s, P, 1).value
    assert g <= gmir_device(r.measurements[0], 2).value + 1e-6
    pair_bounds = []
    for pair in ((0, 1), (0, 2), (1, 2)):
        sub = P[:, :, list(pair), :]
        pair_bounds.append(ir_di_given_P(Scenario.bell(2, 3), sub, 1).value)
    assert g <= min(pair_bounds) + 1e-6
    with pytest.raises(ValueError):
        gmir_di_given_P(Scenario.bell(2, 2), born_rule(tilted_chsh_realization(0)[0]), 1)


def test_soundness_small_sample():
    s = Scenario.bell(2, 2)
    for seed in range(5):
        r = sample_random_realization(2, s, seed=seed)
        P = born_rule(r)
        assert ir_di_given_P(s, P, 2).value <= ir_device(r.measurements[0], 2).value + 1e-6
