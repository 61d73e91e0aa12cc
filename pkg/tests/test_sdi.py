import itertools

import numpy as np
import pytest

from mmmbounds.algebra import Scenario
from mmmbounds.bell import get_functional
from mmmbounds.oracle import Realization, pauli, sample_random_realization
from mmmbounds.quantifiers import MMMBuilder, ir_given_violation
from mmmbounds.sdi import (
    _sample_vector,
    assemble_ir_sdi,
    complement_constraints,
    ir_pm,
    ir_sdi,
    moment_keys,
    sample_moment_basis,
)

CHSH_K = 2.7


def keys_for(scenario, level):
    return moment_keys(MMMBuilder(scenario, level), localizers=True)


def deterministic_rank(scenario, keys):
    """Rank of moment vectors of deterministic one-dimensional strategies."""
    rows = []
    for choice in itertools.product(*(range(n) for party in scenario.outcomes for n in party)):
        it = iter(choice)
        out = [[next(it) for _ in party] for party in scenario.outcomes]
        vec = []
        for k in keys:
            v = 1.0
            for p, word in enumerate(k):
                for x, a in word:
                    v *= float(out[p][x] == a)
            vec.append(v)
        rows.append(vec)
    return np.linalg.matrix_rank(np.array(rows), tol=1e-9)


@pytest.mark.parametrize("level", [1, 2])
def test_dimension_one_is_classical(chsh, level):
    keys = keys_for(chsh, level)
    # d = 1 draws from 16 discrete points, so the default patience of 50 can
    # stop one short; 300 misses a point with probability ~1e-8
    b = sample_moment_basis(chsh, 1, keys, seed=0, cache_dir=False, patience=300)
    assert b.saturated
    assert b.dimension == deterministic_rank(chsh, keys)


def test_same_seed_same_basis(chsh):
    keys = keys_for(chsh, 1)
    a = sample_moment_basis(chsh, 2, keys, seed=3, cache_dir=False)
    b = sample_moment_basis(chsh, 2, keys, seed=3, cache_dir=False)
    assert np.array_equal(a.vectors, b.vectors)


def test_chsh_qubit_span_is_full(chsh):
    keys = keys_for(chsh, 2)
    b = sample_moment_basis(chsh, 2, keys, seed=0, cache_dir=False)
    assert b.saturated
    assert len(keys) == 41 and b.dimension == 41
    assert complement_constraints(b).shape == (0, 41)


def test_complement_and_nesting():
    s = Scenario.bell(3, 3)
    keys = keys_for(s, 1)
    bases = {d: sample_moment_basis(s, d, keys, seed=0, cache_dir=False) for d in (1, 2)}
    for d, b in bases.items():
        C = complement_constraints(b)
        assert C.shape[0] == len(keys) - b.dimension
        fresh = sample_random_realization(d, s, seed=999)
        assert np.max(np.abs(C @ _sample_vector(fresh, keys)), initial=0.0) < 1e-8
    # one-dimensional samples satisfy the two-dimensional constraints
    C2 = complement_constraints(bases[2])
    r1 = sample_random_realization(1, s, seed=5)
    assert np.max(np.abs(C2 @ _sample_vector(r1, keys)), initial=0.0) < 1e-8


def test_nontrivial_projectors_shrink_the_span():
    s = Scenario.bell(3, 3)
    keys = keys_for(s, 2)
    b = sample_moment_basis(s, 2, keys, seed=0, cache_dir=False, nontrivial=True)
    full = sample_moment_basis(s, 2, keys, seed=0, cache_dir=False)
    assert b.saturated and b.dimension < full.dimension
    C = complement_constraints(b)
    fresh = sample_random_realization(2, s, seed=11, nontrivial=True)
    assert np.max(np.abs(C @ _sample_vector(fresh, keys))) < 1e-8
    # the same realization with one certain-outcome measurement leaves the span
    meas = [[list(povm) for povm in party] for party in fresh.measurements]
    meas[0][0] = [np.eye(2), np.zeros((2, 2))]
    trivial = Realization(fresh.dims, fresh.state, meas)
    assert np.max(np.abs(C @ _sample_vector(trivial, keys))) > 1e-3


def test_nontrivial_outcome_ranks():
    s = Scenario.bell(3, 3)
    for seed in range(20):
        r = sample_random_realization(3, s, seed=seed, nontrivial=True)
        for party in r.measurements:
            for povm in party:
                ranks = [int(round(np.trace(E).real)) for E in povm]
                assert sum(ranks) == 3 and min(ranks) >= 1


def test_cache_round_trip(tmp_path, chsh):
    keys = keys_for(chsh, 1)
    a = sample_moment_basis(chsh, 2, keys, seed=1, cache_dir=tmp_path)
    assert list(tmp_path.iterdir())
    b = sample_moment_basis(chsh, 2, keys, seed=1, cache_dir=tmp_path)
    assert np.array_equal(a.vectors, b.vectors) and b.keys == a.keys
    # nontrivial samples are cached separately
    c = sample_moment_basis(chsh, 2, keys, seed=1, cache_dir=tmp_path, nontrivial=True)
    assert c.nontrivial and len(list(tmp_path.iterdir())) == 2
    assert sample_moment_basis(chsh, 2, keys, seed=1, cache_dir=tmp_path, nontrivial=True).nontrivial


def test_unconstraining_dimension_matches_di(tmp_path):
    f = get_functional("chsh")
    di = ir_given_violation(f, CHSH_K, 2).value
    for mode in ("povm", "projective"):
        sdi = ir_sdi("given-K", CHSH_K, 2, 2, f=f, constraint=mode, cache_dir=tmp_path).value
        assert sdi == pytest.approx(di, abs=1e-5)


def test_sdi_dominates_di(tmp_path):
    f = get_functional("chsh")
    di = ir_given_violation(f, CHSH_K, 1).value
    povm = ir_sdi("given-K", CHSH_K, 2, 1, f=f, constraint="povm", cache_dir=tmp_path).value
    proj = ir_sdi("given-K", CHSH_K, 2, 1, f=f, constraint="projective", cache_dir=tmp_path).value
    assert povm >= di - 1e-7
    assert proj >= povm - 1e-7


def test_bad_mode(chsh):
    with pytest.raises(ValueError):
        assemble_ir_sdi("given-Q", 0, 2, 1, f=get_functional("chsh"))
    with pytest.raises(ValueError):
        assemble_ir_sdi("given-P", None, 2, 1)


# prepare-and-measure ------------------------------------------------------


def pm_table(states, measurements):
    P = np.zeros((2, len(measurements), len(states)))
    for x, povm in enumerate(measurements):
        for a, E in enumerate(povm):
            for y, rho in enumerate(states):
                P[a, x, y] = np.real(np.trace(E @ rho))
    return P


def spectral(O):
    I = np.eye(2)
    return [(I + O) / 2, (I - O) / 2]


def test_pm_classical_is_zero(tmp_path):
    I, X, Y, Z = pauli()
    states = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0]), np.diag([0.3, 0.7])]
    meas = [spectral(Z), [np.diag([0.8, 0.1]), np.diag([0.2, 0.9])]]
    assert abs(ir_pm(pm_table(states, meas), 2, 1, cache_dir=tmp_path).value) < 1e-5


def test_pm_compatible_pair_is_zero(tmp_path):
    I, X, Y, Z = pauli()
    meas = [[0.5 * E + 0.25 * I for E in spectral(Z)], [0.5 * E + 0.25 * I for E in spectral(X)]]
    states = [(I + X) / 2, (I - X) / 2, (I + Z) / 2, (I - Z) / 2]
    assert abs(ir_pm(pm_table(states, meas), 2, 1, cache_dir=tmp_path).value) < 1e-5


def test_pm_bb84_positive(tmp_path):
    """Positive bound for sharp X, Z on the four BB84 states (does not hold, see notes)."""
    I, X, Y, Z = pauli()
    states = [(I + X) / 2, (I - X) / 2, (I + Z) / 2, (I - Z) / 2]
    P = pm_table(states, [spectral(Z), spectral(X)])
    value = ir_pm(P, 2, 1, cache_dir=tmp_path).value
    assert value > 1e-4
    assert value <= 3 - 2 * np.sqrt(2) + 1e-6


def test_pm_table_errors():
    with pytest.raises(ValueError):
        ir_pm(np.full((2, 2, 2), 0.4), 2, 1, cache_dir=False)
