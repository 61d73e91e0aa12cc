import itertools
import random

import pytest

from mmmbounds.algebra import (
    IDENTITY,
    Effect,
    HierarchyLevel,
    Monomial,
    Scenario,
    adjoint,
    canonicalize,
    expand_in_basis,
    generate_word_list,
    multiply,
)


def brute_words(scenario, level):
    """Independent count: reduce every raw effect string of length <= level."""
    symbols = [Effect(p, x, a) for p in range(scenario.parties)
               for x, n in enumerate(scenario.outcomes[p]) for a in range(n)]
    seen = set()
    for length in range(level + 1):
        for raw in itertools.product(symbols, repeat=length):
            per = [[] for _ in range(scenario.parties)]
            for e in raw:
                per[e.party].append((e.setting, e.outcome))
            out, zero = [], False
            for w in per:
                red = []
                for s in w:
                    if red and red[-1][0] == s[0]:
                        if red[-1][1] != s[1]:
                            zero = True
                        continue
                    red.append(s)
                out.append(tuple(red))
            if not zero:
                seen.add(tuple(out))
    return seen


def A(x, a):
    return Effect(0, x, a)


def B(y, b):
    return Effect(1, y, b)


def test_idempotence_orthogonality_commutation(chsh):
    assert canonicalize([A(0, 0), A(0, 0)], chsh) == canonicalize([A(0, 0)], chsh)
    assert canonicalize([A(0, 0), A(0, 1)], chsh) is None
    assert canonicalize([B(1, 0), A(0, 0)], chsh) == Monomial((((0, 0),), ((1, 0),)))


def test_out_of_range_symbol(chsh):
    with pytest.raises(ValueError):
        canonicalize([A(2, 0)], chsh)
    with pytest.raises(ValueError):
        canonicalize([B(0, 2)], chsh)


def test_multiply(chsh):
    ab = canonicalize([A(0, 0), B(0, 0)], chsh)
    a = canonicalize([A(0, 0)], chsh)
    assert multiply(ab, a, chsh) == ab
    assert multiply(IDENTITY(2), ab, chsh) == ab
    assert multiply(a, canonicalize([A(0, 1)], chsh), chsh) is None
    with pytest.raises(ValueError):
        multiply(Monomial(((),)), a, chsh)


def test_adjoint(chsh):
    m = canonicalize([A(0, 0), A(1, 0)], chsh)
    assert adjoint(m) == canonicalize([A(1, 0), A(0, 0)], chsh)
    assert adjoint(IDENTITY(2)) == IDENTITY(2)
    rng = random.Random(3)
    for _ in range(100):
        raw = [Effect(rng.randrange(2), rng.randrange(2), rng.randrange(2)) for _ in range(6)]
        m = canonicalize(raw, chsh)
        if m is not None:
            assert adjoint(adjoint(m)) == m


def test_word_counts_match_enumeration(chsh):
    w1 = generate_word_list(chsh, 1)
    w2 = generate_word_list(chsh, 2)
    assert len(w1) == 9 == len(brute_words(chsh, 1))
    assert len(w2) == 41 == len(brute_words(chsh, 2))
    assert set(map(tuple, w2)) == brute_words(chsh, 2)
    single = Scenario(((2,),))
    assert generate_word_list(single, 1) == [Monomial(((),)), Monomial((((0, 0),),)),
                                             Monomial((((0, 1),),))]


def test_i3322_counts():
    s = Scenario.bell(3, 3)
    assert len(generate_word_list(s, 2)) == len(brute_words(s, 2))
    # reduced: 1 + 3 + 3 + 6 + 6 + 9
    assert len(generate_word_list(s, 2, reduced=True)) == 28


def test_word_list_properties(chsh):
    w1 = generate_word_list(chsh, 1)
    w2 = generate_word_list(chsh, 2)
    w3 = generate_word_list(chsh, 3)
    assert w1[0].degree == 0
    assert set(w1) <= set(w2) <= set(w3)
    assert generate_word_list(chsh, 2) == w2  # deterministic
    degrees = [w.degree for w in w3]
    assert degrees == sorted(degrees)
    for w in w3:
        for f in w:
            assert all(s[0] != t[0] for s, t in zip(f, f[1:]))
    with pytest.raises(ValueError):
        HierarchyLevel(0)


def test_confluence_under_cross_party_swaps():
    s = Scenario.bell(3, 3, 3, 2)
    rng = random.Random(11)
    syms = [Effect(p, x, a) for p in range(2) for x in range(3)
            for a in range(s.outcomes[p][x])]
    for _ in range(1000):
        raw = [rng.choice(syms) for _ in range(rng.randrange(1, 8))]
        ref = canonicalize(raw, s)
        shuffled = list(raw)
        for _ in range(10):
            i = rng.randrange(len(shuffled) - 1) if len(shuffled) > 1 else 0
            if len(shuffled) > 1 and shuffled[i].party != shuffled[i + 1].party:
                shuffled[i], shuffled[i + 1] = shuffled[i + 1], shuffled[i]
        assert canonicalize(shuffled, s) == ref


def test_reduced_expansion_is_completeness(chsh):
    last = canonicalize([A(0, 1)], chsh)
    assert expand_in_basis(last, chsh) == {IDENTITY(2): 1, canonicalize([A(0, 0)], chsh): -1}


def test_free_settings_do_not_collapse():
    s = Scenario.prepare_measure(2, 2)
    rho = Effect(0, 2, 0)
    m = canonicalize([rho, rho], s)
    assert m is not None and m.degree == 2
