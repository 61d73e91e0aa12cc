import numpy as np
import pytest

from mmmbounds.algebra import Effect, Monomial, Scenario, canonicalize, generate_word_list, moment_key
from mmmbounds.moment import (
    InvalidDistribution,
    MomentIndex,
    build_effect_template,
    build_identity_template,
    build_unknown_template,
    fixed_assignments,
    validate_distribution,
)
from mmmbounds.oracle import born_rule, sample_random_realization
from mmmbounds.sdp import SdpProblem


def mono(s, *effects):
    return canonicalize([Effect(*e) for e in effects], s)


def test_identity_template_entries(chsh):
    words = generate_word_list(chsh, 1)
    t = build_identity_template(words, chsh)
    i00 = words.index(mono(chsh, (0, 0, 0)))
    i01 = words.index(mono(chsh, (0, 0, 1)))
    j00 = words.index(mono(chsh, (1, 0, 0)))
    assert t.entries[(min(i00, i01), max(i00, i01))] is None
    assert t.key(i00, j00) == moment_key(mono(chsh, (0, 0, 0), (1, 0, 0)))
    assert t.key(0, 0).degree == 0


def test_effect_template_entries(chsh):
    words = generate_word_list(chsh, 1)
    t = build_effect_template(words, chsh, (0, 0, 0))
    e = mono(chsh, (0, 0, 0))
    i00 = words.index(e)
    i01 = words.index(mono(chsh, (0, 0, 1)))
    assert t.key(0, 0) == e
    assert t.key(i00, 0) == e
    assert t.entries[(0, i01)] is None
    with pytest.raises(ValueError):
        build_effect_template(words, chsh, (1, 0, 0))


def test_unknown_template_collapse_and_annihilation(chsh):
    b0 = mono(chsh, (1, 0, 0))
    b1 = mono(chsh, (1, 0, 1))
    words = [Monomial(((), ())), b0, b1]
    t = build_unknown_template(words, chsh, "G")
    # <G (x) B0 B0> equals <G (x) B0>: same key as the (0, b0) entry
    assert t.entries[(1, 1)] == t.entries[(0, 1)]
    assert t.entries[(1, 2)] is None
    k = t.entries[(0, 0)]
    assert k.left == () and k.right == () and all(r == () for r in k.rest)


def test_fixed_assignments_count_and_values(chsh, max_chsh_table):
    rng = np.random.default_rng(0)
    pa = rng.random((2,))
    pb = rng.random((2,))
    P = np.zeros((2, 2, 2, 2))
    for x in range(2):
        for y in range(2):
            qa = np.array([pa[x], 1 - pa[x]])
            qb = np.array([pb[y], 1 - pb[y]])
            P[:, :, x, y] = np.outer(qa, qb)
    fa = fixed_assignments(chsh, P)
    assert len(fa) == 16 + 4 + 4 + 1
    v = fixed_assignments(chsh, max_chsh_table).values
    assert v[mono(chsh, (0, 0, 0), (1, 0, 0))] == pytest.approx(np.cos(np.pi / 8) ** 2 / 2, abs=1e-12)
    same = sum(max_chsh_table[a, a, 0, 0] for a in range(2))
    assert same == pytest.approx(np.cos(np.pi / 8) ** 2, abs=1e-12)


def test_invalid_distributions(chsh):
    P = np.full((2, 2, 2, 2), 0.3)
    with pytest.raises(InvalidDistribution):
        validate_distribution(chsh, P)
    P = np.full((2, 2, 2, 2), 0.25)
    P[0, 0, 0, 0] += 0.1
    P[0, 1, 0, 0] -= 0.1  # signalling to Bob
    with pytest.raises(InvalidDistribution):
        validate_distribution(chsh, P)
    with pytest.raises(InvalidDistribution):
        validate_distribution(chsh, np.zeros((2, 2, 3, 2)))


SCENARIOS = [Scenario.bell(2, 2), Scenario.bell(3, 3), Scenario.bell(2, 2, 3, 3),
             Scenario.bell(3, 2, 2, 3)]


@pytest.mark.parametrize("k", range(100))
def test_realizations_are_feasible_points(k):
    rng = np.random.default_rng(1000 + k)
    s = SCENARIOS[k % len(SCENARIOS)]
    d = int(rng.integers(1, 4))
    r = sample_random_realization(d, s, seed=k, projective=bool(k % 2 == 0))
    if k % 2:
        from mmmbounds.oracle import naimark_dilation
        r = naimark_dilation(r)
    words = generate_word_list(s, 2)
    chi1 = build_identity_template(words, s).evaluate(r.moment)
    assert np.linalg.eigvalsh(chi1)[0] >= -1e-9
    for x, n in enumerate(s.outcomes[0]):
        total = np.zeros_like(chi1)
        for a in range(n):
            m = build_effect_template(words, s, (0, x, a)).evaluate(r.moment)
            assert np.linalg.eigvalsh(m)[0] >= -1e-9
            total += m
        assert np.max(np.abs(total - chi1)) < 1e-9
    P = born_rule(r)
    fa = fixed_assignments(s, P)
    for key, v in fa.values.items():
        assert abs(r.moment(key).real - v) < 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_shared_index_instantiation(seed):
    s = Scenario.bell(3, 3)
    r = sample_random_realization(2, s, seed=seed)
    words = generate_word_list(s, 2, reduced=True)
    prob = SdpProblem()
    idx = MomentIndex(prob, s)
    templates = [build_identity_template(words, s)] + [
        build_effect_template(words, s, (0, x, 0)) for x in range(3)]
    mats = [t.instantiate(idx) for t in templates]
    x = idx.assign(r.moment)
    for t, M in zip(templates, mats):
        num = np.array([[e.value(x) for e in row] for row in M])
        assert np.max(np.abs(num - t.evaluate(r.moment).real)) < 1e-9
