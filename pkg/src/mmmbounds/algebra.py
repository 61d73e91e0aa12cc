"""Measurement-effect algebra: scenarios and canonical forms of effect words.

Every measurement effect is a self-adjoint generator ``E[party][setting, outcome]``.
Effects of the same projective setting obey ``E_a E_a = E_a`` and
``E_a E_b = 0`` for ``a != b``; effects of different parties commute.
Settings flagged as *free* (used for the prepared states of the
prepare-and-measure scenario) obey no relation at all.

A :class:`Monomial` stores one word per party, so cross-party commutation is
structural. ``None`` is used throughout as the canonical form of a vanishing
product.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, NamedTuple, Optional, Sequence

__all__ = [
    "Scenario",
    "Effect",
    "Monomial",
    "HierarchyLevel",
    "IDENTITY",
    "canonicalize",
    "canonical_word",
    "multiply",
    "adjoint",
    "moment_key",
    "generate_word_list",
    "expand_in_basis",
    "is_basis_word",
    "word_sort_key",
]


class Effect(NamedTuple):
    """A single measurement effect ``E^{party}_{outcome|setting}``."""

    party: int
    setting: int
    outcome: int

    def __str__(self):
        return f"{'ABCDEFGH'[self.party]}{self.outcome}|{self.setting}"


@dataclass(frozen=True)
class Scenario:
    """Parties with their setting and outcome counts.

    Parameters
    ----------
    outcomes : tuple of tuple of int
        ``outcomes[p][x]`` is the number of outcomes of setting ``x`` of party ``p``.
    free : tuple of tuple of int, optional
        ``free[p]`` lists settings of party ``p`` whose operators satisfy no
        projector relations (e.g. the states of a prepare-and-measure scenario).
    """

    outcomes: tuple
    free: tuple = ()

    def __post_init__(self):
        outcomes = tuple(tuple(int(o) for o in party) for party in self.outcomes)
        if not outcomes:
            raise ValueError("scenario needs at least one party")
        for party in outcomes:
            if not party:
                raise ValueError("every party needs at least one setting")
            if any(o < 1 for o in party):
                raise ValueError("every setting needs at least one outcome")
        free = tuple(tuple(sorted(set(f))) for f in self.free) if self.free else ()
        if free:
            if len(free) != len(outcomes):
                raise ValueError("free must list settings for every party")
            for p, f in enumerate(free):
                if any(not 0 <= x < len(outcomes[p]) for x in f):
                    raise ValueError("free setting out of range")
        else:
            free = tuple(() for _ in outcomes)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "free", free)

    @classmethod
    def bell(cls, settings_a, settings_b, outcomes_a=2, outcomes_b=2):
        """Bipartite Bell scenario with uniform outcome counts."""
        return cls(((outcomes_a,) * settings_a, (outcomes_b,) * settings_b))

    @classmethod
    def prepare_measure(cls, n_settings, n_states, outcomes=2):
        """Single-party scenario: settings ``0..n_settings-1`` are measurements,
        the following ``n_states`` settings are one-outcome free operators
        standing for the prepared states."""
        outs = (outcomes,) * n_settings + (1,) * n_states
        free = (tuple(range(n_settings, n_settings + n_states)),)
        return cls((outs,), free)

    @property
    def parties(self):
        return len(self.outcomes)

    @property
    def settings(self):
        return tuple(len(o) for o in self.outcomes)

    @property
    def is_bell(self):
        return self.parties == 2 and not any(self.free)

    def is_projective(self, party, setting):
        return setting not in self.free[party]

    def alphabet(self, party):
        """Effects of one party, ordered by (setting, outcome)."""
        return [Effect(party, x, a)
                for x, n in enumerate(self.outcomes[party]) for a in range(n)]

    def alphabet_size(self, party):
        return sum(self.outcomes[party])

    def check(self, e):
        if not (0 <= e.party < self.parties
                and 0 <= e.setting < len(self.outcomes[e.party])
                and 0 <= e.outcome < self.outcomes[e.party][e.setting]):
            raise ValueError(f"effect {tuple(e)} outside the scenario")

    def last_outcome(self, party, setting):
        """Outcome eliminated when writing words in the reduced basis, or ``None``."""
        if not self.is_projective(party, setting):
            return None
        return self.outcomes[party][setting] - 1

    def dichotomic(self, party=None):
        parties = range(self.parties) if party is None else [party]
        return all(self.outcomes[p][x] == 2 for p in parties
                   for x in range(len(self.outcomes[p])) if self.is_projective(p, x))


class Monomial(tuple):
    """Canonical product of effects, one word of ``(setting, outcome)`` pairs per party.

    The empty word on a party is the identity there.
    """

    __slots__ = ()

    def __new__(cls, factors):
        return tuple.__new__(cls, (tuple(tuple(s) for s in f) for f in factors))

    @property
    def degree(self):
        return sum(len(f) for f in self)

    @property
    def party_degrees(self):
        return tuple(len(f) for f in self)

    def effects(self):
        return [Effect(p, x, a) for p, f in enumerate(self) for (x, a) in f]

    def __repr__(self):
        return f"Monomial({tuple(self)!r})"

    def __str__(self):
        if self.degree == 0:
            return "1"
        parts = []
        for p, f in enumerate(self):
            if f:
                parts.append("".join(f"{'ABCDEFGH'[p]}{a}|{x}" for x, a in f))
        return " ".join(parts)


def IDENTITY(parties):
    return Monomial(((),) * parties)


def canonical_word(word, party, scenario):
    """Reduce one party's word; returns ``None`` if it vanishes."""
    free = scenario.free[party]
    stack = []
    for sym in word:
        if stack and stack[-1][0] == sym[0] and sym[0] not in free:
            if stack[-1][1] == sym[1]:
                continue
            return None
        stack.append(sym)
    return tuple(stack)


def canonicalize(word: Iterable[Effect], scenario: Scenario) -> Optional[Monomial]:
    """Canonical form of a raw product of effects.

    Effects of different parties commute and are regrouped per party; within
    a party, adjacent effects of the same projective setting are merged
    (same outcome) or annihilate (different outcomes).
    """
    per_party = [[] for _ in range(scenario.parties)]
    for e in word:
        e = Effect(*e)
        scenario.check(e)
        per_party[e.party].append((e.setting, e.outcome))
    factors = []
    for p, w in enumerate(per_party):
        c = canonical_word(w, p, scenario)
        if c is None:
            return None
        factors.append(c)
    return Monomial(factors)


def multiply(a: Monomial, b: Monomial, scenario: Scenario) -> Optional[Monomial]:
    if len(a) != scenario.parties or len(b) != scenario.parties:
        raise ValueError("monomials do not belong to this scenario")
    factors = []
    for p in range(scenario.parties):
        c = canonical_word(a[p] + b[p], p, scenario)
        if c is None:
            return None
        factors.append(c)
    return Monomial(factors)


def adjoint(m: Monomial) -> Monomial:
    return Monomial(tuple(reversed(f)) for f in m)


def moment_key(m: Monomial) -> Monomial:
    """Representative of ``{m, m^dagger}`` (the smaller one as tuples)."""
    adj = adjoint(m)
    return adj if adj < m else m


def word_sort_key(m):
    """Total order: degree, then Alice-heavy splits first, then symbols."""
    return (sum(len(f) for f in m), tuple(-len(f) for f in m), tuple(m))


@dataclass(frozen=True)
class HierarchyLevel:
    """Hierarchy level, optionally with extra words (``"2+"``-style levels)."""

    level: int
    extra: tuple = ()

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("hierarchy level must be >= 1")
        object.__setattr__(self, "extra", tuple(tuple(w) for w in self.extra))

    @classmethod
    def coerce(cls, lvl):
        return lvl if isinstance(lvl, cls) else cls(int(lvl))


def _party_words(scenario, party, length, reduced):
    """All canonical words of a given length on one party."""
    symbols = [(x, a) for x, n in enumerate(scenario.outcomes[party]) for a in range(n)
               if not (reduced and a == scenario.last_outcome(party, x) and n > 1)]
    # one-outcome projective settings are the identity and never appear in words
    symbols = [(x, a) for (x, a) in symbols
               if not (scenario.is_projective(party, x) and scenario.outcomes[party][x] == 1)]
    free = scenario.free[party]
    words = [()]
    for _ in range(length):
        words = [w + (s,) for w in words for s in symbols
                 if not (w and w[-1][0] == s[0] and s[0] not in free)]
    return words


def generate_word_list(scenario: Scenario, lvl, reduced: bool = False):
    """Canonical words of total degree <= level, identity first.

    With ``reduced=True`` the last outcome of every projective setting is
    left out; the remaining words span the same operator space because
    ``E_last = 1 - sum(other outcomes)``.
    """
    lvl = HierarchyLevel.coerce(lvl)
    words = set()
    n = scenario.parties
    for total in range(lvl.level + 1):
        for split in itertools.product(range(total + 1), repeat=n):
            if sum(split) != total:
                continue
            per_party = [_party_words(scenario, p, k, reduced) for p, k in enumerate(split)]
            for combo in itertools.product(*per_party):
                words.add(Monomial(combo))
    for raw in lvl.extra:
        m = canonicalize(raw, scenario)
        if m is None:
            continue
        if reduced:
            words.update(k for k in expand_in_basis(m, scenario))
        else:
            words.add(m)
    return sorted(words, key=word_sort_key)


@lru_cache(maxsize=None)
def _expand_word(word, party, scenario):
    """Expansion of one canonical party word over reduced words: {word: coeff}."""
    for i, (x, a) in enumerate(word):
        last = scenario.last_outcome(party, x)
        if last is not None and a == last:
            out = {}
            head, tail = word[:i], word[i + 1:]
            # E_last = 1 - sum_{b < last} E_b
            terms = [(head + tail, 1)]
            terms += [(head + ((x, b),) + tail, -1) for b in range(last)]
            for raw, sign in terms:
                c = canonical_word(raw, party, scenario)
                if c is None:
                    continue
                for w, coeff in _expand_word(c, party, scenario).items():
                    out[w] = out.get(w, 0) + sign * coeff
            return {w: c for w, c in out.items() if c}
    return {word: 1}


def expand_in_basis(m: Monomial, scenario: Scenario) -> dict:
    """Write a canonical monomial as an integer combination of reduced words."""
    per_party = [_expand_word(f, p, scenario) for p, f in enumerate(m)]
    out = {}
    for combo in itertools.product(*(d.items() for d in per_party)):
        coeff = 1
        for _, c in combo:
            coeff *= c
        key = Monomial(w for w, _ in combo)
        out[key] = out.get(key, 0) + coeff
    return {k: v for k, v in out.items() if v}


def is_basis_word(m: Sequence, scenario: Scenario) -> bool:
    for p, f in enumerate(m):
        for x, a in f:
            last = scenario.last_outcome(p, x)
            if last is not None and a == last:
                return False
    return True
