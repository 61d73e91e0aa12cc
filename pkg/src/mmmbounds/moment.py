"""Moment-matrix templates and the shared moment index.

A template records, for every pair of words ``(S_i, S_j)``, the canonical
operator whose expectation fills entry ``(i, j)``:

* identity template: ``S_i S_j^dagger``;
* effect template (localizing matrix of ``E``): ``S_i (E (x) 1) S_j^dagger``;
* unknown template (an uncharacterised operator ``G`` acting on party 0):
  the triple ``(A_i, A_j, B_i B_j^dagger)`` of party-0 words and the
  product of the remaining factors, since ``tr[(A_i G A_j^dagger) (x)
  (B_i B_j^dagger) rho]`` depends on nothing else.

Templates are purely combinatorial. :class:`MomentIndex` turns them into
affine expressions over real variables of an :class:`~mmmbounds.sdp.SdpProblem`.
Words are written in the reduced basis where the last outcome of every
projective setting is eliminated, so completeness ``sum_a E_a = 1`` holds
identically and every template block is an exact linear image of the
variables.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .algebra import (
    Effect,
    Monomial,
    Scenario,
    _expand_word,
    adjoint,
    canonical_word,
    canonicalize,
    expand_in_basis,
    moment_key,
    multiply,
)
from .sdp import Affine, SdpProblem

__all__ = [
    "UnknownKey",
    "MomentTemplate",
    "UnknownBlockTemplate",
    "FixedAssignment",
    "InvalidDistribution",
    "MomentIndex",
    "build_identity_template",
    "build_effect_template",
    "build_unknown_template",
    "unknown_key",
    "fixed_assignments",
    "validate_distribution",
    "fixed_keys",
    "is_fixed_key",
]


class InvalidDistribution(ValueError):
    pass


class UnknownKey(NamedTuple):
    """Variable label of an entry of an unknown-operator block."""

    tag: object
    left: tuple   # party-0 word of S_i
    right: tuple  # party-0 word of S_j
    rest: tuple   # canonical product of the remaining parties' words

    @staticmethod
    def make(tag, left, right, rest):
        a = (tag, left, right, rest)
        b = (tag, right, left, tuple(tuple(reversed(f)) for f in rest))
        return UnknownKey(*(a if (a[1:]) <= (b[1:]) else b))

    @property
    def is_unit(self):
        return not self.left and not self.right and not any(self.rest)


def is_fixed_key(m: Monomial) -> bool:
    """Keys carrying observable statistics: at most one effect per party."""
    return all(len(f) <= 1 for f in m)


# ---------------------------------------------------------------------------
# templates


@dataclass(frozen=True)
class MomentTemplate:
    """Entry pattern of ``chi[X]`` for ``X`` the identity or one effect.

    ``entries[(i, j)]`` (``i <= j``) is the canonical product
    ``S_i X S_j^dagger`` or ``None`` if it vanishes.
    """

    scenario: Scenario
    words: tuple
    localizer: Optional[Effect]
    entries: dict = field(repr=False, compare=False)

    @property
    def size(self):
        return len(self.words)

    unit_position = (0, 0)

    def key(self, i, j):
        m = self.entries[(min(i, j), max(i, j))]
        return None if m is None else moment_key(m)

    def instantiate(self, index: "MomentIndex"):
        n = self.size
        out = [[Affine() for _ in range(n)] for _ in range(n)]
        for (i, j), m in self.entries.items():
            e = index.moment(m)
            out[i][j] = e
            out[j][i] = e
        return out

    def evaluate(self, value: Callable[[Monomial], complex]):
        """Numeric matrix from a map ``canonical word -> expectation``."""
        n = self.size
        out = np.zeros((n, n), dtype=complex)
        for (i, j), m in self.entries.items():
            if m is None:
                continue
            v = value(m)
            out[i, j] = v
            out[j, i] = np.conj(v)
        return out


@dataclass(frozen=True)
class UnknownBlockTemplate:
    """Entry pattern of ``chi[G]`` for an uncharacterised party-0 operator ``G``."""

    scenario: Scenario
    words: tuple
    tag: object
    entries: dict = field(repr=False, compare=False)
    flipped: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def size(self):
        return len(self.words)

    unit_position = (0, 0)

    def instantiate(self, index: "MomentIndex"):
        n = self.size
        out = [[Affine() for _ in range(n)] for _ in range(n)]
        for (i, j), k in self.entries.items():
            e = index.unknown(k)
            out[i][j] = e
            out[j][i] = e
        return out

    def evaluate(self, value: Callable[[UnknownKey], complex]):
        """Numeric matrix; ``value(k)`` is ``tr[(k.left G k.right^dagger) (x) k.rest rho]``."""
        n = self.size
        out = np.zeros((n, n), dtype=complex)
        for (i, j), k in self.entries.items():
            if k is None:
                continue
            v = value(k)
            if self.flipped[(i, j)]:
                v = np.conj(v)
            out[i, j] = v
            out[j, i] = np.conj(v)
        return out

    def unit_key(self):
        return self.entries[(0, 0)]


def _check_words(words, scenario):
    words = tuple(Monomial(w) for w in words)
    if not words or words[0].degree != 0:
        raise ValueError("word list must start with the identity")
    for w in words:
        if len(w) != scenario.parties:
            raise ValueError("word does not belong to this scenario")
    return words


def build_identity_template(words, scenario: Scenario) -> MomentTemplate:
    words = _check_words(words, scenario)
    adj = [adjoint(w) for w in words]
    entries = {}
    for i, wi in enumerate(words):
        for j in range(i, len(words)):
            entries[(i, j)] = multiply(wi, adj[j], scenario)
    return MomentTemplate(scenario, words, None, entries)


def build_effect_template(words, scenario: Scenario, effect) -> MomentTemplate:
    effect = Effect(*effect)
    scenario.check(effect)
    if effect.party != 0:
        raise ValueError("localizing effects must belong to party 0")
    words = _check_words(words, scenario)
    loc = Monomial(((effect.setting, effect.outcome),) if p == 0 else ()
                   for p in range(scenario.parties))
    adj = [adjoint(w) for w in words]
    left = [multiply(w, loc, scenario) for w in words]
    entries = {}
    for i in range(len(words)):
        for j in range(i, len(words)):
            entries[(i, j)] = None if left[i] is None else multiply(left[i], adj[j], scenario)
    return MomentTemplate(scenario, words, effect, entries)


def unknown_key(scenario: Scenario, tag, u: Monomial, v: Monomial):
    """Key of ``tr[(u_0 G v_0^dagger) (x) (u_rest v_rest^dagger) rho]`` and whether it is
    stored in the adjoint orientation; ``(None, False)`` if the product vanishes."""
    rest = []
    for p in range(1, scenario.parties):
        c = canonical_word(u[p] + tuple(reversed(v[p])), p, scenario)
        if c is None:
            return None, False
        rest.append(c)
    rest = tuple(rest)
    k = UnknownKey.make(tag, u[0], v[0], rest)
    return k, (k.left, k.right, k.rest) != (u[0], v[0], rest)


def build_unknown_template(words, scenario: Scenario, tag) -> UnknownBlockTemplate:
    words = _check_words(words, scenario)
    entries, flipped = {}, {}
    for i, wi in enumerate(words):
        for j in range(i, len(words)):
            entries[(i, j)], flipped[(i, j)] = unknown_key(scenario, tag, wi, words[j])
    return UnknownBlockTemplate(scenario, words, tag, entries, flipped)


# ---------------------------------------------------------------------------
# fixed statistics


def validate_distribution(scenario: Scenario, P, tol=1e-8):
    """Check shape, positivity, normalisation and no-signalling of ``P[a,b,x,y]``."""
    if not scenario.is_bell:
        raise InvalidDistribution("joint tables are defined for bipartite Bell scenarios")
    P = np.asarray(P, dtype=float)
    X, Y = scenario.settings
    na = max(scenario.outcomes[0])
    nb = max(scenario.outcomes[1])
    if P.shape != (na, nb, X, Y):
        raise InvalidDistribution(f"expected table of shape {(na, nb, X, Y)}, got {P.shape}")
    if not np.all(np.isfinite(P)):
        raise InvalidDistribution("table contains non-finite entries")
    if P.min() < -tol:
        raise InvalidDistribution(f"negative probability {P.min():.3g}")
    for x in range(X):
        for y in range(Y):
            oa, ob = scenario.outcomes[0][x], scenario.outcomes[1][y]
            if np.any(np.abs(P[oa:, :, x, y]) > tol) or np.any(np.abs(P[:, ob:, x, y]) > tol):
                raise InvalidDistribution("probability assigned to a non-existent outcome")
            s = P[:, :, x, y].sum()
            if abs(s - 1.0) > tol:
                raise InvalidDistribution(f"P(.,.|{x},{y}) sums to {s:.12g}")
    pa = P.sum(axis=1)  # a, x, y
    pb = P.sum(axis=0)  # b, x, y
    if np.max(np.abs(pa - pa[:, :, :1]), initial=0.0) > tol:
        raise InvalidDistribution("Alice's marginals depend on Bob's setting")
    if np.max(np.abs(pb - pb[:, :1, :]), initial=0.0) > tol:
        raise InvalidDistribution("Bob's marginals depend on Alice's setting")
    return P


@dataclass(frozen=True)
class FixedAssignment:
    """Observable moments: ``key -> probability`` for every key of per-party degree <= 1."""

    scenario: Scenario
    values: dict
    source: np.ndarray = field(repr=False, compare=False)

    def __len__(self):
        return len(self.values)

    def reduced(self):
        """Restriction to keys of the reduced basis (the others are implied)."""
        from .algebra import is_basis_word

        return {k: v for k, v in self.values.items() if is_basis_word(k, self.scenario)}


def _mono(scenario, *effects):
    per = [[] for _ in range(scenario.parties)]
    for p, x, a in effects:
        per[p].append((x, a))
    return Monomial(per)


def fixed_keys(scenario: Scenario):
    """All full-outcome keys of per-party degree <= 1 (identity first)."""
    out = [_mono(scenario)]
    for p in range(scenario.parties):
        out += [_mono(scenario, e) for e in scenario.alphabet(p)]
    if scenario.parties == 2:
        out += [_mono(scenario, ea, eb) for ea in scenario.alphabet(0) for eb in scenario.alphabet(1)]
    return out


def fixed_assignments(scenario: Scenario, P, tol=1e-8) -> FixedAssignment:
    """Map every observable key to its value in the joint table ``P[a,b,x,y]``.

    Marginals are averaged over the other party's setting (they coincide
    within ``tol`` by the no-signalling check).
    """
    P = validate_distribution(scenario, P, tol)
    X, Y = scenario.settings
    pa = P.sum(axis=1).mean(axis=2)  # a, x
    pb = P.sum(axis=0).mean(axis=1)  # b, y
    values = {_mono(scenario): 1.0}
    for e in scenario.alphabet(0):
        values[_mono(scenario, e)] = float(pa[e.outcome, e.setting])
    for e in scenario.alphabet(1):
        values[_mono(scenario, e)] = float(pb[e.outcome, e.setting])
    for ea in scenario.alphabet(0):
        for eb in scenario.alphabet(1):
            values[_mono(scenario, ea, eb)] = float(P[ea.outcome, eb.outcome, ea.setting, eb.setting])
    return FixedAssignment(scenario, values, P)


# ---------------------------------------------------------------------------
# shared index


class MomentIndex:
    """Allocates one problem variable per moment key and per unknown key.

    Parameters
    ----------
    problem : SdpProblem
        Receives the variables.
    scenario : Scenario
    unit : float
        Value of the identity moment (1 for normalised states, ``d`` for
        traces in the prepare-and-measure setting).
    fixed : dict, optional
        ``reduced key -> value``; such moments become constants.
    """

    def __init__(self, problem: SdpProblem, scenario: Scenario, unit=1.0, fixed=None):
        self.problem = problem
        self.scenario = scenario
        self.unit = float(unit)
        self.fixed = dict(fixed or {})
        self.variables = {}
        self.unknowns = {}

    # moments ---------------------------------------------------------------
    def key_expr(self, key: Monomial) -> Affine:
        if key.degree == 0:
            return Affine.lift(self.unit)
        if key in self.fixed:
            return Affine.lift(self.fixed[key])
        v = self.variables.get(key)
        if v is None:
            v = self.problem.variable(f"m[{key}]")
            self.variables[key] = v
        return v

    def moment(self, word) -> Affine:
        """Affine expression of ``<word>``; ``word`` is a Monomial, effects or None."""
        if word is None:
            return Affine()
        if not isinstance(word, Monomial):
            word = canonicalize(word, self.scenario)
            if word is None:
                return Affine()
        out = Affine()
        for w, c in expand_in_basis(word, self.scenario).items():
            out.iadd(self.key_expr(moment_key(w)), c)
        return out

    def probability(self, *effects) -> Affine:
        return self.moment([Effect(*e) for e in effects])

    # unknown operators -------------------------------------------------------
    def unknown_key_expr(self, key: UnknownKey) -> Affine:
        v = self.unknowns.get(key)
        if v is None:
            v = self.problem.variable(f"u[{key.tag}|{key.left}|{key.right}|{key.rest}]")
            self.unknowns[key] = v
        return v

    def unknown(self, key: Optional[UnknownKey]) -> Affine:
        if key is None:
            return Affine()
        s = self.scenario
        lefts = _expand_word(key.left, 0, s)
        rights = _expand_word(key.right, 0, s)
        rest = expand_in_basis(Monomial(((),) + tuple(key.rest)), s) if s.parties > 1 else {
            Monomial(((),)): 1}
        out = Affine()
        for (l, cl), (r, cr), (b, cb) in itertools.product(lefts.items(), rights.items(), rest.items()):
            k = UnknownKey.make(key.tag, l, r, tuple(b[1:]))
            out.iadd(self.unknown_key_expr(k), cl * cr * cb)
        return out

    def unknown_unit(self, tag) -> Affine:
        rest = tuple(() for _ in range(self.scenario.parties - 1))
        return self.unknown(UnknownKey.make(tag, (), (), rest))

    # numeric instantiation -------------------------------------------------
    def assign(self, value: Callable[[Monomial], complex], unknown=None):
        """Vector ``x`` realising a given assignment of moments (real parts)."""
        x = np.zeros(self.problem.n_vars)
        for k, v in self.variables.items():
            (i,) = v.terms
            x[i] = float(np.real(value(k)))
        if unknown is not None:
            for k, v in self.unknowns.items():
                (i,) = v.terms
                x[i] = float(np.real(unknown(k)))
        return x
