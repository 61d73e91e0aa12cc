"""Device-independent relaxations of incompatibility quantifiers.

Every problem is built from the same ingredients: the moment matrix
``chi[1]``, the localizing matrices ``chi[E_{a|x}]`` of party 0 (the party
whose measurements are quantified) and blocks ``chi[G]`` for unknown
operators ``G`` on party 0. Products of an unknown scalar with ``chi[1]``
are kept only on entries of ``chi[1]`` whose value is observed; when a
robustness value is given, the exact linear constraint is used instead.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .algebra import (
    HierarchyLevel,
    Monomial,
    Scenario,
    generate_word_list,
)
from .bell import BellFunctional, get_functional, load_registry
from .moment import (
    MomentIndex,
    build_effect_template,
    build_identity_template,
    build_unknown_template,
    fixed_assignments,
)
from .sdp import Affine, SdpProblem
from .solve import Solution, SolverError, SolverSettings, solve

log = logging.getLogger(__name__)

__all__ = [
    "BellFunctional",
    "get_functional",
    "load_registry",
    "MMMBuilder",
    "QuantifierResult",
    "BisectionSettings",
    "InfeasibleTarget",
    "resolve_level",
    "plus_words",
    "swap_table",
    "assemble_ir_di_given_P",
    "assemble_maxviolation_given_ir",
    "assemble_ir_given_violation",
    "assemble_variant",
    "assemble_gmir_di_given_P",
    "assemble_gmir_maxviolation",
    "assemble_gmir_given_violation",
    "assemble_npa_max",
    "ir_di_given_P",
    "variant_di_given_P",
    "gmir_di_given_P",
    "max_violation",
    "min_ir_given_violation",
    "ir_given_violation",
    "gmi_threshold",
    "tradeoff_curve",
    "npa_max",
    "bisect_monotone",
    "VARIANTS",
]

VARIANTS = ("IR", "IRJ", "IRP", "IRR", "IW")


class InfeasibleTarget(ValueError):
    """The requested violation exceeds what the relaxation allows."""


# ---------------------------------------------------------------------------
# levels


def plus_words(scenario: Scenario):
    """Extra words of the ``"l+"`` levels: ``E_x E_y E_x`` on party 0 for ``x != y``.

    Only the first outcome of each setting is used, so for dichotomic
    settings the words are already in the reduced basis.
    """
    meas = [x for x in range(scenario.settings[0]) if scenario.is_projective(0, x)]
    out = []
    for x in meas:
        for y in meas:
            if x != y:
                out.append(((0, x, 0), (0, y, 0), (0, x, 0)))
    return tuple(out)


def resolve_level(level, scenario: Scenario) -> HierarchyLevel:
    """Accept ``2``, ``"2"``, ``"2+"`` or a :class:`HierarchyLevel`."""
    if isinstance(level, HierarchyLevel):
        return level
    if isinstance(level, str):
        text = level.strip()
        if text.endswith("+"):
            return HierarchyLevel(int(text[:-1]), plus_words(scenario))
        return HierarchyLevel(int(text))
    return HierarchyLevel(int(level))


def level_label(level):
    if isinstance(level, HierarchyLevel):
        return f"{level.level}+" if level.extra else str(level.level)
    return str(level)


def swap_table(P):
    """Exchange the parties of a joint table ``P[a, b, x, y]``."""
    return np.asarray(P).transpose(1, 0, 3, 2)


def _swap_scenario(sc: Scenario):
    return Scenario((sc.outcomes[1], sc.outcomes[0]))


def _orient(party, scenario=None, P=None, f=None):
    if party in ("A", 0, None):
        return scenario, P, f
    if party not in ("B", 1):
        raise ValueError("party must be 'A' or 'B'")
    return (None if scenario is None else _swap_scenario(scenario),
            None if P is None else swap_table(P),
            None if f is None else f.swapped())


# ---------------------------------------------------------------------------
# builder


def _expr_signature(e: Affine, tol=1e-12):
    terms = sorted((k, v) for k, v in e.terms.items() if abs(v) > tol)
    if not terms:
        return None, e
    lead = terms[0][1]
    scale = 1.0 / lead
    sig = tuple((k, round(v * scale, 12)) for k, v in terms) + (round(e.const * scale, 12),)
    return sig, e


class MMMBuilder:
    """Shared scaffolding of all measurement-moment-matrix relaxations.

    Parameters
    ----------
    scenario : Scenario
    level : int, str or HierarchyLevel
    P : array, optional
        Observed joint table; its observable moments become constants.
    words : sequence of Monomial, optional
        Custom word list (identity first); overrides ``level``.
    reduced : bool
        Build blocks over the reduced word list (default) or over every
        outcome. Both describe the same feasible set.
    unit : float
        Value of the identity moment (``d`` for trace moments).
    fixed : dict, optional
        Explicit ``reduced key -> value`` pins (used instead of ``P``).
    localizers : bool
        Whether to add the ``chi[E_{a|x}]`` blocks.
    """

    def __init__(self, scenario: Scenario, level=2, *, name="mmm", P=None, words=None,
                 reduced=True, unit=1.0, fixed=None, localizers=True):
        self.scenario = scenario
        self.level = resolve_level(level, scenario)
        if words is None:
            words = generate_word_list(scenario, self.level, reduced=reduced)
        self.words = tuple(Monomial(w) for w in words)
        self.problem = SdpProblem(name, {"level": level_label(self.level), "words": len(self.words)})
        self.assignment = None
        if P is not None:
            self.assignment = fixed_assignments(scenario, P)
            fixed = self.assignment.reduced()
        self.unit_value = float(unit)
        self.index = MomentIndex(self.problem, scenario, unit, fixed)
        self.observed = bool(fixed)
        self.settings0 = [x for x in range(scenario.settings[0]) if scenario.is_projective(0, x)]
        self._chi1_template = build_identity_template(self.words, scenario)
        self.chi1 = self._chi1_template.instantiate(self.index)
        self.templates = [self._chi1_template]
        self.problem.add_psd(self.chi1, "chi[1]")
        self.chiE = {}
        if localizers:
            for x in self.settings0:
                for a in range(scenario.outcomes[0][x]):
                    t = build_effect_template(self.words, scenario, (0, x, a))
                    self.templates.append(t)
                    m = t.instantiate(self.index)
                    self.chiE[(x, a)] = m
                    self.problem.add_psd(m, f"chi[E{a}|{x}]")
        self.unknown_blocks = {}
        self._fixed_positions = None
        self._eq_seen = set()

    # blocks ---------------------------------------------------------------
    @property
    def size(self):
        return len(self.words)

    def unknown(self, tag, psd=True):
        m = build_unknown_template(self.words, self.scenario, tag).instantiate(self.index)
        self.unknown_blocks[tag] = m
        if psd:
            self.problem.add_psd(m, f"chi[{_fmt_tag(tag)}]")
        return m

    def combine(self, terms):
        """Entrywise ``sum_k c_k M_k`` of symmetric affine matrices."""
        n = self.size
        out = [[Affine() for _ in range(n)] for _ in range(n)]
        for c, M in terms:
            for i in range(n):
                row, src = out[i], M[i]
                for j in range(i, n):
                    row[j].iadd(src[j], c)
        for i in range(n):
            for j in range(i):
                out[i][j] = out[j][i]
        return out

    def add_psd(self, M, label):
        self.problem.add_psd(M, label)

    def add_equality(self, e: Affine, label, tol=1e-9):
        sig, e = _expr_signature(e)
        if sig is None:
            if abs(e.const) > tol:
                raise InfeasibleTarget(f"constraint {label} reduces to {e.const:.3g} = 0")
            return
        if sig in self._eq_seen:
            return
        self._eq_seen.add(sig)
        self.problem.add_equality(e.pruned(1e-14), label)

    def equate(self, A, B, label, scale_b=1.0):
        """Entrywise ``A = scale_b * B`` (upper triangles)."""
        n = self.size
        for i in range(n):
            for j in range(i, n):
                self.add_equality(A[i][j] - B[i][j] * scale_b, f"{label}[{i},{j}]")

    @staticmethod
    def unit(M) -> Affine:
        return M[0][0]

    def strategies(self, settings=None):
        settings = self.settings0 if settings is None else settings
        return list(itertools.product(*(range(self.scenario.outcomes[0][x]) for x in settings)))

    # observed entries -------------------------------------------------------
    def fixed_positions(self):
        """Upper-triangle positions ``(i, j)`` whose ``chi[1]`` entry is observed.

        An entry is observed when its moment is a constant (identity or a
        pinned probability) and the product of the two words does not vanish
        identically.
        """
        if self._fixed_positions is None:
            self._fixed_positions = sorted(
                ij for ij, prod in self._chi1_template.entries.items()
                if prod is not None and self.chi1[ij[0]][ij[1]].is_constant())
        return self._fixed_positions

    def relaxed_normalization(self, tags, weight: Affine, label):
        """``sum_tags chi[G]^fixed = weight * chi[1]^fixed`` on observed entries.

        Requires observed moments (a given table); otherwise nothing is added,
        as for a Bell value alone.
        """
        if not self.observed:
            return 0
        for i, j in self.fixed_positions():
            lhs = Affine()
            for tag in tags:
                lhs.iadd(self.unknown_blocks[tag][i][j])
            self.add_equality(lhs - weight * self.chi1[i][j].const, f"{label}[{i},{j}]")
        return len(self.fixed_positions())

    def normalised(self, units: Affine) -> Affine:
        """Convert ``sum chi[G]_1`` into ``tr(sum G)/d`` (identity for unit 1)."""
        return units / self.unit_value


def _fmt_tag(tag):
    if isinstance(tag, tuple):
        return "".join(str(t) for t in tag)
    return str(tag)


def _marg(blocks, lams, pos, a):
    return [(1.0, blocks[lam]) for lam in lams if lam[pos] == a]


# ---------------------------------------------------------------------------
# incompatibility robustness and variants


def _ir_core(b: MMMBuilder, tag="G"):
    lams = b.strategies()
    G = {lam: b.unknown((tag, lam)) for lam in lams}
    units = sum((b.unit(G[lam]) for lam in lams), Affine())
    return lams, G, units


def _dominance(b, lams, G, sign=+1):
    """``sum_l delta G_l >= chi[E]`` (sign=+1) or ``<=`` (sign=-1)."""
    for i, x in enumerate(b.settings0):
        for a in range(b.scenario.outcomes[0][x]):
            terms = _marg(G, lams, i, a) + [(-1.0, b.chiE[(x, a)])]
            M = b.combine([(sign * c, m) for c, m in terms])
            b.add_psd(M, f"dom[{a}|{x}]")


def assemble_ir_di_given_P(scenario, P, level=2, *, party="A", words=None, reduced=True,
                           builder_hook: Callable | None = None):
    """Lower bound on the robustness of party ``party``'s measurements given ``P``."""
    return assemble_variant("IR", scenario, P, level, party=party, words=words, reduced=reduced,
                            builder_hook=builder_hook)


def assemble_variant(variant, scenario, P, level=2, *, party="A", words=None, reduced=True,
                     builder_hook: Callable | None = None):
    """DI relaxation of ``IR``, ``IRJ``, ``IRP``, ``IRR`` or ``IW`` for a given table.

    ``builder_hook(builder)`` may add further constraints (dimension bounds).
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown quantifier {variant!r}; expected one of {VARIANTS}")
    scenario, P, _ = _orient(party, scenario, P)
    b = MMMBuilder(scenario, level, name=f"{variant}-di", P=P, words=words, reduced=reduced)
    b.problem.meta.update(quantifier=variant, mode="given-P", party=party)
    lams, G, units = _ir_core(b)
    s = b.normalised(units)
    if variant == "IR":
        _dominance(b, lams, G, +1)
        b.relaxed_normalization([("G", l) for l in lams], s, "norm")
        b.problem.set_objective(s - 1.0, "min")
    elif variant == "IW":
        _dominance(b, lams, G, -1)
        b.relaxed_normalization([("G", l) for l in lams], s, "norm")
        b.problem.set_objective(1.0 - s, "min")
    elif variant == "IRJ":
        H = {lam: b.unknown(("H", lam)) for lam in lams}
        sh = b.normalised(sum((b.unit(H[l]) for l in lams), Affine()))
        for i, x in enumerate(b.settings0):
            # the last outcome of later settings follows from completeness
            n = scenario.outcomes[0][x] if i == 0 else scenario.outcomes[0][x] - 1
            for a in range(n):
                diff = b.combine(_marg(G, lams, i, a) + [(-c, m) for c, m in _marg(H, lams, i, a)])
                b.equate(b.chiE[(x, a)], diff, f"dec[{a}|{x}]")
        # the weight relation sh = s - 1 is the identity entry of the outcome sum above
        b.relaxed_normalization([("G", l) for l in lams], s, "normG")
        # the H normalization on observed entries follows from the lines above
        b.problem.set_objective(sh, "min")
    elif variant in ("IRP", "IRR"):
        q = {}
        if variant == "IRP":
            for k, x in enumerate(b.settings0):
                for a in range(scenario.outcomes[0][x]):
                    q[(x, a)] = b.problem.variable(f"q[{a}|{x}]")
                    b.problem.add_inequality(q[(x, a)], f"q[{a}|{x}]>=0")
                if k:  # for the first setting this is the identity entry of the decomposition
                    b.add_equality(sum((q[(x, a)] for a in range(scenario.outcomes[0][x])),
                                       Affine()) - s + 1.0, f"sumq[{x}]")
        else:
            for x in b.settings0:
                n = scenario.outcomes[0][x]
                for a in range(n):
                    q[(x, a)] = (s - 1.0) / n
        for i, j in b.fixed_positions():
            one = b.chi1[i][j].const
            for k, x in enumerate(b.settings0):
                # the last outcome of later settings follows from completeness
                n = scenario.outcomes[0][x] if k == 0 else scenario.outcomes[0][x] - 1
                for a in range(n):
                    rhs = Affine()
                    for lam in lams:
                        if lam[k] == a:
                            rhs.iadd(G[lam][i][j])
                    rhs.iadd(q[(x, a)], -one)
                    b.add_equality(b.chiE[(x, a)][i][j] - rhs, f"dec[{a}|{x}][{i},{j}]")
        # observed-entry normalization is the outcome sum of the decomposition
        b.problem.set_objective(s - 1.0, "min")
    if builder_hook:
        builder_hook(b)
    return b.problem


def assemble_maxviolation_given_ir(f: BellFunctional, ir0, level=2, *, party="A", words=None,
                                   reduced=True, builder_hook: Callable | None = None):
    """Maximal value of ``f`` compatible with robustness ``ir0`` of ``party``'s measurements."""
    if ir0 < 0:
        raise ValueError("robustness must be non-negative")
    _, _, f = _orient(party, f=f)
    b = MMMBuilder(f.scenario, level, name="maxviolation", words=words, reduced=reduced)
    b.problem.meta.update(quantifier="IR", mode="max-violation-given-robustness", ir0=ir0,
                          functional=f.name, party=party)
    lams, G, units = _ir_core(b)
    _dominance(b, lams, G, +1)
    total = b.combine([(1.0, G[l]) for l in lams])
    b.equate(total, b.chi1, "sumG", scale_b=ir0 + 1.0)
    b.add_equality(b.normalised(units) - (ir0 + 1.0), "units")
    if builder_hook:
        builder_hook(b)
    b.problem.set_objective(f.expression(b.index), "max")
    return b.problem


def assemble_ir_given_violation(f: BellFunctional, K, level=2, *, party="A", words=None,
                                reduced=True, builder_hook: Callable | None = None):
    """Minimal robustness for ``f(P) = K`` without linking ``chi[G]`` to ``chi[1]``."""
    _, _, f = _orient(party, f=f)
    b = MMMBuilder(f.scenario, level, name="ir-given-violation", words=words, reduced=reduced)
    b.problem.meta.update(quantifier="IR", mode="given-violation", K=K, functional=f.name,
                          party=party)
    lams, G, units = _ir_core(b)
    _dominance(b, lams, G, +1)
    b.add_equality(f.expression(b.index) - K, "violation")
    if builder_hook:
        builder_hook(b)
    b.problem.set_objective(b.normalised(units) - 1.0, "min")
    return b.problem


def assemble_npa_max(f: BellFunctional, level=2, *, words=None, reduced=True):
    """Maximum of ``f`` over the moment matrix ``chi[1]`` alone."""
    b = MMMBuilder(f.scenario, level, name="npa-max", words=words, reduced=reduced, localizers=False)
    b.problem.set_objective(f.expression(b.index), "max")
    return b.problem


# ---------------------------------------------------------------------------
# genuine triplewise incompatibility


def _gmir_core(b: MMMBuilder):
    if len(b.settings0) < 3:
        raise ValueError("genuine triplewise quantifiers need three settings on party 0")
    if len(b.settings0) > 3:
        raise ValueError("only the triplewise case (exactly three settings) is supported")
    n = [b.scenario.outcomes[0][x] for x in b.settings0]
    pairs = ((0, 1), (0, 2), (1, 2))
    G, units = {}, {}
    for (s, t) in pairs:
        lams = list(itertools.product(range(n[s]), range(n[t])))
        for lam in lams:
            G[(s, t, lam)] = b.unknown(("G", s, t, lam))
        units[(s, t)] = sum((b.unit(G[(s, t, l)]) for l in lams), Affine())
    for (s, t) in pairs:
        x = 3 - s - t
        lams = list(itertools.product(range(n[s]), range(n[t])))
        J = [b.unknown(("J", s, t, a)) for a in range(n[x])]
        b.equate(b.combine([(1.0, j) for j in J]), b.combine([(1.0, G[(s, t, l)]) for l in lams]),
                 f"sumJ{s}{t}")
        for a in range(n[x]):
            terms = [(1.0, J[a]), (-1.0, b.chiE[(b.settings0[x], a)])]
            for other in (s, t):
                p = (min(other, x), max(other, x))
                pos = 0 if p[0] == x else 1
                terms += [(1.0, G[(p[0], p[1], l)])
                          for l in itertools.product(range(n[p[0]]), range(n[p[1]])) if l[pos] == a]
            b.add_psd(b.combine(terms), f"dom{s}{t}[{a}|{x}]")
    return pairs, G, units, n


def assemble_gmir_di_given_P(scenario, P, level=2, *, party="A", words=None, reduced=True):
    """Lower bound on the genuine triplewise robustness given a table."""
    scenario, P, _ = _orient(party, scenario, P)
    b = MMMBuilder(scenario, level, name="gmir-di", P=P, words=words, reduced=reduced)
    b.problem.meta.update(quantifier="GMIR", mode="given-P", party=party)
    pairs, G, units, n = _gmir_core(b)
    for (s, t) in pairs:
        lams = itertools.product(range(n[s]), range(n[t]))
        b.relaxed_normalization([("G", s, t, l) for l in lams], b.normalised(units[(s, t)]),
                                f"norm{s}{t}")
    total = b.normalised(sum(units.values(), Affine()))
    b.problem.set_objective(total - 1.0, "min")
    return b.problem


def assemble_gmir_maxviolation(f: BellFunctional, ir0, level=2, *, party="A", words=None,
                               reduced=True):
    """Maximal value of ``f`` compatible with genuine triplewise robustness ``ir0``."""
    if ir0 < 0:
        raise ValueError("robustness must be non-negative")
    _, _, f = _orient(party, f=f)
    b = MMMBuilder(f.scenario, level, name="gmir-maxviolation", words=words, reduced=reduced)
    b.problem.meta.update(quantifier="GMIR", mode="max-violation-given-robustness", ir0=ir0,
                          functional=f.name, party=party)
    pairs, G, units, n = _gmir_core(b)
    total = b.combine([(1.0, M) for M in G.values()])
    b.equate(total, b.chi1, "sumG", scale_b=ir0 + 1.0)
    b.add_equality(b.normalised(sum(units.values(), Affine())) - (ir0 + 1.0), "units")
    b.problem.set_objective(f.expression(b.index), "max")
    return b.problem


def assemble_gmir_given_violation(f: BellFunctional, K, level=2, *, party="A", words=None,
                                  reduced=True):
    """Minimal genuine triplewise robustness for ``f(P) = K`` (observed entries unknown)."""
    _, _, f = _orient(party, f=f)
    b = MMMBuilder(f.scenario, level, name="gmir-given-violation", words=words, reduced=reduced)
    b.problem.meta.update(quantifier="GMIR", mode="given-violation", K=K, functional=f.name,
                          party=party)
    pairs, G, units, n = _gmir_core(b)
    b.add_equality(f.expression(b.index) - K, "violation")
    b.problem.set_objective(b.normalised(sum(units.values(), Affine())) - 1.0, "min")
    return b.problem


# ---------------------------------------------------------------------------
# drivers


@dataclass
class QuantifierResult:
    quantifier: str
    mode: str
    value: float
    level: str
    status: str
    solution: Solution | None = None
    details: dict = field(default_factory=dict)
    problem: SdpProblem | None = field(default=None, repr=False)

    @property
    def certified(self):
        return self.status in ("optimal", "near-optimal")

    def as_dict(self):
        out = {"quantifier": self.quantifier, "mode": self.mode, "value": self.value,
               "level": self.level, "status": self.status}
        out.update(self.details)
        if self.solution is not None and self.solution.residuals is not None:
            out["residuals"] = self.solution.residuals.as_dict()
        return out


def _result(problem, settings, quantifier, mode, level, strict=True, **details):
    sol = solve(problem, settings or SolverSettings())
    if strict and not sol.ok:
        raise SolverError(f"{problem.name}: solver returned {sol.status}", sol)
    return QuantifierResult(quantifier, mode, float(sol.objective), level_label(level), sol.status,
                            sol, details, problem)


def ir_di_given_P(scenario, P, level=2, settings=None, **kw):
    return _result(assemble_ir_di_given_P(scenario, P, level, **kw), settings, "IR", "given-P", level)


def variant_di_given_P(variant, scenario, P, level=2, settings=None, **kw):
    return _result(assemble_variant(variant, scenario, P, level, **kw), settings, variant,
                   "given-P", level)


def gmir_di_given_P(scenario, P, level=2, settings=None, **kw):
    return _result(assemble_gmir_di_given_P(scenario, P, level, **kw), settings, "GMIR",
                   "given-P", level)


def max_violation(f, ir0, level=2, settings=None, gmir=False, **kw):
    asm = assemble_gmir_maxviolation if gmir else assemble_maxviolation_given_ir
    return _result(asm(f, ir0, level, **kw), settings, "GMIR" if gmir else "IR",
                   "max-violation-given-robustness", level, ir0=ir0)


def ir_given_violation(f, K, level=2, settings=None, gmir=False, **kw):
    asm = assemble_gmir_given_violation if gmir else assemble_ir_given_violation
    return _result(asm(f, K, level, **kw), settings, "GMIR" if gmir else "IR", "given-violation",
                   level, K=K)


def npa_max(f, level=2, settings=None, **kw):
    return _result(assemble_npa_max(f, level, **kw), settings, "none", "npa-max", level)


def gmi_threshold(f, level=2, settings=None, **kw):
    """Largest value of ``f`` reachable without genuine triplewise incompatibility."""
    r = max_violation(f, 0.0, level, settings, gmir=True, **kw)
    r.mode = "threshold"
    return r


@dataclass
class BisectionSettings:
    tol: float = 1e-4
    max_iter: int = 30
    feas_tol: float = 1e-7
    initial_upper: float = 1.0
    max_upper: float = 64.0


def bisect_monotone(value_at: Callable[[float], float], K, bis: BisectionSettings | None = None):
    """Smallest ``r >= 0`` with ``value_at(r) >= K`` for nondecreasing ``value_at``.

    Returns ``(lower, upper, history)``: ``value_at(lower) < K`` unless
    ``lower == 0`` already reaches ``K``; the true threshold lies in
    ``[lower, upper]``.
    """
    bis = bis or BisectionSettings()
    history = []

    def ok(r):
        v = value_at(r)
        history.append((r, v))
        return v >= K - bis.feas_tol

    if ok(0.0):
        return 0.0, 0.0, history
    lo, hi = 0.0, bis.initial_upper
    while not ok(hi):
        lo = hi
        hi *= 2
        if hi > bis.max_upper:
            raise InfeasibleTarget(f"value {K} not reached for robustness up to {bis.max_upper}")
    for _ in range(bis.max_iter):
        if hi - lo <= bis.tol:
            break
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi, history


def min_ir_given_violation(f, K, level=2, settings=None, bisection=None, gmir=False,
                           sup=None, **kw):
    """Minimal robustness needed for ``f = K`` via bisection on the max-violation problem.

    The max-violation value is nondecreasing in the robustness (adding a
    multiple of ``chi[1]`` to each ``chi[G]`` keeps every constraint), so
    bisection is exact up to its tolerance. ``sup`` optionally supplies the
    relaxation's maximum of ``f``; targets above it raise
    :class:`InfeasibleTarget`.
    """
    bis = bisection or BisectionSettings()
    if sup is not None and K > sup + bis.feas_tol:
        raise InfeasibleTarget(f"target {K} exceeds the relaxation maximum {sup}")

    def value_at(r):
        return max_violation(f, r, level, settings, gmir=gmir, **kw).value

    lo, hi, hist = bisect_monotone(value_at, K, bis)
    return QuantifierResult("GMIR" if gmir else "IR", "given-violation-bisection", lo,
                            level_label(level), "optimal", None,
                            {"K": K, "upper": hi, "evaluations": len(hist),
                             "history": [list(h) for h in hist]})


def tradeoff_curve(f, level=2, ir_grid=None, k_grid=None, settings=None, gmir=False,
                   bisection=None, **kw):
    """Rows ``{"ir": ..., "violation": ...}`` over a robustness or a violation grid.

    Failures are recorded per row (``status`` and ``error``) and never abort
    the sweep.
    """
    if (ir_grid is None) == (k_grid is None):
        raise ValueError("give exactly one of ir_grid and k_grid")
    grid = list(ir_grid if ir_grid is not None else k_grid)
    if not grid:
        raise ValueError("grid is empty")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be sorted")
    rows = []
    for g in grid:
        try:
            if ir_grid is not None:
                r = max_violation(f, g, level, settings, gmir=gmir, **kw)
                rows.append({"ir": g, "violation": r.value, "status": r.status})
            else:
                r = min_ir_given_violation(f, g, level, settings, bisection, gmir=gmir, **kw)
                rows.append({"ir": r.value, "violation": g, "status": r.status,
                             "ir_upper": r.details["upper"]})
        except (SolverError, InfeasibleTarget) as exc:
            rows.append({"ir" if k_grid is not None else "violation": math.nan,
                         "violation" if k_grid is not None else "ir": g,
                         "status": "failed", "error": str(exc)})
    return rows
