"""Semi-device-independent bounds: dimension constraints and prepare-and-measure.

Moment vectors of ``d``-dimensional realizations span a subspace ``S_d`` of
all moment vectors. The subspace is estimated by Gram-Schmidt over random
samples; its orthogonal complement gives linear equalities that are added to
the device-independent problems of :mod:`mmmbounds.quantifiers`.

Two ways of attaching the constraint are offered:

``"povm"``
    An auxiliary moment matrix ``Gamma`` over the same words, sampled from
    projective ``d``-dimensional realizations (for dichotomic settings these
    generate all correlations of dimension ``d`` by extremality), tied to the
    main relaxation only through the observable probabilities.
``"projective"``
    Every moment of the measurement moment matrices is required to lie in
    ``S_d`` itself, i.e. the measurements of the quantified party are
    projective in dimension ``d``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg as la

from .algebra import Monomial, Scenario, expand_in_basis, moment_key
from .moment import (
    InvalidDistribution,
    MomentIndex,
    build_identity_template,
    is_fixed_key,
)
from .oracle import sample_random_realization
from .quantifiers import (
    MMMBuilder,
    QuantifierResult,
    _ir_core,
    _dominance,
    assemble_ir_di_given_P,
    assemble_ir_given_violation,
    assemble_maxviolation_given_ir,
    level_label,
)
from .sdp import Affine
from .solve import SolverError, SolverSettings, solve

log = logging.getLogger(__name__)

__all__ = [
    "SubspaceBasis",
    "sample_moment_basis",
    "complement_constraints",
    "moment_keys",
    "dimension_hook",
    "assemble_ir_sdi",
    "ir_sdi",
    "pm_scenario",
    "pm_fixed_values",
    "validate_pm",
    "assemble_ir_pm",
    "ir_pm",
    "CACHE_ENV",
    "MODES",
]

CACHE_ENV = "MMMBOUNDS_CACHE"
MODES = ("povm", "projective")


# ---------------------------------------------------------------------------
# coordinates


def moment_keys(builder: MMMBuilder, localizers=True):
    """Moment keys (reduced basis) entering the blocks of ``builder``.

    With ``localizers`` the keys of the ``chi[E]`` blocks are included, so the
    vector determines every measurement moment matrix of the relaxation.
    """
    sc = builder.scenario
    keys = {Monomial(tuple(() for _ in range(sc.parties)))}
    for t in builder.templates if localizers else builder.templates[:1]:
        for prod in t.entries.values():
            if prod is not None:
                keys.update(moment_key(w) for w in expand_in_basis(prod, sc))
    return sorted(keys, key=lambda k: (k.degree, str(k)))


def _sample_vector(r, keys):
    return np.array([np.real(r.moment(k)) for k in keys])


# ---------------------------------------------------------------------------
# subspace sampling


@dataclass
class SubspaceBasis:
    """Orthonormal basis of sampled moment vectors.

    Attributes
    ----------
    keys : list of Monomial
        Coordinates (moment keys).
    vectors : ndarray, shape (D, K)
        Orthonormal rows.
    saturated : bool
        ``patience`` consecutive samples did not increase the rank.
    """

    scenario: Scenario
    d: int
    level: str
    projective: bool
    seed: int
    keys: list
    vectors: np.ndarray
    samples: int
    saturated: bool
    patience: int = 50
    threshold: float = 1e-7
    nontrivial: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def dimension(self):
        return int(self.vectors.shape[0])

    def contains(self, v, tol=1e-8):
        v = np.asarray(v, dtype=float)
        r = v - self.vectors.T @ (self.vectors @ v)
        return float(np.linalg.norm(r)) <= tol * max(1.0, float(np.linalg.norm(v)))

    def to_dict(self):
        return {
            "outcomes": [list(o) for o in self.scenario.outcomes],
            "free": [list(f) for f in self.scenario.free],
            "d": self.d, "level": self.level, "projective": self.projective,
            "seed": self.seed, "samples": self.samples, "saturated": self.saturated,
            "patience": self.patience, "threshold": self.threshold,
            "nontrivial": self.nontrivial,
            "keys": [[[list(e) for e in part] for part in k] for k in self.keys],
            "vectors": [[float(v) for v in row] for row in self.vectors],
        }

    @classmethod
    def from_dict(cls, data):
        sc = Scenario(tuple(tuple(o) for o in data["outcomes"]),
                      tuple(tuple(f) for f in data["free"]) if any(data["free"]) else ())
        keys = [Monomial(tuple(tuple(tuple(e) for e in part) for part in k)) for k in data["keys"]]
        vec = np.array(data["vectors"], dtype=float).reshape(-1, len(keys))
        return cls(sc, data["d"], data["level"], data["projective"], data["seed"], keys, vec,
                   data["samples"], data["saturated"], data["patience"], data["threshold"],
                   bool(data.get("nontrivial", False)))


def _cache_file(scenario, d, level, projective, seed, keys, cache_dir, nontrivial=False):
    digest = hashlib.sha256(repr((scenario.outcomes, scenario.free, [tuple(k) for k in keys]))
                            .encode()).hexdigest()[:16]
    kind = ("proj" if projective else "povm") + ("-nt" if nontrivial else "")
    name = f"basis_d{d}_{kind}_s{seed}_l{level}_{digest}.json"
    return Path(cache_dir) / name


def default_cache_dir():
    return os.environ.get(CACHE_ENV) or str(Path.home() / ".cache" / "mmmbounds")


def sample_moment_basis(scenario: Scenario, d, keys, *, projective=True, seed=0,
                        max_samples=5000, patience=50, threshold=1e-7, level="custom",
                        cache_dir=None, use_cache=True, nontrivial=False):
    """Gram-Schmidt basis of the span of moment vectors of ``d``-dimensional realizations.

    Parameters
    ----------
    keys : sequence of Monomial
        Coordinates of the moment vectors.
    projective : bool
        Sample projective measurements (otherwise random POVMs).
    nontrivial : bool
        Projective samples give every outcome rank >= 1 (no measurement
        with a certain outcome).
    patience, threshold : int, float
        Stop after ``patience`` consecutive samples whose residual norm,
        relative to the sample norm, is below ``threshold``.
    cache_dir : str, optional
        Directory of the text cache; ``False`` disables caching. Defaults to
        ``$MMMBOUNDS_CACHE`` or ``~/.cache/mmmbounds``.

    Returns
    -------
    SubspaceBasis
        ``saturated`` is false (and a warning logged) when ``max_samples``
        was reached first.
    """
    if int(d) < 1:
        raise ValueError("dimension must be >= 1")
    keys = list(keys)
    path = None
    if use_cache and cache_dir is not False:
        path = _cache_file(scenario, d, level, projective, seed, keys,
                           cache_dir or default_cache_dir(), nontrivial)
        if path.exists():
            try:
                b = SubspaceBasis.from_dict(json.loads(path.read_text()))
                if b.keys == keys and b.nontrivial == bool(nontrivial):
                    return b
            except (ValueError, KeyError):
                log.warning("ignoring unreadable basis cache %s", path)
    rng = np.random.default_rng(seed)
    Q = np.zeros((0, len(keys)))
    quiet = samples = 0
    while samples < max_samples and quiet < patience:
        r = sample_random_realization(d, scenario, projective=projective, rng=rng,
                                      nontrivial=nontrivial)
        v = _sample_vector(r, keys)
        samples += 1
        res = v - Q.T @ (Q @ v)
        res -= Q.T @ (Q @ res)
        nrm = float(np.linalg.norm(res))
        if nrm > threshold * max(1.0, float(np.linalg.norm(v))):
            Q = np.vstack([Q, res / nrm])
            quiet = 0
        else:
            quiet += 1
    saturated = quiet >= patience
    if not saturated:
        log.warning("basis for d=%s not saturated after %d samples (rank %d)", d, samples,
                    Q.shape[0])
    b = SubspaceBasis(scenario, int(d), str(level), bool(projective), int(seed), keys, Q,
                      samples, saturated, patience, threshold, bool(nontrivial))
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(b.to_dict()))
        tmp.replace(path)
    return b


def complement_constraints(b: SubspaceBasis, tol=1e-12):
    """Orthonormal rows ``C`` with ``C v = 0`` exactly on the span of ``b``.

    Entries below ``tol`` in magnitude are set to zero.
    """
    K = len(b.keys)
    if b.dimension == 0:
        C = np.eye(K)
    elif b.dimension >= K:
        C = np.zeros((0, K))
    else:
        C = la.null_space(b.vectors).T
    C = np.where(np.abs(C) < tol, 0.0, C)
    return C


# ---------------------------------------------------------------------------
# constraints on relaxations


def _add_complement(builder, exprs, C, label):
    for m, row in enumerate(C):
        e = Affine()
        for c, ex in zip(row, exprs):
            if c:
                e.iadd(ex, float(c))
        builder.add_equality(e, f"{label}[{m}]")


def dimension_hook(d, mode="povm", *, seed=0, max_samples=5000, patience=50, threshold=1e-7,
                   cache_dir=None, record=None, nontrivial=None):
    """Builder hook adding the ``S_d`` constraint in the chosen ``mode``.

    ``nontrivial`` (default: ``d >= 2``) restricts the sampled projective
    measurements to ones where every outcome has rank >= 1. Measurements with
    a certain outcome are not in the sampled set then; in ``d = 2`` the
    trivial ones alone already span every moment coordinate.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if nontrivial is None:
        nontrivial = int(d) >= 2

    def hook(b: MMMBuilder):
        sc = b.scenario
        lvl = level_label(b.level)
        if mode == "projective":
            keys = moment_keys(b, localizers=True)
            basis = sample_moment_basis(sc, d, keys, projective=True, seed=seed,
                                        max_samples=max_samples, patience=patience,
                                        threshold=threshold, level=lvl, cache_dir=cache_dir,
                                        nontrivial=nontrivial)
            exprs = [b.index.key_expr(k) for k in keys]
        else:
            gidx = MomentIndex(b.problem, sc, b.unit_value)
            tmpl = build_identity_template(b.words, sc)
            gamma = tmpl.instantiate(gidx)
            b.problem.add_psd(gamma, "Gamma")
            for k in list(gidx.variables):
                if is_fixed_key(k):
                    b.add_equality(gidx.key_expr(k) - b.index.key_expr(k), f"Gamma=P[{k}]")
            keys = sorted(gidx.variables, key=lambda k: (k.degree, str(k)))
            keys.insert(0, Monomial(tuple(() for _ in range(sc.parties))))
            basis = sample_moment_basis(sc, d, keys, projective=True, seed=seed,
                                        max_samples=max_samples, patience=patience,
                                        threshold=threshold, level=f"{lvl}-gamma",
                                        cache_dir=cache_dir, nontrivial=nontrivial)
            exprs = [gidx.key_expr(k) for k in keys]
        C = complement_constraints(basis)
        _add_complement(b, exprs, C, f"S{d}")
        b.problem.meta.update(dimension=d, sdi_mode=mode, nontrivial=bool(nontrivial),
                              basis_rank=basis.dimension,
                              basis_samples=basis.samples, basis_saturated=basis.saturated)
        if record is not None:
            record["basis"] = basis
    return hook


def assemble_ir_sdi(mode, value, d, level=2, *, f=None, scenario=None, P=None,
                    constraint="povm", party="A", seed=0, max_samples=5000, cache_dir=None,
                    words=None, record=None, nontrivial=None):
    """IR relaxation with a dimension bound.

    Parameters
    ----------
    mode : {"given-K", "given-IR0", "given-P"}
        Minimal robustness for ``f = value``; maximal ``f`` for robustness
        ``value``; or robustness for the table ``P`` (``value`` ignored).
    constraint : {"povm", "projective"}
        How ``S_d`` enters (see module docstring).
    nontrivial : bool, optional
        Sample only projective measurements without a certain outcome;
        defaults to ``d >= 2`` (see :func:`dimension_hook`).
    """
    hook = dimension_hook(d, constraint, seed=seed, max_samples=max_samples,
                          cache_dir=cache_dir, record=record, nontrivial=nontrivial)
    if mode == "given-K":
        p = assemble_ir_given_violation(f, value, level, party=party, words=words, builder_hook=hook)
    elif mode == "given-IR0":
        p = assemble_maxviolation_given_ir(f, value, level, party=party, words=words,
                                           builder_hook=hook)
    elif mode == "given-P":
        if scenario is None or P is None:
            raise ValueError("given-P mode needs a scenario and a table")
        p = assemble_ir_di_given_P(scenario, P, level, party=party, words=words, builder_hook=hook)
    else:
        raise ValueError("mode must be given-K, given-IR0 or given-P")
    return p


def ir_sdi(mode, value, d, level=2, settings=None, **kw):
    record = {}
    p = assemble_ir_sdi(mode, value, d, level, record=record, **kw)
    sol = solve(p, settings or SolverSettings())
    if not sol.ok:
        raise SolverError(f"{p.name}: solver returned {sol.status}", sol)
    b = record.get("basis")
    return QuantifierResult("IR", f"sdi-{mode}", float(sol.objective), level_label(level),
                            sol.status, sol,
                            {"d": d, "constraint": kw.get("constraint", "povm"),
                             "nontrivial": p.meta.get("nontrivial"),
                             "basis_rank": b.dimension if b else None,
                             "basis_saturated": b.saturated if b else None}, p)


# ---------------------------------------------------------------------------
# prepare-and-measure


def pm_scenario(n_settings, n_states, outcomes=2):
    return Scenario.prepare_measure(n_settings, n_states, outcomes)


def validate_pm(P, tol=1e-8):
    """Check a table ``P[a, x, y]`` of outcome probabilities."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 3:
        raise InvalidDistribution("prepare-and-measure tables have shape (outcomes, x, y)")
    if not np.all(np.isfinite(P)):
        raise InvalidDistribution("table contains non-finite entries")
    if P.min() < -tol:
        raise InvalidDistribution("negative probability")
    if np.max(np.abs(P.sum(axis=0) - 1)) > tol:
        raise InvalidDistribution("outcome probabilities do not sum to one")
    return P


def pm_fixed_values(scenario: Scenario, P):
    """Reduced keys ``rho_y -> 1`` and ``E_{a|x} rho_y -> P(a|x,y)`` (last outcome eliminated)."""
    P = validate_pm(P)
    nx = sum(1 for x in range(scenario.settings[0]) if scenario.is_projective(0, x))
    states = list(scenario.free[0])
    if P.shape[1:] != (nx, len(states)):
        raise InvalidDistribution(f"table shape {P.shape} does not match the scenario")
    out = {}
    for y, s in enumerate(states):
        out[moment_key(Monomial((((s, 0),),)))] = 1.0
        for x in range(nx):
            for a in range(scenario.outcomes[0][x] - 1):
                w = Monomial((((x, a), (s, 0)),))
                out[moment_key(w)] = float(P[a, x, y])
    return out


def assemble_ir_pm(P, d, level=2, *, projective=True, seed=0, max_samples=5000, cache_dir=None,
                   words=None, outcomes=None, record=None):
    """IR bound for Alice's measurements from a prepare-and-measure table ``P[a, x, y]``.

    Moments are traces (``tr[1] = d``) and the objective is normalised by
    ``d``. All moments of the relaxation are constrained to the span of
    ``d``-dimensional samples (projective measurements, random mixed
    states); with ``projective=False`` the samples use POVMs, which keeps
    only the observable constraints meaningful.
    """
    P = validate_pm(P)
    na, nx, ny = P.shape
    sc = pm_scenario(nx, ny, outcomes or na)
    b = MMMBuilder(sc, level, name="ir-pm", words=words, unit=float(d),
                   fixed=pm_fixed_values(sc, P))
    b.problem.meta.update(quantifier="IR", mode="given-P", scenario="prepare-measure", dimension=d)
    lams, G, units = _ir_core(b)
    s = b.normalised(units)
    _dominance(b, lams, G, +1)
    b.relaxed_normalization([("G", l) for l in lams], s, "norm")
    keys = moment_keys(b, localizers=True)
    basis = sample_moment_basis(sc, d, keys, projective=projective, seed=seed,
                                max_samples=max_samples, level=level_label(b.level),
                                cache_dir=cache_dir)
    C = complement_constraints(basis)
    _add_complement(b, [b.index.key_expr(k) for k in keys], C, f"S{d}")
    b.problem.meta.update(basis_rank=basis.dimension, basis_saturated=basis.saturated)
    b.problem.set_objective(s - 1.0, "min")
    if record is not None:
        record["basis"] = basis
    return b.problem


def ir_pm(P, d, level=2, settings=None, **kw):
    record = {}
    p = assemble_ir_pm(P, d, level, record=record, **kw)
    sol = solve(p, settings or SolverSettings())
    if not sol.ok:
        raise SolverError(f"{p.name}: solver returned {sol.status}", sol)
    b = record["basis"]
    return QuantifierResult("IR", "pm-given-P", float(sol.objective), level_label(level),
                            sol.status, sol, {"d": d, "basis_rank": b.dimension,
                                              "basis_saturated": b.saturated}, p)
