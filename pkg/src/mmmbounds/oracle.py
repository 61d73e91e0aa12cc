"""Device-level ground truth: explicit realizations and matrix-level SDPs.

Complex Hermitian variables are handled through the real embedding
``H -> [[Re H, -Im H], [Im H, Re H]]``, which is PSD iff ``H`` is.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
import scipy.linalg as la

from .algebra import Scenario
from .sdp import Affine, SdpProblem
from .solve import SolverError, SolverSettings, solve

__all__ = [
    "Realization",
    "RealizationError",
    "DeviceResult",
    "born_rule",
    "tilted_chsh_realization",
    "tilted_chsh_angles",
    "sample_random_realization",
    "naimark_dilation",
    "pauli",
    "ir_device",
    "variant_device",
    "gmir_device",
    "assemble_ir_device",
    "assemble_variant_device",
    "assemble_gmir_device",
    "VARIANTS",
]

VARIANTS = ("IR", "IRJ", "IRP", "IRR", "IW")


class RealizationError(ValueError):
    pass


def pauli():
    """Return ``(I, X, Y, Z)``."""
    return (np.eye(2, dtype=complex),
            np.array([[0, 1], [1, 0]], dtype=complex),
            np.array([[0, -1j], [1j, 0]], dtype=complex),
            np.array([[1, 0], [0, -1]], dtype=complex))


def _spectral_pair(obs):
    """Projectors onto the +1 (outcome 0) and -1 (outcome 1) eigenspaces."""
    eye = np.eye(obs.shape[0])
    return [(eye + obs) / 2, (eye - obs) / 2]


@dataclass
class Realization:
    """States and measurements on finite-dimensional spaces.

    Attributes
    ----------
    dims : tuple of int
        Local dimension per party.
    state : ndarray or None
        Joint density matrix. ``None`` means expectations are plain traces
        (prepare-and-measure, where the prepared states are the one-outcome
        "measurements" of the free settings).
    measurements : list
        ``measurements[p][x][a]`` is the effect matrix of outcome ``a`` of
        setting ``x`` of party ``p``.
    projective : bool
        Whether measurements are declared projective.
    """

    dims: tuple
    state: np.ndarray | None
    measurements: list
    projective: bool = True
    free: tuple = field(default=())

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if not self.free:
            self.free = tuple(() for _ in self.dims)
        self.measurements = [[[np.asarray(E, dtype=complex) for E in povm] for povm in party]
                             for party in self.measurements]

    @property
    def scenario(self):
        return Scenario(tuple(tuple(len(povm) for povm in party) for party in self.measurements),
                        self.free if any(self.free) else ())

    def validate(self, tol=1e-10):
        if len(self.measurements) != len(self.dims):
            raise RealizationError("one measurement list per party is required")
        for p, party in enumerate(self.measurements):
            d = self.dims[p]
            for x, povm in enumerate(party):
                for E in povm:
                    if E.shape != (d, d):
                        raise RealizationError(f"effect of party {p} has shape {E.shape}")
                    if np.max(np.abs(E - E.conj().T)) > tol:
                        raise RealizationError("effect is not Hermitian")
                    if np.linalg.eigvalsh(E)[0] < -tol:
                        raise RealizationError("effect is not PSD")
                if x in self.free[p]:
                    if abs(np.trace(povm[0]) - 1) > tol:
                        raise RealizationError("prepared state must have unit trace")
                    continue
                if np.max(np.abs(sum(povm) - np.eye(d))) > tol:
                    raise RealizationError(f"effects of party {p}, setting {x} do not sum to 1")
                if self.projective:
                    for a, E in enumerate(povm):
                        for b, F in enumerate(povm):
                            target = E if a == b else np.zeros_like(E)
                            if np.max(np.abs(E @ F - target)) > tol:
                                raise RealizationError("measurement declared projective is not")
        if self.state is not None:
            D = int(np.prod(self.dims))
            rho = self.state
            if rho.shape != (D, D):
                raise RealizationError("state has the wrong shape")
            if np.max(np.abs(rho - rho.conj().T)) > tol or abs(np.trace(rho) - 1) > tol:
                raise RealizationError("state must be Hermitian with unit trace")
            if np.linalg.eigvalsh(rho)[0] < -tol:
                raise RealizationError("state is not PSD")
        return self

    # expectations -----------------------------------------------------------
    def operator(self, party, word):
        d = self.dims[party]
        out = np.eye(d, dtype=complex)
        for x, a in word:
            out = out @ self.measurements[party][x][a]
        return out

    def joint(self, factors):
        return reduce(np.kron, (self.operator(p, f) for p, f in enumerate(factors)))

    def expectation(self, op):
        if self.state is None:
            return complex(np.trace(op))
        return complex(np.trace(op @ self.state))

    def moment(self, m):
        """``tr[w rho]`` (or ``tr[w]`` without a state) for a word ``m``."""
        return self.expectation(self.joint(m))

    def unknown_moment(self, G, key):
        """``tr[(A_l G A_r^dagger) (x) R rho]`` for an unknown-block key."""
        A = self.operator(0, key.left) @ G @ self.operator(0, key.right).conj().T
        ops = [A] + [self.operator(p + 1, f) for p, f in enumerate(key.rest)]
        return self.expectation(reduce(np.kron, ops))

    def conjugated(self, unitaries):
        """Apply local unitaries to every effect (state untouched)."""
        meas = [[[U @ E @ U.conj().T for E in povm] for povm in party]
                for U, party in zip(unitaries, self.measurements)]
        return Realization(self.dims, self.state, meas, self.projective, self.free)

    def swapped(self):
        """Exchange the two parties of a bipartite realization."""
        if len(self.dims) != 2:
            raise RealizationError("swap needs two parties")
        dA, dB = self.dims
        state = None
        if self.state is not None:
            state = self.state.reshape(dA, dB, dA, dB).transpose(1, 0, 3, 2).reshape(dA * dB, dA * dB)
        return Realization((dB, dA), state, [self.measurements[1], self.measurements[0]],
                           self.projective, (self.free[1], self.free[0]))

    # serialisation ------------------------------------------------------------
    def to_dict(self):
        enc = lambda M: {"re": np.real(M).tolist(), "im": np.imag(M).tolist()}
        return {
            "dims": list(self.dims),
            "state": None if self.state is None else enc(self.state),
            "measurements": [[[enc(E) for E in povm] for povm in party] for party in self.measurements],
            "projective": bool(self.projective),
            "free": [list(f) for f in self.free],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            dec = lambda d: np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
            state = None if data.get("state") is None else dec(data["state"])
            meas = [[[dec(E) for E in povm] for povm in party] for party in data["measurements"]]
            free = tuple(tuple(f) for f in data.get("free", ())) or ()
            return cls(tuple(data["dims"]), state, meas, bool(data.get("projective", False)), free)
        except (KeyError, TypeError, ValueError) as exc:
            raise RealizationError(f"malformed realization: {exc}") from exc

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def born_rule(r: Realization) -> np.ndarray:
    """Joint table ``P[a, b, x, y]`` (bipartite) or ``P[a, x, y]`` (prepare-and-measure).

    In the prepare-and-measure layout party 0 owns the measurements
    (settings not flagged free) and the prepared states (free settings).
    """
    if r.state is None:
        meas = [x for x in range(len(r.measurements[0])) if x not in r.free[0]]
        states = [r.measurements[0][y][0] for y in r.free[0]]
        na = max(len(r.measurements[0][x]) for x in meas)
        P = np.zeros((na, len(meas), len(states)))
        for i, x in enumerate(meas):
            for a, E in enumerate(r.measurements[0][x]):
                for y, rho in enumerate(states):
                    P[a, i, y] = np.real(np.trace(E @ rho))
        return P
    if len(r.dims) != 2:
        raise RealizationError("Born tables are produced for two parties")
    A, B = r.measurements
    na = max(len(p) for p in A)
    nb = max(len(p) for p in B)
    P = np.zeros((na, nb, len(A), len(B)))
    for x, povm_a in enumerate(A):
        for y, povm_b in enumerate(B):
            for a, Ea in enumerate(povm_a):
                for b, Eb in enumerate(povm_b):
                    P[a, b, x, y] = np.real(np.trace(np.kron(Ea, Eb) @ r.state))
    return P


def tilted_chsh_angles(alpha):
    """State angle ``theta`` and Bob's measurement angle ``mu``; ``theta(0) = pi/4``."""
    alpha = float(alpha)
    if not 0 <= alpha < 2:
        raise ValueError("alpha must lie in [0, 2)")
    if alpha == 0:
        theta = np.pi / 4
    else:
        theta = 0.5 * np.arctan(np.sqrt((4 - alpha ** 2) / (2 * alpha ** 2)))
    mu = np.arctan(np.sin(2 * theta))
    return theta, mu


def tilted_chsh_realization(alpha):
    """Optimal realization of ``alpha<A_0> + <A_0B_0> + <A_0B_1> + <A_1B_0> - <A_1B_1>``.

    Alice measures ``Z`` then ``X``; Bob measures ``cos(mu) Z +- sin(mu) X``
    on ``cos(theta)|00> + sin(theta)|11>``. Outcome 0 is the +1 eigenvalue.
    Returns ``(realization, value)`` with the Born-rule value of the functional.
    """
    theta, mu = tilted_chsh_angles(alpha)
    _, X, _, Z = pauli()
    psi = np.zeros(4, dtype=complex)
    psi[0], psi[3] = np.cos(theta), np.sin(theta)
    rho = np.outer(psi, psi.conj())
    A = [_spectral_pair(Z), _spectral_pair(X)]
    B = [_spectral_pair(np.cos(mu) * Z + np.sin(mu) * X),
         _spectral_pair(np.cos(mu) * Z - np.sin(mu) * X)]
    r = Realization((2, 2), rho, [A, B], projective=True)
    P = born_rule(r)
    corr = lambda x, y: P[0, 0, x, y] + P[1, 1, x, y] - P[0, 1, x, y] - P[1, 0, x, y]
    a0 = P[0, :, 0, 0].sum() - P[1, :, 0, 0].sum()
    value = alpha * a0 + corr(0, 0) + corr(0, 1) + corr(1, 0) - corr(1, 1)
    return r, float(value)


# ---------------------------------------------------------------------------
# random sampling


def _haar_unitary(d, rng):
    Z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    ph = np.diag(R) / np.abs(np.diag(R))
    return Q * ph


def _random_projective(d, n, rng, nontrivial=False):
    U = _haar_unitary(d, rng)
    labels = rng.integers(0, n, size=d)
    if nontrivial and d >= n:
        # every outcome gets at least one basis vector
        labels[:n] = np.arange(n)
        rng.shuffle(labels)
    return [U[:, labels == a] @ U[:, labels == a].conj().T for a in range(n)]


def _random_povm(d, n, rng):
    Ms = []
    for _ in range(n):
        W = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        Ms.append(W @ W.conj().T)
    S = sum(Ms)
    w, V = np.linalg.eigh(S)
    S_inv_half = V @ np.diag(w ** -0.5) @ V.conj().T
    out = [S_inv_half @ M @ S_inv_half for M in Ms]
    return [(E + E.conj().T) / 2 for E in out]


def _random_density(d, rng, rank=None):
    rank = rank or d
    W = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = W @ W.conj().T
    return rho / np.trace(rho)


def sample_random_realization(d, scenario: Scenario, seed=None, projective=True, rng=None,
                              mixed_state=False, nontrivial=False):
    """Random realization of ``scenario`` in local dimension ``d``.

    Parameters
    ----------
    d : int or sequence of int
        Local dimension (per party if a sequence).
    projective : bool
        Random-rank projective measurements if true, normalised random PSD
        effects otherwise.
    mixed_state : bool
        Draw a full-rank mixed joint state instead of a pure one (Bell mode).
        Prepared states of free settings are always random-rank mixed.
    nontrivial : bool
        Projective measurements give every outcome rank >= 1 (when the
        dimension allows it), i.e. no outcome is impossible or certain.
    """
    rng = rng if rng is not None else np.random.default_rng(seed)
    dims = tuple([int(d)] * scenario.parties) if np.isscalar(d) else tuple(int(v) for v in d)
    if min(dims) < 1:
        raise ValueError("dimension must be >= 1")
    meas = []
    for p in range(scenario.parties):
        party = []
        for x, n in enumerate(scenario.outcomes[p]):
            if x in scenario.free[p]:
                party.append([_random_density(dims[p], rng, int(rng.integers(1, dims[p] + 1)))])
            elif projective:
                party.append(_random_projective(dims[p], n, rng, nontrivial))
            else:
                party.append(_random_povm(dims[p], n, rng))
        meas.append(party)
    free = scenario.free if any(scenario.free) else ()
    if any(scenario.free):
        state = None
    else:
        D = int(np.prod(dims))
        if mixed_state:
            state = _random_density(D, rng)
        else:
            psi = rng.standard_normal(D) + 1j * rng.standard_normal(D)
            psi /= np.linalg.norm(psi)
            state = np.outer(psi, psi.conj())
    return Realization(dims, state, meas, projective, free)


def naimark_dilation(r: Realization) -> Realization:
    """Projective realization with identical statistics (bipartite, with a state).

    Each party gets an ancilla of dimension ``max_x |A_x|``; setting ``x`` is
    implemented by a unitary completing ``|psi>|0> -> sum_a sqrt(E_a)|psi>|a>``.
    """
    if r.state is None:
        raise RealizationError("dilation needs a state")
    new_meas, new_dims, embeds = [], [], []
    for p, party in enumerate(r.measurements):
        d = r.dims[p]
        k = max(len(povm) for povm in party)
        D = d * k
        projs = []
        for povm in party:
            V = np.zeros((D, d), dtype=complex)
            for a, E in enumerate(povm):
                w, U = np.linalg.eigh(E)
                root = U @ np.diag(np.sqrt(np.clip(w, 0, None))) @ U.conj().T
                # |psi> (x) |a> ordered as system index * k + a
                V[a::k, :] = root
            comp = la.null_space(V.conj().T)
            W = np.hstack([V, comp])  # unitary; columns 0..d-1 realise V on |psi>|0>
            emb = np.zeros((D, D), dtype=complex)
            # basis vector |psi_i>|0> sits at index i * k; map column i of W there
            order = [i * k for i in range(d)] + [i * k + j for i in range(d) for j in range(1, k)]
            emb[:, order] = W
            proj = []
            for a in range(k):
                if a >= len(povm):
                    continue
                Pa = np.zeros((D, D))
                Pa[a::k, a::k] = np.eye(d)
                proj.append(emb.conj().T @ Pa @ emb)
            if len(povm) < k:
                # fold the unused ancilla outcomes into the last effect
                rest = np.eye(D) - sum(proj[:-1])
                proj[-1] = rest
            projs.append(proj)
        new_meas.append(projs)
        new_dims.append(D)
        anc = np.zeros((k, k))
        anc[0, 0] = 1
        embeds.append((d, k, anc))
    (dA, kA, ancA), (dB, kB, ancB) = embeds
    rho = r.state.reshape(dA, dB, dA, dB)
    big = np.einsum("ijkl,mn,pq->imjpknlq", rho, ancA, ancB).reshape(dA * kA * dB * kB, -1)
    return Realization(tuple(new_dims), big, new_meas, projective=True)


# ---------------------------------------------------------------------------
# matrix-level SDPs


class _HVar:
    """A Hermitian matrix variable (or constant) held as real/imaginary Affine arrays."""

    def __init__(self, re, im):
        self.re, self.im = re, im

    @classmethod
    def new(cls, problem, d, label):
        re = np.empty((d, d), dtype=object)
        im = np.empty((d, d), dtype=object)
        for i in range(d):
            re[i, i] = problem.variable(f"{label}.re[{i},{i}]")
            im[i, i] = Affine()
            for j in range(i + 1, d):
                re[i, j] = re[j, i] = problem.variable(f"{label}.re[{i},{j}]")
                v = problem.variable(f"{label}.im[{i},{j}]")
                im[i, j] = v
                im[j, i] = -v
        return cls(re, im)

    @classmethod
    def const(cls, M):
        M = np.asarray(M, dtype=complex)
        wrap = np.vectorize(lambda v: Affine.lift(float(v)), otypes=[object])
        return cls(wrap(M.real), wrap(M.imag))

    @classmethod
    def zeros(cls, d):
        return cls.const(np.zeros((d, d)))

    def __add__(self, o):
        return _HVar(self.re + o.re, self.im + o.im)

    def __sub__(self, o):
        return _HVar(self.re - o.re, self.im - o.im)

    def scale(self, s):
        if isinstance(s, Affine):
            raise TypeError("scalar must be numeric")
        return _HVar(self.re * s, self.im * s)

    def trace(self):
        return sum(self.re[i, i] for i in range(self.re.shape[0])) + Affine()

    def embed(self):
        d = self.re.shape[0]
        M = np.empty((2 * d, 2 * d), dtype=object)
        M[:d, :d] = self.re
        M[d:, d:] = self.re
        M[:d, d:] = -self.im
        M[d:, :d] = self.im
        return M.tolist()

    def entries(self):
        d = self.re.shape[0]
        for i in range(d):
            for j in range(i, d):
                yield ("re", i, j), self.re[i, j]
                if i != j:
                    yield ("im", i, j), self.im[i, j]


def _hsum(items, d):
    out = _HVar.zeros(d)
    for h in items:
        out = out + h
    return out


def _identity_times(expr, d):
    re = np.empty((d, d), dtype=object)
    im = np.empty((d, d), dtype=object)
    for i in range(d):
        for j in range(d):
            re[i, j] = expr * 1.0 if i == j else Affine()
            im[i, j] = Affine()
    return _HVar(re, im)


def _psd(problem, h, label):
    problem.add_psd(h.embed(), label)


def _equal(problem, h, label):
    """Constrain a Hermitian affine matrix to vanish."""
    for (part, i, j), e in h.entries():
        problem.add_equality(e, f"{label}.{part}[{i},{j}]")


def _check_assemblage(assemblage, d, tol=1e-8):
    assemblage = [[np.asarray(E, dtype=complex) for E in povm] for povm in assemblage]
    if not assemblage:
        raise RealizationError("empty assemblage")
    for povm in assemblage:
        for E in povm:
            if E.shape != (d, d):
                raise RealizationError("effect has the wrong dimension")
            if np.max(np.abs(E - E.conj().T)) > tol or np.linalg.eigvalsh(E)[0] < -tol:
                raise RealizationError("effects must be Hermitian PSD")
        if np.max(np.abs(sum(povm) - np.eye(d))) > tol:
            raise RealizationError("effects must sum to the identity")
    return assemblage


def _strategies(assemblage):
    return list(itertools.product(*(range(len(povm)) for povm in assemblage)))


@dataclass
class DeviceResult:
    value: float
    solution: object
    problem: SdpProblem

    @property
    def status(self):
        return self.solution.status


def assemble_ir_device(assemblage, d):
    """Incompatibility robustness of an explicit assemblage (arbitrary noise)."""
    return assemble_variant_device("IR", assemblage, d)


def assemble_variant_device(variant, assemblage, d):
    """Matrix-level SDP of one quantifier.

    ``IR``: min s - 1 with ``sum_l delta G_l >= E``, ``sum_l G_l = s 1``.
    ``IRJ``: jointly measurable noise, ``E = sum_l delta (G_l - H_l)``.
    ``IRP``: noise ``q(a|x) 1`` with ``q >= 0``.
    ``IRR``: white noise ``1/|A_x|``.
    ``IW``: weight, min 1 - s with ``E >= sum_l delta G_l``.
    Here ``s = tr(sum_l G_l) / d``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown quantifier {variant!r}; expected one of {VARIANTS}")
    assemblage = _check_assemblage(assemblage, d)
    lams = _strategies(assemblage)
    prob = SdpProblem(f"device-{variant}", {"d": d, "settings": len(assemblage)})
    G = {lam: _HVar.new(prob, d, f"G{lam}") for lam in lams}
    for lam, g in G.items():
        _psd(prob, g, f"G{lam}>=0")
    sG = sum((g.trace() for g in G.values()), Affine()) / d
    _equal(prob, _hsum(G.values(), d) - _identity_times(sG, d), "sumG")
    E = [[_HVar.const(M) for M in povm] for povm in assemblage]

    def marg(ops, a, x):
        return _hsum([ops[lam] for lam in lams if lam[x] == a], d)

    if variant == "IR":
        for x, povm in enumerate(E):
            for a, e in enumerate(povm):
                _psd(prob, marg(G, a, x) - e, f"dom[{a}|{x}]")
        prob.set_objective(sG - 1.0, "min")
    elif variant == "IW":
        for x, povm in enumerate(E):
            for a, e in enumerate(povm):
                _psd(prob, e - marg(G, a, x), f"dom[{a}|{x}]")
        prob.set_objective(1.0 - sG, "min")
    elif variant == "IRJ":
        H = {lam: _HVar.new(prob, d, f"H{lam}") for lam in lams}
        for lam, h in H.items():
            _psd(prob, h, f"H{lam}>=0")
        sH = sum((h.trace() for h in H.values()), Affine()) / d
        _equal(prob, _hsum(H.values(), d) - _identity_times(sH, d), "sumH")
        prob.add_equality(sH - sG + 1.0, "weights")
        for x, povm in enumerate(E):
            for a, e in enumerate(povm):
                _equal(prob, marg(G, a, x) - marg(H, a, x) - e, f"dec[{a}|{x}]")
        prob.set_objective(sH, "min")
    elif variant == "IRP":
        q = {(a, x): prob.variable(f"q[{a}|{x}]") for x, povm in enumerate(E) for a in range(len(povm))}
        for key, v in q.items():
            prob.add_inequality(v, f"q{key}>=0")
        for x, povm in enumerate(E):
            prob.add_equality(sum((q[(a, x)] for a in range(len(povm))), Affine()) - sG + 1.0,
                              f"sumq[{x}]")
            for a, e in enumerate(povm):
                _equal(prob, marg(G, a, x) - _identity_times(q[(a, x)], d) - e, f"dec[{a}|{x}]")
        prob.set_objective(sG - 1.0, "min")
    elif variant == "IRR":
        for x, povm in enumerate(E):
            n = len(povm)
            for a, e in enumerate(povm):
                _equal(prob, marg(G, a, x) - _identity_times((sG - 1.0) / n, d) - e, f"dec[{a}|{x}]")
        prob.set_objective(sG - 1.0, "min")
    return prob


def _run(problem, settings):
    sol = solve(problem, settings)
    if not sol.ok:
        raise SolverError(f"{problem.name}: solver returned {sol.status}", sol)
    return DeviceResult(float(sol.objective), sol, problem)


def ir_device(assemblage, d, settings=None):
    """Incompatibility robustness (arbitrary noise) of an explicit assemblage."""
    return _run(assemble_ir_device(assemblage, d), settings or SolverSettings())


def variant_device(variant, assemblage, d, settings=None):
    return _run(assemble_variant_device(variant, assemblage, d), settings or SolverSettings())


PAIRS = ((0, 1), (0, 2), (1, 2))


def _pair_of(s, t):
    return (min(s, t), max(s, t))


def assemble_gmir_device(assemblage, d):
    """Genuine triplewise incompatibility robustness of three measurements.

    For each pair ``(s, t)`` a parent ``G^{st}_l`` with ``l`` ranging over the
    outcomes of ``s`` and ``t``, and for the complementary setting ``x`` an
    unconstrained POVM-like ``J^{st}_{a|x}`` with ``sum_a J = sum_l G^{st}_l``.
    """
    assemblage = _check_assemblage(assemblage, d)
    if len(assemblage) != 3:
        raise RealizationError("genuine triplewise robustness needs exactly three settings")
    prob = SdpProblem("device-GMIR", {"d": d})
    n = [len(p) for p in assemblage]
    G, s_pair = {}, {}
    for (s, t) in PAIRS:
        for lam in itertools.product(range(n[s]), range(n[t])):
            g = _HVar.new(prob, d, f"G{s}{t}{lam}")
            _psd(prob, g, f"G{s}{t}{lam}>=0")
            G[(s, t, lam)] = g
        blocks = [G[(s, t, lam)] for lam in itertools.product(range(n[s]), range(n[t]))]
        s_pair[(s, t)] = sum((g.trace() for g in blocks), Affine()) / d
        _equal(prob, _hsum(blocks, d) - _identity_times(s_pair[(s, t)], d), f"sumG{s}{t}")
    E = [[_HVar.const(M) for M in povm] for povm in assemblage]
    for (s, t) in PAIRS:
        x = 3 - s - t
        total = _hsum([G[(s, t, lam)] for lam in itertools.product(range(n[s]), range(n[t]))], d)
        J = []
        for a in range(n[x]):
            j = _HVar.new(prob, d, f"J{s}{t}[{a}|{x}]")
            _psd(prob, j, f"J{s}{t}[{a}|{x}]>=0")
            J.append(j)
        _equal(prob, _hsum(J, d) - total, f"sumJ{s}{t}")
        for a in range(n[x]):
            parts = []
            for other in (s, t):
                p = _pair_of(other, x)
                pos = 0 if p[0] == x else 1
                parts += [G[(p[0], p[1], lam)] for lam in itertools.product(range(n[p[0]]), range(n[p[1]]))
                          if lam[pos] == a]
            _psd(prob, _hsum(parts, d) + J[a] - E[x][a], f"dom[{a}|{x}]")
    prob.set_objective(sum(s_pair.values(), Affine()) - 1.0, "min")
    return prob


def gmir_device(assemblage, d, settings=None):
    return _run(assemble_gmir_device(assemblage, d), settings or SolverSettings())
