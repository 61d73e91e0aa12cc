"""Bell functionals and the shipped registry of inequalities.

A functional is a linear form on a joint table ``P[a, b, x, y]``::

    I(P) = c0 + sum c_ab^xy P(a,b|x,y) + sum c_a^x P_A(a|x) + sum c_b^y P_B(b|y)

Registry entries may be written in correlator form (dichotomic outcomes,
outcome 0 <-> +1) or in probability form, and may depend on named
parameters (e.g. ``alpha`` for the tilted CHSH family). An optional
``scale`` multiplies the whole functional, constant included.
"""
from __future__ import annotations

import ast
import itertools
import json
import math
import operator
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .algebra import Scenario

__all__ = ["BellFunctional", "load_registry", "get_functional", "registry_path", "REGISTRY_ENV"]

REGISTRY_ENV = "MMMBOUNDS_REGISTRY"

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow, ast.USub: operator.neg,
        ast.UAdd: operator.pos}
_FUNCS = {"sqrt": math.sqrt, "cos": math.cos, "sin": math.sin, "pi": math.pi}


def _evaluate(expr, params):
    """Evaluate a numeric literal or a small arithmetic expression over parameters."""
    if isinstance(expr, (int, float)):
        return float(expr)

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in params:
                return float(params[node.id])
            if node.id in _FUNCS and not callable(_FUNCS[node.id]):
                return _FUNCS[node.id]
            raise ValueError(f"unknown parameter {node.id!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](walk(node.operand))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and callable(_FUNCS.get(node.func.id)) and len(node.args) == 1:
            return _FUNCS[node.func.id](walk(node.args[0]))
        raise ValueError(f"unsupported expression {expr!r}")

    return walk(ast.parse(str(expr), mode="eval"))


@dataclass(frozen=True)
class BellFunctional:
    name: str
    scenario: Scenario
    joint: dict = field(default_factory=dict)     # (a, b, x, y) -> coeff
    marginal_a: dict = field(default_factory=dict)  # (a, x) -> coeff
    marginal_b: dict = field(default_factory=dict)  # (b, y) -> coeff
    constant: float = 0.0
    local_bound: float | None = None
    quantum_bound: float | None = None
    source: str = ""
    params: dict = field(default_factory=dict)

    def value(self, P) -> float:
        P = np.asarray(P, dtype=float)
        pa = P.sum(axis=1)[:, :, 0]
        pb = P.sum(axis=0)[:, 0, :]
        v = self.constant
        v += sum(c * P[a, b, x, y] for (a, b, x, y), c in self.joint.items())
        v += sum(c * pa[a, x] for (a, x), c in self.marginal_a.items())
        v += sum(c * pb[b, y] for (b, y), c in self.marginal_b.items())
        return float(v)

    def expression(self, index):
        """Affine expression of the functional in the moment variables of ``index``."""
        from .sdp import Affine

        out = Affine.lift(self.constant)
        for (a, b, x, y), c in self.joint.items():
            out.iadd(index.probability((0, x, a), (1, y, b)), c)
        for (a, x), c in self.marginal_a.items():
            out.iadd(index.probability((0, x, a)), c)
        for (b, y), c in self.marginal_b.items():
            out.iadd(index.probability((1, y, b)), c)
        return out

    def swapped(self) -> "BellFunctional":
        """The same functional with the roles of the two parties exchanged."""
        sc = Scenario((self.scenario.outcomes[1], self.scenario.outcomes[0]))
        return BellFunctional(
            self.name + "[swapped]", sc,
            {(b, a, y, x): c for (a, b, x, y), c in self.joint.items()},
            dict(self.marginal_b), dict(self.marginal_a), self.constant,
            self.local_bound, self.quantum_bound, self.source, dict(self.params))

    def local_value(self) -> float:
        """Maximum over deterministic local strategies (exhaustive enumeration)."""
        oa, ob = self.scenario.outcomes
        na, nb = max(oa), max(ob)
        best = -math.inf
        for la in itertools.product(*(range(n) for n in oa)):
            for lb in itertools.product(*(range(n) for n in ob)):
                P = np.zeros((na, nb, len(oa), len(ob)))
                for x, a in enumerate(la):
                    for y, b in enumerate(lb):
                        P[a, b, x, y] = 1.0
                best = max(best, self.value(P))
        return best

    def to_dict(self):
        return {
            "name": self.name,
            "outcomes": [list(o) for o in self.scenario.outcomes],
            "form": "probability",
            "joint": [[a, b, x, y, c] for (a, b, x, y), c in sorted(self.joint.items())],
            "marginal_a": [[a, x, c] for (a, x), c in sorted(self.marginal_a.items())],
            "marginal_b": [[b, y, c] for (b, y), c in sorted(self.marginal_b.items())],
            "constant": self.constant,
            "local_bound": self.local_bound,
            "quantum_bound": self.quantum_bound,
            "source": self.source,
            "params": self.params,
        }


def _add(d, k, v):
    if v:
        d[k] = d.get(k, 0.0) + v


def _from_entry(entry, params):
    params = {**entry.get("parameters", {}), **(params or {})}
    ev = lambda e: _evaluate(e, params)
    if "outcomes" in entry:
        outcomes = tuple(tuple(int(n) for n in o) for o in entry["outcomes"])
    else:
        X, Y = entry["settings"]
        outcomes = ((2,) * X, (2,) * Y)
    sc = Scenario(outcomes)
    X, Y = sc.settings
    joint, ma, mb = {}, {}, {}
    const = ev(entry.get("constant", 0))
    form = entry.get("form", "probability")
    if form == "correlator":
        if not sc.dichotomic():
            raise ValueError("correlator form needs dichotomic outcomes")
        AB = entry.get("AB", [[0] * Y for _ in range(X)])
        A = entry.get("A", [0] * X)
        B = entry.get("B", [0] * Y)
        sign = lambda o: 1.0 - 2.0 * o
        for x in range(X):
            for y in range(Y):
                c = ev(AB[x][y])
                for a in range(2):
                    for b in range(2):
                        _add(joint, (a, b, x, y), c * sign(a) * sign(b))
            c = ev(A[x])
            for a in range(2):
                _add(ma, (a, x), c * sign(a))
        for y in range(Y):
            c = ev(B[y])
            for b in range(2):
                _add(mb, (b, y), c * sign(b))
    elif form == "probability":
        # dense rows refer to outcome 0, sparse lists give explicit outcomes
        if "AB" in entry:
            for x in range(X):
                for y in range(Y):
                    _add(joint, (0, 0, x, y), ev(entry["AB"][x][y]))
        for x, c in enumerate(entry.get("A", [])):
            _add(ma, (0, x), ev(c))
        for y, c in enumerate(entry.get("B", [])):
            _add(mb, (0, y), ev(c))
        for a, b, x, y, c in entry.get("joint", []):
            _add(joint, (a, b, x, y), ev(c))
        for a, x, c in entry.get("marginal_a", []):
            _add(ma, (a, x), ev(c))
        for b, y, c in entry.get("marginal_b", []):
            _add(mb, (b, y), ev(c))
    else:
        raise ValueError(f"unknown form {form!r}")
    # optional overall factor, applied to coefficients and constant alike
    scale = ev(entry.get("scale", 1))
    if scale != 1:
        for table in (joint, ma, mb):
            for k in table:
                table[k] *= scale
        const *= scale
    lb = entry.get("local_bound")
    qb = entry.get("quantum_bound")
    return BellFunctional(
        entry["name"], sc, joint, ma, mb, const,
        None if lb is None else ev(lb), None if qb is None else ev(qb),
        entry.get("source", ""), params)


def registry_path():
    override = os.environ.get(REGISTRY_ENV)
    if override:
        return override
    return str(resources.files("mmmbounds").joinpath("data/bell_registry.json"))


def load_registry(path=None):
    """Raw registry entries keyed by name."""
    path = path or registry_path()
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    entries = data["inequalities"] if isinstance(data, dict) else data
    return {e["name"]: e for e in entries}


def get_functional(name, path=None, **params) -> BellFunctional:
    reg = load_registry(path)
    if name not in reg:
        raise KeyError(f"unknown inequality {name!r}; known: {sorted(reg)}")
    return _from_entry(reg[name], params)
