"""Solver-agnostic SDP container and its compilation to standard conic form.

A problem has real scalar variables, affine symmetric matrix blocks constrained
to be PSD, affine equalities (``expr == 0``), affine inequalities
(``expr >= 0``) and a linear objective.  Only the upper triangle of a block is
stored, so symmetry is structural.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from numbers import Number

import numpy as np
import scipy.sparse as sp

__all__ = ["Affine", "SdpProblem", "PsdBlock", "ConicForm", "CompileError", "compile_problem"]


class CompileError(ValueError):
    pass


class Affine:
    """Sparse affine expression ``sum_v coeff_v * x_v + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = terms if terms is not None else {}
        self.const = float(const)

    @classmethod
    def var(cls, index, coeff=1.0):
        return cls({index: float(coeff)})

    @classmethod
    def lift(cls, value):
        if isinstance(value, Affine):
            return value
        return cls({}, float(value))

    def copy(self):
        return Affine(dict(self.terms), self.const)

    def iadd(self, other, scale=1.0):
        """In-place ``self += scale * other``; returns self."""
        if isinstance(other, Affine):
            t = self.terms
            for k, v in other.terms.items():
                t[k] = t.get(k, 0.0) + scale * v
            self.const += scale * other.const
        else:
            self.const += scale * float(other)
        return self

    def __add__(self, other):
        if isinstance(other, Number) and not isinstance(other, Affine):
            return Affine(dict(self.terms), self.const + other)
        if not isinstance(other, Affine):
            return NotImplemented
        return self.copy().iadd(other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Number):
            return Affine(dict(self.terms), self.const - other)
        if not isinstance(other, Affine):
            return NotImplemented
        return self.copy().iadd(other, -1.0)

    def __rsub__(self, other):
        return (-self).iadd(other)

    def __neg__(self):
        return Affine({k: -v for k, v in self.terms.items()}, -self.const)

    def __mul__(self, other):
        if not isinstance(other, Number):
            return NotImplemented
        other = float(other)
        return Affine({k: v * other for k, v in self.terms.items()}, self.const * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / other)

    def pruned(self, tol=0.0):
        return Affine({k: v for k, v in self.terms.items() if abs(v) > tol}, self.const)

    def is_constant(self, tol=0.0):
        return all(abs(v) <= tol for v in self.terms.values())

    def value(self, x):
        return self.const + sum(v * x[k] for k, v in self.terms.items())

    def __repr__(self):
        inner = " + ".join(f"{v:g}*x{k}" for k, v in sorted(self.terms.items()))
        return f"Affine({inner or '0'} + {self.const:g})"


def _as_affine(v):
    return v if isinstance(v, Affine) else Affine({}, float(v))


@dataclass
class PsdBlock:
    label: str
    size: int
    entries: dict  # (i, j) with i <= j -> Affine

    def matrix_value(self, x):
        m = np.zeros((self.size, self.size))
        for (i, j), e in self.entries.items():
            m[i, j] = m[j, i] = e.value(x)
        return m


class SdpProblem:
    """Container for a semidefinite program over real scalar variables."""

    def __init__(self, name="", meta=None):
        self.name = name
        self.meta = dict(meta or {})
        self.var_labels = []
        self.blocks = []
        self.equalities = []     # list of (label, Affine) meaning expr == 0
        self.inequalities = []   # list of (label, Affine) meaning expr >= 0
        self.objective = Affine()
        self.sense = "min"

    @property
    def n_vars(self):
        return len(self.var_labels)

    def variable(self, label=None):
        self.var_labels.append(label if label is not None else f"x{len(self.var_labels)}")
        return Affine.var(len(self.var_labels) - 1)

    def add_psd(self, matrix, label=""):
        """Constrain a symmetric affine matrix (nested sequence or array) to be PSD."""
        n = len(matrix)
        entries = {}
        for i in range(n):
            row = matrix[i]
            if len(row) != n:
                raise ValueError("PSD block must be square")
            for j in range(i, n):
                e = row[j]
                if isinstance(e, Affine):
                    if e.terms or e.const:
                        entries[(i, j)] = e
                elif e:
                    entries[(i, j)] = Affine({}, float(e))
        block = PsdBlock(label or f"block{len(self.blocks)}", n, entries)
        self.blocks.append(block)
        return block

    def add_equality(self, expr, label=""):
        expr = _as_affine(expr)
        self.equalities.append((label, expr))

    def add_inequality(self, expr, label=""):
        """Constrain ``expr >= 0``."""
        self.inequalities.append((label, _as_affine(expr)))

    def set_objective(self, expr, sense="min"):
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        self.objective = _as_affine(expr)
        self.sense = sense

    def summary(self):
        return {
            "name": self.name,
            "variables": self.n_vars,
            "blocks": [b.size for b in self.blocks],
            "equalities": len(self.equalities),
            "inequalities": len(self.inequalities),
            "sense": self.sense,
        }


def svec_index(size):
    """Row index of entry (i, j), i <= j, in the column-major upper-triangle vector."""
    return lambda i, j: j * (j + 1) // 2 + i


@dataclass
class ConicForm:
    """``sense c.x + c0`` subject to ``A_eq x = b_eq``, ``G x + h >= 0`` and
    ``F_k x + f_k`` (upper-triangle, column-major, unscaled) PSD for every block."""

    n: int
    c: np.ndarray
    c0: float
    sense: str
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    block_sizes: list
    F: list = field(default_factory=list)
    f: list = field(default_factory=list)

    def canonical_bytes(self):
        parts = [repr((self.n, self.c0, self.sense, tuple(self.block_sizes))).encode()]
        arrays = [self.c, self.b_eq, self.h] + list(self.f)
        mats = [self.A_eq, self.G] + list(self.F)
        parts += [np.ascontiguousarray(a, dtype=float).tobytes() for a in arrays]
        for m in mats:
            m = sp.csr_matrix(m)
            m.sort_indices()
            parts += [m.indptr.tobytes(), m.indices.tobytes(), m.data.tobytes()]
        return b"".join(parts)

    def digest(self):
        return hashlib.sha256(self.canonical_bytes()).hexdigest()


def _rows_to_csr(exprs, n):
    indptr, indices, data = [0], [], []
    consts = np.zeros(len(exprs))
    for r, e in enumerate(exprs):
        for k in sorted(e.terms):
            v = e.terms[k]
            if v != 0.0:
                indices.append(k)
                data.append(v)
        indptr.append(len(indices))
        consts[r] = e.const
    mat = sp.csr_matrix((np.array(data, dtype=float), np.array(indices, dtype=np.int64),
                         np.array(indptr, dtype=np.int64)), shape=(len(exprs), n))
    return mat, consts


def compile_problem(problem: SdpProblem) -> ConicForm:
    """Lower a problem to arrays with deterministic (creation) variable order."""
    n = problem.n_vars
    if n == 0:
        raise CompileError("problem has no variables")
    used = np.zeros(n, dtype=bool)

    def mark(e):
        for k in e.terms:
            if not 0 <= k < n:
                raise CompileError(f"expression references unknown variable {k}")
            used[k] = True

    mark(problem.objective)
    for _, e in problem.equalities:
        mark(e)
    for _, e in problem.inequalities:
        mark(e)
    F, f, sizes = [], [], []
    for b in problem.blocks:
        pos = svec_index(b.size)
        exprs = [Affine() for _ in range(b.size * (b.size + 1) // 2)]
        for (i, j), e in b.entries.items():
            mark(e)
            exprs[pos(i, j)] = e
        mat, consts = _rows_to_csr(exprs, n)
        F.append(mat)
        f.append(consts)
        sizes.append(b.size)
    if not used.all():
        missing = [problem.var_labels[k] for k in np.flatnonzero(~used)[:5]]
        raise CompileError(f"dangling variables: {missing}")
    c = np.zeros(n)
    for k, v in problem.objective.terms.items():
        c[k] += v
    A_eq, b_eq = _rows_to_csr([e for _, e in problem.equalities], n)
    G, h = _rows_to_csr([e for _, e in problem.inequalities], n)
    return ConicForm(n=n, c=c, c0=problem.objective.const, sense=problem.sense,
                     A_eq=A_eq, b_eq=-b_eq, G=G, h=h, block_sizes=sizes, F=F, f=f)
