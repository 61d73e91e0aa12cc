"""Backend calls, independent solution validation and SDPA sparse export."""
from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .sdp import ConicForm, SdpProblem, compile_problem

log = logging.getLogger(__name__)

__all__ = [
    "SolverSettings",
    "Solution",
    "ResidualReport",
    "SolverError",
    "solve",
    "validate",
    "export_sdpa",
    "read_sdpa",
]

SQRT2 = np.sqrt(2.0)

OPTIMAL = "optimal"
NEAR_OPTIMAL = "near-optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical-failure"


class SolverError(RuntimeError):
    """Raised when a result is needed but the solver did not certify one."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


@dataclass
class SolverSettings:
    tolerance: float = 1e-8
    max_iters: int = 200
    verbose: bool = False
    backend: str = "clarabel"
    validate_tol: float | None = None  # defaults to ``tolerance``

    def as_dict(self):
        return {"tolerance": self.tolerance, "max_iters": self.max_iters,
                "backend": self.backend}


@dataclass
class ResidualReport:
    max_equality: float
    max_inequality: float
    max_psd_violation: float
    objective_error: float
    duality_gap: float | None = None
    dual_residual: float | None = None
    max_dual_cone_violation: float | None = None
    relative_psd_violation: float = 0.0
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def as_dict(self):
        return {k: getattr(self, k) for k in (
            "max_equality", "max_inequality", "max_psd_violation", "objective_error",
            "duality_gap", "dual_residual", "max_dual_cone_violation",
            "relative_psd_violation")} | {"ok": self.ok}


@dataclass
class Solution:
    status: str
    objective: float
    x: np.ndarray
    blocks: list
    residuals: ResidualReport | None
    dual_objective: float | None = None
    duals: dict | None = None
    solver_status: str = ""
    iterations: int = 0
    solve_time: float = 0.0
    reported_gap: float | None = None

    @property
    def ok(self):
        return self.status in (OPTIMAL, NEAR_OPTIMAL)

    def value(self, expr):
        return expr.value(self.x)

    def report(self):
        return {
            "status": self.status,
            "objective": self.objective,
            "dual_objective": self.dual_objective,
            "solver_status": self.solver_status,
            "iterations": self.iterations,
            "solve_time": self.solve_time,
            "residuals": self.residuals.as_dict() if self.residuals else None,
        }


def _svec_scale(size):
    """Scale factors for the column-major upper triangle (sqrt 2 off-diagonal)."""
    out = np.empty(size * (size + 1) // 2)
    k = 0
    for j in range(size):
        for i in range(j + 1):
            out[k] = 1.0 if i == j else SQRT2
            k += 1
    return out


def _smat(vec, size, scaled):
    m = np.zeros((size, size))
    k = 0
    for j in range(size):
        for i in range(j + 1):
            v = vec[k]
            if scaled and i != j:
                v = v / SQRT2
            m[i, j] = m[j, i] = v
            k += 1
    return m


def _clarabel_data(form: ConicForm):
    sign = 1.0 if form.sense == "min" else -1.0
    q = sign * form.c
    rows, rhs, cones = [], [], []
    import clarabel

    if form.A_eq.shape[0]:
        rows.append(form.A_eq)
        rhs.append(form.b_eq)
        cones.append(clarabel.ZeroConeT(form.A_eq.shape[0]))
    if form.G.shape[0]:
        rows.append(-form.G)
        rhs.append(form.h)
        cones.append(clarabel.NonnegativeConeT(form.G.shape[0]))
    for size, F, f in zip(form.block_sizes, form.F, form.f):
        s = _svec_scale(size)
        rows.append(-sp.diags(s) @ F)
        rhs.append(s * f)
        cones.append(clarabel.PSDTriangleConeT(size))
    A = sp.vstack(rows, format="csc") if rows else sp.csc_matrix((0, form.n))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    return q, A, b, cones, sign


_CLARABEL_STATUS = {
    "Solved": OPTIMAL,
    "AlmostSolved": NEAR_OPTIMAL,
    "PrimalInfeasible": INFEASIBLE,
    "AlmostPrimalInfeasible": INFEASIBLE,
    "DualInfeasible": UNBOUNDED,
    "AlmostDualInfeasible": UNBOUNDED,
}


def _split_duals(form, z):
    out = {}
    k = 0
    m = form.A_eq.shape[0]
    out["eq"] = z[k:k + m]
    k += m
    m = form.G.shape[0]
    out["ineq"] = z[k:k + m]
    k += m
    out["psd"] = []
    for size in form.block_sizes:
        m = size * (size + 1) // 2
        out["psd"].append(z[k:k + m])
        k += m
    return out


def _solve_clarabel(form, settings):
    import clarabel

    q, A, b, cones, sign = _clarabel_data(form)
    opts = clarabel.DefaultSettings()
    opts.verbose = settings.verbose
    opts.max_iter = settings.max_iters
    tol = settings.tolerance
    opts.tol_gap_abs = tol
    opts.tol_gap_rel = tol
    opts.tol_feas = tol
    opts.tol_ktratio = min(1e-6, tol * 1e2)
    P = sp.csc_matrix((form.n, form.n))
    solver = clarabel.DefaultSolver(P, q, A, b, cones, opts)
    res = solver.solve()
    status = _CLARABEL_STATUS.get(str(res.status), NUMERICAL_FAILURE)
    x = np.array(res.x)
    z = np.array(res.z)
    primal = sign * float(res.obj_val) + form.c0
    dual = sign * float(res.obj_val_dual) + form.c0
    return status, str(res.status), x, z, primal, dual, int(res.iterations), float(res.solve_time)


def _solve_scs(form, settings):
    import scs

    q, A, b, cones, sign = _clarabel_data(form)
    # SCS expects the lower triangle column-major; for symmetric data this is the
    # same set of entries in a different order.
    perm_rows, off = [], 0
    zero = form.A_eq.shape[0]
    nonneg = form.G.shape[0]
    perm_rows.extend(range(zero + nonneg))
    off = zero + nonneg
    for size in form.block_sizes:
        idx = {}
        k = 0
        for j in range(size):
            for i in range(j + 1):
                idx[(i, j)] = off + k
                k += 1
        for j in range(size):
            for i in range(j, size):
                perm_rows.append(idx[(j, i)])
        off += k
    perm_rows = np.array(perm_rows, dtype=int)
    A = sp.csc_matrix(A[perm_rows])
    b = b[perm_rows]
    data = {"A": A, "b": b, "c": q}
    cone = {"z": zero, "l": nonneg, "s": list(form.block_sizes)}
    solver = scs.SCS(data, cone, eps_abs=settings.tolerance, eps_rel=settings.tolerance,
                     max_iters=max(settings.max_iters, 100000), verbose=settings.verbose)
    res = solver.solve()
    info = res["info"]
    status = {"solved": OPTIMAL, "solved_inaccurate": NEAR_OPTIMAL,
              "infeasible": INFEASIBLE, "unbounded": UNBOUNDED}.get(info["status"], NUMERICAL_FAILURE)
    inv = np.empty_like(perm_rows)
    inv[perm_rows] = np.arange(len(perm_rows))
    z = np.asarray(res["y"])[inv]
    primal = sign * float(info["pobj"]) + form.c0
    dual = sign * float(info["dobj"]) + form.c0
    return status, info["status"], np.asarray(res["x"]), z, primal, dual, int(info["iter"]), \
        float(info["solve_time"]) / 1000.0


def solve(problem: SdpProblem, settings: SolverSettings | None = None, form=None) -> Solution:
    """Solve a problem; the returned status is never optimistic.

    ``optimal`` requires the independent primal-dual check of
    :func:`validate` to pass at the requested tolerance; a backend that
    stops at reduced accuracy is promoted only if that check succeeds, and a
    backend claim of convergence is demoted if it fails. The raw backend
    status is kept in ``solver_status``.
    """
    settings = settings or SolverSettings()
    form = form or compile_problem(problem)
    t0 = time.perf_counter()
    backend = {"clarabel": _solve_clarabel, "scs": _solve_scs}.get(settings.backend)
    if backend is None:
        raise ValueError(f"unknown backend {settings.backend!r}")
    try:
        status, raw, x, z, primal, dual, iters, _ = backend(form, settings)
    except Exception as exc:  # backend crashes surface as a status, never silently
        log.warning("backend failure on %s: %s", problem.name, exc)
        return Solution(NUMERICAL_FAILURE, float("nan"), np.full(form.n, np.nan), [], None,
                        solver_status=repr(exc))
    elapsed = time.perf_counter() - t0
    sol = Solution(status, primal, x, [], None, dual_objective=dual, solver_status=raw,
                   iterations=iters, solve_time=elapsed, reported_gap=abs(primal - dual))
    if status in (OPTIMAL, NEAR_OPTIMAL):
        sol.duals = _split_duals(form, z)
        sol.blocks = [b.matrix_value(x) for b in problem.blocks]
        tol = settings.validate_tol or settings.tolerance
        sol.residuals = validate(problem, sol, tol=tol, form=form)
        if status == OPTIMAL and not sol.residuals.ok:
            sol.status = NEAR_OPTIMAL
        elif status == NEAR_OPTIMAL and sol.residuals.ok and sol.duals is not None:
            # feasibility of both sides plus the gap, certified at the requested tolerance
            sol.status = OPTIMAL
    log.debug("%s: %s obj=%.9g (%d it, %.2fs)", problem.name, sol.status, sol.objective,
              iters, elapsed)
    return sol


def validate(problem: SdpProblem, solution: Solution, tol=1e-8, form=None) -> ResidualReport:
    """Recompute every residual from the primal (and dual, if present) vectors."""
    form = form or compile_problem(problem)
    x = np.asarray(solution.x, dtype=float)
    eq = form.A_eq @ x - form.b_eq
    max_eq = float(np.max(np.abs(eq))) if eq.size else 0.0
    ineq = form.G @ x + form.h
    max_in = float(max(0.0, -ineq.min())) if ineq.size else 0.0
    max_psd = rel_psd = 0.0
    for size, F, f in zip(form.block_sizes, form.F, form.f):
        ev = np.linalg.eigvalsh(_smat(F @ x + f, size, scaled=False))
        max_psd = max(max_psd, float(-ev[0]))
        # eigenvalue violation relative to the block scale, as in conic solvers
        rel_psd = max(rel_psd, float(-ev[0]) / max(1.0, float(np.abs(ev).max())))
    obj = float(form.c @ x + form.c0)
    obj_err = abs(obj - solution.objective)
    report = ResidualReport(max_eq, max_in, max_psd, obj_err, relative_psd_violation=rel_psd)
    scale = 1.0 + abs(obj)
    if max_eq > tol:
        report.violations.append(f"equality residual {max_eq:.3g}")
    if max_in > tol:
        report.violations.append(f"inequality violation {max_in:.3g}")
    if rel_psd > tol:
        report.violations.append(f"PSD violation {max_psd:.3g} (relative {rel_psd:.3g})")
    if obj_err > tol * scale:
        report.violations.append(f"objective mismatch {obj_err:.3g}")
    if solution.duals is not None:
        sign = 1.0 if form.sense == "min" else -1.0
        d = solution.duals
        grad = sign * form.c.copy()
        dual_obj = 0.0
        if form.A_eq.shape[0]:
            grad += form.A_eq.T @ d["eq"]
            dual_obj -= form.b_eq @ d["eq"]
        cone_violation = 0.0
        if form.G.shape[0]:
            grad -= form.G.T @ d["ineq"]
            dual_obj -= form.h @ d["ineq"]
            cone_violation = max(cone_violation, float(max(0.0, -d["ineq"].min())))
        for size, F, f, zk in zip(form.block_sizes, form.F, form.f, d["psd"]):
            s = _svec_scale(size)
            grad -= F.T @ (s * zk)
            dual_obj -= (s * f) @ zk
            cone_violation = max(cone_violation,
                                 float(-np.linalg.eigvalsh(_smat(zk, size, scaled=True))[0]))
        dual_obj = sign * dual_obj + form.c0
        report.dual_residual = float(np.max(np.abs(grad))) if grad.size else 0.0
        report.duality_gap = abs(obj - dual_obj)
        report.max_dual_cone_violation = max(cone_violation, 0.0)
        if report.dual_residual > tol * 10:
            report.violations.append(f"dual residual {report.dual_residual:.3g}")
        if report.duality_gap > tol * scale * 10:
            report.violations.append(f"duality gap {report.duality_gap:.3g}")
        if report.max_dual_cone_violation > tol:
            report.violations.append(f"dual cone violation {report.max_dual_cone_violation:.3g}")
    return report


def _fmt(v):
    v = float(v)
    if v == 0.0:
        return "0"
    return f"{v:.17g}"


def _eliminate_equalities(form: ConicForm, tol=1e-10):
    """Parametrise ``A_eq x = b_eq`` as ``x = x0 + N z``.

    Gauss-Jordan elimination with partial pivoting in column order; the free
    variables ``z`` are the non-pivot columns, so ``N`` is sparse and, for the
    small-integer equalities built by this package, has short exact entries.
    """
    n = form.n
    if form.A_eq.shape[0] == 0:
        return np.zeros(n), np.eye(n)
    A = form.A_eq.toarray().astype(float)
    b = np.asarray(form.b_eq, dtype=float).copy()
    m = A.shape[0]
    pivots, r = [], 0
    for c in range(n):
        if r == m:
            break
        p = r + int(np.argmax(np.abs(A[r:, c])))
        if abs(A[p, c]) <= tol:
            continue
        if p != r:
            A[[r, p]] = A[[p, r]]
            b[[r, p]] = b[[p, r]]
        piv = A[r, c]
        A[r] /= piv
        b[r] /= piv
        A[r, np.abs(A[r]) <= 1e-15] = 0.0
        for i in np.nonzero(A[:, c])[0]:
            if i != r:
                f = A[i, c]
                A[i] -= f * A[r]
                b[i] -= f * b[r]
                A[i, c] = 0.0
        pivots.append(c)
        r += 1
    if np.max(np.abs(b[r:]), initial=0.0) > 1e-9:
        raise ValueError("equality constraints are inconsistent")
    free = [c for c in range(n) if c not in set(pivots)]
    x0 = np.zeros(n)
    x0[pivots] = b[:r]
    N = np.zeros((n, len(free)))
    for k, c in enumerate(free):
        N[c, k] = 1.0
        N[pivots, k] = -A[:r, c]
    return x0, N


def export_sdpa(problem: SdpProblem, destination, form=None):
    """Write the problem in SDPA sparse format (``.dat-s``).

    The file encodes ``min c.z`` s.t. ``sum_i F_i z_i - F_0 >= 0`` over free
    variables ``z``.  Equalities are removed beforehand by the affine
    parametrisation ``x = x0 + N z`` and inequalities become one diagonal
    block. The file has no comment lines; the objective offset, the original
    sense and ``x0``/``N`` are returned so solutions can be mapped back via
    ``objective = offset + (+1 if min else -1) * (c . z)``.
    """
    form = form or compile_problem(problem)
    x0, N = _eliminate_equalities(form)
    m = N.shape[1]
    sign = 1.0 if form.sense == "min" else -1.0
    cz = sign * (form.c @ N)
    offset = float(form.c @ x0 + form.c0)
    blocks = []  # (size, is_diagonal, constant vector, coefficient matrix) in svec order
    for size, F, f in zip(form.block_sizes, form.F, form.f):
        blocks.append((size, False, F @ x0 + f, np.asarray(F @ N)))
    if form.G.shape[0]:
        blocks.append((form.G.shape[0], True, form.G @ x0 + form.h, np.asarray(form.G @ N)))
    lines = [
        str(m),
        str(len(blocks)),
        " ".join(str(-s if diag else s) for s, diag, _, _ in blocks),
        " ".join(_fmt(v) for v in np.where(np.abs(cz) < 1e-14, 0.0, cz)),
    ]
    for k in range(m + 1):
        for bi, (size, diag, const, coef) in enumerate(blocks, start=1):
            col = -const if k == 0 else coef[:, k - 1]
            if diag:
                pairs = ((i, i, col[i]) for i in range(size))
            else:
                pairs = []
                idx = 0
                for j in range(size):
                    for i in range(j + 1):
                        pairs.append((i, j, col[idx]))
                        idx += 1
            for i, j, v in pairs:
                if abs(v) > 1e-14:
                    lines.append(f"{k} {bi} {i + 1} {j + 1} {_fmt(v)}")
    text = "\n".join(lines) + "\n"
    destination = os.fspath(destination)
    with open(destination, "w", encoding="ascii") as fh:
        fh.write(text)
    return {"x0": x0, "N": N, "offset": offset, "sense": form.sense, "m": m}


def read_sdpa(path):
    """Parse an SDPA sparse file into ``(c, block_sizes, entries)``.

    ``entries`` maps constraint index ``k`` to lists of ``(block, i, j, value)``
    with 1-based indices as in the file.
    """
    with open(path, encoding="ascii") as fh:
        raw = [ln.strip() for ln in fh]
    lines = [ln for ln in raw if ln and ln[0] not in '*"']
    clean = lambda s: s.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " ")
    m = int(clean(lines[0]).split()[0])
    nblocks = int(clean(lines[1]).split()[0])
    sizes = [int(v) for v in clean(lines[2]).split()[:nblocks]]
    c = np.array([float(v) for v in clean(lines[3]).split()[:m]])
    entries = {k: [] for k in range(m + 1)}
    for ln in lines[4:]:
        k, b, i, j, v = clean(ln).split()[:5]
        entries[int(k)].append((int(b), int(i), int(j), float(v)))
    return c, sizes, entries
