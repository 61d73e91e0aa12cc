"""Command-line front end.

Subcommands ``ir``, ``gmir``, ``pm``, ``oracle`` and ``export``. Every run
writes a JSON record (config echo, results, solver residuals, wall time,
version, timestamp) and, for tabular results, a CSV with one row per point.

Exit codes: 0 success, 2 configuration error, 3 solver numerical failure.
"""
from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import datetime as _dt
import io
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import Scenario
from .bell import REGISTRY_ENV, get_functional
from .moment import InvalidDistribution, validate_distribution
from .oracle import (
    Realization,
    RealizationError,
    born_rule,
    gmir_device,
    pauli,
    tilted_chsh_realization,
    variant_device,
)
from .quantifiers import (
    VARIANTS,
    BisectionSettings,
    InfeasibleTarget,
    assemble_ir_given_violation,
    assemble_maxviolation_given_ir,
    assemble_variant,
    gmi_threshold,
    gmir_di_given_P,
    ir_given_violation,
    max_violation,
    min_ir_given_violation,
    tradeoff_curve,
    variant_di_given_P,
)
from .sdi import ir_pm, ir_sdi
from .solve import SolverError, SolverSettings, export_sdpa

log = logging.getLogger("mmmbounds")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# inputs


def parse_grid(text):
    """``"a:b:step"`` (inclusive) or a comma list; must be sorted."""
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    elif ":" in text:
        a, b, step = (float(v) for v in text.split(":"))
        if step <= 0:
            raise ConfigError("grid step must be positive")
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        vals = [round(a + i * step, 12) for i in range(n)]
    else:
        vals = [float(v) for v in text.split(",") if v.strip()]
    if not vals:
        raise ConfigError("grid is empty")
    if any(y < x for x, y in zip(vals, vals[1:])):
        raise ConfigError("grid must be sorted")
    return vals


def load_table(path, tol=1e-8):
    """Read ``{"scenario": {...}, "table": P[a][b][x][y]}`` and validate it."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read table {path}: {exc}") from exc
    P = np.asarray(data["table"], dtype=float)
    sc_data = data.get("scenario") or {}
    if "outcomes" in sc_data:
        sc = Scenario(tuple(tuple(o) for o in sc_data["outcomes"]))
    elif "settings" in sc_data:
        sc = Scenario.bell(*sc_data["settings"])
    elif P.ndim == 4:
        sc = Scenario.bell(P.shape[2], P.shape[3], P.shape[0], P.shape[1])
    else:
        raise ConfigError("table needs a scenario")
    validate_distribution(sc, P, tol)
    return sc, P


def write_table(path, scenario, P):
    data = {"scenario": {"outcomes": [list(o) for o in scenario.outcomes]},
            "table": np.asarray(P).tolist()}
    _atomic_write(path, json.dumps(data, indent=1))


def load_pm_table(path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read table {path}: {exc}") from exc
    return np.asarray(data["table"], dtype=float)


def _functional(args):
    params = {}
    for item in args.param or []:
        k, _, v = item.partition("=")
        params[k] = float(v)
    if getattr(args, "alpha", None) is not None:
        params.setdefault("alpha", args.alpha)
    return get_functional(args.ineq, args.registry, **params)


def _settings(args):
    return SolverSettings(tolerance=args.tol, max_iters=args.max_iters, backend=args.backend,
                          verbose=args.verbose)


# ---------------------------------------------------------------------------
# families of realizations


def family_realization(name, alpha=0.0):
    """Built-in explicit realizations used by the ``oracle`` command."""
    I, X, Y, Z = pauli()
    proj = lambda O: [(I + O) / 2, (I - O) / 2]
    phi = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    rho = np.outer(phi, phi.conj())
    if name == "tilted-chsh":
        return tilted_chsh_realization(alpha)[0]
    if name == "pauli-xyz":
        return Realization((2, 2), rho, [[proj(X), proj(Y), proj(Z)],
                                         [proj(X), proj(Y.conj()), proj(Z)]])
    if name == "mub-pair":
        return Realization((2, 2), rho, [[proj(Z), proj(X)],
                                         [proj((Z + X) / np.sqrt(2)), proj((Z - X) / np.sqrt(2))]])
    raise ConfigError(f"unknown family {name!r}")


def _assemblage(r: Realization, side):
    p = 0 if side == "A" else 1
    if p >= len(r.measurements):
        raise ConfigError("realization has no such party")
    ms = [m for x, m in enumerate(r.measurements[p]) if x not in r.free[p]]
    return ms, r.dims[p]


# ---------------------------------------------------------------------------
# output


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _scalar(v):
    return isinstance(v, (int, float, str, bool)) or v is None


def rows_to_csv(rows):
    cols = []
    for r in rows:
        for k, v in r.items():
            if _scalar(v) and k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k) for k in cols})
    return buf.getvalue()


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    return o


def config_echo(args):
    skip = {"func", "config"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def emit(args, rows, extra=None, t0=None):
    record = {
        "config": config_echo(args),
        "results": rows,
        "wall_time": None if t0 is None else time.perf_counter() - t0,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        record.update(extra)
    record = _jsonable(record)
    text = json.dumps(record, indent=1)
    if args.out:
        _atomic_write(f"{args.out}.json", text)
        _atomic_write(f"{args.out}.csv", rows_to_csv(rows))
    else:
        sys.stdout.write(rows_to_csv(rows))
    return record


def _row(result, **extra):
    out = {k: v for k, v in result.as_dict().items() if k != "history"}
    out.update(extra)
    return out


def _failed(rows):
    return any(r.get("status") in ("failed", "numerical-failure") for r in rows)


def _pool_map(fn, items, workers):
    if workers <= 1:
        return [fn(i) for i in items]
    with cf.ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# commands


def _alpha_point(job):
    alpha, level, quantifier, settings = job
    r, v = tilted_chsh_realization(alpha)
    P = born_rule(r)
    row = {"alpha": alpha, "violation": v}
    try:
        di = variant_di_given_P(quantifier, Scenario.bell(2, 2), P, level, settings, party="B")
        dev = variant_device(quantifier, r.measurements[1], 2, settings)
        row.update(ir_di=di.value, ir_device=dev.value, status=di.status,
                   device_status=dev.status)
    except SolverError as exc:
        row.update(ir_di=math.nan, ir_device=math.nan, status="failed", error=str(exc))
    return row


def cmd_ir(args):
    t0 = time.perf_counter()
    st = _settings(args)
    level = args.level
    if args.alpha_grid:
        grid = parse_grid(args.alpha_grid)
        rows = _pool_map(_alpha_point, [(a, level, args.quantifier, st) for a in grid],
                         args.workers)
        emit(args, rows, t0=t0)
        return EXIT_SOLVER if _failed(rows) else EXIT_OK
    if args.p_table:
        sc, P = load_table(args.p_table)
        if args.dimension:
            res = ir_sdi("given-P", None, args.dimension, level, scenario=sc, P=P,
                         constraint=args.sdi_mode, party=args.party, seed=args.seed,
                         nontrivial=not args.all_ranks, settings=st)
        else:
            res = variant_di_given_P(args.quantifier, sc, P, level, st, party=args.party)
        emit(args, [_row(res)], t0=t0)
        return EXIT_OK
    if not args.ineq:
        raise ConfigError("give --ineq, --p-table or --alpha-grid")
    f = _functional(args)
    if args.ir_grid or args.k_grid:
        rows = tradeoff_curve(f, level, ir_grid=parse_grid(args.ir_grid),
                              k_grid=parse_grid(args.k_grid), settings=st, party=args.party)
        emit(args, rows, t0=t0)
        return EXIT_SOLVER if _failed(rows) else EXIT_OK
    if args.violation is not None:
        if args.dimension:
            res = ir_sdi("given-K", args.violation, args.dimension, level, f=f,
                         constraint=args.sdi_mode, party=args.party, seed=args.seed,
                         nontrivial=not args.all_ranks, settings=st)
        elif args.method == "bisection":
            res = min_ir_given_violation(f, args.violation, level, st,
                                         BisectionSettings(tol=args.bisection_tol),
                                         party=args.party)
        else:
            res = ir_given_violation(f, args.violation, level, st, party=args.party)
        emit(args, [_row(res, violation=args.violation)], t0=t0)
        return EXIT_OK
    if args.ir0 is not None:
        if args.dimension:
            res = ir_sdi("given-IR0", args.ir0, args.dimension, level, f=f,
                         constraint=args.sdi_mode, party=args.party, seed=args.seed,
                         nontrivial=not args.all_ranks, settings=st)
        else:
            res = max_violation(f, args.ir0, level, st, party=args.party)
        emit(args, [_row(res, ir=args.ir0, violation=res.value)], t0=t0)
        return EXIT_OK
    raise ConfigError("give --violation, --ir0, --ir-grid or --k-grid with --ineq")


def cmd_gmir(args):
    t0 = time.perf_counter()
    st = _settings(args)
    if args.p_table:
        sc, P = load_table(args.p_table)
        res = gmir_di_given_P(sc, P, args.level, st, party=args.party)
        emit(args, [_row(res)], t0=t0)
        return EXIT_OK
    if not args.ineq:
        raise ConfigError("give --ineq or --p-table")
    f = _functional(args)
    rows = []
    if args.threshold:
        res = gmi_threshold(f, args.level, st, party=args.party)
        rows.append(_row(res, ir=0.0, violation=res.value))
    if args.ir_grid:
        rows += tradeoff_curve(f, args.level, ir_grid=parse_grid(args.ir_grid), settings=st,
                               gmir=True, party=args.party)
    if args.violation is not None:
        if args.method == "bisection":
            res = min_ir_given_violation(f, args.violation, args.level, st,
                                         BisectionSettings(tol=args.bisection_tol), gmir=True,
                                         party=args.party)
        else:
            res = ir_given_violation(f, args.violation, args.level, st, gmir=True,
                                     party=args.party)
        rows.append(_row(res, violation=args.violation))
    if not rows:
        raise ConfigError("give --threshold, --ir-grid or --violation")
    emit(args, rows, t0=t0)
    return EXIT_SOLVER if _failed(rows) else EXIT_OK


def cmd_pm(args):
    t0 = time.perf_counter()
    P = load_pm_table(args.p_table)
    res = ir_pm(P, args.dimension, args.level, _settings(args),
                projective=not args.povm_samples, seed=args.seed)
    emit(args, [_row(res)], t0=t0)
    return EXIT_OK


def cmd_oracle(args):
    t0 = time.perf_counter()
    st = _settings(args)
    if args.realization:
        try:
            r = Realization.loads(Path(args.realization).read_text()).validate()
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"invalid realization file: {exc}") from exc
    else:
        r = family_realization(args.family, args.alpha or 0.0)
        r.validate()
    extra = {}
    row = {"family": args.family if not args.realization else "file", "side": args.side}
    if args.emit_p:
        P = born_rule(r)
        sc = Scenario(tuple(tuple(len(m) for m in party) for party in r.measurements))
        write_table(args.emit_p, sc, P)
        row["table"] = str(args.emit_p)
        if args.ineq:
            row["violation"] = _functional(args).value(P)
        elif args.family == "tilted-chsh":
            row["violation"] = tilted_chsh_realization(args.alpha or 0.0)[1]
    if args.quantifier:
        ms, d = _assemblage(r, args.side)
        q = args.quantifier.upper()
        res = gmir_device(ms, d, st) if q == "GMIR" else variant_device(q, ms, d, st)
        row.update(quantifier=q, value=res.value, status=res.status)
        extra["residuals"] = res.solution.residuals.as_dict() if res.solution.residuals else None
    emit(args, [row], extra, t0=t0)
    return EXIT_OK


def cmd_export(args):
    st = _settings(args)
    del st
    if args.problem == "ir-given-p":
        if not args.p_table:
            raise ConfigError("ir-given-p needs --p-table")
        sc, P = load_table(args.p_table)
        prob = assemble_variant(args.quantifier, sc, P, args.level, party=args.party)
    elif args.problem == "maxviolation":
        prob = assemble_maxviolation_given_ir(_functional(args), args.ir0 or 0.0, args.level,
                                              party=args.party)
    elif args.problem == "given-violation":
        if args.violation is None:
            raise ConfigError("given-violation needs --violation")
        prob = assemble_ir_given_violation(_functional(args), args.violation, args.level,
                                           party=args.party)
    else:  # device
        from .oracle import assemble_variant_device
        r = family_realization(args.family, args.alpha or 0.0)
        ms, d = _assemblage(r, args.side)
        prob = assemble_variant_device(args.quantifier, ms, d)
    info = export_sdpa(prob, args.out_file)
    meta = {"problem": args.problem, "file": str(args.out_file), "offset": info["offset"],
            "sense": info["sense"], "free_variables": int(info["N"].shape[1]),
            "constraints": info.get("m")}
    sys.stdout.write(json.dumps(_jsonable({"config": config_echo(args), **meta}), indent=1) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p):
    p.add_argument("--config", help="JSON file mirroring the command-line flags")
    p.add_argument("--level", default="2", help="hierarchy level, e.g. 1, 2 or 2+")
    p.add_argument("--party", default="A", choices=["A", "B"],
                   help="party whose measurements are quantified")
    p.add_argument("--registry", default=None,
                   help=f"Bell registry file (default: packaged, or ${REGISTRY_ENV})")
    p.add_argument("--param", action="append", metavar="NAME=VALUE",
                   help="registry parameter, e.g. alpha=0.5")
    p.add_argument("--tol", type=float, default=1e-8, help="solver and validation tolerance")
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--backend", default="clarabel", choices=["clarabel", "scs"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="processes for grid points")
    p.add_argument("--out", default=None, help="output prefix for .csv and .json")
    p.add_argument("--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="mmmbounds", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ir", help="incompatibility robustness bounds")
    _common(p)
    p.add_argument("--ineq")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--alpha-grid", help="tilted-CHSH sweep a:b:step (Bob's robustness)")
    p.add_argument("--p-table", help="observed table JSON")
    p.add_argument("--quantifier", default="IR", choices=list(VARIANTS))
    p.add_argument("--violation", type=float, default=None)
    p.add_argument("--ir0", type=float, default=None)
    p.add_argument("--ir-grid")
    p.add_argument("--k-grid")
    p.add_argument("--method", default="direct", choices=["direct", "bisection"])
    p.add_argument("--bisection-tol", type=float, default=1e-4)
    p.add_argument("--dimension", type=int, default=None, help="Hilbert-space dimension bound")
    p.add_argument("--sdi-mode", default="povm", choices=["povm", "projective"])
    p.add_argument("--all-ranks", action="store_true",
                   help="also sample projectors with a certain outcome for the dimension bound")
    p.set_defaults(func=cmd_ir)

    p = sub.add_parser("gmir", help="genuine triplewise incompatibility")
    _common(p)
    p.add_argument("--ineq")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--p-table")
    p.add_argument("--threshold", action="store_true")
    p.add_argument("--ir-grid")
    p.add_argument("--violation", type=float, default=None)
    p.add_argument("--method", default="direct", choices=["direct", "bisection"])
    p.add_argument("--bisection-tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gmir)

    p = sub.add_parser("pm", help="prepare-and-measure robustness bound")
    _common(p)
    p.add_argument("--p-table", required=False)
    p.add_argument("--dimension", type=int, default=2)
    p.add_argument("--povm-samples", action="store_true",
                   help="sample POVMs instead of projective measurements")
    p.set_defaults(func=cmd_pm)

    p = sub.add_parser("oracle", help="device-level quantifiers of explicit realizations")
    _common(p)
    p.add_argument("--family", default="tilted-chsh",
                   choices=["tilted-chsh", "pauli-xyz", "mub-pair"])
    p.add_argument("--realization", help="realization JSON file")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--side", default="A", choices=["A", "B"])
    p.add_argument("--quantifier", default=None,
                   choices=[v.lower() for v in VARIANTS] + ["gmir"] + list(VARIANTS) + ["GMIR"])
    p.add_argument("--emit-p", help="write the Born-rule table to this JSON file")
    p.add_argument("--ineq", default=None, help="evaluate this inequality on the emitted table")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("export", help="write a problem in SDPA sparse format")
    _common(p)
    p.add_argument("--problem", default="maxviolation",
                   choices=["ir-given-p", "maxviolation", "given-violation", "device"])
    p.add_argument("--ineq", default="chsh")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--p-table")
    p.add_argument("--quantifier", default="IR", choices=list(VARIANTS))
    p.add_argument("--ir0", type=float, default=None)
    p.add_argument("--violation", type=float, default=None)
    p.add_argument("--family", default="mub-pair", choices=["tilted-chsh", "pauli-xyz", "mub-pair"])
    p.add_argument("--side", default="A", choices=["A", "B"])
    p.add_argument("--out-file", required=True, help="destination .dat-s file")
    p.set_defaults(func=cmd_export)
    return parser, sub


def parse_args(argv=None):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config: {exc}")
        sp = sub.choices[args.command]
        cfg = cfg.get("config", cfg)  # accept a full record as well as a bare config
        for k, v in cfg.items():
            if k == "command":
                if v != args.command:
                    parser.error(f"config is for command {v!r}")
                continue
            if not hasattr(args, k):
                parser.error(f"unknown config key {k!r}")
            if getattr(args, k) == sp.get_default(k):
                setattr(args, k, v)
    return args


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.INFO)
    try:
        return args.func(args)
    except SolverError as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return EXIT_SOLVER
    except (ConfigError, InfeasibleTarget, InvalidDistribution, RealizationError, KeyError,
            ValueError) as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
