"""Command-line interface: ``geokit solve|suite|grad-check|multistart``.

Option precedence is command-line flags over a ``key=value`` config file
(``--config``) over preset or built-in defaults. Exit code 2 signals a usage
error; solver failures are reported in the output rows with exit code 0.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from typing import Dict, List, Optional

from .bench import (
    PRESETS,
    SOLVERS,
    RunOptions,
    UsageError,
    grad_check,
    multistart,
    rows_to_csv,
    rows_to_json,
    run_single,
    run_suite,
    write_rows,
)
from .errors import GeoKitError
from .manifolds import MANIFOLDS

log = logging.getLogger("geokit")

_DEFAULTS = {
    "manifold": "sphere",
    "dim": None,
    "solver": "georce",
    "T": 100,
    "tol": 1e-4,
    "max_iter": 1000,
    "step": 0.01,
    "seed": 0,
    "perturb_scale": 0.0,
    "perturb": "normal",
    "finsler": None,
    "v0": 1.0,
    "force": "generic",
    "repeats": 5,
    "warmup": 1,
    "length_rule": "sum",
    "format": "csv",
    "start": None,
    "end": None,
    "param": None,
    "n_starts": 100,
    "count": 50,
    "solvers": None,
}

_TYPES = {
    "dim": int, "T": int, "max_iter": int, "seed": int, "repeats": int, "warmup": int, "n_starts": int,
    "count": int, "tol": float, "step": float, "perturb_scale": float, "v0": float,
}


def _vector(text):
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _read_config(path) -> Dict[str, object]:
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _DEFAULTS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        try:
            if key in _TYPES:
                out[key] = _TYPES[key](value)
            elif key in ("start", "end"):
                out[key] = _vector(value)
            elif key == "param":
                out[key] = [p.strip() for p in value.split(",") if p.strip()]
            else:
                out[key] = value
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}:{n}: bad value for {key}: {value!r}") from exc
    return out


def _merge(ns: argparse.Namespace, preset: Optional[dict] = None) -> Dict[str, object]:
    merged = dict(_DEFAULTS)
    merged.update(preset or {})
    if getattr(ns, "config", None):
        merged.update(_read_config(ns.config))
    for k, v in vars(ns).items():
        if v is not None and k in merged:
            merged[k] = v
    return merged


def _params(items) -> Dict[str, float]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--param expects K=V, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise UsageError(f"--param {k} needs a numeric value, got {v!r}") from None
    return out


def _run_options(o: Dict[str, object]) -> RunOptions:
    if o["solver"] not in SOLVERS:
        raise UsageError(f"unknown solver {o['solver']!r}")
    if o["finsler"] not in (None, "randers"):
        raise UsageError(f"unknown Finsler family {o['finsler']!r}")
    return RunOptions(
        manifold=o["manifold"],
        dim=o["dim"],
        params=_params(o["param"]),
        solver=o["solver"],
        geometry="finsler" if o["finsler"] else "riemannian",
        T=o["T"],
        tol=o["tol"],
        max_iter=o["max_iter"],
        step=o["step"],
        v0=o["v0"],
        force=o["force"],
        seed=o["seed"],
        perturb_scale=o["perturb_scale"],
        perturb=o["perturb"],
        start=o["start"],
        end=o["end"],
        repeats=o["repeats"],
        warmup=o["warmup"],
        length_rule=o["length_rule"],
    )


def _emit(text, out):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _add_problem(p, manifold_choices=MANIFOLDS):
    p.add_argument("--manifold", choices=manifold_choices)
    p.add_argument("--dim", type=int, help="chart dimension (matrix size for spd)")
    p.add_argument("--param", action="append", metavar="K=V", help="family parameter, repeatable")
    p.add_argument("--start", type=_vector, metavar="X1,X2,...")
    p.add_argument("--end", type=_vector, metavar="X1,X2,...")


def _add_solver(p):
    p.add_argument("--T", type=int, help="number of curve segments")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geokit", description="Discrete geodesic solvers and benchmarks.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one boundary value problem")
    _add_problem(s)
    _add_solver(s)
    s.add_argument("--solver", choices=SOLVERS)
    s.add_argument("--step", type=float, help="step size for gd and adam")
    s.add_argument("--perturb-scale", dest="perturb_scale", type=float)
    s.add_argument("--perturb", choices=("normal", "sign"))
    s.add_argument("--finsler", choices=("randers",))
    s.add_argument("--v0", type=float)
    s.add_argument("--force", choices=("generic", "none"))
    s.add_argument("--repeats", type=int)
    s.add_argument("--warmup", type=int)
    s.add_argument("--length-rule", dest="length_rule", choices=("sum", "trapezoid"))
    s.add_argument("--format", choices=("csv", "json"))
    s.add_argument("--trace", metavar="PATH", help="write iteration,grad_norm CSV")
    s.add_argument("--out", metavar="PATH")
    s.add_argument("--config", metavar="PATH")

    u = sub.add_parser("suite", help="run a benchmark preset")
    u.add_argument("--preset", required=True, choices=tuple(PRESETS))
    u.add_argument("--solvers", help="comma-separated solver list (may be empty)")
    _add_solver(u)
    u.add_argument("--repeats", type=int)
    u.add_argument("--warmup", type=int)
    u.add_argument("--v0", type=float)
    u.add_argument("--force", choices=("generic", "none"))
    u.add_argument("--length-rule", dest="length_rule", choices=("sum", "trapezoid"))
    u.add_argument("--format", choices=("csv", "json"))
    u.add_argument("--out", metavar="PATH")
    u.add_argument("--config", metavar="PATH")

    g = sub.add_parser("grad-check", help="compare analytic gradients with finite differences")
    g.add_argument("--manifold", required=True, choices=MANIFOLDS + ("all",))
    g.add_argument("--dim", type=int)
    g.add_argument("--param", action="append", metavar="K=V")
    g.add_argument("--count", type=int)
    g.add_argument("--seed", type=int)

    m = sub.add_parser("multistart", help="GEORCE from perturbed straight-line initializations")
    _add_problem(m)
    _add_solver(m)
    m.add_argument("--n-starts", dest="n_starts", type=int)
    m.add_argument("--perturb-scale", dest="perturb_scale", type=float)
    m.add_argument("--perturb", choices=("normal", "sign"))
    m.add_argument("--out", metavar="PATH")
    m.add_argument("--config", metavar="PATH")
    return parser


def _cmd_solve(ns) -> int:
    o = _merge(ns)
    opts = _run_options(o)
    row, _ = run_single(opts, trace_path=ns.trace)
    text = rows_to_json([row]) if o["format"] == "json" else rows_to_csv([row])
    _emit(text, ns.out)
    return 0


def _cmd_suite(ns) -> int:
    o = _merge(ns)
    solvers = None
    if ns.solvers is not None or "solvers" in (_read_config(ns.config) if ns.config else {}):
        raw = o["solvers"] or ""
        solvers = [s.strip() for s in raw.split(",") if s.strip()]
    overrides = {}
    for key in ("T", "tol", "max_iter", "seed", "repeats", "warmup", "v0", "force", "length_rule"):
        explicit = getattr(ns, key, None) is not None or (ns.config and key in _read_config(ns.config))
        if explicit:
            overrides[key] = o[key]
    rows = run_suite(ns.preset, out=None, solvers=solvers, overrides=overrides, fmt=o["format"])
    if ns.out is None:
        _emit(rows_to_json(rows) if o["format"] == "json" else rows_to_csv(rows), None)
    else:
        try:
            write_rows(ns.out, rows, o["format"])
        except OSError as exc:
            raise UsageError(f"cannot write {ns.out}: {exc}") from exc
    return 0


def _cmd_grad_check(ns) -> int:
    names = MANIFOLDS if ns.manifold == "all" else (ns.manifold,)
    count = 50 if ns.count is None else ns.count
    seed = 0 if ns.seed is None else ns.seed
    params = _params(ns.param)
    all_ok = True
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["manifold", "probe", "nu_rel_err", "grad_rel_err", "status"])
    for name in names:
        report = grad_check(name, count=count, seed=seed, dim=ns.dim, **(params if len(names) == 1 else {}))
        for p in report.probes:
            w.writerow([name, p.index, f"{p.nu_error:.3e}", f"{p.grad_error:.3e}", "pass" if p.passed else "FAIL"])
        all_ok &= report.passed
        print(f"# {name}: {'PASS' if report.passed else 'FAIL'} "
              f"(max nu err {report.max_nu_error:.2e}, max grad err {report.max_grad_error:.2e})")
    print(f"# overall: {'PASS' if all_ok else 'FAIL'}")
    return 0


def _cmd_multistart(ns) -> int:
    o = _merge(ns)
    res = multistart(
        o["manifold"], n_starts=o["n_starts"], perturb_scale=o["perturb_scale"] or 1.0, seed=o["seed"],
        start=o["start"], end=o["end"], dim=o["dim"], T=o["T"], tol=o["tol"], max_iter=o["max_iter"],
        kind=o["perturb"], **_params(o["param"]),
    )
    lines = ["start,seed,length,iterations,termination"]
    lines += [f"{r['start']},{r['seed']},{r['length']!r},{r['iterations']},{r['termination']}" for r in res.rows]
    lines += [f"# cluster {i}: length {c:.6f} count {n}" for i, (c, n) in enumerate(res.clusters)]
    lines.append(f"# distinct minima: {res.n_clusters}")
    _emit("\n".join(lines), ns.out)
    return 0


_COMMANDS = {"solve": _cmd_solve, "suite": _cmd_suite, "grad-check": _cmd_grad_check, "multistart": _cmd_multistart}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(ns.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[ns.command](ns)
    except (UsageError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"geokit: error: {msg}", file=sys.stderr)
        return 2
    except GeoKitError as exc:
        print(f"geokit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
