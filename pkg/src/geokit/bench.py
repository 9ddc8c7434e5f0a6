"""Experiment runner: single solves, benchmark grids, gradient checks, multistart studies.

Rows are plain records that serialize to a fixed-header CSV (or a JSON
mirror); timing follows one warm-up run plus ``repeats`` timed runs.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .baselines import FirstOrderConfig, adam_solve, gd_solve, sparse_newton_solve
from .core import discretize_line, energy_gradient_interior, fd_gradient, energy
from .errors import GeoKitError
from .georce import SeededPerturbation, SolverConfig, georce_finsler_solve, georce_solve
from .manifolds import MANIFOLDS, UnknownManifoldError, load
from .randers import RandersField

__all__ = [
    "CSV_HEADER",
    "SOLVERS",
    "PRESETS",
    "UsageError",
    "ExperimentRow",
    "RunOptions",
    "rows_to_csv",
    "rows_from_csv",
    "rows_to_json",
    "rows_from_json",
    "write_rows",
    "build_problem",
    "solve_once",
    "run_single",
    "write_trace",
    "preset_cells",
    "run_suite",
    "ProbeResult",
    "GradCheckReport",
    "grad_check",
    "MultistartResult",
    "multistart",
    "cluster_lengths",
]

log = logging.getLogger(__name__)

CSV_HEADER = (
    "manifold", "dim", "geometry", "solver", "T", "length", "energy", "iterations",
    "final_grad_norm", "wall_ms_mean", "wall_ms_std", "termination", "seed",
)
SOLVERS = ("georce", "gd", "adam", "sparse-newton", "sparse-newton-reg")


class UsageError(GeoKitError, ValueError):
    """Invalid combination of experiment options."""


@dataclass
class ExperimentRow:
    manifold: str
    dim: int
    geometry: str
    solver: str
    T: int
    length: float
    energy: float
    iterations: int
    final_grad_norm: float
    wall_ms_mean: float
    wall_ms_std: float
    termination: str
    seed: int

    _INT = ("dim", "T", "iterations", "seed")
    _FLOAT = ("length", "energy", "final_grad_norm", "wall_ms_mean", "wall_ms_std")

    def __post_init__(self):
        # numpy scalars would leak their repr into the CSV
        for k in self._INT:
            setattr(self, k, int(getattr(self, k)))
        for k in self._FLOAT:
            setattr(self, k, float(getattr(self, k)))

    def as_dict(self) -> Dict[str, object]:
        return {k: getattr(self, k) for k in CSV_HEADER}

    @classmethod
    def from_dict(cls, d) -> "ExperimentRow":
        kw = {}
        for k in CSV_HEADER:
            v = d[k]
            if k in cls._INT:
                v = int(v)
            elif k in cls._FLOAT:
                v = float(v)
            else:
                v = str(v)
            kw[k] = v
        return cls(**kw)


def rows_to_csv(rows: Iterable[ExperimentRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r.as_dict().values()])
    return buf.getvalue()


def rows_from_csv(text: str) -> List[ExperimentRow]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    return [ExperimentRow.from_dict(d) for d in reader]


def rows_to_json(rows: Iterable[ExperimentRow]) -> str:
    return json.dumps([r.as_dict() for r in rows], indent=2)


def rows_from_json(text: str) -> List[ExperimentRow]:
    return [ExperimentRow.from_dict(d) for d in json.loads(text)]


def write_rows(path, rows, fmt: str = "csv"):
    text = rows_to_json(rows) if fmt == "json" else rows_to_csv(rows)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")


@dataclass
class RunOptions:
    manifold: str = "sphere"
    dim: Optional[int] = None
    params: Dict[str, float] = field(default_factory=dict)
    solver: str = "georce"
    geometry: str = "riemannian"
    T: int = 100
    tol: float = 1e-4
    max_iter: int = 1000
    step: float = 0.01
    v0: float = 1.0
    force: str = "generic"
    seed: int = 0
    perturb_scale: float = 0.0
    perturb: str = "normal"
    start: Optional[Sequence[float]] = None
    end: Optional[Sequence[float]] = None
    repeats: int = 5
    warmup: int = 1
    length_rule: str = "sum"

    def replace(self, **kw) -> "RunOptions":
        return dataclasses.replace(self, **kw)


def build_problem(opts: RunOptions):
    """Return ``(geometry, a, b)`` for the options; Finsler problems wrap the catalog metric."""
    if opts.geometry not in ("riemannian", "finsler"):
        raise UsageError(f"unknown geometry {opts.geometry!r}")
    try:
        metric, a, b = load(opts.manifold, opts.dim, start=opts.start, end=opts.end, **opts.params)
    except UnknownManifoldError as exc:
        raise UsageError(str(exc)) from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if opts.geometry == "riemannian":
        return metric, a, b
    if opts.force not in ("generic", "none"):
        raise UsageError(f"unknown force field {opts.force!r}")
    scan = discretize_line(a, b, opts.T).points
    return RandersField(metric, force=opts.force, v0=opts.v0, scan=scan), a, b


def _init(opts: RunOptions):
    if opts.perturb_scale > 0:
        return SeededPerturbation(opts.seed, opts.perturb_scale, opts.perturb)
    return "straight"


def solve_once(opts: RunOptions, problem=None):
    geometry, a, b = problem or build_problem(opts)
    init = _init(opts)
    if opts.solver not in SOLVERS:
        raise UsageError(f"unknown solver {opts.solver!r}; choose from {', '.join(SOLVERS)}")
    if opts.solver == "georce":
        cfg = SolverConfig(T=opts.T, tol=opts.tol, max_iter=opts.max_iter, init=init)
        if opts.geometry == "finsler":
            return georce_finsler_solve(geometry, a, b, cfg)
        return georce_solve(geometry, a, b, cfg)
    if opts.solver in ("gd", "adam"):
        cfg = FirstOrderConfig(step=opts.step, max_iter=opts.max_iter, tol=opts.tol, T=opts.T, init=init)
        return (gd_solve if opts.solver == "gd" else adam_solve)(geometry, a, b, cfg)
    if opts.geometry == "finsler":
        raise UsageError("the sparse Newton baselines support Riemannian geometry only")
    cfg = SolverConfig(T=opts.T, tol=opts.tol, max_iter=opts.max_iter, init=init)
    return sparse_newton_solve(geometry, a, b, cfg, regularized=opts.solver == "sparse-newton-reg")


def write_trace(path, report):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "grad_norm"])
        for i, g in enumerate(report.grad_norm_trace):
            w.writerow([i, repr(float(g))])


def run_single(opts: RunOptions, trace_path=None):
    """Solve with timing; returns ``(row, report)``. ``report`` is ``None`` on solver failure."""
    problem = build_problem(opts)
    geometry, a, b = problem
    dim = a.size
    nan = float("nan")
    times = []
    report = None
    try:
        for _ in range(max(opts.warmup, 0)):
            solve_once(opts, problem)
        for _ in range(max(opts.repeats, 1)):
            t0 = time.perf_counter()
            report = solve_once(opts, problem)
            times.append(1e3 * (time.perf_counter() - t0))
    except UsageError:
        raise
    except GeoKitError as exc:
        name = type(exc).__name__.replace("Error", "")
        log.warning("%s/%s failed: %s", opts.manifold, opts.solver, exc)
        return ExperimentRow(opts.manifold, dim, opts.geometry, opts.solver, opts.T, nan, nan, 0, nan, nan, nan,
                             name or "Error", opts.seed), None
    length = report.trapezoid_length if opts.length_rule == "trapezoid" else report.length
    row = ExperimentRow(
        manifold=opts.manifold,
        dim=dim,
        geometry=opts.geometry,
        solver=opts.solver,
        T=opts.T,
        length=float(length),
        energy=float(report.energy),
        iterations=int(report.iterations),
        final_grad_norm=float(report.final_grad_norm),
        wall_ms_mean=float(np.mean(times)),
        wall_ms_std=float(np.std(times, ddof=1)) if len(times) > 1 else 0.0,
        termination=str(report.termination),
        seed=opts.seed,
    )
    if trace_path is not None:
        write_trace(trace_path, report)
    return row, report


# preset grids; each entry is (manifold, dim, extra option overrides)
_RIEMANNIAN_SMALL = [
    ("sphere", 2, {}),
    ("ellipsoid", 2, {}),
    ("torus", None, {}),
    ("hyperbolic", None, {}),
    ("paraboloid", 2, {}),
    ("eggtray", None, {}),
    ("spd", 2, {}),
    ("spd", 3, {}),
    ("gaussian", None, {}),
    ("frechet", None, {}),
    ("cauchy", None, {}),
    ("pareto", None, {}),
]
# families where the generic force stays below unit propulsion along the default segment
_FINSLER_SMALL = [
    ("sphere", 2, {}),
    ("sphere", 3, {}),
    ("ellipsoid", 2, {}),
    ("paraboloid", 2, {}),
    ("spd", 2, {}),
    ("gaussian", None, {}),
    ("frechet", None, {}),
]

PRESETS = {
    "riemannian-small": {"solvers": ("georce", "adam")},
    "finsler-small": {"solvers": ("georce", "adam"), "geometry": "finsler"},
    "scaling-T": {"solvers": ("georce", "sparse-newton")},
    "scaling-dim": {"solvers": ("georce",)},
}


def preset_cells(preset: str, solvers: Optional[Sequence[str]] = None, base: Optional[RunOptions] = None,
                 overrides: Optional[dict] = None) -> List[RunOptions]:
    """Expand a preset into one :class:`RunOptions` per (problem, solver) cell."""
    if preset not in PRESETS:
        raise UsageError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    conf = PRESETS[preset]
    solvers = conf["solvers"] if solvers is None else tuple(solvers)
    for s in solvers:
        if s not in SOLVERS:
            raise UsageError(f"unknown solver {s!r}")
    base = base or RunOptions()
    overrides = dict(overrides or {})
    geometry = overrides.pop("geometry", conf.get("geometry", "riemannian"))
    problems = []
    if preset == "riemannian-small":
        problems = [(m, d, {}) for m, d, _ in _RIEMANNIAN_SMALL]
    elif preset == "finsler-small":
        problems = [(m, d, {}) for m, d, _ in _FINSLER_SMALL]
    elif preset == "scaling-T":
        problems = [("sphere", 2, {"T": T}) for T in (50, 100, 200)]
    elif preset == "scaling-dim":
        problems = [("sphere", n, {}) for n in (2, 3, 5, 10, 20)]
    cells = []
    for manifold, dim, extra in problems:
        for s in solvers:
            kw = {"manifold": manifold, "dim": dim, "solver": s, "geometry": geometry, **extra, **overrides}
            cells.append(base.replace(**kw))
    return cells


def _thread_count(n_cells: int) -> int:
    env = os.environ.get("GEOKIT_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise UsageError(f"GEOKIT_THREADS must be an integer, got {env!r}") from None
    return max(1, min(cap, n_cells))


def run_suite(preset: str, out=None, solvers: Optional[Sequence[str]] = None, base: Optional[RunOptions] = None,
              overrides: Optional[dict] = None, fmt: str = "csv") -> List[ExperimentRow]:
    """Run every cell of a preset; failed cells become rows with their termination reason.

    Cells run on up to ``GEOKIT_THREADS`` worker threads. Rows are written by
    a single writer in cell order.
    """
    cells = preset_cells(preset, solvers, base, overrides)
    if out is not None:
        # fail early on an unwritable destination
        write_rows(out, [], fmt)
    lock = threading.Lock()
    rows: List[Optional[ExperimentRow]] = [None] * len(cells)

    def work(i):
        try:
            row, _ = run_single(cells[i])
        except GeoKitError as exc:
            o = cells[i]
            log.warning("cell %s/%s rejected: %s", o.manifold, o.solver, exc)
            nan = float("nan")
            row = ExperimentRow(o.manifold, o.dim or 0, o.geometry, o.solver, o.T, nan, nan, 0, nan, nan, nan,
                                type(exc).__name__.replace("Error", "") or "Error", o.seed)
        with lock:
            rows[i] = row
        return row

    n = _thread_count(len(cells))
    if n == 1:
        for i in range(len(cells)):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            list(pool.map(work, range(len(cells))))
    done = [r for r in rows if r is not None]
    if out is not None:
        write_rows(out, done, fmt)
    return done


@dataclass
class ProbeResult:
    index: int
    point: np.ndarray
    nu_error: float
    grad_error: float
    passed: bool


@dataclass
class GradCheckReport:
    manifold: str
    probes: List[ProbeResult]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.probes)

    @property
    def max_nu_error(self) -> float:
        return max((p.nu_error for p in self.probes), default=0.0)

    @property
    def max_grad_error(self) -> float:
        return max((p.grad_error for p in self.probes), default=0.0)


def _rel_err(x, ref):
    # unit floor keeps near-zero references from inflating the ratio with FD noise
    return float(np.linalg.norm(np.ravel(x) - np.ravel(ref)) / max(1.0, float(np.linalg.norm(ref))))


def grad_check(manifold: str, count: int = 50, seed: int = 0, dim: Optional[int] = None, tol: float = 1e-4,
               T: int = 5, **params) -> GradCheckReport:
    """Compare analytic ``nu`` and the interior energy gradient with central differences.

    Probes are seeded random points scattered around the default endpoint
    segment, with random velocities and short random curves through them.
    """
    metric, a, b = load(manifold, dim, **params)
    rng = np.random.default_rng(seed)
    d = a.size
    spread = 0.1 * max(1.0, float(np.linalg.norm(b - a)))
    probes = []
    for k in range(count):
        for _ in range(100):
            s = rng.uniform()
            x = a + s * (b - a) + spread * rng.standard_normal(d)
            u = spread * rng.standard_normal(d)
            pts = discretize_line(a, b, T).points.copy()
            pts[1:-1] += spread * rng.standard_normal(pts[1:-1].shape)
            if metric.in_domain(x) and np.all(metric.in_domain(pts)):
                break
        else:
            raise GeoKitError(f"could not place a probe inside the {manifold} chart")
        nu = metric.eval_nu(x, u)
        nu_fd = metric.fd_nu(x[None, :], u[None, :])[0]
        e_nu = _rel_err(nu, nu_fd)

        g = energy_gradient_interior(metric, pts)

        def e_of(z, pts=pts):
            p = pts.copy()
            p[1:-1] = z.reshape(-1, d)
            return energy(metric, p)

        g_fd = fd_gradient(e_of, pts[1:-1].ravel()).reshape(-1, d)
        e_g = _rel_err(g, g_fd)
        probes.append(ProbeResult(k, x, e_nu, e_g, bool(e_nu <= tol and e_g <= tol)))
    return GradCheckReport(manifold, probes, tol)


def cluster_lengths(lengths: Sequence[float], gap: float = 1e-2):
    """Group sorted lengths into clusters separated by more than ``gap``; returns ``(mean, count)`` pairs."""
    vals = np.sort(np.asarray([v for v in lengths if np.isfinite(v)], dtype=float))
    if vals.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(vals) > gap) + 1
    return [(float(c.mean()), int(c.size)) for c in np.split(vals, cuts)]


@dataclass
class MultistartResult:
    manifold: str
    rows: List[dict]
    clusters: List[tuple]

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)


def multistart(manifold: str, n_starts: int = 100, perturb_scale: float = 1.0, seed: int = 0,
               start=None, end=None, dim: Optional[int] = None, T: int = 100, tol: float = 1e-4,
               max_iter: int = 1000, kind: str = "normal", gap: float = 1e-2, **params) -> MultistartResult:
    """GEORCE from ``n_starts`` randomly perturbed straight-line initializations."""
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    metric, a, b = load(manifold, dim, start=start, end=end, **params)
    seeds = np.random.SeedSequence(seed).generate_state(n_starts)
    rows = []
    for i, s in enumerate(seeds):
        cfg = SolverConfig(T=T, tol=tol, max_iter=max_iter, init=SeededPerturbation(int(s), perturb_scale, kind))
        try:
            r = georce_solve(metric, a, b, cfg)
            rows.append({"start": i, "seed": int(s), "length": r.length, "iterations": r.iterations,
                         "termination": str(r.termination)})
        except GeoKitError as exc:
            rows.append({"start": i, "seed": int(s), "length": float("nan"), "iterations": 0,
                         "termination": type(exc).__name__})
    return MultistartResult(manifold, rows, cluster_lengths([r["length"] for r in rows], gap))
