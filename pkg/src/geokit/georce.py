"""GEORCE: geodesics as a discrete control problem with a fixed-metric update.

Each outer iteration freezes the metric matrices ``G_t`` (and, in the Finsler
case, the fundamental tensor at the current controls) together with the
position gradients ``nu_t`` of the frozen quadratic forms. With those fixed,
the first-order conditions are linear and the new controls have a closed
form; a backtracking line search then blends them with the current ones.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import linalg

from .core import (
    DiscreteCurve,
    FinslerField,
    SolverReport,
    Termination,
    _interior_gradient,
    _quad,
    chart_point,
    curve_from_controls,
    discretize_line,
)
from .errors import DimensionError, LeftChartError, NotConvergedError

__all__ = [
    "SeededPerturbation",
    "SolverConfig",
    "InnerUpdate",
    "initial_curve",
    "georce_inner_update",
    "finsler_inner_update",
    "soft_line_search",
    "georce_solve",
    "georce_finsler_solve",
    "log_map_estimate",
    "costates",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeededPerturbation:
    """Random perturbation of the straight-line initialization.

    ``kind="normal"`` adds ``N(0, scale^2 I)`` to every interior point;
    ``kind="sign"`` shifts all interior points by ``scale * sign(eps)`` with a
    single standard normal ``eps``.
    """

    seed: int
    scale: float = 1.0
    kind: str = "normal"


@dataclass
class SolverConfig:
    T: int = 100
    tol: float = 1e-4
    max_iter: int = 1000
    rho: float = 0.5
    max_backtracks: int = 30
    init: Union[str, DiscreteCurve, SeededPerturbation] = "straight"

    def __post_init__(self):
        if self.T < 2:
            raise ValueError(f"T must be >= 2, got {self.T}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.max_iter < 0 or self.max_backtracks < 0:
            raise ValueError("iteration limits must be non-negative")


@dataclass
class InnerUpdate:
    mu_last: np.ndarray
    new_controls: np.ndarray
    partial_nu: np.ndarray = field(repr=False, default=None)


def initial_curve(a, b, config: SolverConfig) -> DiscreteCurve:
    init = config.init
    if isinstance(init, DiscreteCurve):
        if init.T != config.T:
            raise ValueError(f"initial curve has T={init.T}, config asks for T={config.T}")
        if not (np.array_equal(init.a, a) and np.array_equal(init.b, b)):
            raise ValueError("initial curve endpoints differ from the requested endpoints")
        return init
    line = discretize_line(a, b, config.T)
    if init == "straight" or init is None:
        return line
    if isinstance(init, SeededPerturbation):
        rng = np.random.default_rng(init.seed)
        pts = line.points.copy()
        if init.kind == "normal":
            pts[1:-1] += init.scale * rng.standard_normal(pts[1:-1].shape)
        elif init.kind == "sign":
            pts[1:-1] += init.scale * np.sign(rng.standard_normal())
        else:
            raise ValueError(f"unknown perturbation kind {init.kind!r}")
        return DiscreteCurve(pts)
    raise ValueError(f"unsupported initialization {init!r}")


def _spd_inverse(G):
    """Batched inverse through one Cholesky factorization per matrix."""
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise LeftChartError("metric matrix is not positive definite on the curve") from exc
    Linv = np.linalg.inv(L)
    return np.einsum("nki,nkj->nij", Linv, Linv)


def _inner(G, nu, zeta, a, b):
    T, d = nu.shape
    nu = nu.copy()
    nu[0] = 0.0
    # S_t = sum_{j > t} nu_j
    S = np.cumsum(nu[::-1], axis=0)[::-1] - nu
    rhs = zeta + S
    Ginv = _spd_inverse(G)
    Ginv_rhs = np.einsum("nij,nj->ni", Ginv, rhs)
    total = Ginv.sum(axis=0)
    target = 2.0 * (a - b) - Ginv_rhs.sum(axis=0)
    try:
        mu = linalg.cho_solve(linalg.cho_factor(total), target)
    except linalg.LinAlgError as exc:
        raise LeftChartError("sum of inverse metric matrices is not positive definite") from exc
    u_new = -0.5 * (np.einsum("nij,j->ni", Ginv, mu) + Ginv_rhs)
    return InnerUpdate(mu_last=mu, new_controls=u_new, partial_nu=S)


def _frozen(geometry, pts, us):
    xs = pts[:-1]
    ok = geometry.in_domain(pts)
    if not np.all(ok):
        bad = int(np.flatnonzero(~np.asarray(ok))[0])
        raise LeftChartError(f"grid point {bad} at {pts[bad]} lies outside the chart domain")
    G = geometry.tensor(xs, us)
    nu = geometry.nu(xs, us)
    zeta = geometry.zeta(xs, us)
    return G, nu, zeta


def _as_pts(curve):
    return curve.points if isinstance(curve, DiscreteCurve) else np.asarray(curve, dtype=float)


def georce_inner_update(metric, curve, controls=None) -> InnerUpdate:
    """Closed-form control update with the metric frozen at the current curve.

    ``mu_{T-1} = (sum G_t^-1)^-1 (2(a - b) - sum G_t^-1 S_t)`` and
    ``u_t = -1/2 G_t^-1 (mu_{T-1} + S_t)`` with ``S_t = sum_{j>t} nu_j``.
    The new controls sum to ``b - a`` by construction.
    """
    pts = _as_pts(curve)
    us = np.diff(pts, axis=0) if controls is None else np.asarray(controls, dtype=float)
    G, nu, _ = _frozen(metric, pts, us)
    return _inner(G, nu, np.zeros_like(us), pts[0], pts[-1])


def finsler_inner_update(ff, curve, controls=None) -> InnerUpdate:
    """Finsler variant: ``G_t = G(x_t, u_t)`` and ``zeta_t`` enters next to ``S_t``."""
    pts = _as_pts(curve)
    us = np.diff(pts, axis=0) if controls is None else np.asarray(controls, dtype=float)
    if np.any(np.all(us == 0.0, axis=1)):
        raise ValueError("fundamental tensor is undefined for a zero control")
    G, nu, zeta = _frozen(ff, pts, us)
    return _inner(G, nu, zeta, pts[0], pts[-1])


def soft_line_search(objective: Callable[[float], float], rho: float = 0.5, max_backtracks: int = 30,
                     strict: bool = True) -> Optional[float]:
    """Largest ``alpha`` in ``1, rho, rho^2, ...`` that decreases ``objective``.

    ``objective`` should return ``inf`` for inadmissible steps (e.g. points
    outside the chart). Returns ``None`` when no candidate decreases the
    objective; with ``strict=False`` ties with ``objective(0)`` are accepted.
    """
    f0 = objective(0.0)
    if not np.isfinite(f0):
        raise ValueError("objective at alpha = 0 must be finite")
    alpha = 1.0
    for _ in range(max_backtracks + 1):
        f = objective(alpha)
        if f < f0 or (not strict and f <= f0):
            return alpha
        alpha *= rho
    return None


def _blend_objective(geometry, a, b, u, u_new):
    def objective(alpha):
        v = alpha * u_new + (1.0 - alpha) * u
        pts = np.empty((v.shape[0] + 1, a.size))
        pts[0] = a
        pts[1:] = a + np.cumsum(v, axis=0)
        pts[-1] = b
        if not np.all(geometry.in_domain(pts)):
            return np.inf
        with np.errstate(all="ignore"):
            e = float(np.sum(geometry.sq_speed(pts[:-1], np.diff(pts, axis=0))))
        return e if np.isfinite(e) else np.inf

    return objective


def _report(geometry, pts, u, it, grads, steps, energies, feas, termination, name):
    curve = DiscreteCurve(pts)
    us = np.diff(pts, axis=0)
    s2 = geometry.sq_speed(pts[:-1], us)
    s = np.sqrt(np.maximum(s2, 0.0))
    return SolverReport(
        curve=curve,
        controls=u,
        energy=float(np.sum(s2)),
        length=float(np.sum(s)),
        iterations=it,
        grad_norm_trace=grads,
        step_size_trace=steps,
        termination=termination,
        trapezoid_length=float(s.sum() - 0.5 * (s[0] + s[-1])),
        energy_trace=energies,
        feasibility_trace=feas,
        solver=name,
    )


def _nonzero_controls(u, a, b):
    zero = np.all(u == 0.0, axis=1)
    if not np.any(zero):
        return u
    T = u.shape[0]
    direction = (b - a) / np.linalg.norm(b - a)
    delta = 1e-8 * np.linalg.norm(b - a) / T * direction
    u = u.copy()
    u[zero] += delta
    # keep the controls feasible by taking the excess off the largest control
    big = int(np.argmax(np.linalg.norm(u, axis=1)))
    u[big] -= delta * np.count_nonzero(zero)
    return u


def _solve(geometry, a, b, config, name, finsler):
    a = chart_point(a, geometry.dim)
    b = chart_point(b, geometry.dim)
    if a.size != b.size:
        raise DimensionError("endpoint dimensions differ")
    config = config or SolverConfig()

    if np.array_equal(a, b):
        pts = np.repeat(a[None, :], config.T + 1, axis=0)
        u = np.zeros((config.T, a.size))
        return SolverReport(DiscreteCurve(pts), u, 0.0, 0.0, 0, [0.0], [], Termination.CONVERGED,
                            trapezoid_length=0.0, energy_trace=[0.0], feasibility_trace=[0.0], solver=name)

    curve = initial_curve(a, b, config)
    pts = curve.points.copy()
    if not np.all(geometry.in_domain(pts)):
        raise LeftChartError("initial curve leaves the chart domain")
    u = np.diff(pts, axis=0)
    if finsler:
        u = _nonzero_controls(u, a, b)
        pts = curve_from_controls(a, b, u).points.copy()

    def evaluate(pts, u):
        G, nu, zeta = _frozen(geometry, pts, u)
        grad = _interior_gradient(G, nu, u)
        return G, nu, zeta, float(np.linalg.norm(grad))

    G, nu, zeta, gnorm = evaluate(pts, u)
    grads = [gnorm]
    steps = []
    energies = [float(np.sum(_quad(G, u)))]
    feas = [float(np.linalg.norm(u.sum(axis=0) - (b - a)))]
    termination = Termination.MAX_ITERATIONS
    it = 0
    while it < config.max_iter:
        if it > 0 and gnorm < config.tol:
            termination = Termination.CONVERGED
            break
        try:
            upd = _inner(G, nu, zeta, a, b)
        except LeftChartError:
            termination = Termination.LEFT_CHART
            break
        alpha = soft_line_search(_blend_objective(geometry, a, b, u, upd.new_controls),
                                 config.rho, config.max_backtracks, strict=gnorm >= config.tol)
        if alpha is None:
            termination = Termination.CONVERGED if gnorm < config.tol else Termination.LINE_SEARCH_STALLED
            break
        u = alpha * upd.new_controls + (1.0 - alpha) * u
        pts = curve_from_controls(a, b, u).points.copy()
        it += 1
        steps.append(alpha)
        feas.append(float(np.linalg.norm(u.sum(axis=0) - (b - a))))
        try:
            G, nu, zeta, gnorm = evaluate(pts, u)
        except LeftChartError:
            termination = Termination.LEFT_CHART
            break
        grads.append(gnorm)
        energies.append(float(np.sum(_quad(G, u))))
    else:
        if gnorm < config.tol:
            termination = Termination.CONVERGED
    log.debug("%s finished after %d iterations: %s (|grad| = %.3e)", name, it, termination, gnorm)
    return _report(geometry, pts, u, it, grads, steps, energies, feas, termination, name)


def georce_solve(metric, a, b, config: Optional[SolverConfig] = None) -> SolverReport:
    """Geodesic between ``a`` and ``b`` on a Riemannian metric field."""
    return _solve(metric, a, b, config, "georce", finsler=False)


def georce_finsler_solve(ff: FinslerField, a, b, config: Optional[SolverConfig] = None) -> SolverReport:
    """Geodesic from ``a`` to ``b`` for a Finsler field, minimizing ``sum F(x_t, u_t)^2``."""
    return _solve(ff, a, b, config, "georce-finsler", finsler=True)


def log_map_estimate(report: SolverReport) -> np.ndarray:
    """Tangent vector at ``a`` pointing to ``b``: ``T * u_0`` of a converged solve."""
    if not report.converged:
        raise NotConvergedError(f"report terminated with {report.termination}")
    return report.curve.T * np.asarray(report.controls[0])


def costates(geometry, curve) -> np.ndarray:
    """Co-states ``mu_t = mu_{T-1} + sum_{j>t} nu_j`` from the frozen system at ``curve``."""
    pts = _as_pts(curve)
    us = np.diff(pts, axis=0)
    G, nu, zeta = _frozen(geometry, pts, us)
    upd = _inner(G, nu, zeta, pts[0], pts[-1])
    return upd.mu_last + upd.partial_nu
