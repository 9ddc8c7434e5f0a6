"""Curves, metric fields and the discrete energy / length functionals.

Everything here works in a single local chart. A curve is stored as an
array of ``T + 1`` chart points with the two endpoints held fixed, and the
controls are its forward differences ``u_t = x_{t+1} - x_t``.

Metric-like objects (:class:`MetricField` and :class:`FinslerField`) share a
small batched protocol so that the functionals and every solver can treat
Riemannian and Finsler geometries uniformly:

``tensor(xs, us)``
    ``(N, d, d)`` matrices; a Riemannian metric ignores ``us``.
``sq_speed(xs, us)``
    ``u^T G(x, u) u`` per row.
``nu(xs, us)``
    position gradient of the frozen quadratic form, ``grad_y u^T G(y, u) u``.
``zeta(xs, us)``
    velocity gradient of the frozen form, ``grad_y u^T G(x, y) u`` at ``y = u``.
``in_domain(xs)``
    boolean mask of chart validity.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import DimensionError, GeoKitError, LeftChartError

__all__ = [
    "EPS_FIRST",
    "EPS_SECOND",
    "SPDMatrix",
    "MetricField",
    "FinslerField",
    "DiscreteCurve",
    "Termination",
    "SolverReport",
    "chart_point",
    "discretize_line",
    "controls_from_curve",
    "curve_from_controls",
    "energy",
    "length",
    "trapezoid_length",
    "finsler_energy",
    "finsler_length",
    "energy_gradient_interior",
    "stacked_gradient_norm",
    "fd_gradient",
    "pullback_metric_from_immersion",
]

_EPS = np.finfo(float).eps
EPS_FIRST = _EPS ** (1.0 / 3.0)
EPS_SECOND = _EPS ** (1.0 / 4.0)

ArrayFn = Callable[[np.ndarray], np.ndarray]


def chart_point(x, dim: Optional[int] = None) -> np.ndarray:
    """Validate and return a chart point as a 1-D float array."""
    x = np.array(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DimensionError(f"chart point must be a non-empty vector, got shape {x.shape}")
    if dim is not None and x.size != dim:
        raise DimensionError(f"expected a point of dimension {dim}, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"chart point has non-finite entries: {x}")
    return x


def _fd_steps(xs: np.ndarray) -> np.ndarray:
    return EPS_FIRST * np.maximum(1.0, np.linalg.norm(xs, axis=-1))


def _quad(G: np.ndarray, us: np.ndarray) -> np.ndarray:
    return np.einsum("ni,nij,nj->n", us, G, us)


def _fd_position_gradient(form: Callable[[np.ndarray], np.ndarray], xs: np.ndarray) -> np.ndarray:
    """Central differences of a batched scalar function of the rows of ``xs``."""
    n, d = xs.shape
    h = _fd_steps(xs)
    out = np.empty((n, d))
    for k in range(d):
        xp = xs.copy()
        xm = xs.copy()
        xp[:, k] += h
        xm[:, k] -= h
        out[:, k] = (form(xp) - form(xm)) / (xp[:, k] - xm[:, k])
    return out


class SPDMatrix:
    """Symmetric positive definite matrix with its cached Cholesky factor.

    Raises :class:`LeftChartError` when the matrix is not symmetric to
    ``1e-12`` relative or when the factorization fails.
    """

    __slots__ = ("entries", "factor")

    def __init__(self, entries):
        m = np.array(entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {m.shape}")
        scale = np.max(np.abs(m)) if m.size else 0.0
        if np.max(np.abs(m - m.T)) > 1e-12 * max(scale, 1e-300):
            raise LeftChartError("matrix is not symmetric")
        try:
            self.factor = np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise LeftChartError("matrix is not positive definite") from exc
        m.flags.writeable = False
        self.entries = m

    def solve(self, rhs):
        y = np.linalg.solve(self.factor, rhs)
        return np.linalg.solve(self.factor.T, y)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __repr__(self):
        return f"SPDMatrix({self.entries.tolist()})"


class MetricField:
    """Riemannian metric ``G(x)`` on a chart of dimension ``dim``.

    ``metric`` maps an ``(N, d)`` batch of points to ``(N, d, d)`` matrices.
    ``nu`` (optional) maps ``(xs, us)`` to ``grad_y(u^T G(y) u)`` at ``y = x``;
    when omitted, central finite differences of the metric are used.
    ``domain`` maps a batch of points to a boolean mask; default is all of R^d.

    ``embedding`` and ``signature`` are kept for metrics that arise as
    pullbacks so that tests can rebuild ``J^T diag(sig) J`` independently.
    """

    def __init__(
        self,
        dim: int,
        metric: ArrayFn,
        nu: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
        domain: Optional[ArrayFn] = None,
        name: str = "",
        embedding: Optional[ArrayFn] = None,
        signature: Optional[np.ndarray] = None,
    ):
        if dim < 1:
            raise DimensionError("metric dimension must be >= 1")
        self.dim = int(dim)
        self._metric = metric
        self._nu = nu
        self._domain = domain
        self.name = name
        self.embedding = embedding
        self.signature = None if signature is None else np.asarray(signature, dtype=float)

    @classmethod
    def from_pointwise(cls, dim, G, **kwargs):
        """Build a field from a per-point function ``G(x) -> (d, d)``."""

        def metric(xs):
            return np.stack([np.asarray(G(x), dtype=float) for x in xs])

        return cls(dim, metric, **kwargs)

    @property
    def has_analytic_nu(self) -> bool:
        return self._nu is not None

    def _batch(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xs = np.atleast_2d(x)
        if xs.shape[-1] != self.dim:
            raise DimensionError(f"{self.name or 'metric'} expects dimension {self.dim}, got {xs.shape[-1]}")
        return xs, single

    def in_domain(self, x):
        xs, single = self._batch(x)
        ok = np.all(np.isfinite(xs), axis=1)
        if self._domain is not None:
            ok &= np.asarray(self._domain(xs), dtype=bool)
        return bool(ok[0]) if single else ok

    def eval_metric(self, x) -> np.ndarray:
        xs, single = self._batch(x)
        G = np.asarray(self._metric(xs), dtype=float)
        return G[0] if single else G

    def eval_nu(self, x, u) -> np.ndarray:
        xs, single = self._batch(x)
        us = np.atleast_2d(np.asarray(u, dtype=float))
        out = self.nu(xs, us)
        return out[0] if single else out

    def fd_nu(self, xs, us) -> np.ndarray:
        return _fd_position_gradient(lambda ys: _quad(self._metric(ys), us), xs)

    # batched protocol used by the functionals and solvers
    def tensor(self, xs, us=None):
        return self._metric(xs)

    def sq_speed(self, xs, us):
        return _quad(self._metric(xs), us)

    def nu(self, xs, us):
        if self._nu is not None:
            return self._nu(xs, us)
        return self.fd_nu(xs, us)

    def zeta(self, xs, us):
        return np.zeros_like(us)

    def __repr__(self):
        return f"MetricField(name={self.name!r}, dim={self.dim})"


class FinslerField:
    """Finsler metric given by ``F(x, v)`` and its fundamental tensor.

    ``F`` and ``fundamental`` are batched: ``(N, d), (N, d) -> (N,)`` and
    ``-> (N, d, d)``. Position and velocity gradients of the frozen quadratic
    form default to central finite differences.
    """

    def __init__(self, dim, F, fundamental, domain=None, name=""):
        self.dim = int(dim)
        self._F = F
        self._fundamental = fundamental
        self._domain = domain
        self.name = name

    def in_domain(self, x):
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        ok = np.all(np.isfinite(xs), axis=1)
        if self._domain is not None:
            ok &= np.asarray(self._domain(xs), dtype=bool)
        return bool(ok[0]) if np.ndim(x) == 1 else ok

    def F(self, xs, vs):
        return self._F(xs, vs)

    def tensor(self, xs, us):
        return self._fundamental(xs, us)

    def sq_speed(self, xs, us):
        return self._F(xs, us) ** 2

    def nu(self, xs, us):
        # u^T G(y, u) u = F(y, u)^2 by the Euler identity
        return _fd_position_gradient(lambda ys: self._F(ys, us) ** 2, xs)

    def zeta(self, xs, us):
        n, d = us.shape
        h = _fd_steps(us)
        out = np.empty((n, d))
        for k in range(d):
            yp = us.copy()
            ym = us.copy()
            yp[:, k] += h
            ym[:, k] -= h
            out[:, k] = (_quad(self._fundamental(xs, yp), us) - _quad(self._fundamental(xs, ym), us)) / (
                yp[:, k] - ym[:, k]
            )
        return out

    def __repr__(self):
        return f"FinslerField(name={self.name!r}, dim={self.dim})"


@dataclass(frozen=True)
class DiscreteCurve:
    """``T + 1`` chart points with fixed endpoints ``points[0]`` and ``points[-1]``."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2:
            raise DimensionError(f"curve points must be a (T+1, d) array, got shape {pts.shape}")
        if pts.shape[0] < 3:
            raise ValueError("a discrete curve needs T >= 2")
        if not np.all(np.isfinite(pts)):
            raise ValueError("curve has non-finite points")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def T(self) -> int:
        return self.points.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def a(self) -> np.ndarray:
        return self.points[0]

    @property
    def b(self) -> np.ndarray:
        return self.points[-1]

    def reversed(self) -> "DiscreteCurve":
        return DiscreteCurve(self.points[::-1])

    def __len__(self):
        return self.points.shape[0]


CurveLike = Union[DiscreteCurve, np.ndarray, Sequence]


def _points(curve: CurveLike) -> np.ndarray:
    if isinstance(curve, DiscreteCurve):
        return curve.points
    pts = np.asarray(curve, dtype=float)
    if pts.ndim != 2:
        raise DimensionError(f"expected (T+1, d) points, got shape {pts.shape}")
    return pts


class Termination(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    LINE_SEARCH_STALLED = "LineSearchStalled"
    LEFT_CHART = "LeftChart"

    def __str__(self):
        return self.value


@dataclass
class SolverReport:
    curve: DiscreteCurve
    controls: np.ndarray
    energy: float
    length: float
    iterations: int
    grad_norm_trace: list
    step_size_trace: list
    termination: Termination
    trapezoid_length: float = float("nan")
    energy_trace: list = field(default_factory=list)
    feasibility_trace: list = field(default_factory=list)
    solver: str = ""

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED

    @property
    def final_grad_norm(self) -> float:
        return self.grad_norm_trace[-1] if self.grad_norm_trace else float("nan")


def discretize_line(a, b, T: int) -> DiscreteCurve:
    """Straight line ``x_t = a + (t/T)(b - a)`` in the chart."""
    a = chart_point(a)
    b = chart_point(b)
    if a.size != b.size:
        raise DimensionError(f"endpoint dimensions differ: {a.size} != {b.size}")
    if T < 2:
        raise ValueError(f"T must be >= 2, got {T}")
    s = np.arange(T + 1)[:, None] / T
    pts = a + s * (b - a)
    pts[0] = a
    pts[-1] = b
    return DiscreteCurve(pts)


def controls_from_curve(curve: CurveLike) -> np.ndarray:
    return np.diff(_points(curve), axis=0)


def curve_from_controls(a, b, controls) -> DiscreteCurve:
    """Prefix-sum rebuild ``x_{t+1} = x_t + u_t``; the last point is pinned to ``b``."""
    a = np.asarray(a, dtype=float)
    u = np.asarray(controls, dtype=float)
    pts = np.empty((u.shape[0] + 1, a.size))
    pts[0] = a
    pts[1:] = a + np.cumsum(u, axis=0)
    pts[-1] = b
    return DiscreteCurve(pts)


def _check_domain(geometry, pts):
    ok = geometry.in_domain(pts)
    if not np.all(ok):
        bad = int(np.flatnonzero(~np.asarray(ok))[0])
        raise LeftChartError(f"grid point {bad} at {pts[bad]} lies outside the chart domain")


def _speeds_sq(geometry, curve) -> np.ndarray:
    pts = _points(curve)
    _check_domain(geometry, pts)
    us = np.diff(pts, axis=0)
    return geometry.sq_speed(pts[:-1], us)


def energy(metric, curve: CurveLike) -> float:
    """Discrete energy ``sum_t u_t^T G(x_t) u_t`` (no 1/2 factor, no T scaling)."""
    return float(np.sum(_speeds_sq(metric, curve)))


def length(metric, curve: CurveLike) -> float:
    """Discrete length ``sum_t sqrt(u_t^T G(x_t) u_t)``."""
    return float(np.sum(np.sqrt(np.maximum(_speeds_sq(metric, curve), 0.0))))


def trapezoid_length(metric, curve: CurveLike) -> float:
    """Trapezoid rule over the ``T`` left-point speed samples.

    This is ``sum_t s_t - (s_0 + s_{T-1}) / 2`` with ``s_t = sqrt(u_t^T G(x_t) u_t)``,
    i.e. the speed integrated on the grid ``0, 1/T, ..., (T-1)/T``. Published
    benchmark tables for this method are tabulated with this rule; it is
    slightly smaller than :func:`length` (by roughly ``length / T``).
    """
    s = np.sqrt(np.maximum(_speeds_sq(metric, curve), 0.0))
    return float(s.sum() - 0.5 * (s[0] + s[-1]))


def finsler_energy(ff: FinslerField, curve: CurveLike) -> float:
    """``sum_t u_t^T G(x_t, u_t) u_t``; every control must be non-zero."""
    pts = _points(curve)
    _check_domain(ff, pts)
    us = np.diff(pts, axis=0)
    if np.any(np.all(us == 0.0, axis=1)):
        raise GeoKitError("fundamental tensor is undefined for a zero control")
    G = ff.tensor(pts[:-1], us)
    return float(np.sum(_quad(G, us)))


def finsler_length(ff: FinslerField, curve: CurveLike) -> float:
    """``sum_t F(x_t, u_t)``. Not symmetric under reversal of the curve."""
    pts = _points(curve)
    _check_domain(ff, pts)
    us = np.diff(pts, axis=0)
    return float(np.sum(ff.F(pts[:-1], us)))


def _interior_gradient(G, nu, us):
    # grad_{x_t} E = nu_t - 2 G_t u_t + 2 G_{t-1} u_{t-1},  t = 1..T-1
    Gu = np.einsum("nij,nj->ni", G, us)
    return nu[1:] - 2.0 * Gu[1:] + 2.0 * Gu[:-1]


def energy_gradient_interior(metric, curve: CurveLike) -> np.ndarray:
    """Gradient of the discrete energy with respect to the interior points.

    Returns a ``(T - 1, d)`` array. Works for both metric and Finsler fields
    (for Finsler fields ``G`` is the fundamental tensor at ``(x_t, u_t)``).
    """
    pts = _points(curve)
    _check_domain(metric, pts)
    us = np.diff(pts, axis=0)
    xs = pts[:-1]
    G = metric.tensor(xs, us)
    nu = metric.nu(xs, us)
    return _interior_gradient(G, nu, us)


def stacked_gradient_norm(metric, curve: CurveLike) -> float:
    return float(np.linalg.norm(energy_gradient_interior(metric, curve)))


def fd_gradient(f: Callable[[np.ndarray], float], x, step: Optional[float] = None) -> np.ndarray:
    """Central-difference gradient of a scalar function.

    Default step is ``eps**(1/3) * max(1, |x|)``.
    """
    x = np.asarray(x, dtype=float)
    if step is None:
        step = EPS_FIRST * max(1.0, float(np.linalg.norm(x)))
    if step <= 0:
        raise ValueError("finite-difference step must be positive")
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += step
        xm.flat[i] -= step
        g.flat[i] = (f(xp) - f(xm)) / (xp.flat[i] - xm.flat[i])
    return g


def pullback_metric_from_immersion(
    jacobian: Callable[[np.ndarray], np.ndarray],
    ambient_signature=None,
    dim: Optional[int] = None,
    domain: Optional[ArrayFn] = None,
    name: str = "pullback",
    embedding: Optional[ArrayFn] = None,
) -> MetricField:
    """Metric ``G(x) = J(x)^T diag(sig) J(x)`` from a per-point Jacobian ``(D, d)``.

    ``nu`` falls back to finite differences. ``dim`` is inferred from the
    signature and a probe when not given.
    """
    sig = None if ambient_signature is None else np.asarray(ambient_signature, dtype=float)

    def metric(xs):
        J = np.stack([np.asarray(jacobian(x), dtype=float) for x in xs])
        s = np.ones(J.shape[1]) if sig is None else sig
        return np.einsum("nai,a,naj->nij", J, s, J)

    if dim is None:
        raise DimensionError("pullback metric needs an explicit chart dimension")
    return MetricField(dim, metric, domain=domain, name=name, embedding=embedding, signature=sig)
