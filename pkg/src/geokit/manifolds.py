"""Catalog of concrete metric fields with their default endpoints.

All metrics are batched over grid points and carry an analytic position
gradient ``nu``; pullback families also expose their embedding so the
metric can be cross-checked against a finite-difference Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .core import MetricField, chart_point
from .errors import DimensionError, GeoKitError

__all__ = [
    "MANIFOLDS",
    "ManifoldSpec",
    "UnknownManifoldError",
    "manifold_spec",
    "catalog",
    "load",
    "stereographic",
    "spd_pack_indices",
]

EULER_GAMMA = 0.57721566490153286


class UnknownManifoldError(GeoKitError, KeyError):
    pass


@dataclass(frozen=True)
class ManifoldSpec:
    name: str
    dim: int
    params: Dict[str, float] = field(default_factory=dict)
    default_endpoints: Optional[Tuple[np.ndarray, np.ndarray]] = None


# --------------------------------------------------------------------------
# pullback helper


def _pullback(dim, f, jac, second, signature, name, domain=None):
    """Metric ``J^T S J`` with ``nu_k = 2 (d_k J u)^T S (J u)``.

    ``second(xs, us)`` returns ``(N, D, d)`` with column ``k`` equal to
    ``sum_j d_k d_j f(x) u_j``.
    """
    sig = np.asarray(signature, dtype=float)

    def metric(xs):
        J = jac(xs)
        return np.einsum("nai,a,naj->nij", J, sig, J)

    def nu(xs, us):
        Ju = np.einsum("nai,ni->na", jac(xs), us)
        return 2.0 * np.einsum("nak,a,na->nk", second(xs, us), sig, Ju)

    return MetricField(dim, metric, nu=nu, domain=domain, name=name, embedding=f, signature=sig)


def stereographic(xs):
    """Inverse stereographic chart ``x -> (2x, |x|^2 - 1) / (1 + |x|^2)``."""
    xs = np.atleast_2d(xs)
    w = 1.0 / (1.0 + np.sum(xs * xs, axis=1))
    return np.concatenate([2.0 * xs * w[:, None], (1.0 - 2.0 * w)[:, None]], axis=1)


def _stereo_jac(xs):
    n = xs.shape[1]
    w = 1.0 / (1.0 + np.sum(xs * xs, axis=1))
    top = 2.0 * w[:, None, None] * np.eye(n) - 4.0 * (w**2)[:, None, None] * xs[:, :, None] * xs[:, None, :]
    last = 4.0 * (w**2)[:, None] * xs
    return np.concatenate([top, last[:, None, :]], axis=1)


def _stereo_second(xs, us):
    n = xs.shape[1]
    w = (1.0 / (1.0 + np.sum(xs * xs, axis=1)))[:, None, None]
    xu = np.sum(xs * us, axis=1)[:, None, None]
    xi = xs[:, :, None]
    xk = xs[:, None, :]
    ui = us[:, :, None]
    uk = us[:, None, :]
    top = -4.0 * w**2 * (ui * xk + np.eye(n) * xu + xi * uk) + 16.0 * w**3 * xi * xu * xk
    last = 4.0 * w[:, :, 0] ** 2 * us - 16.0 * w[:, :, 0] ** 3 * xu[:, :, 0] * xs
    return np.concatenate([top, last[:, None, :]], axis=1)


# --------------------------------------------------------------------------
# families


def _euclidean(spec):
    d = spec.dim

    def metric(xs):
        return np.broadcast_to(np.eye(d), (xs.shape[0], d, d)).copy()

    return MetricField(d, metric, nu=lambda xs, us: np.zeros_like(us), name="euclidean",
                       embedding=lambda xs: np.atleast_2d(xs).copy(), signature=np.ones(d))


def _sphere(spec):
    d = spec.dim

    def metric(xs):
        c = 4.0 / (1.0 + np.sum(xs * xs, axis=1)) ** 2
        return c[:, None, None] * np.eye(d)

    def nu(xs, us):
        s = np.sum(xs * xs, axis=1)
        return (-16.0 * np.sum(us * us, axis=1) / (1.0 + s) ** 3)[:, None] * xs

    return MetricField(d, metric, nu=nu, name="sphere", embedding=stereographic, signature=np.ones(d + 1))


def _ellipsoid_axes(spec):
    lo = spec.params.get("p_min", 0.5)
    hi = spec.params.get("p_max", 1.0)
    return np.linspace(lo, hi, spec.dim + 1)


def _ellipsoid(spec):
    # points y / p with y on the unit sphere satisfy ||p * (y / p)|| = 1
    p = _ellipsoid_axes(spec)
    inv = 1.0 / p

    def f(xs):
        return stereographic(xs) * inv

    def jac(xs):
        return _stereo_jac(xs) * inv[None, :, None]

    def second(xs, us):
        return _stereo_second(xs, us) * inv[None, :, None]

    return _pullback(spec.dim, f, jac, second, np.ones(spec.dim + 1), "ellipsoid")


def _torus(spec):
    R = spec.params.get("R", 3.0)
    r = spec.params.get("r", 1.0)

    def metric(xs):
        out = np.zeros((xs.shape[0], 2, 2))
        out[:, 0, 0] = r * r
        out[:, 1, 1] = (R + r * np.cos(xs[:, 0])) ** 2
        return out

    def nu(xs, us):
        out = np.zeros_like(us)
        out[:, 0] = -2.0 * r * np.sin(xs[:, 0]) * (R + r * np.cos(xs[:, 0])) * us[:, 1] ** 2
        return out

    def f(xs):
        xs = np.atleast_2d(xs)
        th, ph = xs[:, 0], xs[:, 1]
        rad = R + r * np.cos(th)
        return np.stack([rad * np.cos(ph), rad * np.sin(ph), r * np.sin(th)], axis=1)

    return MetricField(2, metric, nu=nu, name="torus", embedding=f, signature=np.ones(3))


def _hyperbolic(spec):
    minkowski = bool(spec.params.get("minkowski", 1.0))

    def f(xs):
        xs = np.atleast_2d(xs)
        al, be = xs[:, 0], xs[:, 1]
        return np.stack([np.cosh(al), np.sinh(al) * np.cos(be), np.sinh(al) * np.sin(be)], axis=1)

    if minkowski:
        sig = np.array([-1.0, 1.0, 1.0])

        def metric(xs):
            out = np.zeros((xs.shape[0], 2, 2))
            out[:, 0, 0] = 1.0
            out[:, 1, 1] = np.sinh(xs[:, 0]) ** 2
            return out

        def nu(xs, us):
            out = np.zeros_like(us)
            out[:, 0] = np.sinh(2.0 * xs[:, 0]) * us[:, 1] ** 2
            return out
    else:
        # the same parametrization pulled back through the Euclidean inner product
        sig = np.ones(3)

        def metric(xs):
            out = np.zeros((xs.shape[0], 2, 2))
            out[:, 0, 0] = np.cosh(2.0 * xs[:, 0])
            out[:, 1, 1] = np.sinh(xs[:, 0]) ** 2
            return out

        def nu(xs, us):
            out = np.zeros_like(us)
            s2 = np.sinh(2.0 * xs[:, 0])
            out[:, 0] = 2.0 * s2 * us[:, 0] ** 2 + s2 * us[:, 1] ** 2
            return out

    return MetricField(2, metric, nu=nu, domain=lambda xs: xs[:, 0] > 0.0, name="hyperbolic",
                       embedding=f, signature=sig)


def _paraboloid(spec):
    d = spec.dim

    def metric(xs):
        return np.eye(d) + 4.0 * xs[:, :, None] * xs[:, None, :]

    def nu(xs, us):
        return 8.0 * np.sum(xs * us, axis=1)[:, None] * us

    def f(xs):
        xs = np.atleast_2d(xs)
        return np.concatenate([xs, np.sum(xs * xs, axis=1)[:, None]], axis=1)

    return MetricField(d, metric, nu=nu, name="paraboloid", embedding=f, signature=np.ones(d + 1))


def _eggtray(spec):
    def grad_h(xs):
        x, y = xs[:, 0], xs[:, 1]
        return np.stack([-2.0 * np.sin(x) * np.cos(y), -2.0 * np.cos(x) * np.sin(y)], axis=1)

    def metric(xs):
        g = grad_h(xs)
        return np.eye(2) + g[:, :, None] * g[:, None, :]

    def nu(xs, us):
        x, y = xs[:, 0], xs[:, 1]
        g = grad_h(xs)
        hxx = -2.0 * np.cos(x) * np.cos(y)
        hxy = 2.0 * np.sin(x) * np.sin(y)
        Hu = np.stack([hxx * us[:, 0] + hxy * us[:, 1], hxy * us[:, 0] + hxx * us[:, 1]], axis=1)
        return 2.0 * np.sum(g * us, axis=1)[:, None] * Hu

    def f(xs):
        xs = np.atleast_2d(xs)
        return np.stack([xs[:, 0], xs[:, 1], 2.0 * np.cos(xs[:, 0]) * np.cos(xs[:, 1])], axis=1)

    return MetricField(2, metric, nu=nu, name="eggtray", embedding=f, signature=np.ones(3))


def spd_pack_indices(n: int):
    """Lower-triangle positions in column-major order: (0,0), (1,0), ..., (n-1,0), (1,1), ..."""
    rows, cols = np.triu_indices(n)
    return cols, rows


def _spd(spec):
    n = int(spec.params["n"])
    m = n * (n + 1) // 2
    rows, cols = spd_pack_indices(n)
    basis = np.zeros((m, n, n))
    basis[np.arange(m), rows, cols] = 1.0

    def lower(xs):
        L = np.zeros((xs.shape[0], n, n))
        L[:, rows, cols] = xs
        return L

    def sym_product(E, L):
        # vec(E_k L^T + L E_k^T) for every basis element k -> (N, n*n, m)
        A = np.einsum("kab,ncb->nack", E, L)
        return (A + A.transpose(0, 2, 1, 3)).reshape(L.shape[0], n * n, m)

    def f(xs):
        L = lower(np.atleast_2d(xs))
        return np.einsum("nab,ncb->nac", L, L).reshape(L.shape[0], n * n)

    def jac(xs):
        return sym_product(basis, lower(xs))

    def second(xs, us):
        return sym_product(basis, lower(us))

    def domain(xs):
        return np.all(xs[:, [k for k in range(m) if rows[k] == cols[k]]] > 0.0, axis=1)

    return _pullback(m, f, jac, second, np.ones(n * n), "spd", domain=domain)


def _gaussian(spec):
    def metric(xs):
        s2 = xs[:, 1] ** 2
        out = np.zeros((xs.shape[0], 2, 2))
        out[:, 0, 0] = 1.0 / s2
        out[:, 1, 1] = 2.0 / s2
        return out

    def nu(xs, us):
        out = np.zeros_like(us)
        out[:, 1] = -2.0 * (us[:, 0] ** 2 + 2.0 * us[:, 1] ** 2) / xs[:, 1] ** 3
        return out

    return MetricField(2, metric, nu=nu, domain=lambda xs: xs[:, 1] > 0.0, name="gaussian")


def _cauchy(spec):
    def metric(xs):
        c = 0.5 / xs[:, 1] ** 2
        return c[:, None, None] * np.eye(2)

    def nu(xs, us):
        out = np.zeros_like(us)
        out[:, 1] = -np.sum(us * us, axis=1) / xs[:, 1] ** 3
        return out

    return MetricField(2, metric, nu=nu, domain=lambda xs: xs[:, 1] > 0.0, name="cauchy")


_FRECHET_CROSS = 1.0 - EULER_GAMMA
_FRECHET_SHAPE = (1.0 - EULER_GAMMA) ** 2 + np.pi**2 / 6.0


def _frechet(spec):
    # (scale beta, shape lambda)
    def metric(xs):
        be, la = xs[:, 0], xs[:, 1]
        out = np.empty((xs.shape[0], 2, 2))
        out[:, 0, 0] = la**2 / be**2
        out[:, 0, 1] = out[:, 1, 0] = _FRECHET_CROSS / be
        out[:, 1, 1] = _FRECHET_SHAPE / la**2
        return out

    def nu(xs, us):
        be, la = xs[:, 0], xs[:, 1]
        u1, u2 = us[:, 0], us[:, 1]
        d_be = -2.0 * la**2 * u1**2 / be**3 - 2.0 * _FRECHET_CROSS * u1 * u2 / be**2
        d_la = 2.0 * la * u1**2 / be**2 - 2.0 * _FRECHET_SHAPE * u2**2 / la**3
        return np.stack([d_be, d_la], axis=1)

    return MetricField(2, metric, nu=nu, domain=lambda xs: np.all(xs > 0.0, axis=1), name="frechet")


def _pareto(spec):
    # (shape theta, scale alpha)
    def metric(xs):
        th, al = xs[:, 0], xs[:, 1]
        out = np.zeros((xs.shape[0], 2, 2))
        out[:, 0, 0] = 1.0 / th**2
        out[:, 1, 1] = th**2 / al**2
        return out

    def nu(xs, us):
        th, al = xs[:, 0], xs[:, 1]
        u1, u2 = us[:, 0], us[:, 1]
        return np.stack([-2.0 * u1**2 / th**3 + 2.0 * th * u2**2 / al**2,
                         -2.0 * th**2 * u2**2 / al**3], axis=1)

    return MetricField(2, metric, nu=nu, domain=lambda xs: np.all(xs > 0.0, axis=1), name="pareto")


def _bregman_gaussian(spec):
    # Hessian of A(t1, t2) = t1^2 / (2 t2) + log(2 pi / t2) / 2
    def metric(xs):
        t1, t2 = xs[:, 0], xs[:, 1]
        out = np.empty((xs.shape[0], 2, 2))
        out[:, 0, 0] = 1.0 / t2
        out[:, 0, 1] = out[:, 1, 0] = -t1 / t2**2
        out[:, 1, 1] = t1**2 / t2**3 + 0.5 / t2**2
        return out

    def nu(xs, us):
        t1, t2 = xs[:, 0], xs[:, 1]
        u1, u2 = us[:, 0], us[:, 1]
        d1 = -2.0 * u1 * u2 / t2**2 + 2.0 * t1 * u2**2 / t2**3
        d2 = -u1**2 / t2**2 + 4.0 * t1 * u1 * u2 / t2**3 + (-3.0 * t1**2 / t2**4 - 1.0 / t2**3) * u2**2
        return np.stack([d1, d2], axis=1)

    return MetricField(2, metric, nu=nu, domain=lambda xs: xs[:, 1] > 0.0, name="bregman_gaussian")


# --------------------------------------------------------------------------
# registry

def _sphere_endpoints(n):
    return np.linspace(0.0, 1.0, n, endpoint=False), np.full(n, 0.5)


def _spd_endpoints(n):
    rows, cols = spd_pack_indices(n)
    m = len(rows)
    return np.eye(n)[rows, cols], np.linspace(0.5, 1.0, m)


_FIXED2 = {
    "torus": ((0.0, 0.0), (5.0 * np.pi / 4.0, 5.0 * np.pi / 4.0)),
    "hyperbolic": ((1.0, 1.0), (0.1, 0.1)),
    "eggtray": ((-5.0, 5.0), (5.0, 5.0)),
    "gaussian": ((-1.0, 0.5), (1.0, 1.0)),
    "frechet": ((0.5, 0.5), (1.0, 1.0)),
    "cauchy": ((-1.0, 0.5), (1.0, 1.0)),
    "pareto": ((0.5, 0.5), (1.0, 1.0)),
    "bregman_gaussian": ((0.5, 0.5), (1.0, 1.0)),
}

_BUILDERS = {
    "sphere": _sphere,
    "ellipsoid": _ellipsoid,
    "torus": _torus,
    "hyperbolic": _hyperbolic,
    "paraboloid": _paraboloid,
    "spd": _spd,
    "eggtray": _eggtray,
    "gaussian": _gaussian,
    "frechet": _frechet,
    "cauchy": _cauchy,
    "pareto": _pareto,
    "bregman_gaussian": _bregman_gaussian,
    "euclidean": _euclidean,
}

MANIFOLDS = tuple(_BUILDERS)
_VARIABLE_DIM = {"sphere", "ellipsoid", "paraboloid", "euclidean"}
_ALLOWED_PARAMS = {
    "ellipsoid": {"p_min", "p_max"},
    "torus": {"R", "r"},
    "hyperbolic": {"minkowski"},
    "spd": {"n"},
}


def _validate_params(name, params):
    extra = set(params) - _ALLOWED_PARAMS.get(name, set())
    if extra:
        raise ValueError(f"unknown parameter(s) for {name}: {sorted(extra)}")
    if name == "torus":
        R, r = params.get("R", 3.0), params.get("r", 1.0)
        if not R > r > 0:
            raise ValueError(f"torus needs R > r > 0, got R={R}, r={r}")
    if name == "ellipsoid":
        lo, hi = params.get("p_min", 0.5), params.get("p_max", 1.0)
        if not (lo > 0 and hi > 0):
            raise ValueError("ellipsoid half-axes must be positive")


def manifold_spec(name: str, dim: Optional[int] = None, **params) -> ManifoldSpec:
    """Resolve a family name, dimension and parameters into a :class:`ManifoldSpec`.

    For ``spd`` the ``dim`` argument is the matrix size ``n``; the chart
    dimension is then ``n (n + 1) / 2``.
    """
    if name not in _BUILDERS:
        raise UnknownManifoldError(f"unknown manifold {name!r}; choose from {', '.join(MANIFOLDS)}")
    params = {k: float(v) for k, v in params.items()}
    _validate_params(name, params)
    if name in _VARIABLE_DIM:
        d = 2 if dim is None else int(dim)
        if d < 1:
            raise DimensionError("dimension must be >= 1")
        if name in ("sphere", "ellipsoid"):
            a, b = _sphere_endpoints(d)
        elif name == "paraboloid" and d == 2:
            a, b = np.array([1.0, 1.0]), np.array([0.0, 0.5])
        else:
            a, b = np.zeros(d), np.ones(d)
    elif name == "spd":
        n = int(params.get("n", dim if dim is not None else 2))
        if n < 1:
            raise DimensionError("matrix size must be >= 1")
        params["n"] = float(n)
        d = n * (n + 1) // 2
        a, b = _spd_endpoints(n)
    else:
        if dim not in (None, 2):
            raise DimensionError(f"{name} is two-dimensional")
        d = 2
        a, b = (np.array(p, dtype=float) for p in _FIXED2[name])
    return ManifoldSpec(name, d, params, (a, b))


def catalog(spec: ManifoldSpec) -> MetricField:
    if spec.name not in _BUILDERS:
        raise UnknownManifoldError(f"unknown manifold {spec.name!r}")
    _validate_params(spec.name, spec.params)
    return _BUILDERS[spec.name](spec)


def load(name: str, dim: Optional[int] = None, start=None, end=None, **params):
    """Return ``(metric, a, b)`` with default endpoints unless overridden."""
    spec = manifold_spec(name, dim, **params)
    metric = catalog(spec)
    a, b = spec.default_endpoints
    a = a if start is None else chart_point(start, spec.dim)
    b = b if end is None else chart_point(end, spec.dim)
    return metric, a, b
