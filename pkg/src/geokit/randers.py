"""Randers metrics from a Riemannian background and a force field.

A swimmer with self-propulsion speed ``v0`` (measured in the background
metric ``g``) drifting in a force field ``f`` reaches its destination fastest
along geodesics of the Randers metric

    F(x, v) = sqrt(v^T a(x) v) + b(x)^T v

with ``1 / lam = v0^2 - |f|_g^2``, ``f_flat = g f``, ``a = lam g + lam^2 f_flat f_flat^T``
and ``b = -lam f_flat``. The metric is proper while ``|f|_g < v0``.
"""

from __future__ import annotations

from typing import Callable, Optional, Union

import numpy as np

from .core import FinslerField, MetricField, SPDMatrix, chart_point
from .errors import GeoKitError, PropernessError

__all__ = [
    "RandersField",
    "generic_force_field",
    "randers_coefficients",
    "randers_F",
    "randers_fundamental_tensor",
]


def generic_force_field(metric: MetricField, x) -> np.ndarray:
    """``f(x) = (sin x * cos x) / (cos x^T G(x) cos x)``, batched over rows of ``x``."""
    x = np.asarray(x, dtype=float)
    xs = np.atleast_2d(x)
    c = np.cos(xs)
    G = metric.eval_metric(xs)
    den = np.einsum("ni,nij,nj->n", c, G, c)
    small = den < 1e-12
    if np.any(small):
        raise GeoKitError(f"force field undefined at {xs[np.argmax(small)]}: cos(x) has vanishing metric norm")
    f = np.sin(xs) * c / den[:, None]
    return f[0] if x.ndim == 1 else f


class RandersField(FinslerField):
    """Finsler field of Randers type.

    ``force`` is ``"generic"``, ``"none"``/``None`` or a batched callable
    ``(N, d) -> (N, d)``. Points where the force is at least as strong as the
    self-propulsion are excluded from the domain, so solvers treat them as
    leaving the chart; direct evaluation there raises :class:`PropernessError`.
    """

    def __init__(self, background: MetricField, force: Union[str, Callable, None] = "generic", v0: float = 1.0,
                 scan=None, name: Optional[str] = None):
        if not v0 > 0:
            raise ValueError("v0 must be positive")
        self.background = background
        self.v0 = float(v0)
        if force is None or force == "none":
            self.force_kind = "none"
            self.force = lambda xs: np.zeros_like(np.atleast_2d(xs), dtype=float)
        elif force == "generic":
            self.force_kind = "generic"
            self.force = lambda xs: np.atleast_2d(generic_force_field(background, xs))
        elif callable(force):
            self.force_kind = "custom"
            self.force = lambda xs: np.atleast_2d(force(xs))
        else:
            raise ValueError(f"unknown force field {force!r}")
        super().__init__(
            background.dim,
            self._F_batch,
            self._tensor_batch,
            domain=self._domain,
            name=name or f"randers({background.name})",
        )
        if scan is not None:
            self.check_proper(scan)

    # pointwise coefficients, batched
    def _parts(self, xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        g = self.background.eval_metric(xs)
        f = self.force(xs)
        f_flat = np.einsum("nij,nj->ni", g, f)
        fg2 = np.einsum("ni,ni->n", f, f_flat)
        return g, f_flat, fg2

    def coefficients(self, xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        g, f_flat, fg2 = self._parts(xs)
        inv = self.v0**2 - fg2
        if np.any(inv <= 0):
            k = int(np.argmax(inv <= 0))
            raise PropernessError(
                f"Randers metric not proper at x={xs[k]}: |f|_g = {np.sqrt(fg2[k]):.6g} >= v0 = {self.v0:.6g}"
            )
        lam = 1.0 / inv
        a = lam[:, None, None] * g + (lam**2)[:, None, None] * np.einsum("ni,nj->nij", f_flat, f_flat)
        b = -lam[:, None] * f_flat
        return a, b, lam

    def _domain(self, xs):
        ok = self.background.in_domain(xs)
        if not np.any(ok):
            return ok
        ok = np.array(ok, dtype=bool)
        with np.errstate(all="ignore"):
            try:
                _, _, fg2 = self._parts(xs[ok])
            except GeoKitError:
                return np.zeros(len(xs), dtype=bool)
        ok[ok] = fg2 < self.v0**2
        return ok

    def check_proper(self, points):
        """Raise :class:`PropernessError` if any of ``points`` violates ``|f|_g < v0``."""
        self.coefficients(points)

    def _F_batch(self, xs, vs):
        a, b, _ = self.coefficients(xs)
        alpha = np.sqrt(np.maximum(np.einsum("ni,nij,nj->n", vs, a, vs), 0.0))
        return alpha + np.einsum("ni,ni->n", b, vs)

    def _tensor_batch(self, xs, vs):
        a, b, _ = self.coefficients(xs)
        av = np.einsum("nij,nj->ni", a, vs)
        alpha = np.sqrt(np.einsum("ni,ni->n", vs, av))
        if np.any(alpha == 0):
            raise GeoKitError("fundamental tensor is undefined for a zero velocity")
        ell = av / alpha[:, None]
        F = alpha + np.einsum("ni,ni->n", b, vs)
        # 1/2 Hess(F^2) = grad F grad F^T + F Hess F
        m = ell + b
        return (F / alpha)[:, None, None] * (a - np.einsum("ni,nj->nij", ell, ell)) + np.einsum("ni,nj->nij", m, m)


def _single(rf, x):
    return chart_point(x, rf.dim)[None, :]


def _velocity(rf, v):
    v = chart_point(v, rf.dim)
    if not np.any(v):
        raise GeoKitError("Randers quantities are undefined for the zero velocity")
    return v[None, :]


def randers_coefficients(rf: RandersField, x):
    """Return ``(a, b, lam)`` at a single chart point."""
    a, b, lam = rf.coefficients(_single(rf, x))
    return SPDMatrix(a[0]), b[0], float(lam[0])


def randers_F(rf: RandersField, x, v) -> float:
    return float(rf.F(_single(rf, x), _velocity(rf, v))[0])


def randers_fundamental_tensor(rf: RandersField, x, v) -> SPDMatrix:
    return SPDMatrix(rf.tensor(_single(rf, x), _velocity(rf, v))[0])
