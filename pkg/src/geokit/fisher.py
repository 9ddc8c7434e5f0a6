"""Fisher information by numerical integration of the score outer product.

This is the oracle the closed-form statistical metrics in
:mod:`geokit.manifolds` are checked against: scores come from central
differences of the log-density, and the expectation is integrated with
adaptive Gauss-Kronrod quadrature (QUADPACK) over the support.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate

from .core import EPS_FIRST
from .errors import LeftChartError, QuadratureError, UnknownFamily

__all__ = ["FAMILIES", "log_density", "support", "fisher_rao_quadrature"]


def _gaussian_logpdf(x, th):
    mu, sigma = th
    return -0.5 * ((x - mu) / sigma) ** 2 - math.log(sigma) - 0.5 * math.log(2.0 * math.pi)


def _cauchy_logpdf(x, th):
    mu, sigma = th
    return math.log(sigma) - math.log(math.pi) - math.log((x - mu) ** 2 + sigma**2)


def _frechet_logpdf(x, th):
    beta, lam = th
    logz = math.log(x / beta)
    if -lam * logz > 700.0:
        return -math.inf
    return math.log(lam / beta) - (lam + 1.0) * logz - math.exp(-lam * logz)


def _pareto_logpdf(x, th):
    # analytic form on the support x >= alpha; the indicator is handled by
    # the integration interval so alpha-scores stay finite at the edge
    theta, alpha = th
    return math.log(theta) + theta * math.log(alpha) - (theta + 1.0) * math.log(x)


FAMILIES = {
    "gaussian": _gaussian_logpdf,
    "cauchy": _cauchy_logpdf,
    "frechet": _frechet_logpdf,
    "pareto": _pareto_logpdf,
}


def _check_domain(family, th):
    if family in ("gaussian", "cauchy"):
        ok = th[1] > 0
    else:
        ok = th[0] > 0 and th[1] > 0
    if not ok:
        raise LeftChartError(f"{family} parameters {tuple(th)} are outside the parameter domain")


def log_density(family: str, x: float, theta) -> float:
    try:
        fn = FAMILIES[family]
    except KeyError:
        raise UnknownFamily(family) from None
    return fn(x, theta)


def support(family: str, theta):
    """Support of the density at ``theta``."""
    if family in ("gaussian", "cauchy"):
        return -math.inf, math.inf
    if family == "frechet":
        return 0.0, math.inf
    return float(theta[1]), math.inf


def _log_scale(family, theta):
    # positive supports are integrated in s = log(x / scale) so tails decay exponentially
    if family == "frechet":
        return float(theta[0]), -math.inf
    if family == "pareto":
        return float(theta[1]), 0.0
    return None, None


def fisher_rao_quadrature(family: str, theta, epsabs: float = 1e-10, epsrel: float = 1e-9,
                          max_abserr: float = 1e-6) -> np.ndarray:
    """Fisher information ``E[score score^T]`` at parameter ``theta``.

    Raises :class:`QuadratureError` carrying the QUADPACK error estimate when
    an entry does not converge to the requested accuracy.
    """
    if family not in FAMILIES:
        raise UnknownFamily(family)
    th = np.asarray(theta, dtype=float)
    _check_domain(family, th)
    logp = FAMILIES[family]
    d = th.size
    h = EPS_FIRST * max(1.0, float(np.linalg.norm(th)))

    def score(x):
        s = np.empty(d)
        for k in range(d):
            tp = th.copy()
            tm = th.copy()
            tp[k] += h
            tm[k] -= h
            s[k] = (logp(x, tp) - logp(x, tm)) / (tp[k] - tm[k])
        return s

    scale, s_lo = _log_scale(family, th)
    if scale is None:
        lo, hi = support(family, th)
    else:
        lo, hi = s_lo, math.inf
    out = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):

            def integrand(v, i=i, j=j):
                if scale is None:
                    x, jac = v, 1.0
                else:
                    if v > 700.0:
                        return 0.0
                    x = scale * math.exp(v)
                    jac = x
                if not np.isfinite(x) or x == 0.0:
                    return 0.0
                lp = logp(x, th)
                if not np.isfinite(lp):
                    return 0.0
                p = math.exp(lp) * jac
                if p == 0.0:
                    return 0.0
                sc = score(x)
                return sc[i] * sc[j] * p

            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, err = integrate.quad(integrand, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=500)[:2]
            if not np.isfinite(val) or err > max_abserr * max(1.0, abs(val)):
                raise QuadratureError(
                    f"quadrature for entry ({i}, {j}) did not converge: estimate {val}, error {err:.3g}",
                    abserr=err,
                )
            out[i, j] = out[j, i] = val
    return out
