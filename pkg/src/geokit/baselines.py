"""Reference solvers on the same discrete energy as GEORCE.

Gradient descent and ADAM update the interior points with the interior
energy gradient. The sparse Newton method exploits that the Hessian of the
discrete energy is block tridiagonal in the interior points and solves the
Newton system by block Thomas elimination.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import linalg

from .core import (
    EPS_SECOND,
    DiscreteCurve,
    MetricField,
    SolverReport,
    Termination,
    _fd_steps,
    _interior_gradient,
    chart_point,
    energy_gradient_interior,
)
from .errors import DimensionError, DivergedError, LeftChartError, SingularBlockError
from .georce import SeededPerturbation, SolverConfig, _frozen, _report, initial_curve

__all__ = [
    "FirstOrderConfig",
    "BlockTridiagonal",
    "gd_solve",
    "adam_solve",
    "hessian_blocks",
    "block_tridiag_solve",
    "sparse_newton_solve",
]

log = logging.getLogger(__name__)


@dataclass
class FirstOrderConfig:
    step: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iter: int = 1000
    tol: float = 1e-4
    T: int = 100
    init: Union[str, DiscreteCurve, SeededPerturbation] = "straight"

    def __post_init__(self):
        if self.step < 0:
            raise ValueError("step must be non-negative")
        if self.T < 2:
            raise ValueError(f"T must be >= 2, got {self.T}")


def _setup(geometry, a, b, T, init):
    a = chart_point(a, geometry.dim)
    b = chart_point(b, geometry.dim)
    cfg = SolverConfig(T=T, init=init)
    pts = initial_curve(a, b, cfg).points.copy()
    if not np.all(geometry.in_domain(pts)):
        raise LeftChartError("initial curve leaves the chart domain")
    return a, b, pts


def _grad_energy(geometry, pts):
    us = np.diff(pts, axis=0)
    G, nu, _ = _frozen(geometry, pts, us)
    return _interior_gradient(G, nu, us), float(np.sum(geometry.sq_speed(pts[:-1], us)))


def _energy_or_inf(geometry, pts):
    if not np.all(geometry.in_domain(pts)):
        return np.inf
    with np.errstate(all="ignore"):
        e = float(np.sum(geometry.sq_speed(pts[:-1], np.diff(pts, axis=0))))
    return e if np.isfinite(e) else np.inf


def _first_order(geometry, a, b, config, name, adam):
    config = config or FirstOrderConfig()
    a, b, pts = _setup(geometry, a, b, config.T, config.init)
    g, e0 = _grad_energy(geometry, pts)
    gnorm = float(np.linalg.norm(g))
    grads, energies, steps = [gnorm], [e0], []
    feas = [float(np.linalg.norm(pts[-1] - pts[0] - (b - a)))]
    m = np.zeros_like(g)
    v = np.zeros_like(g)
    termination = Termination.MAX_ITERATIONS
    it = 0
    while True:
        if gnorm < config.tol:
            termination = Termination.CONVERGED
            break
        if it >= config.max_iter:
            break
        if adam:
            k = it + 1
            m = config.beta1 * m + (1 - config.beta1) * g
            v = config.beta2 * v + (1 - config.beta2) * g * g
            mhat = m / (1 - config.beta1**k)
            vhat = v / (1 - config.beta2**k)
            step = config.step * mhat / (np.sqrt(vhat) + config.eps)
        else:
            step = config.step * g
        trial = pts.copy()
        trial[1:-1] -= step
        if not np.all(geometry.in_domain(trial)):
            termination = Termination.LEFT_CHART
            break
        pts = trial
        it += 1
        try:
            g, e = _grad_energy(geometry, pts)
        except LeftChartError:
            termination = Termination.LEFT_CHART
            break
        if not np.isfinite(e) or e > 1e6 * max(e0, np.finfo(float).tiny):
            raise DivergedError(f"{name} diverged at iteration {it}: energy {e:.3g} vs initial {e0:.3g}")
        gnorm = float(np.linalg.norm(g))
        grads.append(gnorm)
        energies.append(e)
        steps.append(config.step)
        feas.append(float(np.linalg.norm(np.diff(pts, axis=0).sum(axis=0) - (b - a))))
    log.debug("%s finished after %d iterations: %s", name, it, termination)
    return _report(geometry, pts, np.diff(pts, axis=0), it, grads, steps, energies, feas, termination, name)


def gd_solve(metric, a, b, config: Optional[FirstOrderConfig] = None) -> SolverReport:
    """Full-gradient descent ``x_t <- x_t - step * grad_{x_t} E`` on the interior points."""
    return _first_order(metric, a, b, config, "gd", adam=False)


def adam_solve(metric, a, b, config: Optional[FirstOrderConfig] = None) -> SolverReport:
    """ADAM with bias correction on the interior-point energy gradient."""
    return _first_order(metric, a, b, config, "adam", adam=True)


@dataclass
class BlockTridiagonal:
    """Symmetric block-tridiagonal matrix; lower blocks are the transposed upper blocks."""

    diag_blocks: np.ndarray
    upper_blocks: np.ndarray

    def __post_init__(self):
        self.diag_blocks = np.asarray(self.diag_blocks, dtype=float)
        n = self.diag_blocks.shape[0]
        d = self.diag_blocks.shape[1] if self.diag_blocks.ndim == 3 else 0
        up = np.asarray(self.upper_blocks, dtype=float)
        if n > 1 and up.size == 0:
            up = up.reshape(0, d, d)
        self.upper_blocks = up.reshape(-1, d, d) if up.size else np.zeros((0, d, d))
        if self.diag_blocks.ndim != 3 or self.diag_blocks.shape[1] != self.diag_blocks.shape[2]:
            raise DimensionError("diagonal blocks must have shape (n, d, d)")
        if self.upper_blocks.shape[0] != n - 1:
            raise DimensionError(f"expected {n - 1} upper blocks, got {self.upper_blocks.shape[0]}")

    @property
    def n_blocks(self) -> int:
        return self.diag_blocks.shape[0]

    @property
    def block_size(self) -> int:
        return self.diag_blocks.shape[1]

    def to_dense(self) -> np.ndarray:
        n, d = self.n_blocks, self.block_size
        H = np.zeros((n * d, n * d))
        for i in range(n):
            H[i * d:(i + 1) * d, i * d:(i + 1) * d] = self.diag_blocks[i]
        for i in range(n - 1):
            H[i * d:(i + 1) * d, (i + 1) * d:(i + 2) * d] = self.upper_blocks[i]
            H[(i + 1) * d:(i + 2) * d, i * d:(i + 1) * d] = self.upper_blocks[i].T
        return H

    def shifted(self, lam: float) -> "BlockTridiagonal":
        eye = np.eye(self.block_size)
        return BlockTridiagonal(self.diag_blocks + lam * eye, self.upper_blocks.copy())


def _metric_position_jac(metric, xs, us):
    # M[n][:, j] = (d/dy_j G(y)) u at y = x_n, by central differences
    N, d = xs.shape
    h = _fd_steps(xs)
    M = np.empty((N, d, d))
    for j in range(d):
        xp = xs.copy()
        xm = xs.copy()
        xp[:, j] += h
        xm[:, j] -= h
        dG = (metric.tensor(xp) - metric.tensor(xm)) / (xp[:, j] - xm[:, j])[:, None, None]
        M[:, :, j] = np.einsum("nik,nk->ni", dG, us)
    return M


def _nu_position_jac(metric, xs, us):
    # H[n][i, j] = d nu_i / d y_j: second derivatives of u^T G(y) u in y
    N, d = xs.shape
    h = _fd_steps(xs)
    H = np.empty((N, d, d))
    for j in range(d):
        xp = xs.copy()
        xm = xs.copy()
        xp[:, j] += h
        xm[:, j] -= h
        H[:, :, j] = (metric.nu(xp, us) - metric.nu(xm, us)) / (xp[:, j] - xm[:, j])[:, None]
    return 0.5 * (H + np.transpose(H, (0, 2, 1)))


def hessian_blocks(metric: MetricField, curve) -> BlockTridiagonal:
    """Blocks of the interior Hessian of ``E = sum_t u_t^T G(x_t) u_t``.

    With ``M_t[:, j] = d_j G(x_t) u_t`` and ``Hyy_t`` the position Hessian of
    ``u_t^T G(y) u_t``:

        H_tt      = Hyy_t - 2 (M_t + M_t^T) + 2 G_t + 2 G_{t-1}
        H_{t,t+1} = 2 M_t^T - 2 G_t
    """
    if not isinstance(metric, MetricField):
        raise TypeError("hessian_blocks needs a Riemannian MetricField")
    pts = curve.points if isinstance(curve, DiscreteCurve) else np.asarray(curve, dtype=float)
    if not np.all(metric.in_domain(pts)):
        raise LeftChartError("curve leaves the chart domain")
    us = np.diff(pts, axis=0)
    xs = pts[:-1]
    G = metric.tensor(xs)
    M = _metric_position_jac(metric, xs[1:], us[1:])
    Hyy = _nu_position_jac(metric, xs[1:], us[1:])
    Mt = np.transpose(M, (0, 2, 1))
    diag = Hyy - 2.0 * (M + Mt) + 2.0 * G[1:] + 2.0 * G[:-1]
    upper = 2.0 * Mt[:-1] - 2.0 * G[1:-1]
    return BlockTridiagonal(diag, upper)


def _factor(block):
    scale = np.max(np.abs(block))
    if not np.all(np.isfinite(block)) or scale == 0.0:
        raise SingularBlockError("singular pivot block")
    with warnings.catch_warnings():
        warnings.simplefilter("error", linalg.LinAlgWarning)
        try:
            lu = linalg.lu_factor(block)
        except (linalg.LinAlgWarning, linalg.LinAlgError, ValueError) as exc:
            raise SingularBlockError("singular pivot block") from exc
    if np.min(np.abs(np.diag(lu[0]))) <= 1e2 * np.finfo(float).eps * scale * block.shape[0]:
        raise SingularBlockError("singular pivot block")
    return lu


def block_tridiag_solve(H: BlockTridiagonal, rhs) -> np.ndarray:
    """Solve ``H x = rhs`` by block forward elimination and back substitution.

    ``rhs`` is an ``(n, d)`` array (or list of ``n`` vectors). Each modified
    diagonal block is factorized once and used for both the coupling block
    and the right-hand side.
    """
    r = np.asarray(rhs, dtype=float)
    n, d = H.n_blocks, H.block_size
    if r.shape != (n, d):
        raise DimensionError(f"rhs must have shape {(n, d)}, got {r.shape}")
    D, U = H.diag_blocks, H.upper_blocks
    Cp = np.zeros((max(n - 1, 0), d, d))
    rp = np.empty((n, d))
    for i in range(n):
        Di = D[i]
        ri = r[i]
        if i > 0:
            L = U[i - 1].T
            Di = Di - L @ Cp[i - 1]
            ri = ri - L @ rp[i - 1]
        lu = _factor(Di)
        if i < n - 1:
            sol = linalg.lu_solve(lu, np.column_stack([U[i], ri]))
            Cp[i] = sol[:, :d]
            rp[i] = sol[:, d]
        else:
            rp[i] = linalg.lu_solve(lu, ri)
    x = np.empty((n, d))
    x[-1] = rp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = rp[i] - Cp[i] @ x[i + 1]
    return x


def sparse_newton_solve(metric: MetricField, a, b, config: Optional[SolverConfig] = None, regularized: bool = False,
                        lambda0: float = 1.0, kappa: float = 0.5) -> SolverReport:
    """Hybrid Newton / gradient method with block-tridiagonal Newton solves.

    The Newton direction is used when its summed inner product with the
    negative gradient is non-negative, the gradient direction otherwise.
    The regularized variant adds ``lam I`` to the diagonal blocks and sets
    ``lam <- kappa lam`` after a Newton step and ``lam <- lam / kappa`` after
    a gradient step.
    """
    if not isinstance(metric, MetricField):
        raise TypeError("sparse Newton needs a Riemannian MetricField")
    config = config or SolverConfig()
    name = "sparse-newton-reg" if regularized else "sparse-newton"
    a, b, pts = _setup(metric, a, b, config.T, config.init)
    g, e = _grad_energy(metric, pts)
    gnorm = float(np.linalg.norm(g))
    grads, energies, steps = [gnorm], [e], []
    feas = [float(np.linalg.norm(np.diff(pts, axis=0).sum(axis=0) - (b - a)))]
    lam = float(lambda0)
    termination = Termination.MAX_ITERATIONS
    it = 0
    while True:
        if gnorm < config.tol:
            termination = Termination.CONVERGED
            break
        if it >= config.max_iter:
            break
        s_grad = -g
        use_newton = False
        try:
            H = hessian_blocks(metric, pts)
            if regularized:
                H = H.shifted(lam)
            s_newton = block_tridiag_solve(H, s_grad)
            use_newton = bool(np.all(np.isfinite(s_newton))) and float(np.sum(s_grad * s_newton)) >= 0.0
        except SingularBlockError:
            s_newton = None
        direction = s_newton if use_newton else s_grad
        if regularized:
            lam = lam * kappa if use_newton else lam / kappa
        alpha = 1.0
        accepted = False
        for _ in range(config.max_backtracks + 1):
            trial = pts.copy()
            trial[1:-1] += alpha * direction
            e_trial = _energy_or_inf(metric, trial)
            if e_trial < e:
                accepted = True
                break
            alpha *= config.rho
        if not accepted:
            termination = Termination.LINE_SEARCH_STALLED
            break
        pts = trial
        it += 1
        g, e = _grad_energy(metric, pts)
        gnorm = float(np.linalg.norm(g))
        grads.append(gnorm)
        energies.append(e)
        steps.append(alpha)
        feas.append(float(np.linalg.norm(np.diff(pts, axis=0).sum(axis=0) - (b - a))))
    log.debug("%s finished after %d iterations: %s", name, it, termination)
    return _report(metric, pts, np.diff(pts, axis=0), it, grads, steps, energies, feas, termination, name)
