import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geokit import (
    DiscreteCurve,
    LeftChartError,
    MetricField,
    SPDMatrix,
    controls_from_curve,
    curve_from_controls,
    discretize_line,
    energy,
    energy_gradient_interior,
    length,
    pullback_metric_from_immersion,
    trapezoid_length,
)
from geokit.core import fd_gradient, stacked_gradient_norm
from geokit.errors import DimensionError
from geokit.manifolds import load, stereographic


def const_metric(d, c=1.0):
    return MetricField(d, lambda xs: c * np.broadcast_to(np.eye(d), (xs.shape[0], d, d)).copy(), name="const")


# discretize_line

def test_line_two_segments():
    c = discretize_line([0, 0], [1, 1], 2)
    np.testing.assert_array_equal(c.points, [[0, 0], [0.5, 0.5], [1, 1]])


def test_line_degenerate_endpoints():
    c = discretize_line([0, 0, 0], [0, 0, 0], 4)
    assert c.points.shape == (5, 3)
    assert not np.any(c.points)


def test_line_midpoint_eggtray_segment():
    c = discretize_line([-5, -5], [5, 5], 1000)
    np.testing.assert_array_equal(c.points[500], [0.0, 0.0])


def test_line_endpoints_bitwise():
    a = np.array([0.1, 0.7, 1 / 3])
    b = np.array([np.pi, -np.e, 2.0 / 7])
    c = discretize_line(a, b, 37)
    assert np.array_equal(c.points[0], a) and np.array_equal(c.points[-1], b)


@pytest.mark.parametrize("T", [0, 1])
def test_line_rejects_short_grid(T):
    with pytest.raises(ValueError):
        discretize_line([0, 0], [1, 1], T)


def test_line_rejects_dimension_mismatch():
    with pytest.raises(DimensionError):
        discretize_line([0, 0], [1, 1, 1], 4)


def test_curve_rejects_non_finite():
    with pytest.raises(ValueError):
        DiscreteCurve(np.array([[0.0, 0.0], [np.nan, 0.0], [1.0, 1.0]]))


def test_curve_points_read_only():
    c = discretize_line([0, 0], [1, 1], 3)
    with pytest.raises(ValueError):
        c.points[1, 0] = 3.0


# controls

def test_controls_of_line():
    u = controls_from_curve(discretize_line([0, 0], [1, 1], 2))
    np.testing.assert_array_equal(u, [[0.5, 0.5], [0.5, 0.5]])


def test_controls_of_constant_curve():
    u = controls_from_curve(discretize_line([2, 3], [2, 3], 5))
    assert not np.any(u)


def test_controls_random_curve_feasible():
    rng = np.random.default_rng(3)
    pts = rng.standard_normal((8, 3))
    u = controls_from_curve(pts)
    np.testing.assert_allclose(u.sum(axis=0), pts[-1] - pts[0], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_prefix_sum_roundtrip(T, d, seed):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((T + 1, d))
    rebuilt = curve_from_controls(pts[0], pts[-1], controls_from_curve(pts)).points
    np.testing.assert_allclose(rebuilt, pts, atol=1e-12)


# SPD matrix

def test_spd_rejects_asymmetric():
    with pytest.raises(LeftChartError):
        SPDMatrix([[2.0, 1.0], [0.0, 2.0]])


def test_spd_rejects_indefinite():
    with pytest.raises(LeftChartError):
        SPDMatrix([[1.0, 2.0], [2.0, 1.0]])


def test_spd_solve():
    M = SPDMatrix([[4.0, 1.0], [1.0, 3.0]])
    x = M.solve(np.array([1.0, 2.0]))
    np.testing.assert_allclose(np.asarray(M) @ x, [1.0, 2.0])


# energy and length

def test_energy_euclidean_line():
    e, _, _ = load("euclidean", 2)
    assert energy(e, discretize_line([0, 0], [1, 1], 2)) == pytest.approx(1.0)


def test_energy_scaled_metric():
    assert energy(const_metric(2, 4.0), discretize_line([0, 0], [1, 1], 2)) == pytest.approx(4.0)


def test_energy_sphere_against_scalar_loop():
    s, a, b = load("sphere", 2)
    c = discretize_line(a, b, 100)
    total = 0.0
    for t in range(100):
        x = c.points[t]
        u = c.points[t + 1] - x
        g = 4.0 / (1.0 + x[0] ** 2 + x[1] ** 2) ** 2
        total += g * (u[0] ** 2 + u[1] ** 2)
    assert energy(s, c) == pytest.approx(total, rel=1e-13)


@pytest.mark.parametrize("T", [2, 7, 100])
def test_length_euclidean_line(T):
    e, _, _ = load("euclidean", 2)
    assert length(e, discretize_line([0, 0], [1, 1], T)) == pytest.approx(np.sqrt(2), rel=1e-14)


def test_length_constant_curve():
    e, _, _ = load("euclidean", 3)
    assert length(e, discretize_line([1, 2, 3], [1, 2, 3], 4)) == 0.0


def test_trapezoid_rule_drops_half_end_samples():
    e, _, _ = load("euclidean", 2)
    T = 10
    c = discretize_line([0, 0], [1, 1], T)
    assert trapezoid_length(e, c) == pytest.approx(np.sqrt(2) * (T - 1) / T)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**31 - 1))
def test_cauchy_schwarz(T, seed):
    s, a, b = load("sphere", 2)
    rng = np.random.default_rng(seed)
    pts = discretize_line(a, b, T).points.copy()
    pts[1:-1] += 0.3 * rng.standard_normal(pts[1:-1].shape)
    assert length(s, pts) ** 2 <= T * energy(s, pts) * (1 + 1e-12)


def test_energy_outside_domain_raises():
    h, _, _ = load("hyperbolic")
    with pytest.raises(LeftChartError):
        energy(h, discretize_line([1.0, 0.0], [-1.0, 0.0], 4))


# gradients

def test_gradient_zero_on_euclidean_line():
    e, _, _ = load("euclidean", 2)
    g = energy_gradient_interior(e, discretize_line([0, 0], [1, 1], 6))
    assert np.allclose(g, 0.0)


def test_gradient_hand_expansion():
    e, _, _ = load("euclidean", 2)
    g = energy_gradient_interior(e, np.array([[0.0, 0.0], [0.6, 0.5], [1.0, 1.0]]))
    np.testing.assert_allclose(g, [[0.4, 0.0]], atol=1e-15)


def test_gradient_matches_fd_on_sphere():
    s, a, b = load("sphere", 2)
    rng = np.random.default_rng(11)
    pts = discretize_line(a, b, 12).points.copy()
    pts[1:-1] += 0.2 * rng.standard_normal(pts[1:-1].shape)
    g = energy_gradient_interior(s, pts)

    def E(z):
        p = pts.copy()
        p[1:-1] = z.reshape(-1, 2)
        return energy(s, p)

    ref = fd_gradient(E, pts[1:-1].ravel()).reshape(-1, 2)
    assert np.linalg.norm(g - ref) <= 1e-5 * np.linalg.norm(ref)
    assert stacked_gradient_norm(s, pts) == pytest.approx(np.linalg.norm(g))


def test_fd_gradient_quadratic():
    np.testing.assert_allclose(fd_gradient(lambda x: x @ x, np.array([1.0, 2.0])), [2.0, 4.0], atol=1e-7)


def test_fd_gradient_constant():
    assert not np.any(fd_gradient(lambda x: 3.0, np.array([0.3, -2.0, 5.0])))


def test_fd_nu_matches_torus():
    t, _, _ = load("torus")
    rng = np.random.default_rng(2)
    for _ in range(10):
        x, u = rng.uniform(-3, 3, 2), rng.standard_normal(2)
        ref = fd_gradient(lambda y: u @ t.eval_metric(y) @ u, x)
        np.testing.assert_allclose(t.eval_nu(x, u), ref, rtol=1e-5, atol=1e-8)


# pullback

def test_pullback_identity_immersion():
    m = pullback_metric_from_immersion(lambda x: np.eye(2), dim=2)
    np.testing.assert_allclose(m.eval_metric([0.3, -1.2]), np.eye(2))


def test_pullback_eggtray_origin():
    def jac(p):
        x, y = p
        return np.array([[1.0, 0.0], [0.0, 1.0], [-2 * np.sin(x) * np.cos(y), -2 * np.cos(x) * np.sin(y)]])

    m = pullback_metric_from_immersion(jac, dim=2)
    np.testing.assert_allclose(m.eval_metric([0.0, 0.0]), np.eye(2))


def test_pullback_minkowski_hyperboloid():
    def jac(p):
        al, be = p
        return np.array([
            [np.sinh(al), 0.0],
            [np.cosh(al) * np.cos(be), -np.sinh(al) * np.sin(be)],
            [np.cosh(al) * np.sin(be), np.sinh(al) * np.cos(be)],
        ])

    m = pullback_metric_from_immersion(jac, ambient_signature=[-1, 1, 1], dim=2)
    np.testing.assert_allclose(m.eval_metric([1.0, 1.0]), np.diag([1.0, np.sinh(1.0) ** 2]), atol=1e-14)


def test_pullback_rank_deficient_is_not_spd():
    m = pullback_metric_from_immersion(lambda x: np.zeros((3, 2)), dim=2)
    with pytest.raises(LeftChartError):
        SPDMatrix(m.eval_metric([0.0, 0.0]))


def test_pullback_needs_dimension():
    with pytest.raises(DimensionError):
        pullback_metric_from_immersion(lambda x: np.eye(2))


def test_stereographic_lands_on_sphere():
    x = np.random.default_rng(0).standard_normal((20, 4))
    np.testing.assert_allclose(np.linalg.norm(stereographic(x), axis=1), 1.0)
