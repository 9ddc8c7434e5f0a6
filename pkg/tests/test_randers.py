import numpy as np
import pytest

from geokit import (
    GeoKitError,
    PropernessError,
    RandersField,
    generic_force_field,
    randers_F,
    randers_coefficients,
    randers_fundamental_tensor,
)
from geokit.manifolds import load


def const_force(f):
    f = np.asarray(f, dtype=float)
    return lambda xs: np.broadcast_to(f, np.atleast_2d(xs).shape).copy()


def sphere_probes(n, seed):
    s, a, b = load("sphere")
    rf = RandersField(s)
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        x = a + rng.uniform() * (b - a) + 0.3 * rng.standard_normal(2)
        if rf.in_domain(x[None, :])[0]:
            out.append((x, rng.standard_normal(2)))
    return rf, out


def fd_hessian_half_F2(rf, x, v, h=1e-4):
    def F2(w):
        return randers_F(rf, x, w) ** 2

    d = v.size
    H = np.empty((d, d))
    E = np.eye(d) * h
    for i in range(d):
        for j in range(d):
            H[i, j] = (F2(v + E[i] + E[j]) - F2(v + E[i] - E[j]) - F2(v - E[i] + E[j]) + F2(v - E[i] - E[j])) / (4 * h * h)
    return 0.5 * H


# force field

def test_generic_force_at_origin():
    s, _, _ = load("sphere")
    assert not np.any(generic_force_field(s, [0.0, 0.0]))


def test_generic_force_euclidean_hand_value():
    e, _, _ = load("euclidean", 2)
    np.testing.assert_allclose(generic_force_field(e, [np.pi / 4, np.pi / 4]), [0.5, 0.5], atol=1e-15)


def test_generic_force_zero_component_at_half_pi():
    e, _, _ = load("euclidean", 2)
    f = generic_force_field(e, [np.pi / 2, 0.3])
    assert abs(f[0]) < 1e-15 and f[1] != 0


def test_generic_force_undefined():
    e, _, _ = load("euclidean", 2)
    with pytest.raises(GeoKitError):
        generic_force_field(e, [np.pi / 2, np.pi / 2])


# coefficients and F

def test_coefficients_without_force():
    s, _, _ = load("sphere")
    rf = RandersField(s, force="none", v0=2.0)
    a, b, lam = randers_coefficients(rf, [0.3, -0.2])
    assert lam == pytest.approx(0.25)
    np.testing.assert_allclose(np.asarray(a), s.eval_metric([0.3, -0.2]) / 4)
    assert not np.any(b)


def test_coefficients_hand_example():
    e, _, _ = load("euclidean", 2)
    rf = RandersField(e, force=const_force([0.5, 0.0]), v0=1.0)
    a, b, lam = randers_coefficients(rf, [0.0, 0.0])
    assert lam == pytest.approx(1 / 0.75)
    np.testing.assert_allclose(np.asarray(a), np.diag([16 / 9, 4 / 3]), atol=1e-14)
    np.testing.assert_allclose(b, [-2 / 3, 0.0], atol=1e-15)
    assert randers_F(rf, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(2 / 3, abs=1e-14)


def test_F_reduces_to_riemannian_norm():
    s, _, _ = load("sphere")
    rf = RandersField(s, force="none")
    x, v = np.array([0.4, 0.1]), np.array([1.0, -2.0])
    assert randers_F(rf, x, v) == pytest.approx(np.sqrt(v @ s.eval_metric(x) @ v), rel=1e-14)


def test_F_positive_homogeneity():
    rf, pts = sphere_probes(20, 0)
    for x, v in pts:
        assert randers_F(rf, x, 2 * v) == pytest.approx(2 * randers_F(rf, x, v), abs=1e-12)
        assert randers_F(rf, x, v) > 0


def test_triangle_inequality():
    rf, pts = sphere_probes(50, 1)
    rng = np.random.default_rng(2)
    for x, v in pts:
        w = rng.standard_normal(2)
        assert randers_F(rf, x, v + w) <= randers_F(rf, x, v) + randers_F(rf, x, w) + 1e-12


def test_asymmetry():
    rf, pts = sphere_probes(20, 3)
    gaps = [abs(randers_F(rf, x, v) - randers_F(rf, x, -v)) for x, v in pts]
    assert max(gaps) > 1e-3


def test_zero_velocity_rejected():
    rf, _ = sphere_probes(1, 0)
    with pytest.raises(GeoKitError):
        randers_F(rf, [0.3, 0.3], [0.0, 0.0])
    with pytest.raises(GeoKitError):
        randers_fundamental_tensor(rf, [0.3, 0.3], [0.0, 0.0])


def test_properness_violation_names_point():
    e, _, _ = load("euclidean", 2)
    rf = RandersField(e, force=const_force([1.5, 0.0]), v0=1.0)
    with pytest.raises(PropernessError, match="1.5"):
        randers_coefficients(rf, [0.2, 0.7])
    assert not rf.in_domain(np.array([[0.2, 0.7]]))[0]


def test_construction_scan_rejects_improper_curve():
    h, a, b = load("hyperbolic")
    with pytest.raises(PropernessError):
        RandersField(h, v0=1.0, scan=np.linspace(a, b, 101))


def test_bad_v0():
    s, _, _ = load("sphere")
    with pytest.raises(ValueError):
        RandersField(s, v0=0.0)


# fundamental tensor

def test_tensor_without_force_is_background():
    s, _, _ = load("sphere")
    rf = RandersField(s, force="none")
    x = np.array([0.2, 0.5])
    np.testing.assert_allclose(np.asarray(randers_fundamental_tensor(rf, x, [0.3, 1.0])), s.eval_metric(x), rtol=1e-12)


def test_euler_identity():
    rf, pts = sphere_probes(100, 4)
    for x, v in pts:
        G = np.asarray(randers_fundamental_tensor(rf, x, v))
        F2 = randers_F(rf, x, v) ** 2
        assert abs(v @ G @ v - F2) <= 1e-8 * F2


@pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
def test_tensor_zero_homogeneity(c):
    rf, pts = sphere_probes(20, 5)
    for x, v in pts:
        np.testing.assert_allclose(np.asarray(randers_fundamental_tensor(rf, x, c * v)),
                                   np.asarray(randers_fundamental_tensor(rf, x, v)), rtol=0, atol=1e-10)


def test_tensor_matches_fd_hessian():
    rf, pts = sphere_probes(20, 6)
    for x, v in pts:
        G = np.asarray(randers_fundamental_tensor(rf, x, v))
        np.testing.assert_allclose(G, fd_hessian_half_F2(rf, x, v), atol=1e-4 * max(1.0, np.abs(G).max()))
