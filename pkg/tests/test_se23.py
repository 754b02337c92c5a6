"""Group/algebra primitives: exact examples, roundtrips, and axioms."""
from __future__ import annotations

import numpy as np
import pytest

from navkit import (
    SE23,
    AngleAtPi,
    NotARotation,
    TangentVector,
    se23_exp,
    se23_log,
    skew,
    so3_exp,
    so3_left_jacobian,
    so3_left_jacobian_inv,
    so3_log,
    unskew,
    vee5,
    wedge5,
)
from conftest import random_se23, random_tangent


def test_skew_cross_product():
    assert np.allclose(skew([1, 0, 0]) @ [0, 1, 0], [0, 0, 1])
    assert np.allclose(skew([0, 0, 0]), np.zeros((3, 3)))
    w = np.array([0.3, -1.2, 2.0])
    assert np.allclose(skew(w).T, -skew(w))
    assert np.allclose(unskew(skew(w)), w)


def test_so3_exp_identity_and_quarter_turn():
    assert np.allclose(so3_exp([0, 0, 0]), np.eye(3))
    expected = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
    assert np.allclose(so3_exp([np.pi / 2, 0, 0]), expected, atol=1e-12)


def test_so3_exp_is_rotation():
    rng = np.random.default_rng(1)
    for _ in range(200):
        R = so3_exp(rng.normal(scale=1.5, size=3))
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert np.isclose(np.linalg.det(R), 1.0, atol=1e-12)


def test_so3_exp_small_angle_branch_continuity():
    phi = np.array([3.0e-9, -4.0e-9, 1.0e-9])  # below the series threshold
    R = so3_exp(phi)
    assert np.allclose(R, np.eye(3) + skew(phi), atol=1e-16)
    # Just above the threshold the closed form must agree with the series.
    phi = np.array([2.0e-8, 1.0e-8, -1.0e-8])
    R = so3_exp(phi)
    assert np.allclose(R, np.eye(3) + skew(phi) + 0.5 * skew(phi) @ skew(phi), atol=1e-20)


def test_so3_log_examples():
    assert np.allclose(so3_log(np.eye(3)), np.zeros(3))
    assert np.allclose(so3_log(so3_exp([np.pi / 2, 0, 0])), [np.pi / 2, 0, 0], atol=1e-12)


def test_so3_roundtrip_random():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        phi = axis * rng.uniform(0.0, 3.0)
        err = np.linalg.norm(so3_log(so3_exp(phi)) - phi)
        assert err < 1e-9


def test_so3_roundtrip_near_pi():
    rng = np.random.default_rng(3)
    for _ in range(200):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        phi = axis * rng.uniform(np.pi - 0.05, np.pi - 1e-3)
        err = np.linalg.norm(so3_log(so3_exp(phi)) - phi)
        assert err < 1e-9


def test_so3_log_at_pi_axis_extraction():
    rng = np.random.default_rng(4)
    for _ in range(100):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        R = so3_exp(axis * np.pi)
        phi = so3_log(R)
        assert abs(np.linalg.norm(phi) - np.pi) < 1e-6
        # Either sign of the axis is valid at pi; the matrix must match.
        assert np.allclose(so3_exp(phi), R, atol=1e-6)


def test_so3_log_rejects_non_rotation():
    M = np.eye(3)
    M[0, 1] = 1e-3
    with pytest.raises(NotARotation):
        so3_log(M)


def test_left_jacobian_first_order_transport():
    rng = np.random.default_rng(5)
    for _ in range(50):
        phi = rng.normal(scale=1.0, size=3)
        delta = rng.normal(size=3)
        J = so3_left_jacobian(phi)
        eps = 1e-6
        lhs = so3_exp(phi + eps * delta)
        rhs = so3_exp(eps * (J @ delta)) @ so3_exp(phi)
        assert np.allclose(lhs, rhs, atol=5e-11)


def test_left_jacobian_inverse():
    rng = np.random.default_rng(6)
    for _ in range(100):
        phi = rng.normal(scale=1.0, size=3)
        J = so3_left_jacobian(phi)
        assert np.allclose(J @ so3_left_jacobian_inv(phi), np.eye(3), atol=1e-12)
    # Series branch.
    phi = np.array([1e-6, -2e-6, 1e-6])
    assert np.allclose(so3_left_jacobian(phi) @ so3_left_jacobian_inv(phi), np.eye(3), atol=1e-14)


def test_compose_matches_dense_product():
    rng = np.random.default_rng(7)
    for _ in range(100):
        a, b = random_se23(rng), random_se23(rng)
        assert np.allclose(a.compose(b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-9)


def test_compose_identity_and_inverse():
    rng = np.random.default_rng(8)
    idn = SE23.identity()
    for _ in range(50):
        x = random_se23(rng)
        assert np.allclose(x.compose(idn).as_matrix(), x.as_matrix())
        assert np.allclose(x.compose(x.inverse()).as_matrix(), np.eye(5), atol=1e-9)


def test_inverse_closed_form():
    x = SE23(np.eye(3), np.array([1.0, 2.0, 3.0]), np.zeros(3))
    xi = x.inverse()
    assert np.allclose(xi.v, [-1, -2, -3])
    rng = np.random.default_rng(9)
    for _ in range(100):
        x = random_se23(rng)
        assert np.allclose(x.inverse().as_matrix(), np.linalg.inv(x.as_matrix()), atol=1e-10)


def test_se23_exp_log_identity_cases():
    assert np.allclose(se23_exp(TangentVector.zero()).as_matrix(), np.eye(5))
    xi = se23_log(SE23.identity())
    assert np.allclose(xi.as_vector(), np.zeros(9))
    # J(0) = I: pure v/p element logs to itself.
    x = SE23(np.eye(3), np.array([1.0, -2.0, 0.5]), np.array([10.0, 0.0, -3.0]))
    xi = se23_log(x)
    assert np.allclose(xi.phi, 0.0)
    assert np.allclose(xi.rho_v, x.v)
    assert np.allclose(xi.rho_r, x.p)


def test_se23_roundtrip_random():
    rng = np.random.default_rng(10)
    for _ in range(1000):
        xi = random_tangent(rng)
        back = se23_log(se23_exp(xi))
        assert np.linalg.norm(back.as_vector() - xi.as_vector()) < 1e-9


def test_se23_exp_first_order_halving():
    rng = np.random.default_rng(11)
    xi = random_tangent(rng, max_angle=1.0)
    residual = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        scaled = TangentVector(eps * xi.phi, eps * xi.rho_v, eps * xi.rho_r)
        first_order = np.eye(5) + wedge5(scaled)
        residual.append(np.linalg.norm(se23_exp(scaled).as_matrix() - first_order))
    assert 3.5 < residual[0] / residual[1] < 4.5
    assert 3.5 < residual[1] / residual[2] < 4.5


def test_se23_log_raises_at_pi():
    axis = np.array([1.0, 0.0, 0.0])
    x = SE23(so3_exp(axis * (np.pi - 1e-8)), np.zeros(3), np.zeros(3))
    with pytest.raises(AngleAtPi):
        se23_log(x)


def test_wedge_vee_roundtrip():
    rng = np.random.default_rng(12)
    xi = random_tangent(rng)
    assert np.allclose(vee5(wedge5(xi)).as_vector(), xi.as_vector())


def test_adjoint_identity_and_conjugation():
    assert np.allclose(SE23.identity().adjoint(), np.eye(9))
    rng = np.random.default_rng(13)
    for _ in range(100):
        x = random_se23(rng)
        xi = random_tangent(rng)
        conj = x.as_matrix() @ wedge5(xi) @ x.inverse().as_matrix()
        lhs = vee5(conj).as_vector()
        rhs = x.adjoint() @ xi.as_vector()
        assert np.allclose(lhs, rhs, atol=1e-9 * max(1.0, np.linalg.norm(rhs)))


def test_adjoint_homomorphism():
    rng = np.random.default_rng(14)
    for _ in range(50):
        a, b = random_se23(rng), random_se23(rng)
        lhs = a.compose(b).adjoint()
        rhs = a.adjoint() @ b.adjoint()
        assert np.allclose(lhs, rhs, atol=1e-8 * max(1.0, np.abs(rhs).max()))


def test_associativity_random():
    rng = np.random.default_rng(15)
    for _ in range(100):
        a, b, c = random_se23(rng), random_se23(rng), random_se23(rng)
        lhs = a.compose(b).compose(c).as_matrix()
        rhs = a.compose(b.compose(c)).as_matrix()
        assert np.allclose(lhs, rhs, atol=1e-9 * max(1.0, np.abs(rhs).max()))
