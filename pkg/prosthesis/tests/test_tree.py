import numpy as np
import pytest

from prosthesis.tree import BodySpec, PlanarTree, rot, rot_prime


def _pendulum(mass=2.0, length=0.5, inertia=0.1):
    return PlanarTree([BodySpec("link", None, angle_index=0, mass=mass, com=(0.0, -length), inertia=inertia)], 1)


def _double_pendulum():
    return PlanarTree([
        BodySpec("base", None, slides=((0, (1.0, 0.0)), (1, (0.0, 1.0))), angle_index=2, mass=3.0, com=(0.0, 0.2), inertia=0.3),
        BodySpec("upper", 0, angle_index=3, mass=1.5, com=(0.0, -0.2), inertia=0.05),
        BodySpec("lower", 1, offset=(0.0, -0.4), angle_index=4, mass=1.0, com=(0.05, -0.2), inertia=0.02),
    ], 5)


def test_rotation_convention():
    # +z tips toward +x for positive pitch
    assert np.allclose(rot(np.pi / 2) @ [0.0, 1.0], [1.0, 0.0])
    phi, h = 0.7, 1e-7
    assert np.allclose(rot_prime(phi), (rot(phi + h) - rot(phi - h)) / (2 * h), atol=1e-8)


def test_pendulum_dynamics():
    tree = _pendulum()
    phi = 0.4
    D = tree.mass_matrix([phi])
    H = tree.bias_forces([phi], [0.0])
    assert D[0, 0] == pytest.approx(2.0 * 0.25 + 0.1)
    assert H[0] == pytest.approx(2.0 * 9.81 * 0.5 * np.sin(phi))


def test_point_jacobian_and_bias_match_finite_differences():
    tree = _double_pendulum()
    rng = np.random.default_rng(0)
    h = 1e-6
    for _ in range(20):
        q = rng.uniform(-1.0, 1.0, 5)
        qdot = rng.uniform(-2.0, 2.0, 5)
        kin = tree.point(tree.frames(q, qdot), "lower", (0.05, -0.3))
        fd = np.column_stack([
            (tree.point(tree.frames(q + h * e), "lower", (0.05, -0.3)).position
             - tree.point(tree.frames(q - h * e), "lower", (0.05, -0.3)).position) / (2 * h)
            for e in np.eye(5)
        ])
        assert np.allclose(kin.jacobian, fd, atol=1e-7)
        J_plus = tree.point(tree.frames(q + h * qdot), "lower", (0.05, -0.3)).jacobian
        J_minus = tree.point(tree.frames(q - h * qdot), "lower", (0.05, -0.3)).jacobian
        assert np.allclose(kin.jacobian_dot_qdot, (J_plus - J_minus) @ qdot / (2 * h), atol=1e-6)


def test_mass_matrix_symmetric_positive_definite():
    tree = _double_pendulum()
    rng = np.random.default_rng(1)
    for _ in range(20):
        D = tree.mass_matrix(rng.uniform(-2.0, 2.0, 5))
        assert np.allclose(D, D.T)
        assert np.linalg.eigvalsh(D).min() > 0


def test_bias_forces_are_the_lagrangian_terms():
    # H = Ḋq̇ − ½∂(q̇ᵀDq̇)/∂q + ∂V/∂q
    tree = _double_pendulum()
    rng = np.random.default_rng(2)
    h = 1e-6
    q = rng.uniform(-1.0, 1.0, 5)
    qdot = rng.uniform(-1.0, 1.0, 5)
    D_dot = (tree.mass_matrix(q + h * qdot) - tree.mass_matrix(q - h * qdot)) / (2 * h)
    grad_T = np.array([
        (tree.kinetic_energy(q + h * e, qdot) - tree.kinetic_energy(q - h * e, qdot)) / (2 * h) for e in np.eye(5)
    ])
    grad_V = np.array([(tree.potential_energy(q + h * e) - tree.potential_energy(q - h * e)) / (2 * h) for e in np.eye(5)])
    assert np.allclose(tree.bias_forces(q, qdot), D_dot @ qdot - grad_T + grad_V, atol=1e-6)


def test_center_of_mass_and_total_mass():
    tree = _pendulum(mass=2.0, length=0.5)
    assert tree.total_mass() == 2.0
    assert np.allclose(tree.center_of_mass([0.0]), [0.0, -0.5])


def test_bodies_must_follow_parents():
    with pytest.raises(ValueError):
        PlanarTree([BodySpec("a", 1), BodySpec("b", None)], 1)
