import numpy as np
import pytest

from prosthesis.errors import NoSolutionError, ValidationError
from prosthesis.riccati import care_residual, is_stabilizable, solve_care


def test_double_integrator_closed_form():
    F = np.array([[0.0, 1.0], [0.0, 0.0]])
    G = np.array([[0.0], [1.0]])
    P = solve_care(F, G, np.eye(2))
    s3 = np.sqrt(3.0)
    assert np.allclose(P, [[s3, 1.0], [1.0, s3]], atol=1e-10)


def test_residual_and_stability_on_random_systems():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n, m = rng.integers(2, 6), rng.integers(1, 3)
        F = rng.standard_normal((n, n))
        G = rng.standard_normal((n, m))
        M = rng.standard_normal((n, n))
        Q = M @ M.T + np.eye(n)
        P = solve_care(F, G, Q)
        assert care_residual(F, G, Q, P) < 1e-8 * max(1.0, np.linalg.norm(Q))
        assert np.allclose(P, P.T)
        assert np.linalg.eigvalsh(P).min() > 0
        assert np.linalg.eigvals(F - G @ G.T @ P).real.max() < 0


def test_hurwitz_drift_with_inert_input():
    P = solve_care(-np.eye(2), np.zeros((2, 1)), np.eye(2))
    assert np.allclose(P, 0.5 * np.eye(2), atol=1e-10)


def test_unstabilizable_pair_rejected():
    F = np.array([[1.0, 0.0], [0.0, 0.0]])
    G = np.array([[0.0], [1.0]])
    assert not is_stabilizable(F, G)
    with pytest.raises(NoSolutionError):
        solve_care(F, G, np.eye(2))


def test_q_must_be_positive_definite():
    F = np.array([[0.0, 1.0], [0.0, 0.0]])
    G = np.array([[0.0], [1.0]])
    with pytest.raises(ValidationError):
        solve_care(F, G, np.diag([1.0, 0.0]))
    with pytest.raises(ValidationError):
        solve_care(F, G, np.eye(3))
