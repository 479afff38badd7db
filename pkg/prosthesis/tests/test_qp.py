import numpy as np
import pytest

from prosthesis.errors import ValidationError
from prosthesis.qp import INFEASIBLE, OPTIMAL, QpSpec, kkt_residuals, solve_qp


def test_unconstrained_minimum():
    solution = solve_qp(QpSpec(2.0 * np.eye(2), [-2.0, -4.0]))
    assert solution.status == OPTIMAL
    assert np.allclose(solution.x, [1.0, 2.0])


def test_equality_constraint_and_multiplier_sign():
    spec = QpSpec(2.0 * np.eye(2), np.zeros(2), eq_A=[[1.0, 1.0]], eq_b=[1.0])
    solution = solve_qp(spec)
    assert np.allclose(solution.x, [0.5, 0.5])
    # 2x + ν = 0 at the optimum
    assert solution.eq_multipliers == pytest.approx([-1.0])


def test_active_inequality():
    spec = QpSpec([[2.0]], [-4.0], ineq_A=[[1.0]], ineq_b=[1.0])
    solution = solve_qp(spec)
    assert solution.status == OPTIMAL
    assert solution.x == pytest.approx([1.0])
    assert solution.ineq_multipliers == pytest.approx([2.0])
    assert solution.active_set == (0,)


def test_inactive_inequality():
    spec = QpSpec([[2.0]], [-4.0], ineq_A=[[1.0]], ineq_b=[3.0])
    solution = solve_qp(spec)
    assert solution.x == pytest.approx([2.0])
    assert solution.ineq_multipliers == pytest.approx([0.0])
    assert solution.active_set == ()


def test_infeasible_constraints_reported():
    spec = QpSpec(np.eye(1), [0.0], ineq_A=[[1.0], [-1.0]], ineq_b=[0.0, -1.0])
    solution = solve_qp(spec)
    assert solution.status == INFEASIBLE
    assert not solution.ok
    assert np.all(np.isnan(solution.x))


def test_random_problems_pass_independent_kkt_check():
    rng = np.random.default_rng(1)
    for _ in range(30):
        n = int(rng.integers(3, 9))
        M = rng.standard_normal((n, n))
        H = M @ M.T + 0.1 * np.eye(n)
        c = rng.standard_normal(n)
        x_feasible = rng.standard_normal(n)
        A = rng.standard_normal((1, n))
        G = rng.standard_normal((2 * n, n))
        h = G @ x_feasible + rng.uniform(0.0, 1.0, 2 * n)
        spec = QpSpec(H, c, A, A @ x_feasible, G, h)
        solution = solve_qp(spec)
        assert solution.status == OPTIMAL
        residuals = kkt_residuals(spec, solution.x, solution.eq_multipliers, solution.ineq_multipliers)
        assert max(residuals.values()) < 1e-8 * max(1.0, np.abs(c).max())
        assert spec.objective(solution.x) <= spec.objective(x_feasible) + 1e-9


def test_hessian_must_be_positive_definite():
    with pytest.raises(ValidationError):
        solve_qp(QpSpec(np.diag([1.0, 0.0]), np.zeros(2)))


def test_malformed_specs():
    with pytest.raises(ValidationError):
        QpSpec([[1.0, 2.0], [0.0, 1.0]], np.zeros(2))
    with pytest.raises(ValidationError):
        QpSpec(np.eye(2), np.zeros(3))
    with pytest.raises(ValidationError):
        QpSpec(np.eye(2), np.zeros(2), ineq_A=[[1.0, 0.0]], ineq_b=[1.0, 2.0])
