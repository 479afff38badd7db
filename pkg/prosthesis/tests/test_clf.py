import numpy as np
import pytest

from prosthesis.clf import build_res_clf, clf_value_and_derivs, default_clf, output_linear_system
from prosthesis.errors import ValidationError
from prosthesis.riccati import care_residual


def test_output_system_structure():
    F, G = output_linear_system(1, 2)
    assert F.shape == (5, 5) and G.shape == (5, 3)
    # y2 integrates dy2; y1 and dy2 are driven directly
    assert np.array_equal(F[1:3, 3:5], np.eye(2))
    assert np.count_nonzero(F) == 2
    assert G[0, 0] == 1.0 and np.array_equal(G[3:5, 1:3], np.eye(2))


def test_clf_scaling_and_rate():
    clf = build_res_clf(1, 2, epsilon=0.1)
    assert care_residual(clf.F, clf.G, clf.Q, clf.P) < 1e-8
    scale = np.diag([1.0, 10.0, 10.0, 1.0, 1.0])
    assert np.allclose(clf.P_eps, scale @ clf.P @ scale)
    assert clf.gamma == pytest.approx(1.0 / np.linalg.eigvalsh(clf.P).max())
    assert clf.rate == pytest.approx(clf.gamma / 0.1)
    assert clf.n_xi == 5


def test_unit_epsilon_leaves_p_unscaled():
    clf = build_res_clf(0, 2, epsilon=1.0)
    assert np.allclose(clf.P_eps, clf.P)


def test_lie_derivatives_match_time_derivative():
    rng = np.random.default_rng(11)
    clf = build_res_clf(1, 2, epsilon=0.2)
    for _ in range(25):
        xi = rng.standard_normal(clf.n_xi)
        nu = rng.standard_normal(3)
        V, LfV, LgV = clf_value_and_derivs(clf, xi)
        xi_dot = clf.F @ xi + clf.G @ nu
        assert V > 0
        assert LfV + LgV @ nu == pytest.approx(2.0 * xi @ clf.P_eps @ xi_dot, rel=1e-10, abs=1e-10)


def test_lqr_feedback_decays_at_the_guaranteed_rate():
    clf = build_res_clf(0, 2, epsilon=1.0)
    rng = np.random.default_rng(5)
    for _ in range(10):
        xi = rng.standard_normal(clf.n_xi)
        V, LfV, LgV = clf_value_and_derivs(clf, xi)
        nu = -clf.G.T @ clf.P_eps @ xi
        assert LfV + LgV @ nu <= -clf.rate * V + 1e-12


def test_zero_error_gives_zero_value():
    V, LfV, LgV = clf_value_and_derivs(default_clf(1, 2), np.zeros(5))
    assert V == 0.0 and LfV == 0.0 and not np.any(LgV)


def test_default_clf_is_shared():
    assert default_clf(1, 2) is default_clf(1, 2)


def test_invalid_inputs():
    with pytest.raises(ValidationError):
        build_res_clf(0, 0)
    with pytest.raises(ValidationError):
        build_res_clf(1, 1, epsilon=0.0)
    with pytest.raises(ValidationError):
        build_res_clf(1, 1, Q=np.eye(2))
    with pytest.raises(ValidationError):
        clf_value_and_derivs(default_clf(1, 2), np.zeros(4))
