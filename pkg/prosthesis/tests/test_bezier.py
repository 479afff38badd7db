import numpy as np
import pytest

from prosthesis.bezier import BezierCurve, bernstein_basis, fit_bezier
from prosthesis.errors import FitError, ValidationError

CURVE = BezierCurve((0.1, -0.3, 0.8, 0.2, 0.5, -0.1))


def test_basis_partitions_unity():
    tau = np.linspace(0.0, 1.0, 17)
    assert np.allclose(bernstein_basis(5, tau).sum(axis=1), 1.0)


def test_endpoints_interpolate_coefficients():
    assert CURVE(0.0) == pytest.approx(0.1)
    assert CURVE(1.0) == pytest.approx(-0.1)
    assert CURVE.evaluate(0.0, 1) == pytest.approx(5 * (-0.3 - 0.1))


def test_derivatives_match_finite_differences():
    h = 1e-6
    for tau in (0.1, 0.37, 0.9):
        assert CURVE.evaluate(tau, 1) == pytest.approx((CURVE(tau + h) - CURVE(tau - h)) / (2 * h), abs=1e-7)
        assert CURVE.evaluate(tau, 2) == pytest.approx(
            (CURVE.evaluate(tau + h, 1) - CURVE.evaluate(tau - h, 1)) / (2 * h), abs=1e-6
        )
    assert CURVE.evaluate(0.5, 6) == 0.0


def test_clamped_evaluation_freezes_derivatives():
    value, d1, d2, clamped = CURVE.eval_clamped(1.2)
    assert clamped and d1 == 0.0 and d2 == 0.0
    assert value == pytest.approx(CURVE(1.0))
    assert CURVE.eval_clamped(0.5)[3] is False


def test_restrict_reparameterizes_window():
    piece = CURVE.restrict(0.2, 0.7)
    for s in np.linspace(0.0, 1.0, 11):
        assert piece(s) == pytest.approx(CURVE(0.2 + 0.5 * s), abs=1e-12)
    assert CURVE.restrict(0.4, 1.0)(1.0) == pytest.approx(CURVE(1.0))
    with pytest.raises(ValidationError):
        CURVE.restrict(0.7, 0.2)


def test_fit_recovers_polynomial():
    tau = np.linspace(0.0, 1.0, 40)
    fitted = fit_bezier(tau, CURVE.sample(tau), 5)
    assert np.allclose(fitted.alpha, CURVE.alpha, atol=1e-9)


def test_fit_pins_endpoints():
    rng = np.random.default_rng(0)
    tau = np.linspace(0.0, 1.0, 30)
    values = np.sin(3 * tau) + 0.01 * rng.standard_normal(30)
    fitted = fit_bezier(tau, values, 4, endpoints=(0.0, float(np.sin(3.0))))
    assert fitted(0.0) == 0.0 and fitted(1.0) == pytest.approx(np.sin(3.0))
    assert np.sqrt(np.mean((fitted.sample(tau) - values) ** 2)) < 0.1


def test_fit_errors():
    with pytest.raises(FitError):
        fit_bezier([0.0, 0.5, 1.0], [0.0, 1.0, 0.0], 5)
    with pytest.raises(FitError):
        fit_bezier([0.0, 1.0], [0.0, 1.0], 0)
    with pytest.raises(FitError):
        fit_bezier([0.0, 1.0], [0.0], 1)


def test_curve_validation():
    with pytest.raises(ValidationError):
        BezierCurve((1.0,))
    with pytest.raises(ValidationError):
        BezierCurve((0.0, np.nan))
    assert BezierCurve.constant(0.3, 5).sample([0.0, 0.4, 1.0]) == pytest.approx([0.3, 0.3, 0.3])
