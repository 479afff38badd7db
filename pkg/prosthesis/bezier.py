"""Bernstein-basis Bézier curves on τ ∈ [0, 1] and least-squares fitting."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from prosthesis.errors import FitError, ValidationError

logger = logging.getLogger(__name__)


def bernstein_basis(degree: int, tau) -> np.ndarray:
    """Rows are samples of τ, columns the degree+1 Bernstein polynomials."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    i = np.arange(degree + 1)
    return comb(degree, i) * tau[:, None] ** i * (1.0 - tau[:, None]) ** (degree - i)


@dataclass(frozen=True)
class BezierCurve:
    coefficients: tuple

    def __post_init__(self):
        alpha = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if alpha.size < 2:
            raise ValidationError(f"a Bezier curve needs degree >= 1, got {alpha.size} coefficients")
        if not np.all(np.isfinite(alpha)):
            raise ValidationError("Bezier coefficients must be finite")
        object.__setattr__(self, "coefficients", tuple(float(a) for a in alpha))

    @classmethod
    def constant(cls, value: float, degree: int) -> "BezierCurve":
        return cls(tuple([float(value)] * (degree + 1)))

    @property
    def alpha(self) -> np.ndarray:
        return np.array(self.coefficients)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def _eval_raw(self, alpha, tau):
        n = alpha.size - 1
        return float(bernstein_basis(n, tau)[0] @ alpha)

    def evaluate(self, tau: float, order: int = 0) -> float:
        """B^(order)(τ) for τ inside [0, 1]; the caller clamps."""
        alpha = self.alpha
        for _ in range(order):
            if alpha.size < 2:
                return 0.0
            alpha = (alpha.size - 1) * np.diff(alpha)
        if alpha.size == 1:
            return float(alpha[0])
        return self._eval_raw(alpha, tau)

    def __call__(self, tau: float) -> float:
        return self.evaluate(tau)

    def eval_clamped(self, tau: float):
        """
        Value and first two τ-derivatives at the clamped phase.
        :return: (value, d1, d2, clamped); derivatives are zero when τ was clamped
        """
        clamped = tau < 0.0 or tau > 1.0
        t = min(max(tau, 0.0), 1.0)
        if clamped:
            return self.evaluate(t), 0.0, 0.0, True
        return self.evaluate(t), self.evaluate(t, 1), self.evaluate(t, 2), False

    def sample(self, tau) -> np.ndarray:
        return bernstein_basis(self.degree, tau) @ self.alpha

    def split(self, tau: float):
        """De Casteljau subdivision into the pieces on [0, τ] and [τ, 1]."""
        points = self.alpha
        left, right = [points[0]], [points[-1]]
        while points.size > 1:
            points = (1.0 - tau) * points[:-1] + tau * points[1:]
            left.append(points[0])
            right.append(points[-1])
        return BezierCurve(tuple(left)), BezierCurve(tuple(reversed(right)))

    def restrict(self, a: float, b: float) -> "BezierCurve":
        """The same polynomial reparameterized so τ' ∈ [0, 1] spans τ ∈ [a, b]."""
        if not 0.0 <= a < b <= 1.0:
            raise ValidationError(f"restriction window must satisfy 0 <= a < b <= 1, got ({a}, {b})")
        _, tail = self.split(a)
        if b >= 1.0:
            return tail
        head, _ = tail.split((b - a) / (1.0 - a))
        return head

    def scaled(self, factor: float) -> "BezierCurve":
        return BezierCurve(tuple(factor * self.alpha))


def fit_bezier(tau, values, degree: int, endpoints=None) -> BezierCurve:
    """
    Least-squares Bernstein fit.
    :param endpoints: optional (start, end) values the curve must pass through exactly
    """
    tau = np.asarray(tau, dtype=float)
    values = np.asarray(values, dtype=float)
    if degree < 1:
        raise FitError(f"degree must be at least 1, got {degree}")
    if tau.shape != values.shape:
        raise FitError(f"phase samples {tau.shape} and values {values.shape} differ in shape")
    basis = bernstein_basis(degree, tau)
    if endpoints is None:
        if np.linalg.matrix_rank(basis) < degree + 1:
            raise FitError(f"{tau.size} samples cannot determine a degree {degree} fit")
        alpha = np.linalg.lstsq(basis, values, rcond=None)[0]
        return BezierCurve(tuple(alpha))

    start, end = float(endpoints[0]), float(endpoints[1])
    interior = basis[:, 1:-1]
    target = values - basis[:, 0] * start - basis[:, -1] * end
    if interior.shape[1] and np.linalg.matrix_rank(interior) < interior.shape[1]:
        raise FitError(f"{tau.size} samples cannot determine the interior of a degree {degree} fit")
    middle = np.linalg.lstsq(interior, target, rcond=None)[0] if interior.shape[1] else np.zeros(0)
    return BezierCurve(tuple(np.concatenate([[start], middle, [end]])))
