"""Rapidly exponentially stabilizing CLFs over the output coordinates ξ = (y₁, y₂, ẏ₂).

The outputs are treated as a chain of integrators driven by ν = (ẏ₁, ÿ₂):

    ξ̇ = F ξ + G ν

and V(ξ) = ξᵀ I_ε P I_ε ξ with P the CARE solution for (F, G, Q).
"""
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from config import Config
from prosthesis.errors import ValidationError
from prosthesis.riccati import solve_care

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClfData:
    F: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    epsilon: float
    P_eps: np.ndarray
    gamma: float
    n_y1: int
    n_y2: int

    @property
    def n_xi(self) -> int:
        return self.n_y1 + 2 * self.n_y2

    @property
    def rate(self) -> float:
        """Exponential decay rate γ/ε demanded of V."""
        return self.gamma / self.epsilon


def output_linear_system(n_y1: int, n_y2: int):
    """F and G for ξ = (y₁, y₂, ẏ₂)."""
    n = n_y1 + 2 * n_y2
    F = np.zeros((n, n))
    F[n_y1:n_y1 + n_y2, n_y1 + n_y2:] = np.eye(n_y2)
    G = np.zeros((n, n_y1 + n_y2))
    G[:n_y1, :n_y1] = np.eye(n_y1)
    G[n_y1 + n_y2:, n_y1:] = np.eye(n_y2)
    return F, G


def build_res_clf(n_y1: int, n_y2: int, Q=None, epsilon: float = Config.clf_epsilon) -> ClfData:
    if n_y1 < 0 or n_y2 < 0 or n_y1 + n_y2 == 0:
        raise ValidationError(f"output counts must be nonnegative and not both zero, got {n_y1}, {n_y2}")
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    F, G = output_linear_system(n_y1, n_y2)
    n = F.shape[0]
    Q = np.eye(n) if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape != (n, n):
        raise ValidationError(f"Q must be {n}x{n}, got {Q.shape}")
    P = solve_care(F, G, Q)

    scale = np.ones(n)
    scale[n_y1:n_y1 + n_y2] = 1.0 / epsilon
    P_eps = scale[:, None] * P * scale[None, :]
    gamma = float(np.linalg.eigvalsh(Q).min() / np.linalg.eigvalsh(P).max())
    logger.debug("RES-CLF n_y1=%d n_y2=%d eps=%g gamma=%.4f", n_y1, n_y2, epsilon, gamma)
    return ClfData(F, G, Q, P, float(epsilon), P_eps, gamma, n_y1, n_y2)


@lru_cache(maxsize=32)
def default_clf(n_y1: int, n_y2: int, epsilon: float = Config.clf_epsilon) -> ClfData:
    """Q = I CLF, shared across ticks of domains with the same output counts."""
    return build_res_clf(n_y1, n_y2, None, epsilon)


def clf_value_and_derivs(clf: ClfData, xi):
    """:return: (V, L_F V, L_G V) at ξ"""
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size != clf.n_xi:
        raise ValidationError(f"xi has length {xi.size}, expected {clf.n_xi}")
    P_xi = clf.P_eps @ xi
    V = float(xi @ P_xi)
    LfV = float(xi @ (clf.F.T @ clf.P_eps + clf.P_eps @ clf.F) @ xi)
    LgV = 2.0 * P_xi @ clf.G
    return V, LfV, LgV
