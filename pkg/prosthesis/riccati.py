"""Continuous algebraic Riccati equation FᵀP + PF − PGGᵀP + Q = 0 (R = I)."""
import logging

import numpy as np
import scipy.linalg

from config import Config
from prosthesis.errors import NoSolutionError, ValidationError

logger = logging.getLogger(__name__)


def is_stabilizable(F: np.ndarray, G: np.ndarray, tol: float = 1e-9) -> bool:
    """PBH test over the closed right half plane."""
    n = F.shape[0]
    scale = max(1.0, np.linalg.norm(F), np.linalg.norm(G))
    for lam in np.linalg.eigvals(F):
        if lam.real < -1e-12:
            continue
        pencil = np.hstack([F - lam * np.eye(n), G.astype(complex)])
        if np.linalg.matrix_rank(pencil, tol=tol * scale) < n:
            return False
    return True


def care_residual(F: np.ndarray, G: np.ndarray, Q: np.ndarray, P: np.ndarray) -> float:
    return float(np.linalg.norm(F.T @ P + P @ F - P @ G @ G.T @ P + Q, "fro"))


def _kleinman(F, G, Q, P, iterations):
    for _ in range(iterations):
        K = G.T @ P
        closed = F - G @ K
        P = scipy.linalg.solve_continuous_lyapunov(closed.T, -(Q + K.T @ K))
        P = 0.5 * (P + P.T)
    return P


def solve_care(F, G, Q, iterations: int = Config.kleinman_iterations) -> np.ndarray:
    """
    Stabilizing solution of the CARE with unit input weight.
    :param F: n×n drift
    :param G: n×m input matrix
    :param Q: n×n symmetric positive definite weight
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.asarray(G, dtype=float).reshape(F.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = F.shape[0]
    if F.shape != (n, n) or Q.shape != (n, n):
        raise ValidationError(f"inconsistent CARE dimensions F{F.shape} G{G.shape} Q{Q.shape}")
    if not np.allclose(Q, Q.T, atol=1e-12) or np.linalg.eigvalsh(Q).min() <= 0:
        raise ValidationError("Q must be symmetric positive definite")
    if not is_stabilizable(F, G):
        raise NoSolutionError("(F, G) is not stabilizable")

    R = np.eye(G.shape[1])
    try:
        P = scipy.linalg.solve_continuous_are(F, G, Q, R)
    except (np.linalg.LinAlgError, ValueError) as exc:
        # Hurwitz F with an inert input has the Lyapunov solution
        if np.all(np.linalg.eigvals(F).real < 0):
            P = scipy.linalg.solve_continuous_lyapunov(F.T, -Q)
        else:
            raise NoSolutionError(f"CARE solver failed: {exc}") from exc

    P = _kleinman(F, G, Q, 0.5 * (P + P.T), iterations)
    residual = care_residual(F, G, Q, P)
    if residual > Config.care_residual_tol * max(1.0, np.linalg.norm(Q, "fro")):
        raise NoSolutionError(f"CARE residual {residual:.3e} above tolerance")
    if np.linalg.eigvalsh(P).min() <= 0:
        raise NoSolutionError("CARE solution is not positive definite")
    logger.debug("CARE solved, n=%d residual=%.2e", n, residual)
    return P
