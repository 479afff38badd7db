"""Dense convex QP by a primal active-set method with a KKT certificate.

Problem form:

    min ½ xᵀHx + cᵀx   s.t.  A x = b,  G x ≤ h

Multipliers follow L = ½xᵀHx + cᵀx + νᵀ(Ax − b) + μᵀ(Gx − h), μ ≥ 0.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from config import Config
from prosthesis.errors import ValidationError

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
INACCURATE = "inaccurate"
MAX_ITER = "max_iter"


@dataclass(frozen=True)
class QpSpec:
    hessian: np.ndarray
    gradient: np.ndarray
    eq_A: np.ndarray = None
    eq_b: np.ndarray = None
    ineq_A: np.ndarray = None
    ineq_b: np.ndarray = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        n = H.shape[0]
        if H.shape != (n, n):
            raise ValidationError(f"hessian must be square, got {H.shape}")
        if np.max(np.abs(H - H.T), initial=0.0) > 1e-10:
            raise ValidationError("hessian must be symmetric within 1e-10")
        c = np.asarray(self.gradient, dtype=float).reshape(-1)
        if c.shape != (n,):
            raise ValidationError(f"gradient has length {c.size}, expected {n}")
        object.__setattr__(self, "hessian", 0.5 * (H + H.T))
        object.__setattr__(self, "gradient", c)
        for mat_name, vec_name in (("eq_A", "eq_b"), ("ineq_A", "ineq_b")):
            mat, vec = getattr(self, mat_name), getattr(self, vec_name)
            mat = np.zeros((0, n)) if mat is None else np.atleast_2d(np.asarray(mat, dtype=float)).reshape(-1, n)
            vec = np.zeros(0) if vec is None else np.asarray(vec, dtype=float).reshape(-1)
            if mat.shape[0] != vec.size:
                raise ValidationError(f"{mat_name} has {mat.shape[0]} rows but {vec_name} has {vec.size}")
            object.__setattr__(self, mat_name, mat)
            object.__setattr__(self, vec_name, vec)

    @property
    def n(self) -> int:
        return self.gradient.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.hessian @ x + self.gradient @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    status: str
    iterations: int = 0
    active_set: tuple = ()
    kkt: dict = field(default_factory=dict)
    spec: QpSpec = None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    @property
    def kkt_residual(self) -> float:
        return max(self.kkt.values(), default=0.0)


def kkt_residuals(spec: QpSpec, x, nu, mu) -> dict:
    """Stationarity, primal/dual feasibility and complementarity, each as a max-abs value."""
    stat = spec.hessian @ x + spec.gradient + spec.eq_A.T @ nu + spec.ineq_A.T @ mu
    slack = spec.ineq_A @ x - spec.ineq_b
    return {
        "stationarity": float(np.max(np.abs(stat), initial=0.0)),
        "primal": float(max(np.max(np.abs(spec.eq_A @ x - spec.eq_b), initial=0.0), np.max(slack, initial=0.0))),
        "dual": float(max(0.0, -np.min(mu, initial=0.0))),
        "complementarity": float(np.max(np.abs(mu * slack), initial=0.0)),
    }


def _feasible_start(spec: QpSpec):
    n = spec.n
    if spec.eq_A.shape[0] == 0 and spec.ineq_A.shape[0] == 0:
        return np.zeros(n), "ok"
    result = linprog(
        np.zeros(n),
        A_ub=spec.ineq_A if spec.ineq_A.shape[0] else None,
        b_ub=spec.ineq_b if spec.ineq_A.shape[0] else None,
        A_eq=spec.eq_A if spec.eq_A.shape[0] else None,
        b_eq=spec.eq_b if spec.eq_A.shape[0] else None,
        bounds=(None, None),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10},
    )
    if result.status != 0 or result.x is None:
        return None, result.message
    return np.asarray(result.x, dtype=float), "ok"


def _initial_working_set(spec: QpSpec, x: np.ndarray) -> list:
    working = []
    rows = spec.eq_A
    rank = np.linalg.matrix_rank(rows) if rows.shape[0] else 0
    slack = spec.ineq_A @ x - spec.ineq_b
    for i in np.argsort(-slack):
        if slack[i] < -1e-9:
            break
        candidate = np.vstack([rows, spec.ineq_A[i]])
        candidate_rank = np.linalg.matrix_rank(candidate)
        if candidate_rank > rank:
            rows, rank = candidate, candidate_rank
            working.append(int(i))
    return working


def _solve_eqp(spec: QpSpec, x: np.ndarray, working: list):
    C = np.vstack([spec.eq_A, spec.ineq_A[working]]) if working else spec.eq_A
    d = np.concatenate([spec.eq_b, spec.ineq_b[working]]) if working else spec.eq_b
    n, k = spec.n, C.shape[0]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = spec.hessian
    K[:n, n:] = C.T
    K[n:, :n] = C
    rhs = np.concatenate([-(spec.hessian @ x + spec.gradient), d - C @ x])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def solve_qp(spec: QpSpec, tol: float = Config.qp_tol, max_iter: int | None = None) -> QpSolution:
    """
    Solve a strictly convex QP.
    :return: QpSolution; status is "infeasible" when the constraints admit no point
    """
    n = spec.n
    if np.linalg.eigvalsh(spec.hessian).min() <= Config.qp_hessian_floor:
        raise ValidationError("hessian must be positive definite; add regularization")
    n_eq, n_in = spec.eq_A.shape[0], spec.ineq_A.shape[0]

    x, message = _feasible_start(spec)
    if x is None:
        logger.debug("QP phase 1 failed: %s", message)
        return QpSolution(np.full(n, np.nan), np.zeros(n_eq), np.zeros(n_in), INFEASIBLE, spec=spec)

    working = _initial_working_set(spec, x)
    max_iter = max_iter or 10 * (n + n_in) + 50
    status = MAX_ITER
    y = np.zeros(n_eq + len(working))
    iterations = 0
    for iterations in range(1, max_iter + 1):
        p, y = _solve_eqp(spec, x, working)
        if np.linalg.norm(p, np.inf) <= 1e-12 * (1.0 + np.linalg.norm(x, np.inf)):
            x = x + p
            mu_working = y[n_eq:]
            if not working or mu_working.min() >= -tol:
                status = OPTIMAL
                break
            working.pop(int(np.argmin(mu_working)))
            continue

        alpha, blocking = 1.0, None
        for i in range(n_in):
            if i in working:
                continue
            gp = spec.ineq_A[i] @ p
            if gp > 1e-14:
                ratio = (spec.ineq_b[i] - spec.ineq_A[i] @ x) / gp
                if ratio < alpha:
                    alpha, blocking = ratio, i
        x = x + max(alpha, 0.0) * p
        if blocking is not None:
            working.append(blocking)

    nu = y[:n_eq]
    mu = np.zeros(n_in)
    if working and status == OPTIMAL:
        mu[working] = np.maximum(y[n_eq:], 0.0)
    kkt = kkt_residuals(spec, x, nu, mu)
    if status == OPTIMAL and max(kkt.values()) > tol * max(1.0, np.abs(spec.gradient).max(initial=0.0)):
        status = INACCURATE
        logger.debug("QP certificate above tolerance: %s", kkt)
    return QpSolution(x, nu, mu, status, iterations, tuple(sorted(working)), kkt, spec)
