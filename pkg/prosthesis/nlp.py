"""Smooth constrained NLP via SQP (SLSQP: damped BFGS, ℓ1 merit line search).

Inequalities use the convention g(x) ≤ 0. Missing derivatives are taken by
central differences with relative step 1e-7.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from config import Config
from prosthesis.errors import EvaluationError, ValidationError

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
DEGRADED = "degraded"


def finite_difference_jacobian(fun, x, rel_step: float = Config.fd_rel_step, indices=None) -> np.ndarray:
    """Central-difference jacobian of a vector (or scalar) function; columns limited to ``indices``."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(fun(x), dtype=float))
    cols = range(x.size) if indices is None else indices
    jac = np.zeros((f0.size, x.size))
    for j in cols:
        h = rel_step * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (np.atleast_1d(fun(xp)) - np.atleast_1d(fun(xm))) / (2.0 * h)
    return jac


@dataclass
class NlpSpec:
    objective: Callable
    initial_guess: np.ndarray
    eq_constraints: Callable | None = None
    ineq_constraints: Callable | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    objective_grad: Callable | None = None
    eq_jacobian: Callable | None = None
    ineq_jacobian: Callable | None = None

    def __post_init__(self):
        self.initial_guess = np.asarray(self.initial_guess, dtype=float).reshape(-1)
        n = self.initial_guess.size
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValidationError("bounds must match the initial guess length")
        if np.any(self.lower > self.upper):
            raise ValidationError("lower bound above upper bound")
        if np.any(self.initial_guess < self.lower) or np.any(self.initial_guess > self.upper):
            raise ValidationError("initial guess outside bounds")


@dataclass
class NlpResult:
    x: np.ndarray
    objective: float
    eq_residual: np.ndarray
    ineq_residual: np.ndarray
    status: str
    kkt_residual: float
    iterations: int = 0
    message: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def violation(self) -> float:
        return _violation(self.eq_residual, self.ineq_residual)


def _violation(eq, ineq) -> float:
    return float(max(np.max(np.abs(eq), initial=0.0), np.max(ineq, initial=0.0)))


def _checked(fun, label):
    def wrapped(x):
        value = np.asarray(fun(x), dtype=float)
        if not np.all(np.isfinite(value)):
            raise EvaluationError(f"{label} returned a non-finite value")
        return value
    return wrapped


class _Problem:
    def __init__(self, spec: NlpSpec):
        self.spec = spec
        self.f = _checked(spec.objective, "objective")
        self.ceq = _checked(spec.eq_constraints, "equality constraints") if spec.eq_constraints else None
        self.cin = _checked(spec.ineq_constraints, "inequality constraints") if spec.ineq_constraints else None

    def grad(self, x):
        if self.spec.objective_grad is not None:
            return np.asarray(self.spec.objective_grad(x), dtype=float)
        return finite_difference_jacobian(self.f, x)[0]

    def jac_eq(self, x):
        if self.spec.eq_jacobian is not None:
            return np.atleast_2d(self.spec.eq_jacobian(x))
        return finite_difference_jacobian(self.ceq, x)

    def jac_in(self, x):
        if self.spec.ineq_jacobian is not None:
            return np.atleast_2d(self.spec.ineq_jacobian(x))
        return finite_difference_jacobian(self.cin, x)

    def residuals(self, x):
        eq = np.atleast_1d(self.ceq(x)) if self.ceq else np.zeros(0)
        ineq = np.atleast_1d(self.cin(x)) if self.cin else np.zeros(0)
        return eq, ineq

    def kkt_residual(self, x, active_tol: float) -> float:
        """Stationarity with least-squares multipliers on the active set."""
        grad = self.grad(x)
        blocks, signs = [], []
        if self.ceq:
            J = self.jac_eq(x)
            blocks.append(J)
            signs.extend([0] * J.shape[0])
        if self.cin:
            g = np.atleast_1d(self.cin(x))
            J = self.jac_in(x)
            active = g > -active_tol
            blocks.append(J[active])
            signs.extend([1] * int(active.sum()))
        n = x.size
        at_lower = x <= self.spec.lower + active_tol
        at_upper = x >= self.spec.upper - active_tol
        for j in np.flatnonzero(at_lower):
            row = np.zeros(n)
            row[j] = -1.0
            blocks.append(row[None, :])
            signs.append(1)
        for j in np.flatnonzero(at_upper):
            row = np.zeros(n)
            row[j] = 1.0
            blocks.append(row[None, :])
            signs.append(1)
        if not blocks or sum(b.shape[0] for b in blocks) == 0:
            return float(np.max(np.abs(grad), initial=0.0))
        A = np.vstack(blocks)
        mult = np.linalg.lstsq(A.T, -grad, rcond=None)[0]
        signs = np.asarray(signs)
        mult[signs == 1] = np.maximum(mult[signs == 1], 0.0)
        return float(np.max(np.abs(grad + A.T @ mult), initial=0.0))


def solve_nlp(
    spec: NlpSpec,
    tol: float = Config.nlp_tol,
    constraint_tol: float = Config.nlp_constraint_tol,
    max_iter: int = Config.nlp_max_iter,
) -> NlpResult:
    """
    Minimize ``spec.objective`` subject to its constraints and bounds.
    :return: NlpResult with status "optimal", or "degraded" with the best feasible iterate seen
    """
    problem = _Problem(spec)
    constraints = []
    if problem.ceq:
        constraints.append({"type": "eq", "fun": problem.ceq, "jac": problem.jac_eq})
    if problem.cin:
        # scipy expects fun(x) >= 0
        constraints.append({"type": "ineq", "fun": lambda x: -problem.cin(x), "jac": lambda x: -problem.jac_in(x)})
    bounds = [
        (None if np.isinf(lo) else lo, None if np.isinf(hi) else hi)
        for lo, hi in zip(spec.lower, spec.upper)
    ]

    best = {"x": None, "f": np.inf}

    def track(xk):
        eq, ineq = problem.residuals(xk)
        if _violation(eq, ineq) <= constraint_tol:
            fk = float(problem.f(xk))
            if fk < best["f"]:
                best["x"], best["f"] = np.array(xk), fk

    track(spec.initial_guess)
    result = minimize(
        problem.f,
        spec.initial_guess,
        jac=problem.grad,
        method="SLSQP",
        bounds=bounds,
        constraints=constraints,
        callback=track,
        options={"maxiter": max_iter, "ftol": 1e-14},
    )
    x = np.clip(np.asarray(result.x, dtype=float), spec.lower, spec.upper)
    eq, ineq = problem.residuals(x)
    kkt = problem.kkt_residual(x, active_tol=max(constraint_tol, 1e-8))
    violation = _violation(eq, ineq)
    status = OPTIMAL if violation <= constraint_tol and kkt <= tol else DEGRADED

    if status == DEGRADED:
        logger.warning(
            "NLP degraded after %s iterations: violation=%.2e kkt=%.2e (%s)",
            result.nit, violation, kkt, result.message,
        )
        if violation > constraint_tol and best["x"] is not None:
            x = best["x"]
            eq, ineq = problem.residuals(x)
            kkt = problem.kkt_residual(x, active_tol=max(constraint_tol, 1e-8))

    return NlpResult(
        x=x,
        objective=float(problem.f(x)),
        eq_residual=eq,
        ineq_residual=ineq,
        status=status,
        kkt_residual=kkt,
        iterations=int(result.nit),
        message=str(result.message),
        diagnostics={"scipy_status": int(result.status), "best_feasible_objective": best["f"]},
    )
