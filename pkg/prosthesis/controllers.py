"""Prosthesis controllers on the five-coordinate subsystem, plus the full-model HZD controller.

Three prosthesis variants share one tick interface:

- ``sensor``: ID-CLF-QP fed by the load cell (F_f) and the insole (F_z, M_y),
  solving only for the horizontal ground force;
- ``no_sensor``: the same QP with every ground force a decision variable held
  by the holonomic acceleration rows, and F_f taken as zero;
- ``pd``: saturated joint PD toward the desired curves.

Decision vector of the QP: Υ = (q̈̄, u_s, λ, ζ).
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from config import Config
from prosthesis.clf import ClfData, clf_value_and_derivs, default_clf
from prosthesis.domains import HybridGraph, default_graph
from prosthesis.errors import SingularDecouplingError, ValidationError
from prosthesis.gait_library import GaitLibrary
from prosthesis.hybrid import Policy
from prosthesis.model import HumanProsthesisModel, solve_constrained
from prosthesis.outputs import (
    CoordinateLayout, DomainGait, OutputEval, OutputSpec, output_and_jacobians, output_spec, phase_value,
)
from prosthesis.qp import QpSolution, QpSpec, solve_qp
from prosthesis.sensing import SensorFrame
from prosthesis.subsystem import ProsthesisSubsystem, SubsystemDynamics

logger = logging.getLogger(__name__)

SENSOR = "sensor"
NO_SENSOR = "no_sensor"
PD = "pd"
VARIANTS = (SENSOR, NO_SENSOR, PD)
PROSTHESIS_JOINTS = ("pk", "pa")


@dataclass(frozen=True)
class PdGains:
    """Diagonal gains; each entry is a scalar or one value per output."""
    kp: object = Config.kp
    kd: object = Config.kd
    kya: object = Config.kya
    kv: object = Config.kv

    def __post_init__(self):
        for name in ("kp", "kd", "kya", "kv"):
            if np.any(np.asarray(getattr(self, name), dtype=float) < 0):
                raise ValidationError(f"gain {name} must be nonnegative, got {getattr(self, name)}")

    def vector(self, name: str, n: int) -> np.ndarray:
        value = np.asarray(getattr(self, name), dtype=float)
        if value.ndim and value.size != n:
            raise ValidationError(f"gain {name} has {value.size} entries, expected {n}")
        return np.broadcast_to(value, (n,)).astype(float)


@dataclass(frozen=True)
class ControllerConfig:
    variant: str = SENSOR
    sigma: float = Config.sigma
    rho: float = Config.rho
    u_max: float = Config.u_max
    reg_weight: float = Config.reg_weight
    zeta_weight: float = Config.zeta_weight
    rate: float = Config.controller_rate
    epsilon: float = Config.clf_epsilon
    gains: PdGains = field(default_factory=PdGains)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"controller variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("sigma", "rho", "u_max", "reg_weight", "zeta_weight", "rate", "epsilon"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class MeasuredState:
    """What the prosthesis controller sees: IMU base state, its own encoders, and the force sensors."""
    q_bar: np.ndarray
    q_bar_dot: np.ndarray
    frame: SensorFrame
    elapsed: float = 0.0 # s since domain entry

    @classmethod
    def from_frame(cls, frame: SensorFrame, joints, joint_rates, elapsed: float = 0.0) -> "MeasuredState":
        q_bar = np.concatenate([frame.base_pose, np.asarray(joints, dtype=float)])
        q_bar_dot = np.concatenate([frame.base_vel, np.asarray(joint_rates, dtype=float)])
        return cls(q_bar, q_bar_dot, frame, elapsed)


@dataclass
class ControlSolution:
    u: np.ndarray
    qddot: np.ndarray
    lam: np.ndarray
    zeta: float
    V: float
    clf_slack: float # ζ − (L_F V + L_G V (J_y q̈ + drift) + (γ/ε) V), nonnegative when the CLF row holds
    status: str
    kkt_residual: float = float("nan")
    iterations: int = 0
    active_set: tuple = ()
    n_vars: int = 0
    fallback: str | None = None
    qp: QpSolution | None = None


def nu_pd(gains: PdGains, y1, y2, dy2, dy2_actual) -> np.ndarray:
    """ν_pd = −(K_v y₁, K_p y₂ + K_d ẏ₂ + K_yᵃ ẏ₂ᵃ); domains without y₁ contribute no K_v block."""
    y1 = np.atleast_1d(np.asarray(y1, dtype=float))
    y2 = np.atleast_1d(np.asarray(y2, dtype=float))
    n1, n2 = y1.size, y2.size
    first = gains.vector("kv", n1) * y1 if n1 else np.zeros(0)
    second = gains.vector("kp", n2) * y2 + gains.vector("kd", n2) * np.asarray(dy2, dtype=float) \
        + gains.vector("kya", n2) * np.asarray(dy2_actual, dtype=float)
    return -np.concatenate([first, second])


def pd_torque(kp, kd, error, error_rate, u_max: float):
    return np.clip(-np.asarray(kp) * error - np.asarray(kd) * error_rate, -u_max, u_max)


def pd_controller(gains: PdGains, spec: OutputSpec, gait: DomainGait, layout: CoordinateLayout, q_bar, q_bar_dot,
                  u_max: float = Config.u_max, elapsed: float | None = None) -> np.ndarray:
    """Saturated PD on the prosthesis knee and ankle toward their desired curves."""
    if spec.domain != gait.domain:
        raise ValidationError(f"output spec for {spec.domain} used with a {gait.domain} gait")
    q_bar = np.asarray(q_bar, dtype=float)
    q_bar_dot = np.asarray(q_bar_dot, dtype=float)
    phase = phase_value(gait, layout, q_bar, q_bar_dot, elapsed)
    kp, kd = gains.vector("kp", 2), gains.vector("kd", 2)
    u = np.zeros(2)
    for i, joint in enumerate(PROSTHESIS_JOINTS):
        curve = gait.curve(joint)
        if curve is None:
            continue
        value, d1, _, _ = curve.eval_clamped(phase.tau_raw)
        if phase.clamped:
            d1 = 0.0
        index = layout.joint_index[joint]
        error = q_bar[index] - value
        error_rate = q_bar_dot[index] - d1 * phase.tau_dot
        u[i] = pd_torque(kp[i], kd[i], error, error_rate, u_max)
    return u


def input_affine_acceleration(D, H, B, J, Jdot_qdot, known_force):
    """
    Constrained accelerations as an affine function of the inputs, q̈ = a₀ + A₁ u.
    :param known_force: generalized force that does not depend on u
    """
    a0, _ = solve_constrained(D, H, J, Jdot_qdot, known_force)
    A1 = np.zeros((D.shape[0], B.shape[1]))
    zeros = np.zeros(D.shape[0])
    for column in range(B.shape[1]):
        A1[:, column], _ = solve_constrained(D, zeros, J, np.zeros(J.shape[0]), B[:, column])
    return a0, A1


def decoupling(out: OutputEval, a0, A1):
    """:return: (Ā, L) with (ẏ₁, ÿ₂) = Ā u + L"""
    return out.jac @ A1, out.jac @ a0 + out.drift


def _solve_decoupled(A_bar, L, nu, cond_max):
    if A_bar.shape[0] != A_bar.shape[1]:
        raise ValidationError(f"decoupling matrix must be square, got {A_bar.shape}")
    cond = np.linalg.cond(A_bar)
    if not np.isfinite(cond) or cond > cond_max:
        raise SingularDecouplingError(f"decoupling matrix condition number {cond:.3e} above {cond_max:.1e}")
    return np.linalg.solve(A_bar, np.asarray(nu, dtype=float) - L)


def _domain_contacts(spec: OutputSpec, contacts, graph: HybridGraph | None):
    if contacts is not None:
        return contacts
    return (graph or default_graph())[spec.domain].prosthesis_contacts


def feedback_linearize(subsystem: ProsthesisSubsystem, spec: OutputSpec, gait: DomainGait, q_bar, q_bar_dot, F_f, nu,
                       contacts=None, elapsed: float | None = None, cond_max: float = Config.decoupling_cond_max,
                       graph: HybridGraph | None = None) -> np.ndarray:
    """
    u_s = Ā⁻¹(ν − L): the torque that makes the subsystem outputs obey (ẏ₁, ÿ₂) = ν,
    with ground contact held by the domain's holonomic rows and a known socket wrench.
    """
    q_bar = np.asarray(q_bar, dtype=float)
    q_bar_dot = np.asarray(q_bar_dot, dtype=float)
    layout = CoordinateLayout.subsystem(subsystem.params)
    dyn = subsystem.dynamics(q_bar, q_bar_dot)
    rows = subsystem.contact_rows(dyn, _domain_contacts(spec, contacts, graph))
    out = output_and_jacobians(spec, gait, layout, q_bar, q_bar_dot, elapsed)
    a0, A1 = input_affine_acceleration(dyn.D, dyn.H, dyn.B, rows.jacobian, rows.bias, dyn.J_f.T @ np.asarray(F_f, dtype=float))
    A_bar, L = decoupling(out, a0, A1)
    return _solve_decoupled(A_bar, L, nu, cond_max)


@dataclass
class _QpTerms:
    layout: CoordinateLayout
    dyn: SubsystemDynamics
    rows: object
    out: OutputEval
    nu: np.ndarray
    V: float
    LfV: float
    LgV: np.ndarray


def _qp_terms(subsystem, spec, gait, clf, config, measured, contacts) -> _QpTerms:
    if spec.domain != gait.domain:
        raise ValidationError(f"output spec for {spec.domain} used with a {gait.domain} gait")
    if clf.n_y1 != spec.n_y1 or clf.n_y2 != spec.n_y2:
        raise ValidationError(f"CLF built for ({clf.n_y1}, {clf.n_y2}) outputs, domain has ({spec.n_y1}, {spec.n_y2})")
    layout = CoordinateLayout.subsystem(subsystem.params)
    dyn = subsystem.dynamics(measured.q_bar, measured.q_bar_dot)
    rows = subsystem.contact_rows(dyn, contacts)
    out = output_and_jacobians(spec, gait, layout, measured.q_bar, measured.q_bar_dot, measured.elapsed)
    nu = nu_pd(config.gains, out.y1, out.y2, out.dy2, out.dy2_actual)
    V, LfV, LgV = clf_value_and_derivs(clf, out.xi)
    return _QpTerms(layout, dyn, rows, out, nu, V, LfV, LgV)


def _assemble(terms: _QpTerms, clf: ClfData, config: ControllerConfig, n_lam: int, tracking_J, tracking_b, target):
    """Cost, CLF row, torque box and ζ ≥ 0 shared by both QP variants; returns (hessian, gradient, G, h)."""
    n = terms.dyn.D.shape[0]
    n_vars = n + 2 + n_lam + 1
    z = n_vars - 1
    hessian = np.zeros((n_vars, n_vars))
    gradient = np.zeros(n_vars)
    hessian[:n, :n] = 2.0 * tracking_J.T @ tracking_J
    gradient[:n] = 2.0 * tracking_J.T @ (tracking_b - target)
    hessian[:z, :z] += 2.0 * config.sigma * config.reg_weight * np.eye(z)
    hessian[z, z] = 2.0 * config.zeta_weight
    gradient[z] = config.rho

    G = np.zeros((5, n_vars))
    h = np.zeros(5)
    G[0, :n] = terms.LgV @ terms.out.jac
    G[0, z] = -1.0
    h[0] = -clf.rate * terms.V - terms.LfV - terms.LgV @ terms.out.drift
    G[1:3, n:n + 2] = np.eye(2)
    G[3:5, n:n + 2] = -np.eye(2)
    h[1:5] = config.u_max
    G = np.vstack([G, np.eye(n_vars)[z] * -1.0])
    h = np.append(h, 0.0)
    return hessian, gradient, G, h


def _solution(qp: QpSolution, terms: _QpTerms, clf: ClfData, config: ControllerConfig, n_lam: int) -> ControlSolution:
    n = terms.dyn.D.shape[0]
    x = qp.x
    qddot, u, lam, zeta = x[:n], x[n:n + 2], x[n + 2:n + 2 + n_lam], float(x[-1])
    vdot = terms.LfV + terms.LgV @ (terms.out.jac @ qddot + terms.out.drift)
    return ControlSolution(
        u=np.clip(u, -config.u_max, config.u_max), qddot=qddot, lam=lam, zeta=zeta, V=terms.V,
        clf_slack=float(zeta - vdot - clf.rate * terms.V), status=qp.status, kkt_residual=qp.kkt_residual,
        iterations=qp.iterations, active_set=qp.active_set, n_vars=x.size, qp=qp,
    )


def _fallback(subsystem, spec, gait, config, measured, terms, contacts, F_f, status) -> ControlSolution:
    """Saturated feedback linearization of ν_pd, or saturated PD where Ā is singular."""
    try:
        u = feedback_linearize(subsystem, spec, gait, measured.q_bar, measured.q_bar_dot, F_f, terms.nu,
                               contacts=contacts, elapsed=measured.elapsed)
        kind = "feedback_linearization"
    except SingularDecouplingError:
        u = pd_controller(config.gains, spec, gait, terms.layout, measured.q_bar, measured.q_bar_dot,
                          config.u_max, measured.elapsed)
        kind = "pd"
    logger.warning("%s QP returned %s at t=%.4f, falling back to %s", spec.domain, status, measured.frame.time, kind)
    n = terms.dyn.D.shape[0]
    return ControlSolution(
        u=np.clip(u, -config.u_max, config.u_max), qddot=np.full(n, np.nan), lam=np.zeros(0), zeta=float("nan"),
        V=terms.V, clf_slack=float("nan"), status=status, fallback=kind,
    )


def solve_id_clf_qp(subsystem: ProsthesisSubsystem, spec: OutputSpec, gait: DomainGait, clf: ClfData,
                    config: ControllerConfig, measured: MeasuredState, contacts=None,
                    graph: HybridGraph | None = None) -> ControlSolution:
    """
    ID-CLF-QP using the measured socket wrench and insole channels:

        D̄q̈ − B̄u − J_xᵀλ_x = −H̄ + J_zᵀF_z + c_fᵀM_y + J̄_fᵀF_f

    λ_x is a single horizontal ground force acting at the insole origin, so the QP has one force variable
    whatever the prosthesis contact set.
    """
    contacts = _domain_contacts(spec, contacts, graph)
    terms = _qp_terms(subsystem, spec, gait, clf, config, measured, contacts)
    dyn, rows, frame = terms.dyn, terms.rows, measured.frame
    n = dyn.D.shape[0]
    n_lam = 1 if rows.labels else 0

    tracking_J = np.vstack([terms.out.jac, rows.jacobian])
    tracking_b = np.concatenate([terms.out.drift, rows.bias])
    target = np.concatenate([terms.nu, np.zeros(rows.jacobian.shape[0])])
    hessian, gradient, G, h = _assemble(terms, clf, config, n_lam, tracking_J, tracking_b, target)

    A = np.zeros((n, hessian.shape[0]))
    A[:, :n] = dyn.D
    A[:, n:n + 2] = -dyn.B
    if n_lam:
        # One horizontal force for the whole foot, applied at the insole origin. With heel and toe both
        # down the split between them is not observable from the insole, and a horizontal force on the
        # ground line adds no pitch moment about that origin, so measured M_y carries the whole moment.
        A[:, n + 2] = -dyn.insole.jacobian[0]
    b = -dyn.H + dyn.J_f.T @ frame.F_f
    if n_lam:
        b = b + subsystem.grf_generalized_force(dyn, 0.0, frame.insole[0], frame.insole[1])

    qp = solve_qp(QpSpec(hessian, gradient, A, b, G, h))
    if not qp.ok:
        return _fallback(subsystem, spec, gait, config, measured, terms, contacts, frame.F_f, qp.status)
    return _solution(qp, terms, clf, config, n_lam)


def solve_id_clf_qp_no_sensor(subsystem: ProsthesisSubsystem, spec: OutputSpec, gait: DomainGait, clf: ClfData,
                              config: ControllerConfig, measured: MeasuredState, contacts=None,
                              graph: HybridGraph | None = None) -> ControlSolution:
    """
    ID-CLF-QP without force sensing: every ground-force component is a decision variable,
    J̄_h q̈ + J̄̇_h q̄̇ = 0 is enforced, and the socket wrench is taken as zero.
    """
    contacts = _domain_contacts(spec, contacts, graph)
    terms = _qp_terms(subsystem, spec, gait, clf, config, measured, contacts)
    dyn, rows = terms.dyn, terms.rows
    n = dyn.D.shape[0]
    n_lam = len(rows.labels)

    hessian, gradient, G, h = _assemble(terms, clf, config, n_lam, terms.out.jac, terms.out.drift, terms.nu)

    A = np.zeros((n + n_lam, hessian.shape[0]))
    A[:n, :n] = dyn.D
    A[:n, n:n + 2] = -dyn.B
    A[:n, n + 2:n + 2 + n_lam] = -rows.jacobian.T
    A[n:, :n] = rows.jacobian
    b = np.concatenate([-dyn.H, -rows.bias])

    qp = solve_qp(QpSpec(hessian, gradient, A, b, G, h))
    if not qp.ok:
        return _fallback(subsystem, spec, gait, config, measured, terms, contacts, np.zeros(3), qp.status)
    return _solution(qp, terms, clf, config, n_lam)


class ProsthesisController:
    """Tick-level controller state: active domain, its entry time, and the per-domain CLFs."""

    def __init__(self, subsystem: ProsthesisSubsystem, library: GaitLibrary, config: ControllerConfig = ControllerConfig(),
                 graph: HybridGraph | None = None):
        self.subsystem = subsystem
        self.library = library
        self.config = config
        self.graph = graph or default_graph()
        self.layout = CoordinateLayout.subsystem(subsystem.params)
        self.domain = None
        self.entry_time = 0.0

    def enter_domain(self, domain, time: float):
        self.domain = self.graph[domain].id
        self.entry_time = time

    def command(self, frame: SensorFrame, joints, joint_rates, time: float):
        """:return: (u_s, diagnostics)"""
        if self.domain is None:
            raise ValidationError("controller has no active domain; call enter_domain first")
        spec = output_spec(self.domain, include_human=False)
        gait = self.library[self.domain]
        measured = MeasuredState.from_frame(frame, joints, joint_rates, time - self.entry_time)
        clf = default_clf(spec.n_y1, spec.n_y2, self.config.epsilon)
        contacts = self.graph[self.domain].prosthesis_contacts

        if self.config.variant == PD:
            u = pd_controller(self.config.gains, spec, gait, self.layout, measured.q_bar, measured.q_bar_dot,
                              self.config.u_max, measured.elapsed)
            out = output_and_jacobians(spec, gait, self.layout, measured.q_bar, measured.q_bar_dot, measured.elapsed)
            solution = ControlSolution(u, np.full(5, np.nan), np.zeros(0), 0.0, clf_value_and_derivs(clf, out.xi)[0],
                                       float("nan"), PD)
        elif self.config.variant == SENSOR:
            solution = solve_id_clf_qp(self.subsystem, spec, gait, clf, self.config, measured, contacts)
        else:
            solution = solve_id_clf_qp_no_sensor(self.subsystem, spec, gait, clf, self.config, measured, contacts)
        return solution.u, self.diagnostics(solution, gait, measured)

    def diagnostics(self, solution: ControlSolution, gait: DomainGait, measured: MeasuredState) -> dict:
        phase = phase_value(gait, self.layout, measured.q_bar, measured.q_bar_dot, measured.elapsed)
        row = {
            "V": solution.V, "zeta": solution.zeta, "qp_status": solution.status,
            "qp_iterations": solution.iterations, "kkt_residual": solution.kkt_residual,
            "active_set": " ".join(str(i) for i in solution.active_set),
            "fallback": solution.fallback or "", "tau": phase.tau,
        }
        for joint in PROSTHESIS_JOINTS:
            curve = gait.curve(joint)
            row[f"desired_{joint}"] = curve(phase.tau) if curve is not None else float("nan")
        return row


class FullModelHZDPolicy(Policy):
    """
    Continuous feedback linearization of every domain output on the full model,
    least-norm over the six actuators; drives the gait's Poincaré return check.
    """

    def __init__(self, model: HumanProsthesisModel, library: GaitLibrary, gains: PdGains | None = None,
                 graph: HybridGraph | None = None):
        self.model = model
        self.library = library
        self.gains = gains or PdGains(Config.gait_output_kp, Config.gait_output_kd, 0.0, Config.gait_velocity_gain)
        self.graph = graph or default_graph()
        self.layout = CoordinateLayout.full(model)
        self.entry_time = 0.0

    def enter_domain(self, domain, time: float, q, qdot):
        self.entry_time = time

    def torque(self, domain, time: float, q, qdot) -> np.ndarray:
        spec = output_spec(domain)
        gait = self.library[domain]
        out = output_and_jacobians(spec, gait, self.layout, q, qdot, time - self.entry_time)
        frames = self.model.frames(q, qdot)
        D = self.model.tree.mass_matrix(q, frames)
        H = self.model.tree.bias_forces(q, qdot, frames)
        cs = self.model.constraints(q, qdot, self.graph[domain].contacts, frames=frames)
        known = self.model.ground_spring_wrench(q, qdot) if self.model.has_springs else np.zeros(self.model.n_q)
        a0, A1 = input_affine_acceleration(D, H, self.model.actuation_matrix(), cs.jacobian, cs.bias, known)
        A_bar, L = decoupling(out, a0, A1)
        nu = nu_pd(self.gains, out.y1, out.y2, out.dy2, out.dy2_actual)
        u, *_ = np.linalg.lstsq(A_bar, nu - L, rcond=None)
        return u
