"""Hybrid execution over the full model: guards, resets and the domain loop.

A policy supplies actuator torques. ``tick`` runs at the controller rate and
its output is held between ticks; ``torque`` is added continuously (the
simulated human's muscles act between ticks too).
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from config import Config
from prosthesis.domains import (
    CYCLE, HEIGHT_STRIKE, DomainId, DomainSpec, HybridGraph, default_graph, next_vertex,
)
from prosthesis.errors import (
    AdmissibilityError, FallError, ProsthesisError, StepError, StuckDomainError, ValidationError,
)
from prosthesis.model import LS, PITCH, RS, Z, HumanProsthesisModel, constrained_forward_dynamics, impact_map
from prosthesis.ode import OdeEvent, integrate_with_events
from prosthesis.sensing import contact_forces, extract_sensor_frame
from prosthesis.trace import SimTrace, input_columns, state_columns

logger = logging.getLogger(__name__)

__all__ = [
    "CYCLE", "DomainId", "DomainSpec", "HybridGraph", "default_graph", "next_vertex",
    "guard_value", "reset_map", "HybridState", "Policy", "Simulator", "hybrid_step", "run_steps",
]


@dataclass
class HybridState:
    domain: DomainId
    q: np.ndarray
    qdot: np.ndarray
    time: float = 0.0
    step_count: int = 0


def guard_value(spec: DomainSpec, model: HumanProsthesisModel, q, lam=None, cs=None) -> float:
    """Swing-point height for strike guards, the stance point's vertical force for lift-off guards."""
    if spec.guard_kind == HEIGHT_STRIKE:
        return float(model.contact_point_kinematics(q, spec.guard_point).position[1])
    if lam is None or cs is None:
        raise ValidationError(f"{spec.id} lift-off guard needs constraint forces")
    return float(lam[cs.labels.index(f"{spec.guard_point}_z")])


def reset_map(graph: HybridGraph, model: HumanProsthesisModel, next_domain, q, qdot):
    """
    Reset on entry to ``next_domain``: a foot left without contact has its spring put to rest,
    then strike edges apply the plastic impact onto the new contact set.
    :return: (q_plus, qdot_plus, impulse)
    """
    spec = graph[next_domain]
    q_plus = np.array(q, dtype=float)
    qdot_plus = np.array(qdot, dtype=float)
    if model.has_springs:
        for side, index in (("r", RS), ("l", LS)):
            if not any(point.startswith(side) for point in spec.contacts):
                q_plus[index] = 0.0
                qdot_plus[index] = 0.0
    impulse = np.zeros(0)
    if spec.impact_on_entry:
        qdot_plus, impulse = impact_map(model, q_plus, qdot_plus, spec.contacts)
    return q_plus, qdot_plus, impulse


def check_admissible(model: HumanProsthesisModel, spec: DomainSpec, q, tol: float = Config.admissibility_tol):
    heights = model.contact_heights(q)
    for point in sorted(spec.contacts):
        if abs(heights[point]) > tol:
            raise AdmissibilityError(f"{spec.id} contact {point} is {heights[point]:.3e} m off the ground")


class Policy:
    """Zero-torque policy; subclasses override the hooks they need."""

    def enter_domain(self, domain: DomainId, time: float, q, qdot):
        pass

    def tick(self, domain: DomainId, time: float, q, qdot, frame):
        """:return: (u held until the next tick, diagnostics dict)"""
        return np.zeros(6), {}

    def torque(self, domain: DomainId, time: float, q, qdot) -> np.ndarray:
        return np.zeros(6)


@dataclass
class DomainRun:
    rows: list
    event: dict
    next_state: HybridState
    held: np.ndarray


@dataclass
class Simulator:
    model: HumanProsthesisModel
    policy: Policy
    graph: HybridGraph = field(default_factory=default_graph)
    rate: float = Config.controller_rate
    step: float = Config.physics_step
    max_domain_time: float = Config.max_domain_time
    disturbance: object = None # callable(t) -> world force at the distal right thigh
    fall_pitch: float | None = None
    fall_height: float | None = None

    def external_force(self, t, q):
        if self.disturbance is None:
            return None
        force = self.disturbance(t)
        if not np.any(force):
            return None
        point = (0.0, -self.model.params.residual_length)
        return self.model.point_force(q, "r_thigh", point, force)

    def applied(self, domain, t, q, qdot, held):
        return held + self.policy.torque(domain, t, q, qdot)

    def evaluate(self, spec, t, x, held):
        n = self.model.n_q
        q, qdot = x[:n], x[n:]
        u = self.applied(spec.id, t, q, qdot, held)
        qddot, lam, cs = constrained_forward_dynamics(
            self.model, q, qdot, u, spec.contacts, external=self.external_force(t, q)
        )
        return u, qddot, lam, cs

    def check_fall(self, q):
        if self.fall_pitch is not None and abs(q[PITCH]) > self.fall_pitch:
            raise FallError(f"torso pitch {q[PITCH]:.3f} rad beyond {self.fall_pitch} rad")
        if self.fall_height is not None and q[Z] < self.fall_height:
            raise FallError(f"hip height {q[Z]:.3f} m below {self.fall_height} m")

    def run_domain(self, state: HybridState, held=None) -> DomainRun:
        spec = self.graph[state.domain]
        n = self.model.n_q
        held = np.zeros(6) if held is None else np.asarray(held, dtype=float)
        t0 = state.time
        x = np.concatenate([state.q, state.qdot])
        self.policy.enter_domain(spec.id, t0, state.q, state.qdot)

        def guard_at(t, x, u_held):
            if spec.guard_kind == HEIGHT_STRIKE:
                return guard_value(spec, self.model, x[:n])
            _, _, lam, cs = self.evaluate(spec, t, x, u_held)
            return guard_value(spec, self.model, x[:n], lam, cs)

        rows = []
        period = 1.0 / self.rate
        k = 0
        t = t0
        event = None
        if guard_at(t, x, held) <= 0.0:
            logger.warning("%s guard already crossed at entry (t=%.4f), immediate transition", spec.id, t)
            event = {"time": t, "rate": 0.0, "grazing": True, "immediate": True}
            x_event = x

        while event is None:
            q, qdot = x[:n], x[n:]
            self.check_fall(q)
            check_admissible(self.model, spec, q, Config.admissibility_tol)
            _, _, lam, cs = self.evaluate(spec, t, x, held)
            frame = extract_sensor_frame(self.model, q, qdot, cs, lam, t)
            held, diagnostics = self.policy.tick(spec.id, t, q, qdot, frame)
            held = np.asarray(held, dtype=float)
            u, _, lam, cs = self.evaluate(spec, t, x, held)
            row = {"time": t, "domain": str(spec.id), "domain_index": state.step_count}
            row.update(state_columns(q, qdot))
            row.update(input_columns(u))
            forces = contact_forces(cs, lam)
            for point in ("rh", "rt", "lh", "lt"):
                fx, fz = forces.get(point, (0.0, 0.0))
                row[f"f_{point}_x"] = fx
                row[f"f_{point}_z"] = fz
            row.update(frame.columns())
            row.update(diagnostics)
            rows.append(row)

            t_next = t0 + (k + 1) * period
            if t_next - t0 > self.max_domain_time:
                raise StuckDomainError(f"{spec.id} guard not reached within {self.max_domain_time} s")
            events = [OdeEvent(lambda t_, x_, u_held=held: guard_at(t_, x_, u_held), direction=-1)]
            result = integrate_with_events(
                lambda t_, x_, u_held=held: np.concatenate([x_[n:], self.evaluate(spec, t_, x_, u_held)[1]]),
                x, (t, t_next), events, step=self.step,
            )
            if result.event_index is not None:
                rate = result.event_rate
                grazing = abs(rate) < Config.transversality_tol
                if grazing:
                    logger.warning("%s guard crossed with rate %.2e at t=%.4f", spec.id, rate, result.event_time)
                event = {"time": result.event_time, "rate": rate, "grazing": grazing, "immediate": False}
                x_event = result.final
                break
            x = result.final
            t = t_next
            k += 1

        q_minus, qdot_minus = x_event[:n], x_event[n:]
        successor = self.graph.successor(spec.id)
        q_plus, qdot_plus, impulse = reset_map(self.graph, self.model, successor.id, q_minus, qdot_minus)
        check_admissible(self.model, successor, q_plus)
        event.update({
            "step": state.step_count, "from": str(spec.id), "to": str(successor.id),
            "kinetic_minus": self.model.kinetic_energy(q_minus, qdot_minus),
            "kinetic_plus": self.model.kinetic_energy(q_plus, qdot_plus),
            "impulse_norm": float(np.linalg.norm(impulse)),
        })
        next_state = HybridState(successor.id, q_plus, qdot_plus, event["time"], state.step_count + 1)
        return DomainRun(rows, event, next_state, held)

    def run(self, h0: HybridState, n_steps: int) -> SimTrace:
        if n_steps < 1:
            raise ValidationError(f"n_steps must be at least 1, got {n_steps}")
        check_admissible(self.model, self.graph[h0.domain], h0.q)
        trace = SimTrace()
        state, held = h0, None
        for i in range(n_steps):
            try:
                run = self.run_domain(state, held)
            except (ProsthesisError, np.linalg.LinAlgError) as exc:
                raise StepError(i, exc, trace) from exc
            trace.rows.extend(run.rows)
            trace.events.append(run.event)
            state, held = run.next_state, run.held
        trace.metadata["final_state"] = state
        return trace


def hybrid_step(graph: HybridGraph, model: HumanProsthesisModel, policy: Policy, state: HybridState, **options) -> HybridState:
    """Run one domain to its guard and apply the reset."""
    return Simulator(model, policy, graph, **options).run_domain(state).next_state


def run_steps(graph: HybridGraph, model: HumanProsthesisModel, policy: Policy, h0: HybridState, n_steps: int, **options) -> SimTrace:
    return Simulator(model, policy, graph, **options).run(h0, n_steps)
