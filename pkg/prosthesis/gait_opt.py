"""HZD gait generation over the six-domain cycle by trapezoidal direct collocation.

Each domain carries N nodes z_k = (q, q̇, u) in the full coordinates minus the
socket slides (held at zero), its Bézier coefficients, its duration and, for
state-based domains, the phase endpoints δ⁰/δᶠ. The rts domain adds the
desired hip velocity. Domains are stitched through the same reset map the
simulator applies.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from config import Config
from prosthesis.bezier import BezierCurve, fit_bezier
from prosthesis.controllers import FullModelHZDPolicy
from prosthesis.domains import CYCLE, HEIGHT_STRIKE, DomainId, HybridGraph, default_graph
from prosthesis.errors import FitError, ProsthesisError, ValidationError
from prosthesis.gait_library import GaitLibrary
from prosthesis.human_data import JOINTS, HumanFit
from prosthesis.hybrid import HybridState, Simulator, guard_value, reset_map
from prosthesis.model import (
    ACTUATED, CONTACT_POINTS, HUMAN_JOINTS, LS, PITCH, PROSTHESIS_JOINTS, RS, SOCKET_COORDS, X, Z, HumanProsthesisModel,
    constrained_forward_dynamics,
)
from prosthesis.nlp import OPTIMAL, NlpResult, NlpSpec, solve_nlp
from prosthesis.outputs import (
    STATE_BASED, CoordinateLayout, DomainGait, PhaseVariable, delta_value, output_and_jacobians, output_spec,
    phase_kind, phase_value,
)
from prosthesis.sensing import contact_forces

logger = logging.getLogger(__name__)

VELOCITY_WEIGHT = 0.1 # weight on velocities in the Poincaré return norm
REJECTED = "rejected" # optimizer status when the initial guess is kept


@dataclass
class GaitOptProblem:
    model: HumanProsthesisModel
    graph: HybridGraph = field(default_factory=default_graph)
    weights: tuple = (1.0,) * 6 # tracking weight per joint in JOINTS order
    torque_weight: float = Config.torque_weight
    nodes: int = Config.gait_nodes
    degree: int = Config.bezier_degree
    duration_bounds: tuple = Config.duration_bounds
    friction: float = Config.friction
    phase_rate_margin: float = Config.phase_rate_margin
    output_kp: float = Config.gait_output_kp
    output_kd: float = Config.gait_output_kd
    velocity_gain: float = Config.gait_velocity_gain
    human_torque_limit: float = Config.human_torque_limit
    u_max: float = Config.u_max

    def __post_init__(self):
        if len(self.weights) != len(JOINTS) or min(self.weights) < 0:
            raise ValidationError(f"need {len(JOINTS)} nonnegative tracking weights, got {self.weights}")
        if self.nodes < 5:
            raise ValidationError(f"collocation grid needs at least 5 nodes per domain, got {self.nodes}")
        if not 0 < self.duration_bounds[0] < self.duration_bounds[1]:
            raise ValidationError(f"invalid duration bounds {self.duration_bounds}")
        if self.torque_weight < 0 or self.friction <= 0:
            raise ValidationError("torque weight must be nonnegative and friction positive")


@dataclass
class _Block:
    """Where one domain's variables live in the decision vector."""
    domain: DomainId
    offset: int
    n_nodes: int
    node_size: int
    joints: tuple # joints with Bézier coefficients
    n_alpha: int
    state_based: bool
    velocity: bool

    @property
    def param_offset(self) -> int:
        return self.offset + self.n_nodes * self.node_size

    @property
    def n_params(self) -> int:
        return len(self.joints) * self.n_alpha + 1 + 2 * self.state_based + self.velocity

    @property
    def size(self) -> int:
        return self.n_nodes * self.node_size + self.n_params

    def node(self, k: int) -> slice:
        start = self.offset + k * self.node_size
        return slice(start, start + self.node_size)

    @property
    def params(self) -> slice:
        return slice(self.param_offset, self.param_offset + self.n_params)


class GaitTranscription:
    """Decision-vector layout, constraint and objective evaluation, and block finite-difference jacobians."""

    def __init__(self, problem: GaitOptProblem, human_fit: HumanFit):
        self.problem = problem
        self.model = problem.model
        self.graph = problem.graph
        self.human_fit = human_fit
        self.layout = CoordinateLayout.full(self.model)
        self.free = np.array([i for i in range(self.model.n_q) if i not in SOCKET_COORDS])
        self.n_r = self.free.size
        self.node_size = 2 * self.n_r + len(ACTUATED)
        self.joint_index = np.array([self.layout.joint_index[joint] for joint in JOINTS])
        self.human_curves = {
            domain: [human_fit.domain_curve(domain, joint) for joint in JOINTS] for domain in CYCLE
        }
        self.blocks = {}
        offset = 0
        for domain in CYCLE:
            spec = output_spec(domain)
            block = _Block(domain, offset, problem.nodes, self.node_size, spec.relative_degree_two,
                           problem.degree + 1, phase_kind(domain) == STATE_BASED, spec.velocity)
            self.blocks[domain] = block
            offset += block.size
        self.n = offset
        # force rows are divided by body weight and output rows by their gain, so every row reads in m, rad or rad/s
        self.weight = self.model.params.total_mass * self.model.params.gravity
        self._dynamics_cache = {}
        self._eval_cache = None
        self._jac_cache = None

    # decision vector

    def expand(self, z):
        q = np.zeros(self.model.n_q)
        qdot = np.zeros(self.model.n_q)
        q[self.free] = z[:self.n_r]
        qdot[self.free] = z[self.n_r:2 * self.n_r]
        return q, qdot, z[2 * self.n_r:]

    def pack_node(self, q, qdot, u) -> np.ndarray:
        return np.concatenate([np.asarray(q)[self.free], np.asarray(qdot)[self.free], u])

    def gait(self, block: _Block, params) -> DomainGait:
        k = 0
        curves = {}
        for joint in block.joints:
            curves[joint] = BezierCurve(tuple(params[k:k + block.n_alpha]))
            k += block.n_alpha
        duration = params[k]
        k += 1
        delta0, deltaf = 0.0, 1.0
        if block.state_based:
            delta0, deltaf = params[k], params[k + 1]
            k += 2
            if deltaf == delta0:
                deltaf = delta0 + 1e-12
        v_hip = params[k] if block.velocity else 0.0
        phase = PhaseVariable(phase_kind(block.domain), float(delta0), float(deltaf), float(duration))
        return DomainGait(block.domain, curves, phase, float(v_hip))

    def pack_params(self, block: _Block, gait: DomainGait) -> np.ndarray:
        values = [gait.curves[joint].alpha for joint in block.joints]
        values.append([gait.duration])
        if block.state_based:
            values.append([gait.phase.delta0, gait.phase.deltaf])
        if block.velocity:
            values.append([gait.v_hip])
        return np.concatenate([np.asarray(v, dtype=float) for v in values])

    def pack(self, library: GaitLibrary) -> np.ndarray:
        x = np.zeros(self.n)
        for domain, block in self.blocks.items():
            gait = library[domain]
            if gait.nodes is None:
                raise ValidationError(f"{domain} gait has no collocation nodes to start from")
            t = np.asarray(gait.nodes["q"]).shape[0]
            if t != block.n_nodes:
                raise ValidationError(f"{domain} gait has {t} nodes, problem expects {block.n_nodes}")
            for k in range(block.n_nodes):
                x[block.node(k)] = self.pack_node(gait.nodes["q"][k], gait.nodes["qdot"][k], gait.nodes["u"][k])
            x[block.params] = self.pack_params(block, gait)
        return x

    def unpack(self, x, torso_pitch: float = 0.0, metadata=None) -> GaitLibrary:
        gaits = {}
        for domain, block in self.blocks.items():
            gait = self.gait(block, x[block.params])
            h = gait.duration / (block.n_nodes - 1)
            nodes = {"t": h * np.arange(block.n_nodes), "q": [], "qdot": [], "u": []}
            for k in range(block.n_nodes):
                q, qdot, u = self.expand(x[block.node(k)])
                nodes["q"].append(q)
                nodes["qdot"].append(qdot)
                nodes["u"].append(np.array(u))
            gait.nodes = {key: np.asarray(value) for key, value in nodes.items()}
            gaits[domain] = gait
        rhs = gaits[DomainId.RHS].nodes
        initial = {"q": rhs["q"][0], "qdot": rhs["qdot"][0]}
        return GaitLibrary(gaits, self.problem.degree, torso_pitch, initial, dict(metadata or {}))

    def bounds(self):
        lower = np.full(self.n, -np.inf)
        upper = np.full(self.n, np.inf)
        knee = self.model.params.knee_range
        limits = np.array([self.problem.human_torque_limit] * 4 + [self.problem.u_max] * 2)
        free = list(self.free)
        for block in self.blocks.values():
            for k in range(block.n_nodes):
                start = block.node(k).start
                for joint in ("lk", "pk"):
                    i = start + free.index(self.layout.joint_index[joint])
                    lower[i], upper[i] = knee
                u = slice(start + 2 * self.n_r, start + self.node_size)
                lower[u], upper[u] = -limits, limits
            t_index = block.param_offset + len(block.joints) * block.n_alpha
            lower[t_index], upper[t_index] = self.problem.duration_bounds
        return lower, upper

    # evaluation

    def dynamics(self, domain, z):
        key = (domain, z.tobytes())
        cached = self._dynamics_cache.get(key)
        if cached is None:
            q, qdot, u = self.expand(z)
            cached = constrained_forward_dynamics(self.model, q, qdot, u, self.graph[domain].contacts)
            if len(self._dynamics_cache) > 20000:
                self._dynamics_cache.clear()
            self._dynamics_cache[key] = cached
        return cached

    def node_terms(self, block: _Block, k: int, z, gait: DomainGait):
        """:return: (equalities dict, inequalities dict, running cost) at node k"""
        spec = self.graph[block.domain]
        q, qdot, u = self.expand(z)
        qddot, lam, cs = self.dynamics(block.domain, z)
        h = gait.duration / (block.n_nodes - 1)
        out = output_and_jacobians(output_spec(block.domain), gait, self.layout, q, qdot, k * h)
        accel = out.jac @ qddot + out.drift
        n1 = out.y1.size
        kv, kp, kd = self.problem.velocity_gain, self.problem.output_kp, self.problem.output_kd
        eq = {"output_dynamics": np.concatenate([
            accel[:n1] / kv + out.y1,
            accel[n1:] / kp + (kd / kp) * out.dy2 + out.y2,
        ])}
        if k == 0:
            eq["pz_entry"] = np.concatenate([out.y2, out.dy2])
            if block.domain == DomainId.RHS:
                eq["origin"] = np.array([q[X]])
        if k == block.n_nodes - 1:
            guard = guard_value(spec, self.model, q, lam, cs)
            eq["guard"] = np.array([guard if spec.guard_kind == HEIGHT_STRIKE else guard / self.weight])

        ineq = {}
        forces = contact_forces(cs, lam)
        grf, friction = [], []
        for side in ("r", "l"):
            points = [p for p in forces if p.startswith(side)]
            if not points:
                continue
            fx = sum(forces[p][0] for p in points) / self.weight
            fz = sum(forces[p][1] for p in points) / self.weight
            grf.extend(-forces[p][1] / self.weight for p in points)
            friction.extend([fx - self.problem.friction * fz, -fx - self.problem.friction * fz])
        ineq["grf"] = np.array(grf)
        ineq["friction"] = np.array(friction)
        if block.state_based:
            ineq["phase_rate"] = np.array([self.problem.phase_rate_margin - phase_rate(gait, self.layout, q, qdot)])
        if k > 0:
            skip = spec.guard_point if (k == block.n_nodes - 1 and spec.guard_kind == HEIGHT_STRIKE) else None
            frames = self.model.frames(q)
            heights = [
                self.model.contact_point_kinematics(q, point, frames=frames).position[1]
                for point in CONTACT_POINTS if point not in spec.contacts and point != skip
            ]
            ineq["clearance"] = -np.array(heights)

        tau = phase_value(gait, self.layout, q, qdot, k * h).tau
        desired = np.array([curve(tau) for curve in self.human_curves[block.domain]])
        error = q[self.joint_index] - desired
        cost = float(np.dot(self.problem.weights, error ** 2) + self.problem.torque_weight * u @ u)
        return eq, ineq, cost

    def defects(self, block: _Block, z0, z1, duration):
        h = duration / (block.n_nodes - 1)
        a0 = self.dynamics(block.domain, z0)[0][self.free]
        a1 = self.dynamics(block.domain, z1)[0][self.free]
        n = self.n_r
        position = z1[:n] - z0[:n] - 0.5 * h * (z0[n:2 * n] + z1[n:2 * n])
        velocity = z1[n:2 * n] - z0[n:2 * n] - 0.5 * h * (a0 + a1)
        return np.concatenate([position, velocity])

    def stitch(self, domain, z_last, z_next):
        successor = self.graph.successor(domain).id
        q, qdot, _ = self.expand(z_last)
        q_plus, qdot_plus, _ = reset_map(self.graph, self.model, successor, q, qdot)
        residual = z_next[:2 * self.n_r] - np.concatenate([q_plus[self.free], qdot_plus[self.free]])
        if successor == CYCLE[0]:
            residual = residual[1:] # base x advances every cycle
        return residual

    def pieces(self, x) -> dict:
        """
        Per-domain residual pieces: node terms, defects and the stitch to the next domain.
        The global vectors concatenate them in a fixed order, so each piece owns a fixed row range.
        """
        result = {}
        for i, domain in enumerate(CYCLE):
            block = self.blocks[domain]
            result[domain] = self._domain_pieces(block, x)
            nxt = self.blocks[CYCLE[(i + 1) % len(CYCLE)]]
            result[domain]["stitch"] = self.stitch(domain, x[block.node(block.n_nodes - 1)], x[nxt.node(0)])
        return result

    def _domain_pieces(self, block: _Block, x) -> dict:
        gait = self.gait(block, x[block.params])
        node_eq, node_ineq, cost, defect = [], [], [], []
        for k in range(block.n_nodes):
            eq, ineq, c = self.node_terms(block, k, x[block.node(k)], gait)
            node_eq.append(eq)
            node_ineq.append(ineq)
            cost.append(c)
            if k + 1 < block.n_nodes:
                defect.append(self.defects(block, x[block.node(k)], x[block.node(k + 1)], gait.duration))
        return {"gait": gait, "node_eq": node_eq, "node_ineq": node_ineq, "cost": cost, "defect": defect}

    @staticmethod
    def _quadrature(block: _Block, duration: float, cost) -> float:
        h = duration / (block.n_nodes - 1)
        return float(h * (np.sum(cost) - 0.5 * (cost[0] + cost[-1])))

    def assemble(self, pieces: dict):
        """:return: (objective, equalities, inequalities) from per-domain pieces"""
        objective, eq, ineq = 0.0, [], []
        for domain in CYCLE:
            block, part = self.blocks[domain], pieces[domain]
            objective += self._quadrature(block, part["gait"].duration, part["cost"])
            for k in range(block.n_nodes):
                eq.extend(part["node_eq"][k].values())
                if k + 1 < block.n_nodes:
                    eq.append(part["defect"][k])
                ineq.extend(part["node_ineq"][k].values())
            eq.append(part["stitch"])
        ineq = [piece for piece in ineq if piece.size]
        return objective, np.concatenate(eq), (np.concatenate(ineq) if ineq else np.zeros(0))

    def evaluate(self, x):
        key = x.tobytes()
        if self._eval_cache is None or self._eval_cache[0] != key:
            self._eval_cache = (key, self.assemble(self.pieces(x)))
        return self._eval_cache[1]

    def violations(self, x) -> dict:
        """Worst residual per domain and constraint group."""
        named = {}
        for domain, part in self.pieces(x).items():
            for eq in part["node_eq"]:
                for name, value in eq.items():
                    named.setdefault(f"{domain}/{name}", []).append(np.abs(value))
            for ineq in part["node_ineq"]:
                for name, value in ineq.items():
                    named.setdefault(f"{domain}/{name}", []).append(np.maximum(value, 0.0))
            named[f"{domain}/defect"] = [np.abs(d) for d in part["defect"]]
            named[f"{domain}/stitch"] = [np.abs(part["stitch"])]
        return {name: float(np.max(np.concatenate(values), initial=0.0)) for name, values in named.items()}

    def objective(self, x) -> float:
        return self.evaluate(x)[0]

    def eq_constraints(self, x):
        return self.evaluate(x)[1]

    def ineq_constraints(self, x):
        return self.evaluate(x)[2]

    def _perturbed(self, base: dict, x, j: int) -> dict:
        """Pieces at x with only the entries that depend on variable j recomputed."""
        for index, domain in enumerate(CYCLE):
            block = self.blocks[domain]
            if block.offset <= j < block.offset + block.size:
                break
        pieces = {d: dict(part) for d, part in base.items()}
        part = pieces[domain]
        if j >= block.param_offset:
            fresh = self._domain_pieces(block, x)
            fresh["stitch"] = part["stitch"]
            pieces[domain] = fresh
            return pieces

        k = (j - block.offset) // block.node_size
        gait = part["gait"]
        for key in ("node_eq", "node_ineq", "cost", "defect"):
            part[key] = list(part[key])
        part["node_eq"][k], part["node_ineq"][k], part["cost"][k] = self.node_terms(block, k, x[block.node(k)], gait)
        for i in (k - 1, k):
            if 0 <= i < block.n_nodes - 1:
                part["defect"][i] = self.defects(block, x[block.node(i)], x[block.node(i + 1)], gait.duration)
        if k == block.n_nodes - 1:
            nxt = self.blocks[CYCLE[(index + 1) % len(CYCLE)]]
            part["stitch"] = self.stitch(domain, x[block.node(k)], x[nxt.node(0)])
        if k == 0:
            previous = CYCLE[index - 1]
            prev_block = self.blocks[previous]
            pieces[previous]["stitch"] = self.stitch(previous, x[prev_block.node(prev_block.n_nodes - 1)], x[block.node(0)])
        return pieces

    def jacobians(self, x, rel_step: float = Config.fd_rel_step):
        """
        Objective gradient and constraint jacobians by central differences. A node variable only
        touches its node terms, the neighbouring defects and a stitch, so only those are re-evaluated.
        """
        key = x.tobytes()
        if self._jac_cache is not None and self._jac_cache[0] == key:
            return self._jac_cache[1]
        base = self.pieces(x)
        _, eq0, ineq0 = self.assemble(base)
        grad = np.zeros(self.n)
        J_eq = np.zeros((eq0.size, self.n))
        J_in = np.zeros((ineq0.size, self.n))
        for j in range(self.n):
            step = rel_step * max(1.0, abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += step
            xm[j] -= step
            fp, ep, ip = self.assemble(self._perturbed(base, xp, j))
            fm, em, im = self.assemble(self._perturbed(base, xm, j))
            grad[j] = (fp - fm) / (2.0 * step)
            J_eq[:, j] = (ep - em) / (2.0 * step)
            J_in[:, j] = (ip - im) / (2.0 * step)
        self._jac_cache = (key, (grad, J_eq, J_in))
        return grad, J_eq, J_in


def phase_rate(gait: DomainGait, layout: CoordinateLayout, q, qdot) -> float:
    return phase_value(gait, layout, q, qdot).tau_dot


def project_to_contacts(model: HumanProsthesisModel, q, contacts, pins=None, floors=None,
                        iterations: int = 50, tol: float = 1e-12) -> np.ndarray:
    """
    Gauss-Newton onto the pose where every contact point touches the ground, each pinned point sits at its
    pinned x and each point with a floor stays at or above it. Torso pitch, socket and spring coordinates
    stay where they are.

    :param pins: {contact point: x}
    :param floors: {point: lowest allowed height}; a floor that binds holds its point on it from then on
    :raises FitError: when the contacts and pins cannot be met
    """
    q = np.array(q, dtype=float)
    pins = dict(pins or {})
    floors = {point: value for point, value in (floors or {}).items() if point not in contacts}
    free = [i for i in range(model.n_q) if i not in (PITCH, *SOCKET_COORDS, RS, LS)]
    active = set()
    residual = np.zeros(0)
    for _ in range(iterations):
        frames = model.frames(q)
        kin = {point: model.contact_point_kinematics(q, point, frames=frames) for point in CONTACT_POINTS}
        rows, residual = [], []
        for point in sorted(contacts):
            rows.append(kin[point].jacobian[1])
            residual.append(kin[point].position[1])
        for point, x in sorted(pins.items()):
            rows.append(kin[point].jacobian[0])
            residual.append(kin[point].position[0] - x)
        for point, floor in sorted(floors.items()):
            if point in active or kin[point].position[1] < floor:
                active.add(point)
                rows.append(kin[point].jacobian[1])
                residual.append(kin[point].position[1] - floor)
        residual = np.asarray(residual)
        if np.max(np.abs(residual), initial=0.0) < tol:
            break
        q[free] -= np.linalg.lstsq(np.asarray(rows)[:, free], residual, rcond=None)[0]
    worst = float(np.max(np.abs(residual), initial=0.0))
    if worst > 1e-8:
        raise FitError(f"contact projection onto {sorted(contacts)} stalled {worst:.3e} m from the contacts")
    return q


def project_velocity(model: HumanProsthesisModel, q, qdot, contacts) -> np.ndarray:
    """Closest velocity, in the Euclidean norm, that keeps the contacts and socket still."""
    J = model.constraints(q, qdot, contacts).jacobian
    qdot = np.asarray(qdot, dtype=float)
    return qdot - np.linalg.pinv(J) @ (J @ qdot)


def inverse_dynamics_torques(model: HumanProsthesisModel, q, qdot, qddot, contacts) -> np.ndarray:
    """Least-squares actuator torques that, with free constraint forces, produce ``qddot`` on the contact set."""
    D, H = model.dynamics_terms(q, qdot)
    cs = model.constraints(q, qdot, contacts)
    force = D @ np.asarray(qddot, dtype=float) + H
    if model.has_springs:
        force = force - model.ground_spring_wrench(q, qdot)
    A = np.hstack([model.actuation_matrix(), cs.jacobian.T])
    return np.linalg.lstsq(A, force, rcond=None)[0][:len(ACTUATED)]


def _fitted_pose(model: HumanProsthesisModel, layout: CoordinateLayout, human_fit: HumanFit, percent: float) -> np.ndarray:
    q = np.zeros(model.n_q)
    for joint in JOINTS:
        q[layout.joint_index[joint]] = human_fit.evaluate(joint, percent)[0]
    return q


def _placed(model: HumanProsthesisModel, q, point: str, x: float) -> np.ndarray:
    """``q`` translated so ``point`` touches the ground at x."""
    q = np.array(q, dtype=float)
    position = model.contact_point_kinematics(q, point).position
    q[X] += x - position[0]
    q[Z] -= position[1]
    return q


def _pin_feet(model: HumanProsthesisModel, pins: dict, contacts, q) -> dict:
    """Pins kept for points still in contact, plus one pin, at its x in ``q``, for each newly planted foot."""
    kept = {point: x for point, x in pins.items() if point in contacts}
    for point in sorted(contacts):
        if not any(other[0] == point[0] for other in kept):
            kept[point] = float(model.contact_point_kinematics(q, point).position[0])
    return kept


def _clear_of(touching, clearance: float) -> dict:
    return {point: clearance for point in CONTACT_POINTS if point not in touching}


def _fit_curves(taus, qs, layout: CoordinateLayout, degree: int, joints=JOINTS) -> dict:
    """Bézier curves through the first and last samples of each joint, least squares in between."""
    curves = {}
    for joint in joints:
        values = np.asarray(qs)[:, layout.joint_index[joint]]
        try:
            curves[joint] = fit_bezier(taus, values, degree, endpoints=(values[0], values[-1]))
        except FitError:
            curves[joint] = BezierCurve(tuple(np.linspace(values[0], values[-1], degree + 1)))
    return curves


def _boundary_poses(model, layout, human_fit: HumanFit, graph: HybridGraph, clearance: float):
    """
    Poses at the seven domain boundaries of one cycle, with the contact pins each domain holds.
    The pose closing the cycle is the opening pose moved forward by one stride.
    """
    contacts = [graph[domain].contacts for domain in CYCLE]
    guess = _placed(model, _fitted_pose(model, layout, human_fit, 0.0), "rh", 0.0)
    start = project_to_contacts(model, guess, contacts[0], floors=_clear_of(contacts[0], clearance))
    start[X] = 0.0
    poses, domain_pins = [start], []
    pins = _pin_feet(model, {}, contacts[0], start)
    for index in range(len(CYCLE)):
        stance, following = contacts[index], contacts[(index + 1) % len(CYCLE)]
        domain_pins.append(pins)
        if index == len(CYCLE) - 1:
            anchor = min(point for point in pins if point in following)
            end = _placed(model, start, anchor, pins[anchor])
        else:
            anchor = min(pins)
            guess = _placed(model, _fitted_pose(model, layout, human_fit, human_fit.boundaries[index]), anchor, pins[anchor])
            touching = stance | following
            end = project_to_contacts(model, guess, touching, pins, _clear_of(touching, clearance))
        poses.append(end)
        pins = _pin_feet(model, pins, following, end)
    return poses, domain_pins


def gait_from_human_fit(model: HumanProsthesisModel, human_fit: HumanFit, graph: HybridGraph | None = None,
                        nodes: int = Config.gait_nodes, cycle_time: float = Config.cycle_time,
                        clearance: float = Config.gait_clearance, refine: int = Config.gait_refine) -> GaitLibrary:
    """
    A gait that follows the human fit while respecting the contacts, with the torso upright.

    Boundary poses take the fitted joint angles at the segment boundaries, projected onto the contact sets on
    both sides of the boundary. Stance points keep the x at which they struck, and points off the ground clear
    it by ``clearance``. Inside a domain the fitted motion is shifted to meet both boundary poses and projected
    onto the domain's contacts; the strike point descends to the ground only at the guard and a released point
    rises from it. Curves for every joint are refit to that path, node velocities satisfy the contacts and
    the reset maps, and node torques come from inverse dynamics.
    """
    graph = graph or default_graph()
    layout = CoordinateLayout.full(model)
    joints = np.array([layout.joint_index[joint] for joint in JOINTS])
    limits = np.array([Config.human_torque_limit] * len(HUMAN_JOINTS) + [Config.u_max] * len(PROSTHESIS_JOINTS))
    poses, domain_pins = _boundary_poses(model, layout, human_fit, graph, clearance)
    bounds = (0.0, *human_fit.boundaries)
    samples = (nodes - 1) * refine + 1
    s = np.linspace(0.0, 1.0, samples)

    gaits = {}
    previous = None
    for index, domain in enumerate(CYCLE):
        spec = graph[domain]
        lo, hi = bounds[index], bounds[index + 1]
        duration = (hi - lo) / 100.0 * cycle_time
        first, last = poses[index], poses[index + 1]
        shift_start = first[joints] - _fitted_pose(model, layout, human_fit, lo)[joints]
        shift_end = last[joints] - _fitted_pose(model, layout, human_fit, hi)[joints]
        released = graph[CYCLE[index - 1]].contacts - spec.contacts

        path = [first]
        for sk in s[1:-1]:
            q = path[-1].copy()
            q[joints] = _fitted_pose(model, layout, human_fit, lo + sk * (hi - lo))[joints] \
                + (1.0 - sk) * shift_start + sk * shift_end
            floors = _clear_of(spec.contacts, clearance)
            if spec.guard_kind == HEIGHT_STRIKE:
                floors[spec.guard_point] = clearance * (1.0 - sk)
            for point in released:
                floors[point] = clearance * sk
            path.append(project_to_contacts(model, q, spec.contacts, domain_pins[index], floors))
        path.append(last)
        path = np.array(path)

        t = s * duration
        qdots = np.gradient(path, t, axis=0)
        qdots = np.array([project_velocity(model, q, qdot, spec.contacts) for q, qdot in zip(path, qdots)])
        qddots = np.gradient(qdots, t, axis=0)
        picked = slice(None, None, refine)
        torques = np.array([
            np.clip(inverse_dynamics_torques(model, q, qdot, qddot, spec.contacts), -limits, limits)
            for q, qdot, qddot in zip(path[picked], qdots[picked], qddots[picked])
        ])
        node_qdot = qdots[picked].copy()
        if previous is not None:
            node_qdot[0] = reset_map(graph, model, domain, previous["q"][-1], previous["qdot"][-1])[1]

        if phase_kind(domain) == STATE_BASED:
            deltas = np.array([delta_value(domain, layout, q) for q in path])
            if abs(deltas[-1] - deltas[0]) < 1e-6:
                raise FitError(f"{domain} phase variable does not advance over the fitted motion")
            taus = (deltas - deltas[0]) / (deltas[-1] - deltas[0])
            if np.any(np.diff(taus) <= 0.0):
                logger.warning("%s phase variable is not monotonic over the fitted motion", domain)
            phase = PhaseVariable(STATE_BASED, float(deltas[0]), float(deltas[-1]), duration)
        else:
            taus = s
            phase = PhaseVariable(phase_kind(domain), 0.0, 1.0, duration)
        fitted = _fit_curves(taus, path, layout, human_fit.degree)
        outputs = output_spec(domain)
        curves = {joint: fitted[joint] for joint in outputs.relative_degree_two}
        extra = {joint: curve for joint, curve in fitted.items() if joint not in curves}
        v_hip = float(np.mean(qdots @ layout.velocity_row())) if outputs.velocity else 0.0
        previous = {"t": t[picked], "q": path[picked], "qdot": node_qdot, "u": torques}
        gaits[domain] = DomainGait(domain, curves, phase, v_hip, extra, previous)

    # entering rhs from the end of lhl; the impact does not depend on base x
    rhs = gaits[DomainId.RHS].nodes
    rhs["qdot"][0] = reset_map(graph, model, DomainId.RHS, rhs["q"][0], previous["qdot"][-1])[1]
    initial = {"q": rhs["q"][0], "qdot": rhs["qdot"][0]}
    metadata = {"source": "human_fit", "cycle_time": cycle_time, "clearance": clearance}
    return GaitLibrary(gaits, human_fit.degree, 0.0, initial, metadata)


def _refit_extra_curves(library: GaitLibrary, layout: CoordinateLayout) -> GaitLibrary:
    """Fit curves for joints that are not outputs in a domain from its node trajectory."""
    for gait in library:
        nodes = gait.nodes
        taus = np.array([
            phase_value(gait, layout, q, qdot, t).tau for q, qdot, t in zip(nodes["q"], nodes["qdot"], nodes["t"])
        ])
        others = [joint for joint in JOINTS if joint not in gait.curves]
        gait.extra_curves = _fit_curves(taus, nodes["q"], layout, library.degree, others)
    return library


def optimize_gait(problem: GaitOptProblem, human_fit: HumanFit, initial_guess: GaitLibrary,
                  max_iter: int = Config.nlp_max_iter):
    """
    Solve the collocation NLP from ``initial_guess``.

    A solve that stops short of optimal is rejected when it ends no closer to feasibility than the guess, or
    with a worse objective while still infeasible: the guess comes back unchanged and ``result.status`` is
    "rejected".
    :return: (GaitLibrary, NlpResult); ``result.diagnostics["violations"]`` holds the worst residual per constraint group
    """
    transcription = GaitTranscription(problem, human_fit)
    lower, upper = transcription.bounds()
    x0 = np.clip(transcription.pack(initial_guess), lower, upper)
    spec = NlpSpec(
        objective=transcription.objective,
        initial_guess=x0,
        eq_constraints=transcription.eq_constraints,
        ineq_constraints=transcription.ineq_constraints,
        lower=lower,
        upper=upper,
        objective_grad=lambda x: transcription.jacobians(x)[0],
        eq_jacobian=lambda x: transcription.jacobians(x)[1],
        ineq_jacobian=lambda x: transcription.jacobians(x)[2],
    )
    logger.info("gait NLP: %d variables", transcription.n)
    initial_objective = transcription.objective(x0)
    initial_violation = max(transcription.violations(x0).values(), default=0.0)
    result: NlpResult = solve_nlp(spec, constraint_tol=Config.defect_tol, max_iter=max_iter)
    objective = transcription.objective(result.x)
    violations = transcription.violations(result.x)
    violation = max(violations.values(), default=0.0)
    result.diagnostics.update(
        violations=violations, initial_objective=initial_objective, initial_violation=initial_violation,
    )

    if result.status != OPTIMAL:
        worst = sorted(violations.items(), key=lambda item: -item[1])[:5]
        logger.warning("gait optimization %s; worst constraint groups: %s", result.status, worst)
        worse = violation >= initial_violation or (objective > initial_objective and violation > Config.defect_tol)
        if worse:
            logger.warning(
                "keeping the initial gait: violation %.3e (initial %.3e), objective %.4g (initial %.4g)",
                violation, initial_violation, objective, initial_objective,
            )
            result.status = REJECTED
            result.x = x0
            result.objective = initial_objective
            result.eq_residual = transcription.eq_constraints(x0)
            result.ineq_residual = transcription.ineq_constraints(x0)
            result.diagnostics["violations"] = transcription.violations(x0)
            return replace(initial_guess, metadata={**initial_guess.metadata, "optimization": REJECTED}), result

    pitch = np.mean([
        transcription.expand(result.x[block.node(k)])[0][PITCH]
        for block in transcription.blocks.values() for k in range(block.n_nodes)
    ])
    metadata = {"source": "optimize_gait", "status": result.status, "objective": objective}
    library = transcription.unpack(result.x, torso_pitch=float(pitch), metadata=metadata)
    return _refit_extra_curves(library, CoordinateLayout.full(problem.model)), result


@dataclass
class Check:
    name: str
    value: float
    tol: float
    passed: bool


@dataclass
class GaitReport:
    checks: list = field(default_factory=list)
    durations: dict = field(default_factory=dict)

    def add(self, name: str, value: float, tol: float, passed: bool | None = None):
        value = float(value)
        ok = (np.isfinite(value) and value <= tol) if passed is None else passed
        self.checks.append(Check(name, value, tol, bool(ok)))

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> list:
        return [check.name for check in self.checks if not check.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "durations": {str(k): v for k, v in self.durations.items()},
            "checks": [vars(check) for check in self.checks],
        }


def _pz_residual(model, layout, gait: DomainGait, q, qdot) -> float:
    out = output_and_jacobians(output_spec(gait.domain), gait, layout, q, qdot, 0.0)
    return float(np.max(np.abs(np.concatenate([out.y2, out.dy2])), initial=0.0))


def poincare_residual(model: HumanProsthesisModel, library: GaitLibrary, graph: HybridGraph | None = None,
                      **options) -> float:
    """Weighted distance between the gait's initial state and the state after one simulated cycle (base x excluded)."""
    graph = graph or default_graph()
    q0, qdot0 = library.initial_qdot()
    simulator = Simulator(model, FullModelHZDPolicy(model, library, graph=graph), graph, **options)
    trace = simulator.run(HybridState(DomainId.RHS, q0, qdot0), len(CYCLE))
    final = trace.metadata["final_state"]
    dq = np.delete(final.q - q0, X)
    dv = VELOCITY_WEIGHT * (final.qdot - qdot0)
    return float(np.linalg.norm(np.concatenate([dq, dv])))


def validate_gait(model: HumanProsthesisModel, library: GaitLibrary, graph: HybridGraph | None = None,
                  simulate: bool = True) -> GaitReport:
    """Re-check a gait independently of the optimizer that produced it."""
    graph = graph or default_graph()
    layout = CoordinateLayout.full(model)
    report = GaitReport()
    for index, domain in enumerate(CYCLE):
        gait = library[domain]
        report.durations[domain] = gait.duration
        report.add(f"{domain}/duration", -gait.duration, 0.0, gait.duration > 0)
        if gait.nodes is None:
            report.add(f"{domain}/nodes", float("nan"), 0.0, False)
            continue
        qs, qdots, us = (np.asarray(gait.nodes[key]) for key in ("q", "qdot", "u"))
        report.add(f"{domain}/pz_entry", _pz_residual(model, layout, gait, qs[0], qdots[0]), Config.pz_tol)

        previous = library[CYCLE[index - 1]]
        if previous.nodes is not None:
            q_plus, qdot_plus, _ = reset_map(graph, model, domain, previous.nodes["q"][-1], previous.nodes["qdot"][-1])
            report.add(f"{domain}/impact_invariance", _pz_residual(model, layout, gait, q_plus, qdot_plus), Config.pz_tol)

        accelerations, min_grf = [], np.inf
        for q, qdot, u in zip(qs, qdots, us):
            qddot, lam, cs = constrained_forward_dynamics(model, q, qdot, u, graph[domain].contacts)
            accelerations.append(qddot)
            forces = contact_forces(cs, lam)
            if forces:
                min_grf = min(min_grf, min(f[1] for f in forces.values()))
        report.add(f"{domain}/grf", -min_grf, Config.grf_tol)

        h = np.diff(np.asarray(gait.nodes["t"]))
        acc = np.asarray(accelerations)
        position = qs[1:] - qs[:-1] - 0.5 * h[:, None] * (qdots[1:] + qdots[:-1])
        velocity = qdots[1:] - qdots[:-1] - 0.5 * h[:, None] * (acc[1:] + acc[:-1])
        report.add(f"{domain}/defect", np.max(np.abs(np.concatenate([position, velocity]))), Config.defect_tol)

        if gait.phase.kind == STATE_BASED:
            rate = min(phase_rate(gait, layout, q, qdot) for q, qdot in zip(qs, qdots))
            report.add(f"{domain}/phase_rate", -rate, 0.0, rate > 0)

    if simulate:
        try:
            residual = poincare_residual(model, library, graph)
        except ProsthesisError as exc:
            logger.warning("Poincaré return simulation failed: %s", exc)
            residual = float("inf")
        report.add("poincare", residual, Config.poincare_tol)
    return report
