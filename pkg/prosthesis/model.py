"""Full planar human–prosthesis model: 12 coordinates, 14 with ground springs.

Coordinates: base x, z (hip), torso pitch, left hip/knee/ankle, right hip,
socket slides x/z (along the right thigh axes) and socket pitch, prosthesis
knee and ankle, then optional right and left spring compressions. Hip
extension, knee flexion and ankle plantarflexion are positive. The socket
coordinates are held at zero by three holonomic rows whose multipliers are
the wrench the human exerts on the prosthesis.
"""
import logging
from dataclasses import dataclass

import numpy as np

from config import Config
from prosthesis.errors import ConfigurationError, SingularContactError, SingularImpactError
from prosthesis.params import ModelParams
from prosthesis.tree import BodySpec, PlanarTree

logger = logging.getLogger(__name__)

X, Z, PITCH, LH, LK, LA, RH, SX, SZ, SM, PK, PA, RS, LS = range(14)
SOCKET_COORDS = (SX, SZ, SM)
ACTUATED = (LH, LK, LA, RH, PK, PA)
HUMAN_JOINTS = (LH, LK, LA, RH)
PROSTHESIS_JOINTS = (PK, PA)
COORD_NAMES = ("x", "z", "pitch", "lh", "lk", "la", "rh", "sx", "sz", "sm", "pk", "pa", "rs", "ls")
CONTACT_POINTS = ("rh", "rt", "lh", "lt")


@dataclass
class ConstraintSet:
    jacobian: np.ndarray
    bias: np.ndarray # J̇ q̇
    labels: tuple

    @property
    def size(self) -> int:
        return len(self.labels)

    def rows(self, prefix: str) -> list:
        return [i for i, label in enumerate(self.labels) if label.startswith(prefix)]


def _foot_rows(points: set, heel: str, toe: str) -> list:
    if heel in points and toe in points:
        return [(heel, 0), (heel, 1), (toe, 1)]
    if heel in points:
        return [(heel, 0), (heel, 1)]
    if toe in points:
        return [(toe, 0), (toe, 1)]
    return []


class HumanProsthesisModel:
    """Kinematics and dynamics of the full model built from ModelParams."""

    def __init__(self, params: ModelParams):
        self.params = params
        self.has_springs = params.springs is not None
        self.n_q = 14 if self.has_springs else 12
        self.tree = PlanarTree(self._bodies(), self.n_q, params.gravity)
        self._contact_body = {}
        self._contact_offset = {}
        for side, body, sole, geometry in (
            ("r", "p_foot", "r_sole", params.p_foot_geometry),
            ("l", "l_foot", "l_sole", params.l_foot_geometry),
        ):
            for kind, along in (("h", geometry.heel), ("t", geometry.toe)):
                if self.has_springs:
                    self._contact_body[side + kind] = sole
                    self._contact_offset[side + kind] = (along, 0.0)
                else:
                    self._contact_body[side + kind] = body
                    self._contact_offset[side + kind] = (along, -geometry.height)

    def _bodies(self) -> list:
        p = self.params
        sole_mass = Config.sole_mass if self.has_springs else 0.0

        def foot(link, geometry):
            return dict(mass=link.mass - sole_mass, com=(link.com, -0.5 * geometry.height), inertia=link.inertia)

        bodies = [
            BodySpec("torso", None, slides=((X, (1.0, 0.0)), (Z, (0.0, 1.0))), angle_index=PITCH,
                     mass=p.torso.mass, com=(0.0, p.torso.com), inertia=p.torso.inertia),
            BodySpec("l_thigh", 0, angle_index=LH,
                     mass=p.l_thigh.mass, com=(0.0, -p.l_thigh.com), inertia=p.l_thigh.inertia),
            BodySpec("l_shank", 1, offset=(0.0, -p.l_thigh.length), angle_index=LK,
                     mass=p.l_shank.mass, com=(0.0, -p.l_shank.com), inertia=p.l_shank.inertia),
            BodySpec("l_foot", 2, offset=(0.0, -p.l_shank.length), angle_index=LA,
                     **foot(p.l_foot, p.l_foot_geometry)),
            BodySpec("r_thigh", 0, angle_index=RH,
                     mass=p.r_thigh.mass, com=(0.0, -p.r_thigh.com), inertia=p.r_thigh.inertia),
            BodySpec("socket", 4, offset=(0.0, -p.residual_length),
                     slides=((SX, (1.0, 0.0)), (SZ, (0.0, 1.0))), angle_index=SM,
                     mass=p.socket.mass, com=(0.0, -p.socket.com), inertia=p.socket.inertia),
            BodySpec("p_shank", 5, offset=(0.0, -p.r_bar_b), angle_index=PK,
                     mass=p.p_shank.mass, com=(0.0, -p.p_shank.com), inertia=p.p_shank.inertia),
            BodySpec("p_foot", 6, offset=(0.0, -p.r_pk), angle_index=PA,
                     **foot(p.p_foot, p.p_foot_geometry)),
        ]
        if self.has_springs:
            bodies.append(BodySpec("r_sole", 7, offset=(0.0, -p.p_foot_geometry.height), slides=((RS, (0.0, 1.0)),),
                                   mass=sole_mass, inertia=Config.sole_inertia))
            bodies.append(BodySpec("l_sole", 3, offset=(0.0, -p.l_foot_geometry.height), slides=((LS, (0.0, 1.0)),),
                                   mass=sole_mass, inertia=Config.sole_inertia))
        return bodies

    # dynamics

    def frames(self, q, qdot=None):
        return self.tree.frames(q, qdot)

    def mass_matrix(self, q) -> np.ndarray:
        return self.tree.mass_matrix(q)

    def bias_forces(self, q, qdot) -> np.ndarray:
        return self.tree.bias_forces(q, qdot)

    def dynamics_terms(self, q, qdot):
        """D and H from one kinematics pass."""
        frames = self.tree.frames(q, qdot)
        return self.tree.mass_matrix(q, frames), self.tree.bias_forces(q, qdot, frames)

    def potential_energy(self, q) -> float:
        return self.tree.potential_energy(q)

    def kinetic_energy(self, q, qdot) -> float:
        return self.tree.kinetic_energy(q, qdot)

    def total_energy(self, q, qdot) -> float:
        energy = self.kinetic_energy(q, qdot) + self.potential_energy(q)
        if self.has_springs:
            k = self.params.springs.stiffness
            energy += 0.5 * k * (q[RS] ** 2 + q[LS] ** 2)
        return energy

    def actuation_matrix(self) -> np.ndarray:
        B = np.zeros((self.n_q, len(ACTUATED)))
        for column, index in enumerate(ACTUATED):
            B[index, column] = 1.0
        return B

    def ground_spring_wrench(self, q, qdot) -> np.ndarray:
        """Spring-damper generalized force on the compression coordinates; compression is positive."""
        if not self.has_springs:
            raise ConfigurationError("model has no ground springs")
        springs = self.params.springs
        force = np.zeros(self.n_q)
        for index in (RS, LS):
            force[index] = -springs.stiffness * q[index] - springs.damping * qdot[index]
        return force

    # kinematics

    def contact_point_kinematics(self, q, point: str, qdot=None, frames=None):
        """Position, jacobian and J̇q̇ of a heel/toe contact point."""
        if point not in CONTACT_POINTS:
            raise ValueError(f"unknown contact point {point!r}")
        frames = frames or self.tree.frames(q, qdot)
        return self.tree.point(frames, self._contact_body[point], self._contact_offset[point])

    def contact_heights(self, q) -> dict:
        frames = self.tree.frames(q)
        return {point: float(self.contact_point_kinematics(q, point, frames=frames).position[1]) for point in CONTACT_POINTS}

    def socket_frame(self, q, qdot=None, frames=None):
        frames = frames or self.tree.frames(q, qdot)
        return frames[self.tree.index["socket"]]

    def body_point(self, q, body: str, r, qdot=None, frames=None):
        frames = frames or self.tree.frames(q, qdot)
        return self.tree.point(frames, body, r)

    def constraints(self, q, qdot, contacts, include_socket: bool = True, frames=None) -> ConstraintSet:
        """
        Holonomic rows in the order socket, right foot, left foot.
        A flat foot contributes heel x/z and toe z; a single point x/z; a foot off the ground
        locks its spring when springs are present.
        """
        frames = frames or self.tree.frames(q, qdot)
        contacts = set(contacts)
        unknown = contacts.difference(CONTACT_POINTS)
        if unknown:
            raise ValueError(f"unknown contact points {sorted(unknown)}")
        rows, bias, labels = [], [], []
        if include_socket:
            for index, label in zip(SOCKET_COORDS, ("socket_x", "socket_z", "socket_m")):
                row = np.zeros(self.n_q)
                row[index] = 1.0
                rows.append(row)
                bias.append(0.0)
                labels.append(label)
        for side, spring in (("r", RS), ("l", LS)):
            foot = _foot_rows(contacts, side + "h", side + "t")
            for point, axis in foot:
                kin = self.tree.point(frames, self._contact_body[point], self._contact_offset[point])
                rows.append(kin.jacobian[axis])
                bias.append(kin.jacobian_dot_qdot[axis])
                labels.append(f"{point}_{'xz'[axis]}")
            if not foot and self.has_springs:
                row = np.zeros(self.n_q)
                row[spring] = 1.0
                rows.append(row)
                bias.append(0.0)
                labels.append(f"{side}s_lock")
        jacobian = np.array(rows) if rows else np.zeros((0, self.n_q))
        return ConstraintSet(jacobian, np.array(bias), tuple(labels))

    # generalized-force helpers

    def point_force(self, q, body: str, r, force) -> np.ndarray:
        """Generalized force of a world-frame force applied at a body point."""
        kin = self.body_point(q, body, r)
        return kin.jacobian.T @ np.asarray(force, dtype=float)


def check_rank(jacobian: np.ndarray, tol: float = Config.contact_rank_tol, error=SingularContactError):
    if jacobian.shape[0] == 0:
        return
    smallest = np.linalg.svd(jacobian, compute_uv=False).min()
    if jacobian.shape[0] > jacobian.shape[1] or smallest < tol:
        raise error(f"constraint jacobian is rank deficient, smallest singular value {smallest:.3e}")


def solve_constrained(D, H, J, Jdot_qdot, generalized_force):
    """Solve D q̈ + H = f + Jᵀλ with J q̈ + J̇q̇ = 0."""
    n, k = D.shape[0], J.shape[0]
    if k == 0:
        return np.linalg.solve(D, generalized_force - H), np.zeros(0)
    K = np.zeros((n + k, n + k))
    K[:n, :n] = D
    K[:n, n:] = -J.T
    K[n:, :n] = J
    rhs = np.concatenate([generalized_force - H, -Jdot_qdot])
    sol = np.linalg.solve(K, rhs)
    return sol[:n], sol[n:]


def constrained_forward_dynamics(model: HumanProsthesisModel, q, qdot, u, contacts, include_socket: bool = True, external=None):
    """
    Accelerations and constraint multipliers for the given contact set.
    :param u: the six actuator torques (left hip/knee/ankle, right hip, prosthesis knee/ankle)
    :param external: extra generalized force (springs, disturbances)
    :return: (qddot, lambda, ConstraintSet)
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    frames = model.frames(q, qdot)
    D = model.tree.mass_matrix(q, frames)
    H = model.tree.bias_forces(q, qdot, frames)
    cs = model.constraints(q, qdot, contacts, include_socket=include_socket, frames=frames)
    check_rank(cs.jacobian)
    force = model.actuation_matrix() @ np.asarray(u, dtype=float)
    if model.has_springs:
        force = force + model.ground_spring_wrench(q, qdot)
    if external is not None:
        force = force + external
    qddot, lam = solve_constrained(D, H, cs.jacobian, cs.bias, force)
    return qddot, lam, cs


def plastic_impact(D: np.ndarray, J: np.ndarray, qdot_minus):
    """Solve [D −Jᵀ; J 0](q̇⁺; Λ) = (D q̇⁻; 0)."""
    check_rank(J, error=SingularImpactError)
    n, k = D.shape[0], J.shape[0]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = D
    K[:n, n:] = -J.T
    K[n:, :n] = J
    rhs = np.concatenate([D @ qdot_minus, np.zeros(k)])
    sol = np.linalg.solve(K, rhs)
    return sol[:n], sol[n:]


def impact_map(model: HumanProsthesisModel, q, qdot_minus, post_contacts, include_socket: bool = True):
    """Plastic impact onto the post-impact contact set; positions are unchanged."""
    q = np.asarray(q, dtype=float)
    qdot_minus = np.asarray(qdot_minus, dtype=float)
    frames = model.frames(q)
    D = model.tree.mass_matrix(q, frames)
    cs = model.constraints(q, qdot_minus, post_contacts, include_socket=include_socket, frames=frames)
    return plastic_impact(D, cs.jacobian, qdot_minus)


def standing_pose(model: HumanProsthesisModel) -> np.ndarray:
    """All joints straight, both soles on the ground."""
    q = np.zeros(model.n_q)
    q[Z] = model.params.leg_length
    return q
