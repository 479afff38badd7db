"""Five-coordinate prosthesis subsystem driven by the socket wrench and ground forces.

Coordinates q̄ = (x, z, θ̄_By, θ_pk, θ_pa): the socket frame origin and pitch,
then the prosthesis knee and ankle. The dynamics read

    D̄ q̄̈ + H̄ = B̄ u_s + J̄_hᵀ λ̄_h + J̄_fᵀ F_f

with F_f = (F_x, F_z, M_y) the wrench the human applies to the socket,
forces expressed in the socket frame.
"""
import logging
from dataclasses import dataclass

import numpy as np

from prosthesis.errors import SingularContactError, ValidationError
from prosthesis.model import PK, PA, HumanProsthesisModel
from prosthesis.params import ModelParams
from prosthesis.tree import BodySpec, PlanarTree, PointKinematics, rot

logger = logging.getLogger(__name__)

SUB_X, SUB_Z, SUB_PITCH, SUB_PK, SUB_PA = range(5)
PROSTHESIS_CONTACTS = ("rh", "rt")


@dataclass
class SubsystemDynamics:
    D: np.ndarray
    H: np.ndarray
    B: np.ndarray
    J_f: np.ndarray
    insole: PointKinematics
    foot_angle_row: np.ndarray
    contacts: dict # point -> PointKinematics of the heel/toe


@dataclass
class ContactRows:
    jacobian: np.ndarray
    bias: np.ndarray
    labels: tuple


class ProsthesisSubsystem:
    """The socket, prosthesis shank and foot as a floating-base chain."""

    n_q = 5

    def __init__(self, params: ModelParams):
        self.params = params
        geometry = params.p_foot_geometry
        self.tree = PlanarTree([
            BodySpec("socket", None, slides=((SUB_X, (1.0, 0.0)), (SUB_Z, (0.0, 1.0))), angle_index=SUB_PITCH,
                     mass=params.socket.mass, com=(0.0, -params.socket.com), inertia=params.socket.inertia),
            BodySpec("p_shank", 0, offset=(0.0, -params.r_bar_b), angle_index=SUB_PK,
                     mass=params.p_shank.mass, com=(0.0, -params.p_shank.com), inertia=params.p_shank.inertia),
            BodySpec("p_foot", 1, offset=(0.0, -params.r_pk), angle_index=SUB_PA,
                     mass=params.p_foot.mass, com=(params.p_foot.com, -0.5 * geometry.height),
                     inertia=params.p_foot.inertia),
        ], self.n_q, params.gravity)
        self.insole_offset = (0.0, -params.r_pa)
        self.contact_offsets = {"rh": (geometry.heel, -params.r_pa), "rt": (geometry.toe, -params.r_pa)}

    @property
    def mass(self) -> float:
        return self.tree.total_mass()

    def actuation_matrix(self) -> np.ndarray:
        B = np.zeros((self.n_q, 2))
        B[SUB_PK, 0] = 1.0
        B[SUB_PA, 1] = 1.0
        return B

    def fixed_joint_jacobian(self, q_bar) -> np.ndarray:
        """Maps q̄̇ to socket-frame velocity and pitch rate; its transpose maps F_f to generalized force."""
        J_f = np.zeros((3, self.n_q))
        J_f[:2, :2] = rot(q_bar[SUB_PITCH]).T
        J_f[2, SUB_PITCH] = 1.0
        return J_f

    def dynamics(self, q_bar, q_bar_dot) -> SubsystemDynamics:
        frames = self.tree.frames(q_bar, q_bar_dot)
        foot = frames[2]
        return SubsystemDynamics(
            D=self.tree.mass_matrix(q_bar, frames),
            H=self.tree.bias_forces(q_bar, q_bar_dot, frames),
            B=self.actuation_matrix(),
            J_f=self.fixed_joint_jacobian(q_bar),
            insole=self.tree.point(frames, "p_foot", self.insole_offset),
            foot_angle_row=foot.angle_row.copy(),
            contacts={point: self.tree.point(frames, "p_foot", r) for point, r in self.contact_offsets.items()},
        )

    def contact_rows(self, dyn: SubsystemDynamics, contacts) -> ContactRows:
        """Flat foot: insole x, z and foot pitch. Single point: that point's x and z."""
        points = set(contacts) & set(PROSTHESIS_CONTACTS)
        if points == {"rh", "rt"}:
            jacobian = np.vstack([dyn.insole.jacobian, dyn.foot_angle_row[None, :]])
            bias = np.concatenate([dyn.insole.jacobian_dot_qdot, [0.0]])
            return ContactRows(jacobian, bias, ("grf_x", "grf_z", "grf_m"))
        if len(points) == 1:
            point = points.pop()
            kin = dyn.contacts[point]
            return ContactRows(kin.jacobian, kin.jacobian_dot_qdot, (f"{point}_x", f"{point}_z"))
        return ContactRows(np.zeros((0, self.n_q)), np.zeros(0), ())

    def grf_generalized_force(self, dyn: SubsystemDynamics, F_x: float, F_z: float, M_y: float) -> np.ndarray:
        """Generalized force of a ground wrench reported at the insole origin."""
        return dyn.insole.jacobian.T @ np.array([F_x, F_z]) + dyn.foot_angle_row * M_y


def subsystem_dynamics(subsystem: ProsthesisSubsystem, q_bar, q_bar_dot) -> SubsystemDynamics:
    return subsystem.dynamics(np.asarray(q_bar, dtype=float), np.asarray(q_bar_dot, dtype=float))


def grf_back_solve(subsystem: ProsthesisSubsystem, q_bar, q_bar_dot, u_s, F_f, contacts) -> np.ndarray:
    """
    Ground reaction multipliers implied by the subsystem dynamics and the holonomic constraints:
    λ̄ = (J D⁻¹ Jᵀ)⁻¹ (J D⁻¹ (H − B u − J_fᵀ F_f) − J̇ q̇)
    """
    q_bar = np.asarray(q_bar, dtype=float)
    q_bar_dot = np.asarray(q_bar_dot, dtype=float)
    dyn = subsystem.dynamics(q_bar, q_bar_dot)
    rows = subsystem.contact_rows(dyn, contacts)
    if not rows.labels:
        raise ValidationError("grf back-solve needs at least one prosthesis contact")
    D_inv_JT = np.linalg.solve(dyn.D, rows.jacobian.T)
    contact_inertia = rows.jacobian @ D_inv_JT
    if np.linalg.cond(contact_inertia) > 1e12:
        raise SingularContactError(f"contact inertia is singular (cond {np.linalg.cond(contact_inertia):.3e})")
    free = dyn.H - dyn.B @ np.asarray(u_s, dtype=float) - dyn.J_f.T @ np.asarray(F_f, dtype=float)
    rhs = rows.jacobian @ np.linalg.solve(dyn.D, free) - rows.bias
    return np.linalg.solve(contact_inertia, rhs)


def subsystem_transform(model: HumanProsthesisModel, q, qdot=None, frames=None):
    """
    T with q̄̇ = T q̇, and Ṫ q̇, from the socket frame of the full model.
    :return: (T, Tdot_qdot)
    """
    socket = model.socket_frame(q, qdot, frames=frames)
    T = np.zeros((5, model.n_q))
    T[:2] = socket.jacobian
    T[2] = socket.angle_row
    T[3, PK] = 1.0
    T[4, PA] = 1.0
    Tdot_qdot = np.zeros(5)
    Tdot_qdot[:2] = socket.bias
    return T, Tdot_qdot


def subsystem_state(model: HumanProsthesisModel, q, qdot, frames=None):
    """Subsystem coordinates and velocities read off the full state."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    frames = frames or model.frames(q, qdot)
    socket = frames[model.tree.index["socket"]]
    q_bar = np.array([socket.origin[0], socket.origin[1], socket.angle, q[PK], q[PA]])
    T, _ = subsystem_transform(model, q, qdot, frames=frames)
    return q_bar, T @ qdot
