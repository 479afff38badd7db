"""Planar kinematic trees in the sagittal (x, z) plane.

Angles are pitch, positive when the body's +z axis tips toward +x, so a
vector r in a body frame reads R(φ)·r in the world with

    R(φ) = [[cos φ, sin φ], [-sin φ, cos φ]]

Every body hangs off its parent frame through a fixed offset, optional
prismatic slides along parent-frame axes, and an optional revolute joint.
Dynamics are assembled from per-body com jacobians (projected Newton-Euler),
which is exact for a tree of rigid planar bodies.
"""
from dataclasses import dataclass, field

import numpy as np


def rot(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, s], [-s, c]])


def rot_prime(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[-s, c], [-c, -s]])


@dataclass(frozen=True)
class BodySpec:
    name: str
    parent: int | None
    offset: tuple = (0.0, 0.0)
    slides: tuple = () # ((coordinate index, unit axis in parent frame), ...)
    angle_index: int | None = None
    mass: float = 0.0
    com: tuple = (0.0, 0.0)
    inertia: float = 0.0


@dataclass
class Frame:
    """World pose and first/second order kinematics of one body frame."""
    origin: np.ndarray
    angle: float
    jacobian: np.ndarray # 2 x n, origin velocity
    angle_row: np.ndarray # n, angular velocity row
    bias: np.ndarray # 2, jacobian_dot @ qdot of the origin
    omega: float


@dataclass
class PointKinematics:
    position: np.ndarray
    jacobian: np.ndarray
    jacobian_dot_qdot: np.ndarray


@dataclass
class PlanarTree:
    bodies: list
    n_q: int
    gravity: float = 9.81
    index: dict = field(init=False)

    def __post_init__(self):
        self.index = {}
        for i, body in enumerate(self.bodies):
            if body.parent is not None and body.parent >= i:
                raise ValueError(f"body {body.name} must follow its parent in the body list")
            self.index[body.name] = i

    def body(self, name: str) -> BodySpec:
        return self.bodies[self.index[name]]

    def frames(self, q, qdot=None) -> list:
        q = np.asarray(q, dtype=float)
        qdot = np.zeros(self.n_q) if qdot is None else np.asarray(qdot, dtype=float)
        frames = []
        for body in self.bodies:
            v = np.array(body.offset, dtype=float)
            v_dot = np.zeros(2)
            for j, axis in body.slides:
                axis = np.asarray(axis, dtype=float)
                v = v + q[j] * axis
                v_dot = v_dot + qdot[j] * axis

            if body.parent is None:
                origin = v.copy()
                J = np.zeros((2, self.n_q))
                for j, axis in body.slides:
                    J[:, j] += axis
                bias = np.zeros(2)
                angle, c = 0.0, np.zeros(self.n_q)
            else:
                p = frames[body.parent]
                R, Rp = rot(p.angle), rot_prime(p.angle)
                origin = p.origin + R @ v
                J = p.jacobian + np.outer(Rp @ v, p.angle_row)
                for j, axis in body.slides:
                    J[:, j] += R @ np.asarray(axis, dtype=float)
                bias = p.bias - R @ v * p.omega ** 2 + 2.0 * (Rp @ v_dot) * p.omega
                angle, c = p.angle, p.angle_row.copy()

            if body.angle_index is not None:
                angle += q[body.angle_index]
                c[body.angle_index] += 1.0
            frames.append(Frame(origin, angle, J, c, bias, float(c @ qdot)))
        return frames

    def point(self, frames: list, body: str | int, r) -> PointKinematics:
        """Kinematics of a point fixed at ``r`` in a body frame."""
        f = frames[self.index[body] if isinstance(body, str) else body]
        r = np.asarray(r, dtype=float)
        position = f.origin + rot(f.angle) @ r
        jacobian = f.jacobian + np.outer(rot_prime(f.angle) @ r, f.angle_row)
        bias = f.bias - rot(f.angle) @ r * f.omega ** 2
        return PointKinematics(position, jacobian, bias)

    def mass_matrix(self, q, frames=None) -> np.ndarray:
        frames = frames or self.frames(q)
        D = np.zeros((self.n_q, self.n_q))
        for body, f in zip(self.bodies, frames):
            if body.mass == 0.0 and body.inertia == 0.0:
                continue
            com = self.point(frames, body.name, body.com)
            D += body.mass * com.jacobian.T @ com.jacobian
            D += body.inertia * np.outer(f.angle_row, f.angle_row)
        return 0.5 * (D + D.T)

    def bias_forces(self, q, qdot, frames=None) -> np.ndarray:
        """Coriolis, centrifugal and gravity terms H with D q̈ + H = τ."""
        frames = frames or self.frames(q, qdot)
        H = np.zeros(self.n_q)
        for body in self.bodies:
            if body.mass == 0.0:
                continue
            com = self.point(frames, body.name, body.com)
            H += body.mass * com.jacobian.T @ com.jacobian_dot_qdot
            H += body.mass * self.gravity * com.jacobian[1]
        return H

    def potential_energy(self, q) -> float:
        frames = self.frames(q)
        return float(sum(
            body.mass * self.gravity * self.point(frames, body.name, body.com).position[1]
            for body in self.bodies
        ))

    def kinetic_energy(self, q, qdot) -> float:
        qdot = np.asarray(qdot, dtype=float)
        return float(0.5 * qdot @ self.mass_matrix(q) @ qdot)

    def total_mass(self) -> float:
        return float(sum(body.mass for body in self.bodies))

    def center_of_mass(self, q) -> np.ndarray:
        frames = self.frames(q)
        weighted = sum(body.mass * self.point(frames, body.name, body.com).position for body in self.bodies)
        return weighted / self.total_mass()
