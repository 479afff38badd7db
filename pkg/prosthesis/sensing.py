"""Emulated hardware measurements and the simulated human that closes the loop.

The IMU reads the socket frame pose and velocity, the load cell the wrench
the human applies to the socket, and the insole the prosthesis-foot vertical
force and pitch moment about the ankle's projection onto the sole.
"""
import logging
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from config import Config
from prosthesis.errors import ValidationError
from prosthesis.model import PITCH, HumanProsthesisModel
from prosthesis.outputs import HUMAN_OUTPUT_JOINTS, CoordinateLayout, DomainGait, phase_value

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SensorFrame:
    time: float
    base_pose: np.ndarray # x, z, θ̄_By
    base_vel: np.ndarray
    F_f: np.ndarray # F_x, F_z, M_y on the prosthesis, socket frame
    insole: np.ndarray # F_g,z, M_g,y
    grf_x: float = 0.0 # not measured, kept for reporting
    prosthesis_contacts: tuple = ()

    def columns(self) -> dict:
        return {
            "base_x": self.base_pose[0], "base_z": self.base_pose[1], "base_pitch": self.base_pose[2],
            "base_dx": self.base_vel[0], "base_dz": self.base_vel[1], "base_dpitch": self.base_vel[2],
            "ff_x": self.F_f[0], "ff_z": self.F_f[1], "ff_m": self.F_f[2],
            "insole_fz": self.insole[0], "insole_my": self.insole[1], "grf_x": self.grf_x,
        }


def contact_forces(cs, lam) -> dict:
    """World-frame (f_x, f_z) per contact point from constraint multipliers."""
    forces = {}
    for label, value in zip(cs.labels, lam):
        point, _, axis = label.partition("_")
        if point not in ("rh", "rt", "lh", "lt"):
            continue
        force = forces.setdefault(point, np.zeros(2))
        force["xz".index(axis)] += value
    return forces


def extract_sensor_frame(model: HumanProsthesisModel, q, qdot, cs, lam, time: float = 0.0, frames=None) -> SensorFrame:
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    frames = frames or model.frames(q, qdot)
    socket = model.socket_frame(q, qdot, frames=frames)
    base_pose = np.array([socket.origin[0], socket.origin[1], socket.angle])
    base_vel = np.concatenate([socket.jacobian @ qdot, [socket.omega]])

    F_f = np.zeros(3)
    for i, label in enumerate(("socket_x", "socket_z", "socket_m")):
        if label in cs.labels:
            F_f[i] = lam[cs.labels.index(label)]

    forces = {point: f for point, f in contact_forces(cs, lam).items() if point.startswith("r")}
    insole = np.zeros(2)
    grf_x = 0.0
    if forces:
        origin = model.body_point(q, "p_foot", (0.0, -model.params.r_pa), frames=frames).position
        for point, (fx, fz) in forces.items():
            d = model.contact_point_kinematics(q, point, frames=frames).position - origin
            insole[0] += fz
            insole[1] += d[1] * fx - d[0] * fz
            grf_x += fx
    return SensorFrame(time, base_pose, base_vel, F_f, insole, grf_x, tuple(sorted(forces)))


@dataclass(frozen=True)
class SensorNoise:
    base_pose: float = 0.0 # standard deviations per channel
    base_vel: float = 0.0
    F_f: float = 0.0
    insole: float = 0.0

    def __post_init__(self):
        for name in ("base_pose", "base_vel", "F_f", "insole"):
            if getattr(self, name) < 0:
                raise ValidationError(f"noise std for {name} must be nonnegative, got {getattr(self, name)}")

    @property
    def is_zero(self) -> bool:
        return not any((self.base_pose, self.base_vel, self.F_f, self.insole))


def add_sensor_noise(frame: SensorFrame, noise: SensorNoise, rng) -> SensorFrame:
    """Additive Gaussian noise; ``rng`` is a seed or a numpy Generator."""
    if noise.is_zero:
        return frame
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    insole = frame.insole
    if frame.prosthesis_contacts:
        insole = insole + rng.normal(0.0, noise.insole, 2)
    return replace(
        frame,
        base_pose=frame.base_pose + rng.normal(0.0, noise.base_pose, 3),
        base_vel=frame.base_vel + rng.normal(0.0, noise.base_vel, 3),
        F_f=frame.F_f + rng.normal(0.0, noise.F_f, 3),
        insole=insole,
    )


class SensorDelay:
    """Hands back the frame measured ``ticks`` controller ticks ago."""

    def __init__(self, ticks: int = 0):
        if ticks < 0:
            raise ValidationError(f"sensor delay must be nonnegative, got {ticks}")
        self.ticks = ticks
        self.buffer = deque(maxlen=ticks + 1)

    def __call__(self, frame: SensorFrame) -> SensorFrame:
        self.buffer.append(frame)
        return self.buffer[0]


@dataclass(frozen=True)
class HumanEmulation:
    kp: float = Config.human_kp
    kd: float = Config.human_kd
    torque_limit: float = Config.human_torque_limit
    torso_balance: bool = False
    torso_kp: float = Config.torso_kp
    torso_kd: float = Config.torso_kd

    def __post_init__(self):
        if self.kp <= 0 or self.kd <= 0 or self.torque_limit <= 0:
            raise ValidationError(f"human PD gains and torque limit must be positive, got {self.kp}, {self.kd}, {self.torque_limit}")


def human_torques(
    emulation: HumanEmulation,
    layout: CoordinateLayout,
    q,
    qdot,
    gait: DomainGait,
    elapsed: float = 0.0,
    torso_pitch: float = 0.0,
    stance_side: str = "r",
) -> np.ndarray:
    """Saturated PD torques on the left hip, knee, ankle and right hip toward the gait's joint curves."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    phase = phase_value(gait, layout, q, qdot, elapsed)
    torques = np.zeros(len(HUMAN_OUTPUT_JOINTS))
    for i, joint in enumerate(HUMAN_OUTPUT_JOINTS):
        curve = gait.curve(joint)
        if curve is None:
            continue
        value, d1, _, _ = curve.eval_clamped(phase.tau_raw)
        index = layout.joint_index[joint]
        torques[i] = -emulation.kp * (q[index] - value) - emulation.kd * (qdot[index] - d1 * phase.tau_dot)

    if emulation.torso_balance:
        # stance hip holds the trunk; pitch falls as the stance hip extends
        slot = HUMAN_OUTPUT_JOINTS.index(stance_side + "h")
        torques[slot] = emulation.torso_kp * (q[PITCH] - torso_pitch) + emulation.torso_kd * qdot[PITCH]
    return np.clip(torques, -emulation.torque_limit, emulation.torque_limit)
