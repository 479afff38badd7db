"""Virtual constraints y = yᵃ − yᵈ and the phase variables that drive yᵈ.

All actual outputs are linear in the coordinates, so one evaluation routine
serves both the full model and the five-coordinate prosthesis subsystem; a
CoordinateLayout says where each joint lives in the coordinate vector.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from prosthesis.bezier import BezierCurve
from prosthesis.domains import DomainId
from prosthesis.errors import ValidationError, WrongPhaseKindError
from prosthesis import model as full
from prosthesis import subsystem as sub

logger = logging.getLogger(__name__)

STATE_BASED = "state"
TIME_BASED = "time"
VELOCITY_OUTPUT = "v_rhip"
HUMAN_OUTPUT_JOINTS = ("lh", "lk", "la", "rh")
TIME_BASED_DOMAINS = (DomainId.LTS, DomainId.LHL)
# rhs and lhs stand on one point of each foot: 9 coordinates less 4 contact rows leave 5 degrees of
# freedom, so a state-based phase admits 4 outputs. The prosthesis takes two. The right hip fixes torso
# pitch once the phase fixes the right thigh, the left knee takes the last one, and the left hip and
# ankle follow from closing the chain between the two contact points.
DOUBLE_SUPPORT_HUMAN = ("lk", "rh")


@dataclass(frozen=True)
class CoordinateLayout:
    n: int
    joint_index: dict
    theta_by: tuple # row vector with θ̄_By = theta_by · q
    r_bar_b: float
    r_pk: float
    r_pa: float

    @classmethod
    def full(cls, model) -> "CoordinateLayout":
        theta_by = np.zeros(model.n_q)
        theta_by[[full.PITCH, full.RH, full.SM]] = 1.0
        p = model.params
        return cls(
            model.n_q,
            {"pitch": full.PITCH, "lh": full.LH, "lk": full.LK, "la": full.LA, "rh": full.RH, "pk": full.PK, "pa": full.PA},
            tuple(theta_by), p.r_bar_b, p.r_pk, p.r_pa,
        )

    @classmethod
    def subsystem(cls, params) -> "CoordinateLayout":
        theta_by = np.zeros(5)
        theta_by[sub.SUB_PITCH] = 1.0
        return cls(5, {"pk": sub.SUB_PK, "pa": sub.SUB_PA}, tuple(theta_by), params.r_bar_b, params.r_pk, params.r_pa)

    def unit(self, joint: str) -> np.ndarray:
        if joint not in self.joint_index:
            raise ValidationError(f"joint {joint!r} is not part of this coordinate layout")
        row = np.zeros(self.n)
        row[self.joint_index[joint]] = 1.0
        return row

    def velocity_row(self) -> np.ndarray:
        """v_rhip = velocity_row · q̇."""
        return (self.r_bar_b + self.r_pk) * self.unit("pk") + (self.r_bar_b + self.r_pa) * self.unit("pa")


@dataclass(frozen=True)
class PhaseVariable:
    kind: str
    delta0: float = 0.0
    deltaf: float = 1.0
    duration: float = 1.0 # s, predicted domain duration

    def __post_init__(self):
        if self.kind not in (STATE_BASED, TIME_BASED):
            raise ValidationError(f"phase kind must be {STATE_BASED!r} or {TIME_BASED!r}, got {self.kind!r}")
        if self.kind == STATE_BASED and self.deltaf == self.delta0:
            raise ValidationError(f"phase endpoints must differ, both are {self.delta0}")
        if not self.duration > 0:
            raise ValidationError(f"predicted duration must be positive, got {self.duration}")


@dataclass(frozen=True)
class OutputSpec:
    domain: DomainId
    human: tuple
    prosthesis: tuple
    velocity: bool

    @property
    def relative_degree_two(self) -> tuple:
        return self.human + self.prosthesis

    @property
    def names(self) -> tuple:
        return ((VELOCITY_OUTPUT,) if self.velocity else ()) + self.relative_degree_two

    @property
    def n_y1(self) -> int:
        return int(self.velocity)

    @property
    def n_y2(self) -> int:
        return len(self.relative_degree_two)


def output_spec(domain, include_human: bool = True) -> OutputSpec:
    """Prosthesis outputs [θ_pk, θ_pa], or [v_rhip, θ_pk] in rts; human joint angles, see DOUBLE_SUPPORT_HUMAN."""
    domain = DomainId(domain)
    if domain == DomainId.RTS:
        prosthesis, velocity = ("pk",), True
    else:
        prosthesis, velocity = ("pk", "pa"), False
    human = ()
    if include_human:
        human = DOUBLE_SUPPORT_HUMAN if domain in (DomainId.RHS, DomainId.LHS) else HUMAN_OUTPUT_JOINTS
    return OutputSpec(domain, human, prosthesis, velocity)


def phase_kind(domain) -> str:
    return TIME_BASED if DomainId(domain) in TIME_BASED_DOMAINS else STATE_BASED


@dataclass
class DomainGait:
    domain: DomainId
    curves: dict # output name -> BezierCurve for every relative-degree-2 output
    phase: PhaseVariable
    v_hip: float = 0.0 # m/s, desired v_rhip where the domain has a velocity output
    extra_curves: dict = field(default_factory=dict) # references for joints that are not outputs here
    nodes: dict | None = None # optional collocation trajectory: t, q, qdot, u

    def __post_init__(self):
        self.domain = DomainId(self.domain)
        expected = output_spec(self.domain).relative_degree_two
        missing = [name for name in expected if name not in self.curves]
        if missing:
            raise ValidationError(f"{self.domain} gait is missing curves for {missing}")
        if self.phase.kind != phase_kind(self.domain):
            raise WrongPhaseKindError(f"{self.domain} needs a {phase_kind(self.domain)}-based phase, got {self.phase.kind}")

    @property
    def duration(self) -> float:
        return self.phase.duration

    def curve(self, joint: str) -> BezierCurve | None:
        return self.curves.get(joint) or self.extra_curves.get(joint)


def delta_row(domain, layout: CoordinateLayout) -> np.ndarray:
    domain = DomainId(domain)
    if domain in TIME_BASED_DOMAINS:
        raise WrongPhaseKindError(f"{domain} uses a time-based phase")
    theta_by = np.asarray(layout.theta_by)
    if domain == DomainId.RHS:
        return theta_by
    return layout.r_bar_b * theta_by + layout.r_pk * layout.unit("pk") + layout.r_pa * layout.unit("pa")


def delta_value(domain, layout: CoordinateLayout, q) -> float:
    """δ_rhs = θ̄_By; δ for rts, rhl, lhs = r̄_B θ̄_By + r_pk θ_pk + r_pa θ_pa."""
    return float(delta_row(domain, layout) @ np.asarray(q, dtype=float))


def v_rhip(layout: CoordinateLayout, qdot) -> float:
    return float(layout.velocity_row() @ np.asarray(qdot, dtype=float))


@dataclass
class PhaseEval:
    tau: float # clamped to [0, 1]
    tau_raw: float
    tau_dot: float
    row: np.ndarray | None # dτ/dq for state-based phases
    clamped: bool


def phase_value(gait: DomainGait, layout: CoordinateLayout, q=None, qdot=None, elapsed: float | None = None) -> PhaseEval:
    phase = gait.phase
    if phase.kind == TIME_BASED:
        if elapsed is None:
            raise WrongPhaseKindError(f"{gait.domain} phase needs the elapsed time")
        raw = elapsed / phase.duration
        row, rate = None, 1.0 / phase.duration
    else:
        if q is None:
            raise WrongPhaseKindError(f"{gait.domain} phase needs the state")
        span = phase.deltaf - phase.delta0
        row = delta_row(gait.domain, layout) / span
        raw = (delta_value(gait.domain, layout, q) - phase.delta0) / span
        rate = float(row @ qdot) if qdot is not None else 0.0
    clamped = raw < 0.0 or raw > 1.0
    return PhaseEval(min(max(raw, 0.0), 1.0), raw, rate, row, clamped)


@dataclass
class OutputEval:
    y1: np.ndarray
    y2: np.ndarray
    dy2: np.ndarray
    dy2_actual: np.ndarray
    jac: np.ndarray # rows for (ẏ₁, ÿ₂) = jac q̈ + drift
    drift: np.ndarray
    tau: float
    tau_raw: float
    clamped: bool
    desired: dict # output name -> desired value

    @property
    def xi(self) -> np.ndarray:
        return np.concatenate([self.y1, self.y2, self.dy2])


def output_and_jacobians(spec: OutputSpec, gait: DomainGait, layout: CoordinateLayout, q, qdot, elapsed: float | None = None) -> OutputEval:
    """Output errors, their velocity, and the affine map from q̈ to (ẏ₁, ÿ₂)."""
    if DomainId(spec.domain) != gait.domain:
        raise ValidationError(f"output spec for {spec.domain} used with a {gait.domain} gait")
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    phase = phase_value(gait, layout, q, qdot, elapsed)

    n_rows = spec.n_y1 + spec.n_y2
    jac = np.zeros((n_rows, layout.n))
    drift = np.zeros(n_rows)
    y1 = np.zeros(spec.n_y1)
    if spec.velocity:
        row = layout.velocity_row()
        y1[0] = row @ qdot - gait.v_hip
        jac[0] = row

    y2 = np.zeros(spec.n_y2)
    dy2 = np.zeros(spec.n_y2)
    dy2_actual = np.zeros(spec.n_y2)
    desired = {}
    for i, joint in enumerate(spec.relative_degree_two):
        unit = layout.unit(joint)
        value, d1, d2, _ = gait.curves[joint].eval_clamped(phase.tau_raw)
        if phase.clamped:
            d1 = d2 = 0.0
        desired[joint] = value
        y2[i] = unit @ q - value
        dy2_actual[i] = unit @ qdot
        dy2[i] = dy2_actual[i] - d1 * phase.tau_dot
        k = spec.n_y1 + i
        if phase.row is not None:
            jac[k] = unit - d1 * phase.row
        else:
            jac[k] = unit
        drift[k] = -d2 * phase.tau_dot ** 2
    return OutputEval(y1, y2, dy2, dy2_actual, jac, drift, phase.tau, phase.tau_raw, phase.clamped, desired)
