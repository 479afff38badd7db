from dataclasses import replace

import numpy as np
import pytest

from prosthesis.bezier import BezierCurve
from prosthesis.domains import DomainId
from prosthesis.errors import ValidationError
from prosthesis.model import LA, LH, LK, PITCH, RH, HumanProsthesisModel, constrained_forward_dynamics, standing_pose
from prosthesis.outputs import TIME_BASED, CoordinateLayout, DomainGait, PhaseVariable
from prosthesis.params import build_from_anthropometry
from prosthesis.sensing import (
    HumanEmulation, SensorDelay, SensorNoise, add_sensor_noise, contact_forces, extract_sensor_frame, human_torques,
)
from prosthesis.subsystem import ProsthesisSubsystem

PARAMS = build_from_anthropometry(1.70, 66.0, "male")
MODEL = HumanProsthesisModel(PARAMS)
LAYOUT = CoordinateLayout.full(MODEL)


def _static_frame(contacts):
    q = standing_pose(MODEL)
    qdot = np.zeros(MODEL.n_q)
    cs = MODEL.constraints(q, qdot, contacts)
    H = MODEL.bias_forces(q, qdot)
    u = np.linalg.lstsq(np.hstack([MODEL.actuation_matrix(), cs.jacobian.T]), H, rcond=None)[0][:6]
    qddot, lam, cs = constrained_forward_dynamics(MODEL, q, qdot, u, contacts)
    assert np.allclose(qddot, 0.0, atol=1e-9)
    return extract_sensor_frame(MODEL, q, qdot, cs, lam, time=0.5), contact_forces(cs, lam)


def test_standing_load_splits_between_insole_and_left_foot():
    frame, forces = _static_frame({"rh", "rt", "lh", "lt"})
    weight = MODEL.tree.total_mass() * PARAMS.gravity
    assert frame.insole[0] + forces["lh"][1] + forces["lt"][1] == pytest.approx(weight, rel=1e-9)
    assert frame.insole[0] > 0.0
    assert frame.prosthesis_contacts == ("rh", "rt")
    assert frame.time == 0.5


def test_hanging_prosthesis_is_carried_by_the_socket():
    frame, _ = _static_frame({"lh", "lt"})
    assert frame.prosthesis_contacts == ()
    assert np.allclose(frame.insole, 0.0) and frame.grf_x == 0.0
    assert frame.F_f[1] == pytest.approx(ProsthesisSubsystem(PARAMS).mass * PARAMS.gravity, rel=1e-9)
    assert frame.F_f[0] == pytest.approx(0.0, abs=1e-9)


def test_frame_columns():
    frame, _ = _static_frame({"rh", "rt", "lh", "lt"})
    columns = frame.columns()
    assert list(columns)[:3] == ["base_x", "base_z", "base_pitch"]
    assert columns["insole_fz"] == frame.insole[0]
    assert columns["base_z"] == pytest.approx(PARAMS.leg_length - PARAMS.residual_length)


def test_noise_statistics():
    frame, _ = _static_frame({"rh", "rt", "lh", "lt"})
    noise = SensorNoise(base_pose=0.001, F_f=2.0, insole=5.0)
    assert add_sensor_noise(frame, SensorNoise(), 0) is frame
    first = add_sensor_noise(frame, noise, 11)
    assert np.array_equal(first.F_f, add_sensor_noise(frame, noise, 11).F_f)
    assert np.array_equal(first.base_vel, frame.base_vel)

    rng = np.random.default_rng(5)
    draws = np.array([add_sensor_noise(frame, noise, rng).F_f - frame.F_f for _ in range(20000)])
    assert np.allclose(draws.std(axis=0), 2.0, rtol=0.02)
    assert np.allclose(draws.mean(axis=0), 0.0, atol=0.1)


def test_insole_noise_only_in_contact():
    frame, _ = _static_frame({"lh", "lt"})
    noisy = add_sensor_noise(frame, SensorNoise(insole=5.0), 3)
    assert np.array_equal(noisy.insole, frame.insole)
    with pytest.raises(ValidationError):
        SensorNoise(F_f=-1.0)


def test_delay_returns_older_frames():
    base, _ = _static_frame({"lh", "lt"})
    frames = [replace(base, time=t) for t in range(5)]
    delay = SensorDelay(2)
    seen = [delay(frame).time for frame in frames]
    assert seen == [0, 0, 0, 1, 2]
    immediate = SensorDelay(0)
    assert [immediate(frame).time for frame in frames] == [0, 1, 2, 3, 4]
    with pytest.raises(ValidationError):
        SensorDelay(-1)


CURVES = {
    "lh": BezierCurve((0.2, 0.1, 0.0, -0.1)),
    "lk": BezierCurve((0.1, 0.4, 0.3, 0.1)),
    "la": BezierCurve((0.0, -0.1, 0.1, 0.0)),
    "rh": BezierCurve((-0.3, -0.1, 0.1, 0.2)),
    "pk": BezierCurve((0.1, 0.3, 0.2, 0.1)),
    "pa": BezierCurve((0.0, 0.1, -0.1, 0.0)),
}
GAIT = DomainGait(DomainId.LTS, CURVES, PhaseVariable(TIME_BASED, duration=0.2))


def test_human_torques_vanish_on_the_reference():
    q = standing_pose(MODEL)
    qdot = np.zeros(MODEL.n_q)
    tau, tau_dot = 0.25, 1.0 / 0.2
    for joint, index in (("lh", LH), ("lk", LK), ("la", LA), ("rh", RH)):
        q[index] = CURVES[joint](tau)
        qdot[index] = CURVES[joint].evaluate(tau, 1) * tau_dot
    assert np.allclose(human_torques(HumanEmulation(), LAYOUT, q, qdot, GAIT, elapsed=0.05), 0.0, atol=1e-9)


def test_human_torques_saturate():
    q = standing_pose(MODEL)
    q[[LH, LK, LA, RH]] = 1.0
    torques = human_torques(HumanEmulation(torque_limit=150.0), LAYOUT, q, np.zeros(MODEL.n_q), GAIT, elapsed=0.0)
    assert np.all(torques == -150.0)


def test_torso_balance_drives_the_stance_hip():
    emulation = HumanEmulation(kp=10.0, kd=1.0, torso_balance=True, torso_kp=100.0, torso_kd=10.0)
    q = standing_pose(MODEL)
    q[PITCH] = 0.1
    qdot = np.zeros(MODEL.n_q)
    qdot[PITCH] = 0.2
    right = human_torques(emulation, LAYOUT, q, qdot, GAIT, elapsed=0.0, torso_pitch=0.05, stance_side="r")
    assert right[3] == pytest.approx(100.0 * 0.05 + 10.0 * 0.2)
    left = human_torques(emulation, LAYOUT, q, qdot, GAIT, elapsed=0.0, torso_pitch=0.05, stance_side="l")
    assert left[0] == pytest.approx(7.0)
    assert left[3] == pytest.approx(-10.0 * (q[RH] - CURVES["rh"](0.0)) + CURVES["rh"].evaluate(0.0, 1) / 0.2)
    with pytest.raises(ValidationError):
        HumanEmulation(kp=0.0)
