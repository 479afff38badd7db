import numpy as np
import pytest

from config import Config
from prosthesis import gait_opt
from prosthesis.bezier import BezierCurve
from prosthesis.domains import CYCLE, default_graph
from prosthesis.errors import FitError, ValidationError
from prosthesis.gait_opt import (
    REJECTED, GaitOptProblem, GaitReport, GaitTranscription, gait_from_human_fit, optimize_gait, project_to_contacts,
    project_velocity, validate_gait,
)
from prosthesis.human_data import JOINTS, fit_human_bezier, generate_synthetic_human_gait
from prosthesis.model import LH, LK, PITCH, HumanProsthesisModel, standing_pose
from prosthesis.nlp import DEGRADED, OPTIMAL, NlpResult
from prosthesis.outputs import CoordinateLayout
from prosthesis.params import build_from_anthropometry

MODEL = HumanProsthesisModel(build_from_anthropometry(1.70, 66.0, "male"))
GRAPH = default_graph()
FIT = fit_human_bezier(generate_synthetic_human_gait(1.70, 66.0, seed=7))
LIBRARY = gait_from_human_fit(MODEL, FIT, nodes=6, cycle_time=1.1)


def test_problem_validation():
    with pytest.raises(ValidationError):
        GaitOptProblem(MODEL, weights=(1.0,) * 5)
    with pytest.raises(ValidationError):
        GaitOptProblem(MODEL, nodes=3)
    with pytest.raises(ValidationError):
        GaitOptProblem(MODEL, duration_bounds=(0.5, 0.1))
    with pytest.raises(ValidationError):
        GaitOptProblem(MODEL, friction=0.0)


def test_contact_projection():
    q = standing_pose(MODEL)
    q[LH] = 0.3
    q[LK] = 0.2
    q[PITCH] = 0.05
    q[1] += 0.05
    projected = project_to_contacts(MODEL, q, {"rh", "lt"}, pins={"rh": 0.1}, floors={"rt": 0.02, "lh": 0.03})
    heights = MODEL.contact_heights(projected)
    assert abs(heights["rh"]) < 1e-10 and abs(heights["lt"]) < 1e-10
    assert heights["rt"] >= 0.02 - 1e-9 and heights["lh"] >= 0.03 - 1e-9
    assert MODEL.contact_point_kinematics(projected, "rh").position[0] == pytest.approx(0.1, abs=1e-10)
    assert projected[PITCH] == 0.05

    qdot = np.random.default_rng(9).uniform(-1.0, 1.0, MODEL.n_q)
    still = project_velocity(MODEL, projected, qdot, {"rh", "lt"})
    J = MODEL.constraints(projected, still, {"rh", "lt"}).jacobian
    assert np.allclose(J @ still, 0.0, atol=1e-10)


def test_contact_projection_reports_an_unreachable_stance():
    with pytest.raises(FitError):
        project_to_contacts(MODEL, standing_pose(MODEL), {"rh", "lh"}, pins={"rh": 0.0, "lh": 5.0})


def test_gait_from_fit_sits_on_the_contacts():
    assert LIBRARY.cycle_time == pytest.approx(1.1)
    durations = [LIBRARY[d].duration for d in CYCLE]
    assert durations == pytest.approx([0.132, 0.209, 0.209, 0.132, 0.209, 0.209])
    for domain in CYCLE:
        nodes = LIBRARY[domain].nodes
        assert nodes["q"].shape == (6, MODEL.n_q) and nodes["u"].shape == (6, 6)
        for q in nodes["q"]:
            heights = MODEL.contact_heights(q)
            assert max(abs(heights[p]) for p in GRAPH[domain].contacts) < 1e-9, domain
    # the stance heel stays put from rhs into rts
    rh_end = MODEL.contact_point_kinematics(LIBRARY["rhs"].nodes["q"][-1], "rh").position
    rh_start = MODEL.contact_point_kinematics(LIBRARY["rts"].nodes["q"][0], "rh").position
    assert rh_end[0] == pytest.approx(rh_start[0], abs=1e-9)
    q0, qdot0 = LIBRARY.initial_qdot()
    assert np.array_equal(q0, LIBRARY["rhs"].nodes["q"][0])
    assert LIBRARY.metadata["source"] == "human_fit"


def test_gait_from_fit_enters_every_domain_on_its_contacts():
    layout = CoordinateLayout.full(MODEL)
    clearance = LIBRARY.metadata["clearance"]
    for index, domain in enumerate(CYCLE):
        spec, nodes = GRAPH[domain], LIBRARY[domain].nodes
        assert np.all(nodes["q"][:, PITCH] == 0.0), domain
        for q in nodes["q"]:
            assert min(MODEL.contact_heights(q).values()) > -1e-9, domain
        entry = MODEL.contact_heights(nodes["q"][0])
        assert max(abs(entry[p]) for p in spec.contacts) < 1e-9, domain
        if spec.guard_kind == "height_strike":
            assert entry[spec.guard_point] >= clearance - 1e-9, domain
        if index + 1 < len(CYCLE):
            assert np.allclose(nodes["q"][-1], LIBRARY[CYCLE[index + 1]].nodes["q"][0], atol=1e-12), domain
        # every joint curve starts on the entry pose
        for joint in JOINTS:
            assert LIBRARY[domain].curve(joint)(0.0) == pytest.approx(nodes["q"][0][layout.joint_index[joint]], abs=1e-9)
    # lts opens with the whole left foot down and the prosthesis foot still on the ground
    lts = MODEL.contact_heights(LIBRARY["lts"].nodes["q"][0])
    assert abs(lts["lh"]) < 1e-9 and abs(lts["lt"]) < 1e-9 and abs(lts["rt"]) < 1e-9
    assert LIBRARY.torso_pitch == 0.0


def test_gait_from_fit_velocities_respect_contacts_and_impacts():
    q0, qdot0 = LIBRARY.initial_qdot()
    J = MODEL.constraints(q0, qdot0, GRAPH["rhs"].contacts).jacobian
    assert np.allclose(J @ qdot0, 0.0, atol=1e-9)
    for domain in CYCLE:
        nodes = LIBRARY[domain].nodes
        for q, qdot in zip(nodes["q"], nodes["qdot"]):
            J = MODEL.constraints(q, qdot, GRAPH[domain].contacts).jacobian
            assert np.allclose(J @ qdot, 0.0, atol=1e-8), domain
        assert np.all(np.abs(nodes["u"][:, :4]) <= Config.human_torque_limit)
        assert np.all(np.abs(nodes["u"][:, 4:]) <= Config.u_max)
    # the stance leg carries the body, so the gait is not torque free
    assert np.any(np.abs(LIBRARY["rhl"].nodes["u"]) > 1.0)


def test_validation_flags_a_perturbed_gait():
    baseline = validate_gait(MODEL, LIBRARY, simulate=False)
    names = [check.name for check in baseline.checks]
    assert "rhs/pz_entry" in names and "lts/impact_invariance" in names and "poincare" not in names
    assert "lts/phase_rate" not in names and "rts/phase_rate" in names
    assert "rhs/grf" in names and "rhl/defect" in names

    gait = LIBRARY["rhs"]
    alpha = gait.curves["pk"].alpha
    alpha[0] += 0.5
    original = gait.curves["pk"]
    gait.curves["pk"] = BezierCurve(tuple(alpha))
    try:
        report = validate_gait(MODEL, LIBRARY, simulate=False)
    finally:
        gait.curves["pk"] = original
    entry = {check.name: check for check in report.checks}["rhs/pz_entry"]
    assert not entry.passed and entry.value >= 0.4
    assert "rhs/pz_entry" in report.failures and not report.passed


def test_report_bookkeeping():
    report = GaitReport()
    report.add("a", 1e-9, 1e-6)
    report.add("b", float("nan"), 1e-6)
    report.add("c", 5.0, 0.0, True)
    assert report.failures == ["b"] and not report.passed
    data = report.to_dict()
    assert data["passed"] is False and data["checks"][0] == {"name": "a", "value": 1e-9, "tol": 1e-6, "passed": True}


def test_transcription_layout():
    problem = GaitOptProblem(MODEL, nodes=6)
    transcription = GaitTranscription(problem, FIT)
    assert transcription.node_size == 2 * (MODEL.n_q - 3) + 6
    assert sum(block.size for block in transcription.blocks.values()) == transcription.n
    x = transcription.pack(LIBRARY)
    unpacked = transcription.unpack(x)
    assert unpacked["rts"].curves["pk"] == LIBRARY["rts"].curves["pk"]
    assert unpacked["lts"].duration == pytest.approx(LIBRARY["lts"].duration)
    assert np.allclose(unpacked["rhl"].nodes["q"], LIBRARY["rhl"].nodes["q"])

    lower, upper = transcription.bounds()
    assert lower.shape == upper.shape == x.shape
    assert np.all(lower <= upper)
    violations = transcription.violations(x)
    assert all(np.isfinite(value) for value in violations.values())
    assert "rts/stitch" in violations and "lhl/defect" in violations
    assert np.isfinite(transcription.objective(x))
    assert transcription.eq_constraints(x).ndim == 1

    with pytest.raises(ValidationError):
        GaitTranscription(GaitOptProblem(MODEL, nodes=7), FIT).pack(LIBRARY)


def test_optimizer_keeps_the_guess_when_the_solve_ends_further_from_feasible(monkeypatch):
    problem = GaitOptProblem(MODEL, nodes=6)

    def diverged(spec, **options):
        jitter = np.random.default_rng(3).uniform(-0.5, 0.5, spec.initial_guess.size)
        x = np.clip(spec.initial_guess + jitter, spec.lower, spec.upper)
        return NlpResult(x, 0.0, np.zeros(1), np.zeros(0), DEGRADED, 1.0, iterations=2)

    monkeypatch.setattr(gait_opt, "solve_nlp", diverged)
    library, result = optimize_gait(problem, FIT, LIBRARY, max_iter=2)
    transcription = GaitTranscription(problem, FIT)
    lower, upper = transcription.bounds()
    assert result.status == REJECTED
    assert np.array_equal(result.x, np.clip(transcription.pack(LIBRARY), lower, upper))
    assert max(result.diagnostics["violations"].values()) == pytest.approx(result.diagnostics["initial_violation"])
    assert library.metadata["optimization"] == REJECTED
    assert library["rts"].curves["pk"] == LIBRARY["rts"].curves["pk"]
    assert np.array_equal(library.initial_state["q"], LIBRARY.initial_state["q"])


def test_optimized_gait_is_feasible_and_validates():
    guess = gait_from_human_fit(MODEL, FIT, nodes=5, cycle_time=1.1)
    library, result = optimize_gait(GaitOptProblem(MODEL, nodes=5), FIT, guess, max_iter=300)
    assert result.status == OPTIMAL
    assert result.violation <= Config.defect_tol
    assert max(result.diagnostics["violations"].values()) <= Config.defect_tol
    report = validate_gait(MODEL, library, simulate=False)
    assert report.passed, report.failures
