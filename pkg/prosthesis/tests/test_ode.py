import numpy as np
import pytest

from config import Config
from prosthesis.errors import IntegrationDivergedError, NoEventError, ValidationError
from prosthesis.ode import OdeEvent, integrate_with_events, rk4_step


def _oscillator(t, x):
    return np.array([x[1], -x[0]])


def _falling(t, x):
    return np.array([x[1], -Config.gravity])


def test_rk4_matches_harmonic_oscillator():
    result = integrate_with_events(_oscillator, [1.0, 0.0], (0.0, 1.0), step=1e-3)
    assert result.t[-1] == pytest.approx(1.0)
    assert result.final[0] == pytest.approx(np.cos(1.0), abs=1e-10)
    assert result.final[1] == pytest.approx(-np.sin(1.0), abs=1e-10)
    assert result.event_index is None


def test_single_step_is_fourth_order():
    h = 0.1
    exact = np.array([np.cos(h), -np.sin(h)])
    coarse = np.abs(rk4_step(_oscillator, 0.0, np.array([1.0, 0.0]), h) - exact).max()
    fine = np.abs(rk4_step(_oscillator, 0.0, np.array([1.0, 0.0]), h / 2) - np.array([np.cos(h / 2), -np.sin(h / 2)])).max()
    assert coarse / fine > 20.0


def test_event_located_at_ground_contact():
    event = OdeEvent(lambda t, x: x[0], direction=-1)
    result = integrate_with_events(_falling, [1.0, 0.0], (0.0, 2.0), [event])
    t_hit = np.sqrt(2.0 / Config.gravity)
    assert result.event_index == 0
    assert result.event_time == pytest.approx(t_hit, abs=1e-8)
    assert abs(result.final[0]) <= 1e-8
    assert result.event_rate == pytest.approx(-Config.gravity * t_hit, rel=1e-3)


def test_direction_filters_rising_crossings():
    # the height rises through 0.5 first; only a falling crossing counts
    event = OdeEvent(lambda t, x: x[0] - 0.5, direction=-1)
    result = integrate_with_events(_falling, [0.0, 4.0], (0.0, 2.0), [event], step=1e-3)
    assert result.event_index == 0
    assert result.final[1] < 0.0


def test_non_terminal_events_are_recorded():
    event = OdeEvent(lambda t, x: x[0], direction=0, terminal=False)
    result = integrate_with_events(_oscillator, [1.0, 0.0], (0.0, 5.0), [event], step=1e-3)
    assert result.event_index is None
    times = [time for _, time in result.passed_events]
    assert times == pytest.approx([np.pi / 2, 3 * np.pi / 2], abs=1e-6)


def test_missing_required_event_raises():
    event = OdeEvent(lambda t, x: x[0] + 100.0)
    with pytest.raises(NoEventError):
        integrate_with_events(_falling, [1.0, 0.0], (0.0, 0.1), [event], step=1e-3, require_event=True)


def test_divergence_raises():
    with pytest.raises(IntegrationDivergedError):
        integrate_with_events(lambda t, x: np.array([np.inf]), [0.0], (0.0, 1.0), step=0.1)


def test_bad_arguments():
    with pytest.raises(ValidationError):
        integrate_with_events(_oscillator, [1.0, 0.0], (0.0, 1.0), step=0.0)
    with pytest.raises(ValidationError):
        integrate_with_events(_oscillator, [1.0, 0.0], (1.0, 0.0))
