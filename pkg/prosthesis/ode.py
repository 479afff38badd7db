"""Fixed-step RK4 integration with guard-event location by bisection.

Events follow the ``solve_ivp`` convention: a guard is a scalar function of
``(t, x)``, ``direction=-1`` triggers only when the guard decreases through
zero, ``terminal`` stops the integration at the located event.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from config import Config
from prosthesis.errors import IntegrationDivergedError, NoEventError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OdeEvent:
    guard: Callable[[float, np.ndarray], float]
    direction: int = -1
    terminal: bool = True

    def crossed(self, g_prev: float, g_new: float) -> bool:
        if self.direction < 0:
            return g_prev > 0.0 and g_new <= 0.0
        if self.direction > 0:
            return g_prev < 0.0 and g_new >= 0.0
        return (g_prev > 0.0 and g_new <= 0.0) or (g_prev < 0.0 and g_new >= 0.0)


@dataclass
class OdeResult:
    t: np.ndarray
    x: np.ndarray
    event_index: int | None = None
    event_time: float | None = None
    event_rate: float | None = None # estimated d(guard)/dt at the event
    passed_events: list = field(default_factory=list) # (index, time) of non-terminal events

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]


def rk4_step(dynamics, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = dynamics(t, x)
    k2 = dynamics(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = dynamics(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = dynamics(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _locate(dynamics, event: OdeEvent, t: float, x: np.ndarray, g_start: float, h: float, event_tol: float, max_bisections: int):
    """Bisect the substep length in (0, h] until the guard is within tolerance."""
    lo, hi = 0.0, h
    best_s, best_x = h, None
    for _ in range(max_bisections):
        mid = 0.5 * (lo + hi)
        x_mid = rk4_step(dynamics, t, x, mid)
        g_mid = event.guard(t + mid, x_mid)
        if abs(g_mid) <= event_tol:
            return mid, x_mid
        if event.crossed(g_start, g_mid):
            hi = mid
            best_s, best_x = mid, x_mid
        else:
            lo = mid
        if hi - lo <= 4.0 * np.finfo(float).eps * max(1.0, abs(t)):
            break
    if best_x is None:
        best_x = rk4_step(dynamics, t, x, best_s)
    return best_s, best_x


def integrate_with_events(
    dynamics: Callable[[float, np.ndarray], np.ndarray],
    x0,
    t_span: tuple[float, float],
    events: Sequence[OdeEvent] = (),
    step: float = Config.physics_step,
    event_tol: float = Config.event_tol,
    require_event: bool = False,
    max_bisections: int = Config.event_max_bisections,
) -> OdeResult:
    """
    Integrate ``dynamics`` with fixed-step RK4 over ``t_span``.
    :param events: guards checked after every step
    :param require_event: raise NoEventError when no terminal event fires by t_end
    """
    if step <= 0:
        raise ValidationError(f"step must be positive, got {step}")
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 < t0:
        raise ValidationError(f"t_span must be increasing, got {t_span}")

    x = np.array(x0, dtype=float)
    t = t0
    times = [t]
    states = [x.copy()]
    g_prev = [ev.guard(t, x) for ev in events]
    passed = []

    while t < t1 - 1e-14 * max(1.0, abs(t1)):
        h = min(step, t1 - t)
        x_new = rk4_step(dynamics, t, x, h)
        if not np.all(np.isfinite(x_new)):
            raise IntegrationDivergedError(f"non-finite state at t={t + h:.6g}")
        g_new = [ev.guard(t + h, x_new) for ev in events]

        hits = []
        for i, ev in enumerate(events):
            if ev.crossed(g_prev[i], g_new[i]):
                s, x_s = _locate(dynamics, ev, t, x, g_prev[i], h, event_tol, max_bisections)
                hits.append((s, i, x_s))
        terminal_hits = [hit for hit in hits if events[hit[1]].terminal]
        if terminal_hits:
            s, index, x_s = min(terminal_hits, key=lambda hit: hit[0])
            g_event = events[index].guard(t + s, x_s)
            rate = (g_event - g_prev[index]) / s if s > 0 else 0.0
            times.append(t + s)
            states.append(x_s)
            return OdeResult(np.array(times), np.array(states), index, t + s, rate, passed)
        for s, index, _ in sorted(hits):
            passed.append((index, t + s))

        t += h
        x = x_new
        g_prev = g_new
        times.append(t)
        states.append(x.copy())

    if require_event:
        raise NoEventError(f"no terminal event before t={t1:.6g}")
    return OdeResult(np.array(times), np.array(states), None, None, None, passed)
