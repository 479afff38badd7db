"""Human joint trajectories over one gait cycle: loading, synthesis, segmentation and Bézier fitting.

Gait percent runs from right (prosthesis-side) heel strike. The toe-strike and
heel-lift domains of each leg share a single fitted curve; each domain reads
its own window of that curve.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import yaml

from config import Config
from prosthesis.bezier import BezierCurve, fit_bezier
from prosthesis.domains import CYCLE, DomainId
from prosthesis.errors import FitError, FormatError, ValidationError
from prosthesis.trace import FLOAT_FORMAT

logger = logging.getLogger(__name__)

JOINTS = ("lh", "lk", "la", "rh", "pk", "pa")
COLUMNS = {
    "lh": "theta_lh", "lk": "theta_lk", "la": "theta_la", "rh": "theta_rh",
    "pk": "theta_k_pros_side", "pa": "theta_a_pros_side",
}
KNEE_ENVELOPE = (0.0, 1.2) # rad

# fitted segments: heel strike alone, then toe strike and heel lift together, per leg
SEGMENTS = {
    "r_strike": (DomainId.RHS,),
    "r_stance": (DomainId.RTS, DomainId.RHL),
    "l_strike": (DomainId.LHS,),
    "l_stance": (DomainId.LTS, DomainId.LHL),
}


@dataclass
class HumanGaitData:
    frame: pd.DataFrame # percent plus one column per joint
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        missing = [name for name in ("percent", *COLUMNS.values()) if name not in self.frame.columns]
        if missing:
            raise FormatError(f"human gait data is missing columns {missing}")
        if len(self.frame) < Config.min_gait_samples:
            raise FormatError(f"human gait data needs at least {Config.min_gait_samples} samples, got {len(self.frame)}")
        percent = self.frame["percent"].to_numpy(dtype=float)
        if not np.all(np.isfinite(self.frame[["percent", *COLUMNS.values()]].to_numpy(dtype=float))):
            raise FormatError("human gait data contains non-finite values")
        if np.any(np.diff(percent) <= 0):
            raise FormatError("percent column must be strictly increasing")
        if percent[0] < 0.0 or percent[-1] >= 100.0:
            raise FormatError(f"percent must lie in [0, 100), got [{percent[0]}, {percent[-1]}]")

    def __len__(self):
        return len(self.frame)

    @property
    def percent(self) -> np.ndarray:
        return self.frame["percent"].to_numpy(dtype=float)

    def joint(self, name: str) -> np.ndarray:
        return self.frame[COLUMNS[name]].to_numpy(dtype=float)

    def at(self, name: str, percent) -> np.ndarray:
        """Periodic linear interpolation of a joint at the given gait percents."""
        return np.interp(percent, self.percent, self.joint(name), period=100.0)


def _wrapped(p, center):
    return (p - center + 0.5) % 1.0 - 0.5


def _bump(p, center, width):
    return np.exp(-0.5 * (_wrapped(p, center) / width) ** 2)


def _leg_angles(p, scale):
    """Hip, knee and ankle of one leg over the cycle fraction p from its own heel strike."""
    hip = -0.125 - 0.325 * scale[0] * np.cos(2.0 * np.pi * p)
    knee = 0.05 + 0.3 * scale[1] * _bump(p, 0.15, 0.06) + 1.1 * scale[2] * _bump(p, 0.72, 0.09)
    ankle = 0.1 * scale[3] * _bump(p, 0.07, 0.04) - 0.2 * scale[4] * _bump(p, 0.45, 0.12) \
        + 0.3 * scale[5] * _bump(p, 0.62, 0.05)
    return hip, np.clip(knee, *KNEE_ENVELOPE), ankle


def generate_synthetic_human_gait(height: float, mass: float, seed: int = Config.default_seed, n_samples: int = 150) -> HumanGaitData:
    """
    Smooth periodic joint curves with per-seed amplitude jitter:
    hip −0.125 − 0.325 cos 2πp; knee bumps at 15 % and 72 %; ankle bumps at 7 %, 45 % and 62 %.
    The left leg is the right leg half a cycle later.
    """
    if not 1.0 <= height <= 2.2 or not 30.0 <= mass <= 150.0:
        raise ValidationError(f"anthropometrics out of range: height {height} m, mass {mass} kg")
    if n_samples < Config.min_gait_samples:
        raise ValidationError(f"need at least {Config.min_gait_samples} samples, got {n_samples}")
    rng = np.random.default_rng(seed)
    scale = 1.0 + 0.02 * rng.standard_normal(6)
    percent = 100.0 * np.arange(n_samples) / n_samples
    p = percent / 100.0
    rh, pk, pa = _leg_angles(p, scale)
    lh, lk, la = _leg_angles((p + 0.5) % 1.0, scale)
    values = {"lh": lh, "lk": lk, "la": la, "rh": rh, "pk": pk, "pa": pa}
    frame = pd.DataFrame({"percent": percent, **{COLUMNS[name]: values[name] for name in JOINTS}})
    metadata = {"source": "synthetic", "height": float(height), "mass": float(mass), "seed": int(seed)}
    return HumanGaitData(frame, metadata)


def save_human_gait(data: HumanGaitData, path: str):
    with open(path, "w") as handle:
        for key, value in data.metadata.items():
            handle.write(f"# {key}: {value!r}\n" if isinstance(value, float) else f"# {key}: {value}\n")
        data.frame[["percent", *COLUMNS.values()]].to_csv(handle, index=False, float_format=FLOAT_FORMAT)


def load_human_gait(path: str) -> HumanGaitData:
    metadata = {}
    with open(path) as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].partition(":")
            metadata[key.strip()] = yaml.safe_load(value.strip()) if value.strip() else None
    try:
        frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise FormatError(f"{path} is not a readable gait CSV: {exc}") from exc
    return HumanGaitData(frame, metadata)


def segment_gait_cycle(data: HumanGaitData, boundaries=Config.segment_boundaries) -> dict:
    """
    Index ranges per domain; a sample belongs to the first domain whose upper boundary exceeds it,
    so a sample on a boundary goes to the later domain.
    """
    boundaries = tuple(float(b) for b in boundaries)
    if len(boundaries) != len(CYCLE) or boundaries[-1] != 100.0 or np.any(np.diff(boundaries) <= 0):
        raise ValidationError(f"segment boundaries must be {len(CYCLE)} increasing percents ending at 100, got {boundaries}")
    slot = np.searchsorted(np.asarray(boundaries) - 1e-9, data.percent, side="right")
    return {domain: np.flatnonzero(slot == i) for i, domain in enumerate(CYCLE)}


@dataclass
class SegmentFit:
    start: float # percent
    end: float
    curves: dict # joint -> BezierCurve over the whole segment
    rms: dict # joint -> fit RMS, rad


@dataclass
class HumanFit:
    segments: dict # segment name -> SegmentFit
    boundaries: tuple
    degree: int

    def window(self, domain) -> tuple:
        """(segment name, a, b): the domain's slice of its segment's phase."""
        domain = DomainId(domain)
        for name, domains in SEGMENTS.items():
            if domain in domains:
                segment = self.segments[name]
                lo, hi = _domain_span(self.boundaries, domain)
                span = segment.end - segment.start
                return name, (lo - segment.start) / span, (hi - segment.start) / span
        raise ValidationError(f"no segment holds domain {domain}")

    def domain_curve(self, domain, joint: str) -> BezierCurve:
        name, a, b = self.window(domain)
        curve = self.segments[name].curves[joint]
        if a == 0.0 and b == 1.0:
            return curve
        return curve.restrict(a, b)

    def evaluate(self, joint: str, percent) -> np.ndarray:
        """The fitted curve at gait percents in [0, 100]."""
        percent = np.atleast_1d(np.asarray(percent, dtype=float))
        values = np.zeros(percent.shape)
        for segment in self.segments.values():
            inside = (percent >= segment.start) & (percent <= segment.end)
            tau = (percent[inside] - segment.start) / (segment.end - segment.start)
            values[inside] = segment.curves[joint].sample(tau)
        return values

    @property
    def rms(self) -> float:
        return max(max(segment.rms.values()) for segment in self.segments.values())


def _domain_span(boundaries, domain) -> tuple:
    index = CYCLE.index(DomainId(domain))
    return (0.0 if index == 0 else float(boundaries[index - 1])), float(boundaries[index])


def fit_human_bezier(data: HumanGaitData, boundaries=Config.segment_boundaries, degree: int = Config.bezier_degree) -> HumanFit:
    """
    Least-squares Bernstein fit per joint per segment. The first sample is appended at 100 % and
    segment endpoints are pinned to the periodic interpolant, so consecutive curves join and the cycle closes.
    """
    if degree < 3:
        raise FitError(f"degree must be at least 3, got {degree}")
    boundaries = tuple(float(b) for b in boundaries)
    segment_gait_cycle(data, boundaries)
    percent = np.append(data.percent, 100.0)
    segments = {}
    for name, domains in SEGMENTS.items():
        start = _domain_span(boundaries, domains[0])[0]
        end = _domain_span(boundaries, domains[-1])[1]
        inside = (percent >= start) & (percent <= end)
        if np.count_nonzero(inside) < degree + 1:
            raise FitError(f"segment {name} holds {np.count_nonzero(inside)} samples, a degree {degree} fit needs {degree + 1}")
        tau = (percent[inside] - start) / (end - start)
        curves, rms = {}, {}
        for joint in JOINTS:
            values = np.append(data.joint(joint), data.at(joint, 0.0))[inside]
            endpoints = (float(data.at(joint, start)), float(data.at(joint, end % 100.0)))
            curve = fit_bezier(tau, values, degree, endpoints=endpoints)
            curves[joint] = curve
            rms[joint] = float(np.sqrt(np.mean((curve.sample(tau) - values) ** 2)))
        segments[name] = SegmentFit(start, end, curves, rms)
        logger.debug("fitted segment %s [%g, %g] %%, worst rms %.2e rad", name, start, end, max(rms.values()))
    return HumanFit(segments, boundaries, degree)
