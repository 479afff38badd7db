"""A full walking gait: one DomainGait per domain, stored as versioned JSON."""
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from config import Config
from prosthesis.bezier import BezierCurve
from prosthesis.domains import CYCLE, DomainId
from prosthesis.errors import FormatError, SchemaError, ValidationError
from prosthesis.outputs import STATE_BASED, DomainGait, PhaseVariable, output_spec

logger = logging.getLogger(__name__)


@dataclass
class GaitLibrary:
    gaits: dict # DomainId -> DomainGait
    degree: int = Config.bezier_degree
    torso_pitch: float = 0.0 # rad, mean torso pitch of the gait
    initial_state: dict | None = None # {"q": ..., "qdot": ...} at rhs entry, after the impact
    metadata: dict = field(default_factory=dict)
    schema_version: int = Config.gait_schema_version

    def __post_init__(self):
        self.gaits = {DomainId(domain): gait for domain, gait in self.gaits.items()}
        missing = [str(domain) for domain in CYCLE if domain not in self.gaits]
        if missing:
            raise ValidationError(f"gait library is missing domains {missing}")

    def __getitem__(self, domain) -> DomainGait:
        return self.gaits[DomainId(domain)]

    def __iter__(self):
        return iter(self.gaits[domain] for domain in CYCLE)

    @property
    def cycle_time(self) -> float:
        return float(sum(gait.duration for gait in self))

    def with_v_hip(self, value: float) -> "GaitLibrary":
        gaits = {domain: replace(gait, v_hip=value) for domain, gait in self.gaits.items()}
        return replace(self, gaits=gaits)

    def initial_qdot(self):
        if self.initial_state is None:
            raise ValidationError("gait library has no initial state")
        return np.array(self.initial_state["q"], dtype=float), np.array(self.initial_state["qdot"], dtype=float)


def _nodes_to_json(nodes):
    if nodes is None:
        return None
    return {key: np.asarray(value, dtype=float).tolist() for key, value in nodes.items()}


def gait_to_dict(library: GaitLibrary) -> dict:
    domains = {}
    for gait in library:
        phase = gait.phase
        domains[str(gait.domain)] = {
            "outputs": list(output_spec(gait.domain).names),
            "curves": {name: list(curve.coefficients) for name, curve in gait.curves.items()},
            "extra_curves": {name: list(curve.coefficients) for name, curve in gait.extra_curves.items()},
            "phase": {"kind": phase.kind, "delta0": phase.delta0, "deltaf": phase.deltaf, "duration": phase.duration},
            "v_hip": gait.v_hip,
            "nodes": _nodes_to_json(gait.nodes),
        }
    initial = None
    if library.initial_state is not None:
        initial = {key: np.asarray(value, dtype=float).tolist() for key, value in library.initial_state.items()}
    return {
        "schema_version": library.schema_version,
        "degree": library.degree,
        "torso_pitch": library.torso_pitch,
        "metadata": library.metadata,
        "initial_state": initial,
        "domains": domains,
    }


def _require(data: dict, keys, where: str):
    if not isinstance(data, dict):
        raise SchemaError(f"{where} must be an object")
    for key in keys:
        if key not in data:
            raise SchemaError(f"{where} is missing field '{key}'")


def gait_from_dict(data: dict) -> GaitLibrary:
    if not data:
        raise SchemaError("gait file is empty")
    _require(data, ("schema_version", "degree", "domains"), "gait file")
    if data["schema_version"] != Config.gait_schema_version:
        raise SchemaError(f"gait schema version {data['schema_version']} is not {Config.gait_schema_version}")
    gaits = {}
    for domain in CYCLE:
        _require(data["domains"], (str(domain),), "domains")
        entry = data["domains"][str(domain)]
        where = f"domain {domain}"
        _require(entry, ("curves", "phase"), where)
        _require(entry["phase"], ("kind", "duration"), f"{where} phase")
        phase_data = entry["phase"]
        if phase_data["kind"] == STATE_BASED:
            _require(phase_data, ("delta0", "deltaf"), f"{where} phase")
        try:
            gaits[domain] = DomainGait(
                domain=domain,
                curves={name: BezierCurve(tuple(alpha)) for name, alpha in entry["curves"].items()},
                phase=PhaseVariable(
                    phase_data["kind"],
                    float(phase_data.get("delta0", 0.0)),
                    float(phase_data.get("deltaf", 1.0)),
                    float(phase_data["duration"]),
                ),
                v_hip=float(entry.get("v_hip", 0.0)),
                extra_curves={name: BezierCurve(tuple(alpha)) for name, alpha in (entry.get("extra_curves") or {}).items()},
                nodes={key: np.asarray(value, dtype=float) for key, value in entry["nodes"].items()} if entry.get("nodes") else None,
            )
        except ValidationError as exc:
            raise SchemaError(f"{where}: {exc}") from exc
    return GaitLibrary(
        gaits=gaits,
        degree=int(data["degree"]),
        torso_pitch=float(data.get("torso_pitch", 0.0)),
        initial_state=data.get("initial_state"),
        metadata=dict(data.get("metadata") or {}),
        schema_version=int(data["schema_version"]),
    )


def save_gait(library: GaitLibrary, path: str):
    with open(path, "w") as handle:
        json.dump(gait_to_dict(library), handle, indent=1)


def load_gait(path: str) -> GaitLibrary:
    with open(path) as handle:
        text = handle.read()
    if not text.strip():
        raise SchemaError(f"gait file {path} is empty")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"gait file {path} is not valid JSON: {exc}") from exc
    return gait_from_dict(data)
