import json

import numpy as np
import pytest

from prosthesis.bezier import BezierCurve
from prosthesis.domains import CYCLE, DomainId
from prosthesis.errors import FormatError, SchemaError, ValidationError
from prosthesis.gait_library import GaitLibrary, gait_to_dict, gait_from_dict, load_gait, save_gait
from prosthesis.outputs import STATE_BASED, DomainGait, PhaseVariable, output_spec, phase_kind


def _library(**kwargs):
    gaits = {}
    for i, domain in enumerate(CYCLE):
        curves = {joint: BezierCurve((0.1 * i, 0.2, -0.1, 0.05 * i)) for joint in output_spec(domain).relative_degree_two}
        if phase_kind(domain) == STATE_BASED:
            phase = PhaseVariable(STATE_BASED, -0.1, 0.2, 0.1 + 0.05 * i)
        else:
            phase = PhaseVariable("time", duration=0.1 + 0.05 * i)
        gaits[domain] = DomainGait(domain, curves, phase, v_hip=0.9 if domain == DomainId.RTS else 0.0)
    return GaitLibrary(gaits, degree=3, **kwargs)


def test_cycle_time_and_overrides():
    library = _library()
    assert library.cycle_time == pytest.approx(sum(0.1 + 0.05 * i for i in range(6)))
    slowed = library.with_v_hip(0.0)
    assert slowed["rts"].v_hip == 0.0 and library["rts"].v_hip == 0.9
    with pytest.raises(ValidationError):
        library.initial_qdot()
    with pytest.raises(ValidationError):
        GaitLibrary({DomainId.RHS: library["rhs"]})


def test_save_and_load(tmp_path):
    library = _library(torso_pitch=0.04, initial_state={"q": np.arange(12.0), "qdot": np.ones(12)},
                       metadata={"source": "test"})
    path = tmp_path / "gait.json"
    save_gait(library, str(path))
    loaded = load_gait(str(path))
    assert loaded.torso_pitch == 0.04 and loaded.metadata == {"source": "test"}
    assert loaded["lts"].phase == library["lts"].phase
    assert loaded["rts"].curves["pk"] == library["rts"].curves["pk"]
    q, qdot = loaded.initial_qdot()
    assert np.array_equal(q, np.arange(12.0))
    data = json.loads(path.read_text())
    assert data["domains"]["rts"]["outputs"] == ["v_rhip", "lh", "lk", "la", "rh", "pk"]


def test_schema_errors(tmp_path):
    data = gait_to_dict(_library())
    with pytest.raises(SchemaError):
        gait_from_dict({**data, "schema_version": 99})
    with pytest.raises(SchemaError):
        gait_from_dict({**data, "domains": {k: v for k, v in data["domains"].items() if k != "lhl"}})
    broken = json.loads(json.dumps(data))
    del broken["domains"]["rhs"]["curves"]["pk"]
    with pytest.raises(SchemaError):
        gait_from_dict(broken)
    broken = json.loads(json.dumps(data))
    del broken["domains"]["rhl"]["phase"]["delta0"]
    with pytest.raises(SchemaError):
        gait_from_dict(broken)
    with pytest.raises(SchemaError):
        gait_from_dict({})

    empty = tmp_path / "empty.json"
    empty.write_text("  \n")
    with pytest.raises(SchemaError):
        load_gait(str(empty))
    corrupt = tmp_path / "corrupt.json"
    corrupt.write_text('{"schema_version": 1, "degree": ')
    with pytest.raises(FormatError):
        load_gait(str(corrupt))
