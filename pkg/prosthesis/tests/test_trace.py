import numpy as np
import pandas as pd

from prosthesis.trace import SimTrace, input_columns, load_trace_csv, state_columns


def _row(time, domain, index):
    return {"time": time, "domain": domain, "domain_index": index, **state_columns(np.zeros(12), np.ones(12)),
            **input_columns(np.arange(6.0))}


def test_domain_sequence_and_columns():
    trace = SimTrace()
    for i, (domain, index) in enumerate([("rhs", 0), ("rhs", 0), ("rts", 1), ("rhl", 2), ("rhs", 6)]):
        trace.append(_row(0.01 * i, domain, index))
    assert len(trace) == 5
    assert trace.domains == ["rhs", "rts", "rhl", "rhs"]
    assert np.allclose(trace.times, [0.0, 0.01, 0.02, 0.03, 0.04])
    frame = trace.to_frame()
    assert {"q_x", "q_pitch", "dq_sm", "u_pk", "u_pa"} <= set(frame.columns)
    assert "q_rs" not in frame.columns
    assert frame["u_pa"].iloc[0] == 5.0


def test_csv_keeps_full_precision(tmp_path):
    trace = SimTrace()
    trace.append({"time": 0.1 + 0.2, "domain": "rhs", "domain_index": 0, "value": np.pi})
    trace.events.append({"time": 0.3, "from": "rhs", "to": "rts"})
    path = tmp_path / "trace.csv"
    trace.save_csv(str(path))
    trace.save_events(str(tmp_path / "events.csv"))
    loaded = load_trace_csv(str(path))
    assert loaded["time"].iloc[0] == 0.1 + 0.2
    assert loaded["value"].iloc[0] == np.pi
    assert list(pd.read_csv(tmp_path / "events.csv").columns) == ["time", "from", "to"]


def test_extend_merges_rows_and_events():
    first, second = SimTrace(), SimTrace()
    first.append(_row(0.0, "rhs", 0))
    second.append(_row(1.0, "rts", 1))
    second.events.append({"time": 1.0})
    first.extend(second)
    assert len(first) == 2 and first.events == [{"time": 1.0}]
