import numpy as np
import pandas as pd
import pytest

from prosthesis.domains import CYCLE, DomainId
from prosthesis.errors import FitError, FormatError, ValidationError
from prosthesis.human_data import (
    COLUMNS, JOINTS, KNEE_ENVELOPE, HumanGaitData, fit_human_bezier, generate_synthetic_human_gait, load_human_gait,
    save_human_gait, segment_gait_cycle,
)

DATA = generate_synthetic_human_gait(1.70, 66.0, seed=7)
FIT = fit_human_bezier(DATA)


def test_synthetic_gait_shape():
    assert len(DATA) == 150
    assert list(DATA.frame.columns) == ["percent", *COLUMNS.values()]
    assert DATA.metadata["seed"] == 7
    knee = DATA.joint("pk")
    assert knee.min() >= KNEE_ENVELOPE[0] and knee.max() <= KNEE_ENVELOPE[1]
    # peak swing flexion late in the cycle
    assert 60.0 < DATA.percent[np.argmax(knee)] < 80.0
    # the intact leg runs half a cycle behind
    assert float(DATA.at("lk", 25.0)) == pytest.approx(float(DATA.at("pk", 75.0)), abs=1e-12)
    again = generate_synthetic_human_gait(1.70, 66.0, seed=7)
    assert again.frame.equals(DATA.frame)
    assert not generate_synthetic_human_gait(1.70, 66.0, seed=8).frame.equals(DATA.frame)
    with pytest.raises(ValidationError):
        generate_synthetic_human_gait(2.5, 66.0)


def test_save_and_load(tmp_path):
    path = tmp_path / "human_gait.csv"
    save_human_gait(DATA, str(path))
    loaded = load_human_gait(str(path))
    assert loaded.metadata == DATA.metadata
    assert np.array_equal(loaded.frame.to_numpy(), DATA.frame.to_numpy())


def test_data_validation():
    frame = DATA.frame
    with pytest.raises(FormatError):
        HumanGaitData(frame.drop(columns=["theta_lk"]))
    with pytest.raises(FormatError):
        HumanGaitData(frame.iloc[:20])
    with pytest.raises(FormatError):
        HumanGaitData(frame.iloc[::-1].reset_index(drop=True))
    broken = frame.copy()
    broken.loc[3, "theta_rh"] = np.nan
    with pytest.raises(FormatError):
        HumanGaitData(broken)
    shifted = frame.copy()
    shifted["percent"] = shifted["percent"] + 5.0
    with pytest.raises(FormatError):
        HumanGaitData(shifted)


def test_segmentation_counts():
    data = generate_synthetic_human_gait(1.70, 66.0, n_samples=100)
    segments = segment_gait_cycle(data)
    assert [len(segments[d]) for d in CYCLE] == [12, 19, 19, 12, 19, 19]
    assert segments[DomainId.RTS][0] == 12
    with pytest.raises(ValidationError):
        segment_gait_cycle(data, (12.0, 31.0, 50.0, 62.0, 81.0))
    with pytest.raises(ValidationError):
        segment_gait_cycle(data, (12.0, 31.0, 30.0, 62.0, 81.0, 100.0))


def test_fit_closes_the_cycle():
    assert FIT.degree == 5 and set(FIT.segments) == {"r_strike", "r_stance", "l_strike", "l_stance"}
    assert FIT.rms < 0.1
    ordered = [FIT.segments[name] for name in ("r_strike", "r_stance", "l_strike", "l_stance")]
    for joint in JOINTS:
        for before, after in zip(ordered, ordered[1:] + ordered[:1]):
            assert before.curves[joint](1.0) == pytest.approx(after.curves[joint](0.0), abs=1e-12)


def test_domain_windows():
    name, a, b = FIT.window("rts")
    assert name == "r_stance" and a == 0.0 and b == pytest.approx(0.5)
    assert FIT.window(DomainId.LHL)[1:] == pytest.approx((19.0 / 38.0, 1.0))
    for joint in JOINTS:
        assert FIT.domain_curve("rts", joint)(1.0) == pytest.approx(FIT.domain_curve("rhl", joint)(0.0), abs=1e-12)
    assert FIT.domain_curve("rhs", "pk") is FIT.segments["r_strike"].curves["pk"]
    percent = DATA.percent
    assert np.sqrt(np.mean((FIT.evaluate("pk", percent) - DATA.joint("pk")) ** 2)) < 0.1


def test_fit_errors():
    with pytest.raises(FitError):
        fit_human_bezier(DATA, degree=2)
    sparse = HumanGaitData(pd.DataFrame(DATA.frame.iloc[::3].reset_index(drop=True)))
    with pytest.raises(FitError):
        fit_human_bezier(sparse, degree=8)
