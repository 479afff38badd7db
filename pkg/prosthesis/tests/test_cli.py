import json

import yaml

from prosthesis.cli import main
from prosthesis.human_data import load_human_gait


def _error(capsys) -> dict:
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


def test_usage_errors_exit_2(capsys):
    assert main(["--bogus"]) == 2
    assert _error(capsys)["error"] == "usage"
    assert main(["simulate", "--controller", "lqr"]) == 2
    assert _error(capsys)["error"] == "usage"
    assert main(["validate"]) == 2
    assert main(["--help"]) == 0


def test_missing_config_is_a_configuration_error(tmp_path, capsys):
    assert main(["fit", "--config", str(tmp_path / "absent.yaml")]) == 2
    assert _error(capsys)["error"] == "configuration"


def test_corrupted_gait_fails_validation_with_exit_2(tmp_path, capsys):
    gait = tmp_path / "gait.json"
    gait.write_text('{"schema_version": 1, "degree": 5, "domains": {"rhs"')
    assert main(["validate", str(gait), "--out", str(tmp_path)]) == 2
    error = _error(capsys)
    assert error["error"] == "format" and "gait.json" in error["message"]


def test_gen_data_fit_and_validate(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["gen-data", "--out", out, "--seed", "3", "--samples", "120"]) == 0
    data = load_human_gait(str(tmp_path / "human_gait.csv"))
    assert len(data) == 120 and data.metadata["seed"] == 3

    assert main(["fit", "--out", out]) == 0
    assert (tmp_path / "fit_rms.csv").read_text().startswith("segment,start,end")

    # the fitted gait has no torques, so the dynamics checks reject it
    assert main(["validate", str(tmp_path / "gait_fit.json"), "--no-simulate", "--out", out]) == 1
    error = _error(capsys)
    assert error["error"] == "gait_invalid" and error["failures"]
    report = yaml.safe_load((tmp_path / "validation.yaml").read_text())
    assert report["passed"] is False and "poincare" not in [check["name"] for check in report["checks"]]
