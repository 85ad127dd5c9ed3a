import dataclasses
from pathlib import Path

import mpmath
import orjson
import pytest

from backend import config
from backend.exceptions import BundleError, ScenarioError
from backend.operators import hypothesis_certificates
from backend.recurrence import (
    Verdict,
    certify_theta_threshold,
    check_alt311,
    check_hyp1,
    make_gamma,
)
from backend.runner import (
    Task,
    load_certificates,
    load_scenario,
    parse_complex,
    parse_scenario,
    report_bundle,
    run_scenario,
)
from backend.weights import SpaceSpec, make_weights
from scripts import shiftlab

CERTIFY_P0 = {
    "name": "classic-p0",
    "space": {"kind": "ClassicBargmann", "p": 0},
    "task": "certify",
    "params": {"hypotheses": ["Hyp1", "Hyp2"], "hyp1_n_max": 300, "hyp2_n_hi": 200},
    "dps": 30,
}


def scenario_text(data: dict) -> str:
    return orjson.dumps(data, option=orjson.OPT_INDENT_2).decode()


def test_malformed_json_reports_position():
    with pytest.raises(ScenarioError) as info:
        parse_scenario('{\n  "task": "weights",\n  "space": }')
    assert info.value.line == 3


def test_unknown_space_kind_names_the_field():
    text = scenario_text({"task": "weights", "space": {"kind": "Nowhere"}})
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    assert info.value.field == "space.kind"
    assert info.value.line is not None


def test_invalid_disk_parameter_names_the_field():
    text = scenario_text({"task": "weights", "space": {"kind": "PoincareDisk", "nu": "0.75"}})
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    assert info.value.field == "space.nu"


@pytest.mark.parametrize("data, field", [
    ({"task": "weights", "space": {"kind": "ClassicBargmann"}, "colour": 1}, "colour"),
    ({"task": "dance", "space": {"kind": "ClassicBargmann"}}, "task"),
    ({"task": "weights", "space": {"kind": "ClassicBargmann"}, "dps": 4}, "dps"),
    ({"task": "weights", "space": {"kind": "ClassicBargmann"}, "dps": 10_000}, "dps"),
    ({"task": "weights"}, "space"),
    ({"task": "certify", "weights": {"constant": "1"}}, "weights"),
])
def test_invalid_scenarios(data, field):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(scenario_text(data))
    assert info.value.field == field


def test_defaults_and_output_root(tmp_path):
    scenario = parse_scenario(scenario_text({"task": "certify", "space": {"kind": "ClassicBargmann", "p": 1}}),
                              source="somewhere/classic.json", output_root=str(tmp_path))
    assert scenario.task is Task.CERTIFY
    assert scenario.name == "classic"
    assert scenario.dps == config.CERTIFY_DPS
    assert scenario.output == tmp_path / "classic"
    assert "output" not in scenario.resolved()


def test_float_parameters_are_refused():
    with pytest.raises(ScenarioError) as info:
        parse_complex(1.5, "params.lambda")
    assert info.value.field == "params.lambda"


def test_complex_forms():
    with mpmath.mp.workdps(30):
        assert parse_complex("1+0.5j", "x") == mpmath.mpc(1, "0.5")
        assert parse_complex(["0", "-2"], "x") == mpmath.mpc(0, -2)
        assert parse_complex({"im": "1"}, "x") == mpmath.mpc(0, 1)
        assert parse_complex(3, "x") == 3
        quarter = parse_complex({"abs": "2", "turns": "1/4"}, "x")
        assert abs(quarter - mpmath.mpc(0, 2)) < mpmath.mpf(10) ** -25
    with pytest.raises(ScenarioError):
        parse_complex(["1"], "x")
    with pytest.raises(ScenarioError):
        parse_complex({"abs": "1"}, "x")


def test_shipped_scenarios_parse():
    paths = sorted(Path(config.SCENARIOS_DIR).glob("*.json"))
    assert paths
    for path in paths:
        assert load_scenario(str(path)).name


def test_recurrence_scenario_writes_artifacts(tmp_path):
    path = Path(config.SCENARIOS_DIR) / "recurrence_constant_weights.json"
    outcome = run_scenario(load_scenario(str(path), output_root=str(tmp_path)))
    assert outcome.exit_code == 0
    out = Path(outcome.output)
    for name in ("certificates.json", "checks.json", "run_meta.json", "recurrence.csv"):
        assert (out / name).exists()
    checks = orjson.loads((out / "checks.json").read_bytes())
    assert checks["verdict"] == "pass"
    assert checks["artifact_version"] == config.ARTIFACT_VERSION
    assert {c["name"] for c in checks["checks"]} >= {"recurrence residual", "expected coefficients"}


def test_artifacts_are_byte_stable(tmp_path):
    text = scenario_text(CERTIFY_P0)
    first = run_scenario(parse_scenario(text, output_root=str(tmp_path / "a")))
    second = run_scenario(parse_scenario(text, output_root=str(tmp_path / "b")))
    for name in ("certificates.json", "checks.json"):
        assert (Path(first.output) / name).read_bytes() == (Path(second.output) / name).read_bytes()


def test_expected_failure_counts_as_pass(tmp_path):
    data = dict(CERTIFY_P0, params=dict(CERTIFY_P0["params"], expect={"Hyp1": "fail"}))
    outcome = run_scenario(parse_scenario(scenario_text(data), output_root=str(tmp_path)))
    assert outcome.exit_code == 0


def test_unexpected_failure_exits_one(tmp_path):
    outcome = run_scenario(parse_scenario(scenario_text(CERTIFY_P0), output_root=str(tmp_path)))
    assert outcome.verdict is Verdict.FAIL
    assert outcome.exit_code == 1
    assert outcome.failing == ["Hyp1"]


def test_load_certificates_from_run_directory(tmp_path):
    outcome = run_scenario(parse_scenario(scenario_text(CERTIFY_P0), output_root=str(tmp_path)))
    certificates = load_certificates([str(tmp_path)])
    assert [c.hypothesis.value for c in certificates] == ["Hyp1", "Hyp2"]
    assert certificates[0].spec == SpaceSpec.classic(0)
    assert certificates == load_certificates([str(Path(outcome.output) / "certificates.json")])
    with pytest.raises(BundleError):
        load_certificates([str(tmp_path / "missing")])


def test_empty_bundle():
    report = report_bundle([])
    assert len(report.frame) == 0
    assert report.exit_code == 0


def test_bundle_keeps_worst_verdict(tmp_path):
    failing = check_hyp1(make_weights(SpaceSpec.classic(0)), 100)
    passing = check_hyp1(make_weights(SpaceSpec.classic(1)), 100)
    report = report_bundle([failing, passing, failing], output_dir=str(tmp_path))
    assert len(report.frame) == 2
    assert report.verdict is Verdict.FAIL
    assert (tmp_path / config.SUMMARY_CSV).exists()
    assert "worst verdict fail" in (tmp_path / config.SUMMARY_TXT).read_text()


def test_bundle_refuses_mixed_versions():
    cert = check_hyp1(make_weights(SpaceSpec.classic(1)), 100)
    older = dataclasses.replace(cert, artifact_version="0.9.0")
    with pytest.raises(BundleError):
        report_bundle([cert, older])


BUNDLE_SPACES = [SpaceSpec.classic(), SpaceSpec.generalized("3"), SpaceSpec.theta_two_pi(),
                 SpaceSpec.disk("1.5")]


def test_bundle_one_row_per_space_order_and_hypothesis():
    certificates = []
    for spec in BUNDLE_SPACES:
        for p in (0, 1, 2):
            certificates.extend(hypothesis_certificates(make_weights(spec.with_p(p), dps=30), 60))
    report = report_bundle(certificates)
    assert len(report.frame) == 24
    assert set(report.frame["hypothesis"]) == {"Hyp1", "Hyp2"}
    assert report.frame.groupby("space").size().tolist() == [6, 6, 6, 6]


def test_bundle_keeps_theta_threshold_apart_from_alt311():
    weights = make_weights(SpaceSpec.theta_two_pi(p=0), dps=30)
    gamma = make_gamma("theta_geometric", weights, beta_prime="3")
    certificates = [check_alt311(weights, gamma, "1", (3, 200)),
                    certify_theta_threshold(weights, "3", "1", n_extra=200)]
    report = report_bundle(certificates)
    assert sorted(report.frame["hypothesis"]) == ["Alt311", "ThetaThreshold"]


def test_cli_run_with_bad_scenario_exits_one(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"task": "weights", "space": {"kind": "Nowhere"}}', encoding="utf-8")
    assert shiftlab.main(["run", str(bad), "--output-root", str(tmp_path)]) == 1


def test_cli_report_without_paths(capsys):
    assert shiftlab.main(["report"]) == 0
    assert "0 rows" in capsys.readouterr().out


def test_cli_task_with_flags(tmp_path):
    code = shiftlab.main(["recurrence", "--weights-constant", "1", "--lambda", "2", "--N", "12",
                          "--no-certify", "--output", str(tmp_path / "rec")])
    assert code == 0
    assert (tmp_path / "rec" / "recurrence.csv").exists()
