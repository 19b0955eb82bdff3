import csv
import json

import pytest

from paneitz.cli import HALF_SPACE, UsageError, main, parse_config
from paneitz.constants import alpha_bar, ball_volume

GOLDEN_RESULTS = {
    "constants": {"N", "S", "alpha_bar", "beta_closed_form", "bubble_energy", "d_N", "gamma_N", "halfspace_constant", "two_star"},
    "jintegrals": {"J1", "J2", "J2_divergent", "J3", "beta_N", "beta_closed_form", "relative_difference"},
    "bubble-residual": {"eps", "max_abs_residual", "passed", "tol"},
    "threshold": {"alpha_bar", "alpha_lin", "alpha_lo", "alpha_star_bracket", "bracket_error", "within_alpha_bar"},
    "minimize": {
        "J", "Q", "alpha", "balance_defect", "balance_slack", "classification", "constant_Q", "converged",
        "deviation", "grad2", "iterations", "l2", "lap2", "lp", "residual",
    },
    "asymptotics": {
        "H", "I1_intercept", "I1_intercept_predicted", "I23_slope", "I23_slope_predicted", "I4_slope",
        "I4_slope_predicted", "critical_slope", "critical_slope_predicted", "grad2_exponent",
        "grad2_log_corrected", "halfspace_constant", "l2_exponent", "l2_log_corrected", "r0",
    },
}
GOLDEN_CSV = {
    "jintegrals.csv": ["N", "J1", "J2", "J3", "beta_N", "beta_closed_form"],
    "bubble_residual.csv": ["eps", "r", "residual_analytic", "residual_fd"],
    "geometry_check.csv": ["t", "det_error", "inverse_error"],
    "asymptotics.csv": ["eps", "I1", "I2", "I3", "I4", "remainder", "critical_norm"],
    "asymptotics_halfspace.csv": ["eps", "lap2", "grad2", "l2", "lp", "Q"],
    "minimize_profile.csv": ["r", "u"],
}
TOP_KEYS = {"schema_version", "command", "config", "results", "provenance", "exit_status"}

FAST_ARGS = {
    "constants": ["--dim", "6"],
    "jintegrals": ["--dim", "6"],
    "bubble-residual": ["--dim", "6"],
    "geometry-check": ["--dim", "6"],
    "asymptotics": ["--dim", "6"],
    "minimize": ["--dim", "6", "--alpha", "5", "--grid", "64"],
}


def run_cli(tmp_path, command, *args):
    code = main([command, *args, "--out-dir", str(tmp_path)])
    stem = command.replace("-", "_")
    return code, json.loads((tmp_path / f"{stem}.json").read_text())


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def test_parse_defaults():
    cfg = parse_config(["constants", "--dim", "6"])
    assert cfg.command == "constants" and cfg.N == 6 and cfg.domain == 1.0


def test_half_space_radius():
    assert parse_config(["asymptotics", "--radius", "half-space"]).domain == HALF_SPACE


@pytest.mark.parametrize(
    "argv",
    [
        ["constants", "--dim", "4"],
        ["bogus"],
        ["constants", "--dim", "six"],
        ["minimize", "--alpha", "-1"],
        ["minimize", "--radius", "half-space"],
        ["asymptotics", "--dim", "6", "--kappa", "1"],
        ["minimize", "--grid", "8"],
    ],
)
def test_usage_errors(argv, tmp_path, capsys):
    with pytest.raises(UsageError):
        parse_config(argv)
    assert main(argv + ["--out-dir", str(tmp_path)]) == 1
    assert "usage error" in capsys.readouterr().err


def test_config_file_and_override(tmp_path):
    cfg_file = tmp_path / "run.json"
    cfg_file.write_text(json.dumps({"dim": 6, "grid": 64, "minimize": {"alpha": 7.0}}))
    cfg = parse_config(["minimize", "--config", str(cfg_file)])
    assert cfg.alpha == 7.0 and cfg.grid == 64
    code, out = run_cli(tmp_path, "minimize", "--config", str(cfg_file), "--alpha", "3.0")
    assert code == 0
    assert out["results"]["alpha"] == 3.0 and out["config"]["alpha"] == 3.0


def test_config_unknown_key(tmp_path):
    cfg_file = tmp_path / "bad.json"
    cfg_file.write_text(json.dumps({"dimension": 6}))
    with pytest.raises(UsageError):
        parse_config(["constants", "--config", str(cfg_file)])


@pytest.mark.parametrize("command", sorted(FAST_ARGS))
def test_golden_schema_and_determinism(command, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    code_a, out = run_cli(a, command, *FAST_ARGS[command])
    code_b, _ = run_cli(b, command, *FAST_ARGS[command])
    assert code_a == code_b == out["exit_status"] == 0
    assert set(out) == TOP_KEYS and out["schema_version"] == "1"
    if command in GOLDEN_RESULTS:
        assert set(out["results"]) == GOLDEN_RESULTS[command]
    assert set(out["provenance"]) == set(out["results"])
    assert all(v.startswith("paneitz.") for v in out["provenance"].values())
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes()
        if name in GOLDEN_CSV:
            assert header(a / name) == GOLDEN_CSV[name]


def test_seventeen_digit_rendering(tmp_path):
    run_cli(tmp_path, "constants", "--dim", "6")
    text = (tmp_path / "constants.json").read_text()
    assert '"S": 247.28444736616012' in text


def test_jintegrals_closed_form_column(tmp_path):
    run_cli(tmp_path, "jintegrals", "--dim", "7")
    with open(tmp_path / "jintegrals.csv", newline="") as fh:
        row = list(csv.DictReader(fh))[0]
    assert float(row["beta_N"]) == pytest.approx(float(row["beta_closed_form"]), rel=1e-9)


def test_jintegrals_n5_divergent(tmp_path):
    code, out = run_cli(tmp_path, "jintegrals", "--dim", "5")
    assert code == 0 and out["results"]["J2"] is None and out["results"]["J2_divergent"] is True


def test_threshold_reports_missing_bracket(tmp_path):
    code, out = run_cli(tmp_path, "threshold", "--dim", "6", "--radius", "1")
    res = out["results"]
    assert code == 3 and out["exit_status"] == 3
    assert res["alpha_star_bracket"] is None and res["bracket_error"]
    assert res["alpha_bar"] == pytest.approx(alpha_bar(6, ball_volume(6)), rel=1e-15)
    assert res["alpha_lin"] == pytest.approx(1697.7228252265113463 / 4, rel=1e-6)


def test_minimize_nonconvergence_exit(tmp_path):
    code, out = run_cli(tmp_path, "minimize", "--dim", "6", "--alpha", "400", "--grid", "64", "--eps", "0.2", "--tol", "1e-30")
    assert code == 3 and out["results"]["converged"] is False


def test_bubble_residual_accuracy_exit(tmp_path):
    assert main(["bubble-residual", "--dim", "6", "--tol", "1e-30", "--out-dir", str(tmp_path)]) == 2


def test_svg_emission(tmp_path):
    run_cli(tmp_path, "geometry-check", "--dim", "6", "--svg")
    assert (tmp_path / "geometry_check.svg").read_text().startswith("<svg")


def test_threads_do_not_change_output(tmp_path, monkeypatch):
    run_cli(tmp_path / "one", "asymptotics", "--dim", "7")
    monkeypatch.setenv("PANEITZ_THREADS", "4")
    run_cli(tmp_path / "four", "asymptotics", "--dim", "7")
    for name in ("asymptotics.json", "asymptotics.csv", "asymptotics_halfspace.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "four" / name).read_bytes()
