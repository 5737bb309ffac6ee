import json

import pytest

from oscillab.cli import main, parse_radii
from oscillab.config import ConfigError
from oscillab.io import read_csv


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out), "--no-plots"])
    return code, out


def summary(out):
    return json.loads((out / "summary.json").read_text())


def csv_head(path):
    return path.read_text().splitlines()[:3]


def test_verify_example_propc1(tmp_path):
    code, out = run(tmp_path, "verify-example", "PropC1")
    assert code == 0
    assert all(summary(out)["checks"].values())
    assert (out / "summary.txt").exists()


def test_verify_example_propc2_disambiguation(tmp_path):
    code, out = run(tmp_path, "verify-example", "PropC2_tripleLogDenominator")
    assert code == 0
    assert "PropC2_tripleLogDenominator" in json.dumps(summary(out))


def test_dini_zero_modulus(tmp_path):
    code, out = run(tmp_path, "dini", "--modulus", "const:0")
    assert code == 0
    text = json.dumps(summary(out))
    assert "XZero" in text


def test_modulus_csv_header(tmp_path):
    code, out = run(tmp_path, "modulus", "--field", "ConstantIdentity", "--radii", "dyadic:1:3", "--points", "256")
    assert code == 0
    lines = csv_head(out / "modulus.csv")
    assert lines[0].startswith("# units:")
    assert lines[1] == f"# config_hash: {summary(out)['configHash']}"
    assert lines[2].split(",")[:4] == ["radius", "value", "centersTried", "estimator"]


def test_cascade_rows(tmp_path):
    code, out = run(tmp_path, "cascade", "--field", "PropC1", "--kmax", "5", "--cells", "64")
    assert code == 0
    header, rows = read_csv(out / "cascade.csv")
    assert header[0] == "k"
    assert len(rows) == 6
    assert "C" in summary(out)["witness"]


def test_solve_writes_grid(tmp_path):
    code, out = run(tmp_path, "solve", "--field", "ConstantIdentity", "--boundary", "x1x2", "--cells", "16")
    assert code == 0
    header, rows = read_csv(out / "solution.csv")
    assert header == ["x", "y", "value", "gradx", "grady"]
    assert len(rows) == 17 * 17


def test_deterministic_outputs(tmp_path):
    argv = ("modulus", "--field", "PropC1", "--radii", "dyadic:2:5", "--points", "256")
    _, a = run(tmp_path, *argv, name="a")
    _, b = run(tmp_path, *argv, name="b")
    assert (a / "modulus.csv").read_bytes() == (b / "modulus.csv").read_bytes()
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()


def test_invariant_failure_exit_code(tmp_path):
    code, out = run(tmp_path, "report", "--field", "PropC1", "--modulus", "const:0", "--estimates", "est1")
    assert code == 1
    assert not all(summary(out)["checks"].values())


def test_config_error_exit_code(tmp_path):
    code, _ = run(tmp_path, "solve", "--cells", "100")
    assert code == 2
    code, _ = run(tmp_path, "report", "--estimates", "est9")
    assert code == 2


def test_unknown_flag_is_config_error(tmp_path):
    assert main(["modulus", "--bogus", "1"]) == 2


def test_numerical_failure_exit_code(tmp_path):
    code, _ = run(tmp_path, "solve", "--field", "ConstantIdentity", "--boundary", "x1x2", "--cells", "64",
                  "--max-iter", "2")
    assert code == 3


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("# dyadic profile\nfield = ConstantIdentity\nradii = dyadic:1:2\npoints = 128\n")
    code, out = run(tmp_path, "modulus", "--config", str(cfg), "--points", "256")
    assert code == 0
    text = (out / "config.txt").read_text()
    assert "field = ConstantIdentity" in text
    assert "points = 256" in text


def test_missing_config_file(tmp_path):
    code, _ = run(tmp_path, "modulus", "--config", str(tmp_path / "nope.cfg"))
    assert code == 2


def test_report_rejects_propc1_for_est3(tmp_path):
    code, out = run(tmp_path, "report", "--field", "PropC1", "--estimates", "est3")
    assert summary(out)["est3"]["rejected"]
    assert "not bounded" in summary(out)["est3"]["diagnostic"]


def test_plots_are_rendered(tmp_path):
    out = tmp_path / "plots"
    assert main(["verify-example", "PropC1", "--out", str(out)]) == 0
    assert list(out.glob("*.png"))


def test_parse_radii():
    assert list(parse_radii("dyadic:1:3")) == [0.5, 0.25, 0.125]
    assert list(parse_radii("4adic:1:2")) == [0.25, 0.0625]
    assert list(parse_radii("0.5, 0.1")) == [0.5, 0.1]
    with pytest.raises(ConfigError):
        parse_radii("dyadic:x")
