import json
import math

import numpy as np
import pytest

from oscillab.config import ConfigError, ExperimentConfig, parse_pairs
from oscillab.io import fmt, read_csv, write_csv, write_json


def test_config_round_trip():
    cfg = ExperimentConfig(field="Synthetic", modulus="powlog:0.5", tol=1e-12, plots=False, c="1,5,20", window=0.0)
    assert ExperimentConfig.from_text(cfg.to_text()) == cfg


def test_default_round_trip():
    assert ExperimentConfig.from_text(ExperimentConfig().to_text()) == ExperimentConfig()


def test_file_and_override(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("cells = 64  # coarse\ntol = 1e-8\n")
    cfg = ExperimentConfig.from_file(path).updated({"cells": 128, "tol": None})
    assert cfg.cells == 128
    assert cfg.tol == 1e-8


def test_bad_values():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("cells = many\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("colour = red\n")
    with pytest.raises(ConfigError):
        parse_pairs("just a line\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("plots = maybe\n")


def test_digest_ignores_output_location():
    cfg = ExperimentConfig()
    assert cfg.digest("solve") == cfg.updated({"out": "elsewhere", "plots": False}).digest("solve")
    assert cfg.digest("solve") != cfg.updated({"cells": 64}).digest("solve")
    assert cfg.digest("solve") != cfg.digest("cascade")


def test_fmt_is_round_trip_exact():
    x = 0.1 + 0.2
    assert float(fmt(x)) == x
    assert fmt(np.float32(0.5)) == "0.5"
    assert fmt(True) == "true"
    assert fmt(np.int64(3)) == "3"


def test_csv_layout(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["a", "b"], [(1, 0.25), (2, math.pi)], "a count; b metres", "abc123")
    lines = path.read_text().splitlines()
    assert lines[:3] == ["# units: a count; b metres", "# config_hash: abc123", "a,b"]
    header, rows = read_csv(path)
    assert header == ["a", "b"]
    assert float(rows[1][1]) == math.pi


def test_json_non_finite(tmp_path):
    path = write_json(tmp_path / "t.json", {"b": np.inf, "a": [np.nan, np.float64(1.5)], "c": np.bool_(True)})
    data = json.loads(path.read_text())
    assert data == {"a": ["nan", 1.5], "b": "inf", "c": True}
    assert path.read_text().index('"a"') < path.read_text().index('"b"')
