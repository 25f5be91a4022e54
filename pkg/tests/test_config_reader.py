import glob
import json
import os

import pytest

from gmls_nets.utils.errors_utils import ConfigError, GeometryConfigErrors, TrainingConfigErrors
from gmls_nets.utils.reader_utils import ReadFilesUtils

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")

MINIMAL = """{
  "version": 1,
  "experiment": "regress-operator",
  "seed": 0,
  "geometry": {
    "dim": 1,
    "n_points": 100
  },
  "kernel": {
    "epsilon": 0.035
  },
  "basis": {
    "order": 2
  },
  "dataset": {
    "operator": "laplacian",
    "n_train": 10,
    "n_test": 5
  }
}
"""


@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(CONFIG_DIR, "*.json"))), ids=os.path.basename)
def test_shipped_configs_are_valid(path):
    config = ReadFilesUtils.read_config(path)
    assert config["version"] == 1
    if {"geometry", "kernel", "basis"} <= set(config):
        GeometryConfigErrors.throw_error(config["geometry"], config["kernel"], config["basis"])
    if "optimizer" in config:
        TrainingConfigErrors.throw_error(config["optimizer"])


def test_minimal_config_parses():
    config = ReadFilesUtils.parse_config(MINIMAL, source="minimal.json")
    assert config["dataset"]["operator"] == "laplacian"


def test_unknown_key_reports_its_line():
    text = MINIMAL.replace('"order": 2', '"order": 2,\n    "degree": 3')
    with pytest.raises(ConfigError) as info:
        ReadFilesUtils.parse_config(text, source="bad.json")
    assert info.value.line == 14
    assert "unknown key 'degree'" in info.value.message
    assert str(info.value).startswith("bad.json:14: basis.degree")


def test_json_syntax_error_reports_its_line():
    text = MINIMAL.replace('"seed": 0,', '"seed": 0')
    with pytest.raises(ConfigError) as info:
        ReadFilesUtils.parse_config(text)
    assert info.value.line == 5
    assert str(info.value).startswith("<config>:5: invalid JSON")


def test_missing_key_and_wrong_values():
    missing = json.loads(MINIMAL)
    del missing["dataset"]["n_test"]
    with pytest.raises(ConfigError) as info:
        ReadFilesUtils.validate_config(missing)
    assert "missing required key 'n_test'" in info.value.message

    with pytest.raises(ConfigError) as info:
        ReadFilesUtils.parse_config(MINIMAL.replace('"laplacian"', '"wave"'))
    assert "not in" in info.value.message
    assert info.value.line == 16

    with pytest.raises(ConfigError):
        ReadFilesUtils.parse_config(MINIMAL.replace('"n_points": 100', '"n_points": 100.5'))
    with pytest.raises(ConfigError):
        ReadFilesUtils.parse_config(MINIMAL.replace('"seed": 0', '"seed": true'))
    with pytest.raises(ConfigError):
        ReadFilesUtils.parse_config(MINIMAL.replace('"version": 1', '"version": 2'))
    with pytest.raises(ConfigError):
        ReadFilesUtils.parse_config(MINIMAL.replace('"regress-operator"', '"regress"'))


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        ReadFilesUtils.read_config(str(tmp_path / "absent.json"))
    assert info.value.source.endswith("absent.json")


def test_cross_field_checks():
    geometry, kernel, basis = {"dim": 1, "n_points": 10}, {"epsilon": 0.1}, {"order": 2}
    GeometryConfigErrors.throw_error(geometry, kernel, basis)
    with pytest.raises(ConfigError, match="epsilon"):
        GeometryConfigErrors.throw_error(geometry, {"epsilon": 0.0}, basis)
    with pytest.raises(ConfigError, match="dim"):
        GeometryConfigErrors.throw_error({"dim": 3, "n_points": 10}, kernel, basis)
    with pytest.raises(ConfigError, match="order"):
        GeometryConfigErrors.throw_error(geometry, kernel, {"order": -1})
    with pytest.raises(ConfigError, match="lr"):
        TrainingConfigErrors.throw_error({"kind": "adam", "lr": 0.0, "epochs": 1})
    with pytest.raises(ConfigError, match="batch_size"):
        TrainingConfigErrors.throw_error({"kind": "adam", "lr": 1e-3, "epochs": 1, "batch_size": 0})
