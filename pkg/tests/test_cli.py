import json
import os

import pytest

from gmls_nets.cli import main
from gmls_nets.utils.constants import (
    EXIT_INVALID_CONFIG,
    EXIT_NUMERICAL_FAILURE,
    EXIT_OK,
    EXIT_THRESHOLDS_FAILED,
)
from gmls_nets.utils.file_utils import FileUtils

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")


def _regression_config(
    epsilon: float = 0.035, order: int = 4, threshold: float = 0.05, init: str = "least_squares"
) -> dict:
    return {
        "version": 1,
        "experiment": "regress-operator",
        "seed": 2,
        "geometry": {"dim": 1, "n_points": 100, "layout": "uniform", "periodic": True},
        "kernel": {"epsilon": epsilon, "power": 4},
        "basis": {"order": order},
        "network": {"kind": "linear", "init": init},
        "optimizer": {"kind": "adam", "lr": 1e-5, "epochs": 2, "batch_size": 16},
        "dataset": {"operator": "laplacian", "n_train": 40, "n_test": 12, "max_wavenumber": 6, "alpha": 0.1},
        "acceptance": {"max_test_rel_l2": threshold},
    }


@pytest.fixture
def write_config(tmp_path):
    def write(config: dict, name: str = "config.json") -> str:
        path = tmp_path / name
        path.write_text(json.dumps(config, indent=2), encoding="utf-8")
        return str(path)

    return write


def test_run_writes_artifacts(tmp_path, write_config):
    out = tmp_path / "run"
    assert main(["run", "--config", write_config(_regression_config()), "--out", str(out)]) == EXIT_OK
    metrics = FileUtils.read_json(str(out / "metrics.json"))
    assert metrics["checks"] == {"max_test_rel_l2": True}
    assert metrics["seed"] == 2
    for name in ("checkpoint.json", "loss_history.csv", "stencil.csv"):
        assert (out / name).exists()
    header, rows = FileUtils.read_csv(str(out / "loss_history.csv"))
    assert header == ["epoch", "train_loss", "test_loss"]
    assert rows.shape == (3, 3)


def test_failed_threshold_exits_with_one(tmp_path, write_config):
    config = write_config(_regression_config(threshold=0.0))
    assert main(["run", "--config", config, "--out", str(tmp_path / "run")]) == EXIT_THRESHOLDS_FAILED


def test_least_squares_init_trains_from_zero_weights(tmp_path, write_config):
    fitted, untrained = tmp_path / "fitted", tmp_path / "zeros"
    config = _regression_config(threshold=1e-3)
    assert main(["run", "--config", write_config(config), "--out", str(fitted)]) == EXIT_OK
    metrics = FileUtils.read_json(str(fitted / "metrics.json"))
    assert metrics["initial_test_rel_l2"] == pytest.approx(1.0)
    assert metrics["test_rel_l2"] < 1e-3
    assert metrics["least_squares_train_mse"] >= 0.0
    assert "weights_rel_distance_to_reference" in metrics

    # the same optimizer budget from zeros without the fit stays near the start
    config = write_config(_regression_config(threshold=1e-3, init="zeros"), "zeros.json")
    assert main(["run", "--config", config, "--out", str(untrained)]) == EXIT_THRESHOLDS_FAILED
    metrics = FileUtils.read_json(str(untrained / "metrics.json"))
    assert metrics["test_rel_l2"] > 0.5
    assert "least_squares_train_mse" not in metrics


def test_least_squares_init_needs_a_linear_network(tmp_path, write_config):
    config = _regression_config()
    config["network"].update({"kind": "mlp", "hidden": [4]})
    path = write_config(config)
    assert main(["run", "--config", path, "--out", str(tmp_path / "run"), "--log-level", "ERROR"]) == EXIT_INVALID_CONFIG

    config = _regression_config()
    config["network"]["init"] = "reference"
    assert main(["run", "--config", write_config(config, "old.json"), "--log-level", "ERROR"]) == EXIT_INVALID_CONFIG


def test_gen_data_is_reproducible(tmp_path, write_config):
    config = write_config(_regression_config())
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["gen-data", "--config", config, "--out", str(first)]) == EXIT_OK
    assert main(["gen-data", "--config", config, "--out", str(second)]) == EXIT_OK
    names = sorted(os.listdir(first))
    assert names == sorted(os.listdir(second))
    assert "manifest.json" in names
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name

    other = tmp_path / "c"
    assert main(["gen-data", "--config", config, "--seed", "3", "--out", str(other)]) == EXIT_OK
    assert (other / "train_inputs.csv").read_bytes() != (first / "train_inputs.csv").read_bytes()


def test_eval_replays_run_metrics(tmp_path, write_config):
    config = write_config(_regression_config())
    run_dir, data_dir = tmp_path / "run", tmp_path / "data"
    assert main(["run", "--config", config, "--out", str(run_dir)]) == EXIT_OK
    assert main(["gen-data", "--config", config, "--out", str(data_dir)]) == EXIT_OK
    checkpoint = str(run_dir / "checkpoint.json")
    assert main(["eval", "--checkpoint", checkpoint, "--dataset", str(data_dir)]) == EXIT_OK
    replayed = FileUtils.read_json(str(run_dir / "eval_metrics.json"))
    original = FileUtils.read_json(str(run_dir / "metrics.json"))
    assert replayed["n_test"] == original["n_test"]
    assert replayed["test_rel_l2"] == pytest.approx(original["test_rel_l2"], rel=1e-12)

    export_dir = tmp_path / "export"
    assert main(["export-stencil", "--checkpoint", checkpoint, "--out", str(export_dir)]) == EXIT_OK
    assert (export_dir / "stencil.csv").read_text() == (run_dir / "stencil.csv").read_text()


def test_invalid_configs_exit_with_two(tmp_path, write_config, capsys):
    config = _regression_config()
    config["kernel"]["radius"] = 0.1
    path = write_config(config, "unknown.json")
    assert main(["run", "--config", path, "--log-level", "ERROR"]) == EXIT_INVALID_CONFIG
    assert capsys.readouterr().err.startswith(f"{path}:")

    broken = tmp_path / "broken.json"
    broken.write_text('{"version": 1,\n "seed": }', encoding="utf-8")
    assert main(["run", "--config", str(broken)]) == EXIT_INVALID_CONFIG
    assert f"{broken}:2:" in capsys.readouterr().err

    assert main(["run", "--config", str(tmp_path / "absent.json")]) == EXIT_INVALID_CONFIG
    assert main(["eval", "--checkpoint", str(tmp_path / "none.json"), "--dataset", str(tmp_path)]) == EXIT_INVALID_CONFIG
    assert main(["run", "--config", write_config(_regression_config()), "--threads", "0"]) == EXIT_INVALID_CONFIG


def test_shortcuts_are_checked_against_the_experiment(tmp_path):
    assert main(["gen-data", "advdiff", "--out", str(tmp_path / "advdiff")]) == EXIT_INVALID_CONFIG
    assert main(["run", "brownian", "--op", "laplacian", "--out", str(tmp_path / "b")]) == EXIT_INVALID_CONFIG
    assert main(["run", "qoi", "--dt-ratio", "2", "--out", str(tmp_path / "q")]) == EXIT_INVALID_CONFIG


def test_numerical_failure_exits_with_three(tmp_path, write_config, capsys):
    # a radius of 1.5 grid spacings gives three neighbors for five basis terms
    config = write_config(_regression_config(epsilon=0.015, order=4))
    code = main(["run", "--config", config, "--out", str(tmp_path / "run"), "--log-level", "ERROR"])
    assert code == EXIT_NUMERICAL_FAILURE
    assert capsys.readouterr().err.startswith("UnisolvencyError:")


@pytest.mark.slow
@pytest.mark.parametrize("op,dim", [("laplacian", 1), ("burgers", 1)])
def test_shipped_regression_configs(tmp_path, op, dim):
    code = main(["run", "regress-operator", "--op", op, "--dim", str(dim), "--out", str(tmp_path)])
    assert code in (EXIT_OK, EXIT_THRESHOLDS_FAILED)
    metrics = FileUtils.read_json(str(tmp_path / "metrics.json"))
    assert metrics["operator"] == op
    assert metrics["test_rel_l2"] < 1.0


@pytest.mark.slow
@pytest.mark.parametrize("tag", ["advdiff", "brownian", "qoi"])
def test_shipped_experiment_configs(tmp_path, tag):
    code = main(["run", tag, "--out", str(tmp_path)])
    assert code in (EXIT_OK, EXIT_THRESHOLDS_FAILED)
    metrics = FileUtils.read_json(str(tmp_path / "metrics.json"))
    shipped = FileUtils.read_json(os.path.join(CONFIG_DIR, f"{tag}.json"))
    assert set(metrics["checks"]) <= set(shipped["acceptance"])
