"""
Scalar quantity of interest from scattered samples: regress the energy
integral of u^2 over the periodic box with stacked GMLS layers, pooling and
a global readout. Labels come from the field spectra via Parseval.
"""

import logging
import os
from typing import Any, Dict, Tuple

from gmls_nets.data.datagen import RandomFieldConfig, sample_spectrum
from gmls_nets.experiments.common import (
    ExperimentResult,
    batch_size_of,
    build_cloud,
    build_network,
    check_thresholds,
    initialize_weights,
    make_optimizer,
    split_ids,
)
from gmls_nets.geometry.basis import MonomialBasis
from gmls_nets.geometry.point_cloud import PointCloud, WeightKernel
from gmls_nets.nets.training import Dataset, evaluate, train, write_history
from gmls_nets.utils.constants import DEFAULT_SPECTRAL_DECAY
from gmls_nets.utils.errors_utils import ConfigError, GeometryConfigErrors, TrainingConfigErrors
from gmls_nets.utils.file_utils import FileUtils

logger = logging.getLogger(__name__)

ACCEPTANCE_RULES = {"max_test_rel_rmse": ("test_rel_rmse", lambda value, limit: value < limit)}


def generate_dataset(config: Dict[str, Any], seed: int) -> Tuple[Dataset, PointCloud]:
    for section in ("geometry", "dataset"):
        if section not in config:
            raise ConfigError(f"qoi needs a '{section}' section")
    geometry, params = config["geometry"], config["dataset"]
    cloud = build_cloud(geometry, seed)
    field_cfg = RandomFieldConfig(
        dim=geometry["dim"],
        length=geometry.get("length", 1.0),
        max_wavenumber=params.get("max_wavenumber", 3),
        alpha=params.get("alpha", DEFAULT_SPECTRAL_DECAY),
        seed=seed,
    )
    train_ids, test_ids = split_ids(params["n_train"], params["n_test"])
    train_spectrum = sample_spectrum(field_cfg, train_ids)
    test_spectrum = sample_spectrum(field_cfg, test_ids)
    dataset = Dataset(
        train_spectrum.evaluate(cloud.points)[:, :, None],
        train_spectrum.energy()[:, None],
        test_spectrum.evaluate(cloud.points)[:, :, None],
        test_spectrum.energy()[:, None],
        train_ids,
        test_ids,
        seed,
        {"quantity": "energy", "n_points": cloud.size},
    )
    return dataset, cloud


def run(config: Dict[str, Any], seed: int, out_dir: str) -> ExperimentResult:
    for section in ("kernel", "basis", "network", "optimizer"):
        if section not in config:
            raise ConfigError(f"qoi needs a '{section}' section")
    dataset, cloud = generate_dataset(config, seed)
    GeometryConfigErrors.throw_error(config["geometry"], config["kernel"], config["basis"])
    TrainingConfigErrors.throw_error(config["optimizer"])
    kernel = WeightKernel(config["kernel"]["epsilon"], config["kernel"].get("power", 4))
    basis = MonomialBasis(cloud.dim, config["basis"]["order"], kernel.epsilon)
    net = build_network(config["network"], cloud, kernel, basis, 1, 1, seed, readout=True)
    initialize_weights(net, config["network"], dataset.train_inputs, dataset.train_targets)
    optimizer_params = config["optimizer"]
    net, history = train(
        net,
        dataset,
        make_optimizer(optimizer_params),
        optimizer_params["epochs"],
        batch_size_of(optimizer_params),
        seed,
        optimizer_params.get("log_every", 0),
        config["network"].get("target_scaling", False),
    )
    test = evaluate(net, dataset.test_inputs, dataset.test_targets)
    metrics: Dict[str, Any] = {
        "experiment": "qoi",
        "seed": seed,
        "n_train": dataset.n_train,
        "n_test": dataset.n_test,
        "test_mse": test["mse"],
        "test_rel_l2": test["rel_l2"],
        "test_rel_rmse": test["rel_rmse"],
    }
    checks = check_thresholds(metrics, ACCEPTANCE_RULES, config.get("acceptance", {}))
    metrics["checks"] = checks
    artifacts = [
        write_history(os.path.join(out_dir, "loss_history.csv"), history),
        net.save(os.path.join(out_dir, "checkpoint.json"), {"experiment": "qoi", "seed": seed}),
        FileUtils.write_json(os.path.join(out_dir, "metrics.json"), metrics),
    ]
    logger.info("qoi: test relative RMSE %.3e", test["rel_rmse"])
    return ExperimentResult(metrics, all(checks.values()), artifacts)
