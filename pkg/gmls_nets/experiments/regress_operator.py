"""
Operator regression: learn the Laplacian or the viscous Burgers operator from
random periodic fields sampled on a point cloud, with spectrally exact labels.
"""

import logging
import os
from typing import Any, Dict, Tuple

import numpy as np

from gmls_nets.data.datagen import RandomFieldConfig, apply_spectral_operator, sample_spectrum
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
from gmls_nets.gmls.estimator import reference_weights
from gmls_nets.nets.training import Dataset, evaluate, train, write_history
from gmls_nets.utils.constants import DEFAULT_BURGERS_VISCOSITY, DEFAULT_SPECTRAL_DECAY
from gmls_nets.utils.errors_utils import ConfigError, GeometryConfigErrors, TrainingConfigErrors
from gmls_nets.utils.file_utils import FileUtils

logger = logging.getLogger(__name__)

ACCEPTANCE_RULES = {"max_test_rel_l2": ("test_rel_l2", lambda value, limit: value < limit)}


def _require(config: Dict[str, Any], *sections: str) -> None:
    for section in sections:
        if section not in config:
            raise ConfigError(f"{config['experiment']} needs a '{section}' section")


def generate_dataset(config: Dict[str, Any], seed: int) -> Tuple[Dataset, PointCloud]:
    """
    Samples train and test fields on the configured cloud and labels them with
    the exact operator. With `position_channels`, the point coordinates are
    appended as extra input channels.
    """
    _require(config, "geometry", "dataset")
    geometry, params = config["geometry"], config["dataset"]
    cloud = build_cloud(geometry, seed)
    field_cfg = RandomFieldConfig(
        dim=geometry["dim"],
        length=geometry.get("length", 1.0),
        max_wavenumber=params.get("max_wavenumber", 6),
        alpha=params.get("alpha", DEFAULT_SPECTRAL_DECAY),
        seed=seed,
    )
    train_ids, test_ids = split_ids(params["n_train"], params["n_test"])
    viscosity = params.get("viscosity", DEFAULT_BURGERS_VISCOSITY)

    def split(ids):
        spectrum = sample_spectrum(field_cfg, ids)
        inputs = spectrum.evaluate(cloud.points)[:, :, None]
        targets = apply_spectral_operator(spectrum, params["operator"], cloud.points, viscosity)[:, :, None]
        if params.get("position_channels", False):
            coordinates = np.broadcast_to(cloud.points, (len(ids),) + cloud.points.shape)
            inputs = np.concatenate([inputs, coordinates], axis=2)
        return inputs, targets

    train_inputs, train_targets = split(train_ids)
    test_inputs, test_targets = split(test_ids)
    logger.info(
        "Generated %d train / %d test %s samples on %d points",
        len(train_ids), len(test_ids), params["operator"], cloud.size,
    )
    metadata = {"operator": params["operator"], "dim": geometry["dim"], "n_points": cloud.size}
    return (
        Dataset(train_inputs, train_targets, test_inputs, test_targets, train_ids, test_ids, seed, metadata),
        cloud,
    )


def run(config: Dict[str, Any], seed: int, out_dir: str) -> ExperimentResult:
    _require(config, "geometry", "kernel", "basis", "network", "optimizer", "dataset")
    GeometryConfigErrors.throw_error(config["geometry"], config["kernel"], config["basis"])
    TrainingConfigErrors.throw_error(config["optimizer"])
    dataset, cloud = generate_dataset(config, seed)
    kernel = WeightKernel(config["kernel"]["epsilon"], config["kernel"].get("power", 4))
    basis = MonomialBasis(cloud.dim, config["basis"]["order"], kernel.epsilon)
    in_channels = dataset.train_inputs.shape[2]
    reference = None
    if config["dataset"]["operator"] == "laplacian" and config["basis"]["order"] >= 2:
        reference = reference_weights(basis, "laplacian", in_channels=in_channels)
    net = build_network(config["network"], cloud, kernel, basis, in_channels, 1, seed)
    initial = evaluate(net, dataset.test_inputs, dataset.test_targets)
    fitted_mse = initialize_weights(net, config["network"], dataset.train_inputs, dataset.train_targets)
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
    train_metrics = evaluate(net, dataset.train_inputs, dataset.train_targets)
    metrics: Dict[str, Any] = {
        "experiment": "regress-operator",
        "operator": config["dataset"]["operator"],
        "dim": cloud.dim,
        "seed": seed,
        "n_train": dataset.n_train,
        "n_test": dataset.n_test,
        "train_mse": train_metrics["mse"],
        "test_mse": test["mse"],
        "test_rel_l2": test["rel_l2"],
        "test_rel_rmse": test["rel_rmse"],
        "initial_test_rel_l2": initial["rel_l2"],
    }
    if fitted_mse is not None:
        metrics["least_squares_train_mse"] = fitted_mse
    artifacts = [
        write_history(os.path.join(out_dir, "loss_history.csv"), history),
        net.save(os.path.join(out_dir, "checkpoint.json"), {"experiment": "regress-operator", "seed": seed}),
    ]
    if config["network"]["kind"] == "linear" and "layers" not in config["network"] and in_channels == 1:
        artifacts.append(net.stages[0].stencil().to_csv(os.path.join(out_dir, "stencil.csv")))
    learned = net.stages[0].functional_map.weights[0]
    if reference is not None and net.stages[0].functional_map.kind == "linear" and learned.shape == reference.shape:
        metrics["weights_rel_distance_to_reference"] = float(
            np.linalg.norm(learned - reference) / np.linalg.norm(reference)
        )
    checks = check_thresholds(metrics, ACCEPTANCE_RULES, config.get("acceptance", {}))
    metrics["checks"] = checks
    artifacts.append(FileUtils.write_json(os.path.join(out_dir, "metrics.json"), metrics))
    logger.info("regress-operator: test relative l2 %.3e", metrics["test_rel_l2"])
    return ExperimentResult(metrics, all(checks.values()), artifacts)
