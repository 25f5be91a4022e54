"""
Continuum model from particles: fit a conservative FVM flux to the filtered
density of simulated Brownian particles over a short multi-step window, then
roll the model forward and compare with the particle density.
"""

import logging
import os
from typing import Any, Dict, Tuple

import numpy as np

from gmls_nets.data.datagen import BrownianConfig, density_histogram, gaussian_filter, simulate_brownian
from gmls_nets.dynamics.integrators import Mesh1D, TimeModel, build_time_model, l2_error, rollout, write_trajectory
from gmls_nets.experiments.common import (
    ExperimentResult,
    batch_size_of,
    initialize_weights,
    make_optimizer,
    time_model_map,
)
from gmls_nets.nets.training import Dataset, train
from gmls_nets.utils.constants import BROWNIAN_DOMAIN, FILTER_WIDTH_IN_BINS
from gmls_nets.utils.errors_utils import ConfigError, TrainingConfigErrors
from gmls_nets.utils.file_utils import FileUtils

logger = logging.getLogger(__name__)


def _settings(config: Dict[str, Any], seed: int) -> Tuple[BrownianConfig, Dict[str, Any]]:
    if "dataset" not in config:
        raise ConfigError("brownian needs a 'dataset' section")
    params = config["dataset"]
    cfg = BrownianConfig(
        n_particles=params["n_particles"],
        n_cells=params["n_cells"],
        diffusivity=params.get("diffusivity", 1.0),
        dt=params["dt"],
        seed=seed,
    )
    return cfg, params


def densities(config: Dict[str, Any], seed: int) -> Tuple[BrownianConfig, Dict[int, np.ndarray], Dict[str, Any]]:
    """
    Filtered densities at every step the experiment needs. With `normalize`,
    counts are divided by N_p times the cell width, giving unit mass.
    """
    cfg, params = _settings(config, seed)
    first, last = params.get("train_steps", [10, 12])
    rollout_steps = params.get("rollout_steps", 100)
    if not 0 <= first < last:
        raise ConfigError("dataset.train_steps must be two increasing step numbers")
    steps = sorted({0, first, last, rollout_steps})
    trajectory = simulate_brownian(cfg, max(steps), steps)
    width = params.get("filter_width_bins", FILTER_WIDTH_IN_BINS)
    scale = cfg.n_particles * BROWNIAN_DOMAIN[0] / cfg.n_cells if params.get("normalize", True) else 1.0
    rho = {
        step: gaussian_filter(density_histogram(trajectory.at(step), cfg.n_cells), width) / scale for step in steps
    }
    return cfg, rho, params


def _window(cfg: BrownianConfig, rho: Dict[int, np.ndarray], params: Dict[str, Any], seed: int) -> Dataset:
    """Training window as a one-sample dataset: input rho(t1), target (rho(t1) - rho(t0)) / (t1 - t0)."""
    first, last = params.get("train_steps", [10, 12])
    inputs = rho[last][None, :, None]
    targets = ((rho[last] - rho[first]) / ((last - first) * cfg.dt))[None, :, None]
    return Dataset(inputs, targets, inputs.copy(), targets.copy(), [0], [1], seed, {"train_steps": [first, last]})


def generate_dataset(config: Dict[str, Any], seed: int) -> Tuple[Dataset, Any]:
    cfg, rho, params = densities(config, seed)
    dataset = _window(cfg, rho, params, seed)
    mesh = Mesh1D.uniform(0.0, BROWNIAN_DOMAIN[0], cfg.n_cells, periodic=True)
    return dataset, mesh.center_cloud()


def build_model(config: Dict[str, Any], cfg: BrownianConfig, window: Dataset, seed: int) -> TimeModel:
    """
    FVM flux model on the periodic cell mesh. The weights start per
    `network.init` (zeros when unset); "least_squares" fits them to `window`.
    """
    model = config["dataset"].get("model", {"epsilon": 4.0 / cfg.n_cells, "order": 4})
    mesh = Mesh1D.uniform(0.0, BROWNIAN_DOMAIN[0], cfg.n_cells, periodic=True)
    network = config.get("network", {"kind": "linear"})
    fmap = time_model_map(network, model["order"] + 1, seed, default_init="zeros")
    time_model = build_time_model("fvm", mesh, cfg.dt, model["epsilon"], model["order"], fmap, model.get("power"))
    initialize_weights(time_model.net, network, window.train_inputs, window.train_targets)
    return time_model


def run(config: Dict[str, Any], seed: int, out_dir: str) -> ExperimentResult:
    if "optimizer" not in config:
        raise ConfigError("brownian needs an 'optimizer' section")
    TrainingConfigErrors.throw_error(config["optimizer"])
    cfg, rho, params = densities(config, seed)
    first, last = params.get("train_steps", [10, 12])
    rollout_steps = params.get("rollout_steps", 100)
    dataset = _window(cfg, rho, params, seed)

    model = build_model(config, cfg, dataset, seed)
    optimizer_params = config["optimizer"]
    _, history = train(
        model.net,
        dataset,
        make_optimizer(optimizer_params),
        optimizer_params["epochs"],
        batch_size_of(optimizer_params),
        seed,
        optimizer_params.get("log_every", 0),
        config.get("network", {}).get("target_scaling", True),
    )
    trajectory = rollout(model, rho[0], rollout_steps)
    reference = rho[rollout_steps]
    weights = model.mesh.norm_weights("fvm")
    relative = l2_error(trajectory[-1], reference, weights) / l2_error(reference, 0.0, weights)
    mass = weights @ trajectory.T
    metrics: Dict[str, Any] = {
        "experiment": "brownian",
        "seed": seed,
        "n_particles": cfg.n_particles,
        "n_cells": cfg.n_cells,
        "train_steps": [first, last],
        "rollout_steps": rollout_steps,
        "final_rel_l2": relative,
        "mass_drift": float(np.max(np.abs(mass - mass[0]))),
        "final_train_loss": history[-1]["train_loss"],
    }
    acceptance = config.get("acceptance", {})
    checks = {}
    if "max_final_rel_l2" in acceptance:
        checks["max_final_rel_l2"] = relative < acceptance["max_final_rel_l2"]
    metrics["checks"] = checks
    centers = model.mesh.centers
    artifacts = [
        write_trajectory(
            os.path.join(out_dir, "trajectory.csv"), cfg.dt * np.arange(rollout_steps + 1), trajectory, centers
        ),
        FileUtils.write_csv(
            os.path.join(out_dir, "final_density.csv"),
            ("x", "particles", "model"),
            np.column_stack([centers, reference, trajectory[-1]]),
        ),
        model.net.save(os.path.join(out_dir, "checkpoint.json"), {"experiment": "brownian", "seed": seed, "dt": cfg.dt}),
        FileUtils.write_json(os.path.join(out_dir, "metrics.json"), metrics),
    ]
    logger.info("brownian: final relative l2 %.3e after %d steps", relative, rollout_steps)
    return ExperimentResult(metrics, all(checks.values()), artifacts)
