"""
Implicit Euler FDM and FVM models of 1D advection-diffusion, exact-operator
and trained, compared over time steps that are multiples of the CFL step.

Each trained model is fitted to a single exact increment starting at
`t_train`, then every model is rolled out from the exact state at `t_train`
to `t_final` and compared with the exact solution.
"""

import logging
import os
from typing import Any, Dict, List

import numpy as np

from gmls_nets.data.datagen import AdvDiffConfig, advdiff_cell_averages, advdiff_exact
from gmls_nets.dynamics.integrators import (
    Mesh1D,
    TimeModel,
    build_time_model,
    cfl_timestep,
    l2_error,
    reference_map,
    rollout,
    write_trajectory,
)
from gmls_nets.experiments.common import (
    ExperimentResult,
    batch_size_of,
    initialize_weights,
    make_optimizer,
    time_model_map,
)
from gmls_nets.models.models import ModelGeometryParams, NetworkParams
from gmls_nets.nets.layer import FunctionalMap
from gmls_nets.nets.training import Dataset, train
from gmls_nets.utils.errors_utils import ConfigError, TrainingConfigErrors
from gmls_nets.utils.file_utils import FileUtils

logger = logging.getLogger(__name__)

MODEL_COLUMNS = ("fdm_exact", "fdm_trained", "fvm_exact", "fvm_trained")
# Kernel radius in cell widths and polynomial order of each model family.
DEFAULT_GEOMETRY: Dict[str, ModelGeometryParams] = {
    "fdm": {"epsilon": 3.5, "order": 3},
    "fvm": {"epsilon": 4.0, "order": 4},
}


def model_geometry(kind: str, params: Dict[str, Any], mesh: Mesh1D) -> ModelGeometryParams:
    """Configured geometry of a model family, or the default scaled to the mesh spacing."""
    if kind in params:
        return params[kind]
    default = DEFAULT_GEOMETRY[kind]
    return {"epsilon": default["epsilon"] * mesh.spacing, "order": default["order"]}


def exact_state(kind: str, mesh: Mesh1D, t: float, cfg: AdvDiffConfig) -> np.ndarray:
    """Exact node values (fdm) or cell averages (fvm) at time t."""
    if kind == "fdm":
        return advdiff_exact(mesh.node_positions, t, cfg)
    return advdiff_cell_averages(mesh.nodes, t, cfg)


def _model(
    kind: str, mesh: Mesh1D, dt: float, geometry: ModelGeometryParams, cfg: AdvDiffConfig, fmap: FunctionalMap | None = None
) -> TimeModel:
    """Time model on the exact operator weights, or on `fmap` when given."""
    if fmap is None:
        fmap = reference_map(kind, geometry["order"], geometry["epsilon"], cfg.a, cfg.nu)
    return build_time_model(kind, mesh, dt, geometry["epsilon"], geometry["order"], fmap, geometry.get("power"))


def training_pair(model: TimeModel, t_train: float, cfg: AdvDiffConfig, seed: int) -> Dataset:
    """One exact increment: input u(t + dt), target (u(t + dt) - u(t)) / dt."""
    u0 = exact_state(model.kind, model.mesh, t_train, cfg)
    u1 = exact_state(model.kind, model.mesh, t_train + model.dt, cfg)
    inputs = u1[None, :, None]
    targets = ((u1 - u0) / model.dt)[None, :, None]
    return Dataset(inputs, targets, inputs.copy(), targets.copy(), [0], [1], seed, {"t_train": t_train})


def trained_model(
    kind: str,
    mesh: Mesh1D,
    dt: float,
    geometry: ModelGeometryParams,
    cfg: AdvDiffConfig,
    network: NetworkParams,
    pair: Dataset,
    seed: int,
) -> TimeModel:
    """
    Trainable model whose weights start per `network.init`: random, zeros, or
    the least-squares fit to the training increment.
    """
    fmap = time_model_map(network, geometry["order"] + 1, seed)
    model = _model(kind, mesh, dt, geometry, cfg, fmap)
    initialize_weights(model.net, network, pair.train_inputs, pair.train_targets)
    return model


def run(config: Dict[str, Any], seed: int, out_dir: str, dt_ratios: List[float] | None = None) -> ExperimentResult:
    if "dataset" not in config or "optimizer" not in config:
        raise ConfigError("advdiff needs 'dataset' and 'optimizer' sections")
    params = config["dataset"]
    TrainingConfigErrors.throw_error(config["optimizer"])
    ratios = sorted(dt_ratios if dt_ratios is not None else params["dt_ratios"])
    if not ratios or min(ratios) <= 0:
        raise ConfigError("dataset.dt_ratios must be positive")
    n_cells = config.get("geometry", {}).get("n_points", 100)
    length = config.get("geometry", {}).get("length", 30.0)
    cfg = AdvDiffConfig(a=params["a"], nu=params["nu"], x0=params.get("x0", 5.0), domain=(0.0, length), n_cells=n_cells)
    t_train = params.get("t_train", 1.0)
    t_final = params.get("t_final", 16.0)
    mesh = Mesh1D.uniform(cfg.domain[0], cfg.domain[1], cfg.n_cells)
    dt_cfl = cfl_timestep(mesh, cfg.a, cfg.nu)
    optimizer_params = config["optimizer"]
    network: NetworkParams = config.get("network", {"kind": "linear"})
    scaling = network.get("target_scaling", True)
    logger.info("advdiff: dx=%.4g, dt_cfl=%.4g, ratios=%s", mesh.spacing, dt_cfl, ratios)

    table = []
    artifacts = []
    trained_fvm: Dict[float, TimeModel] = {}
    for ratio in ratios:
        dt = ratio * dt_cfl
        n_steps = max(1, int(round((t_final - t_train) / dt)))
        t_end = t_train + n_steps * dt
        row = [ratio]
        for kind in ("fdm", "fvm"):
            geometry = model_geometry(kind, params, mesh)
            exact_model = _model(kind, mesh, dt, geometry, cfg)
            pair = training_pair(exact_model, t_train, cfg, seed)
            fitted = trained_model(kind, mesh, dt, geometry, cfg, network, pair, seed)
            train(
                fitted.net,
                pair,
                make_optimizer(optimizer_params),
                optimizer_params["epochs"],
                batch_size_of(optimizer_params),
                seed,
                optimizer_params.get("log_every", 0),
                scaling,
            )
            u_start = exact_state(kind, mesh, t_train, cfg)
            reference = exact_state(kind, mesh, t_end, cfg)
            weights = mesh.norm_weights(kind)
            positions = mesh.node_positions if kind == "fdm" else mesh.centers
            times = t_train + dt * np.arange(n_steps + 1)
            for label, model in (("exact", exact_model), ("trained", fitted)):
                trajectory = rollout(model, u_start, n_steps)
                row.append(l2_error(trajectory[-1], reference, weights))
                artifacts.append(
                    write_trajectory(
                        os.path.join(out_dir, f"trajectory_{kind}_{label}_dt{ratio:g}.csv"), times, trajectory, positions
                    )
                )
            if kind == "fvm":
                trained_fvm[ratio] = fitted
        table.append(row)
        logger.info("dt/dt_cfl=%g: %s", ratio, ", ".join(f"{c}={e:.3e}" for c, e in zip(MODEL_COLUMNS, row[1:])))

    errors = np.array(table)
    artifacts.append(FileUtils.write_csv(os.path.join(out_dir, "error_table.csv"), ("dt_ratio",) + MODEL_COLUMNS, errors))
    columns = {name: errors[:, i + 1] for i, name in enumerate(MODEL_COLUMNS)}
    metrics: Dict[str, Any] = {
        "experiment": "advdiff",
        "seed": seed,
        "dt_cfl": dt_cfl,
        "dt_ratios": ratios,
        "errors": {name: values.tolist() for name, values in columns.items()},
    }
    acceptance = config.get("acceptance", {})
    checks: Dict[str, bool] = {}
    if len(ratios) >= 2:
        growth = []
        for name in ("fdm_exact", "fvm_exact"):
            values = columns[name]
            monotone = bool(np.all(np.diff(values) > 0))
            growth.append(values[-1] / values[-2] if monotone else 0.0)
        metrics["exact_growth"] = float(min(growth))
        trained = columns["fvm_trained"]
        metrics["trained_fvm_spread"] = float(trained.max() / trained.min())
        if "min_exact_growth" in acceptance:
            checks["min_exact_growth"] = metrics["exact_growth"] >= acceptance["min_exact_growth"]
        if "max_trained_fvm_spread" in acceptance:
            checks["max_trained_fvm_spread"] = metrics["trained_fvm_spread"] < acceptance["max_trained_fvm_spread"]
    metrics["trained_fvm_gain"] = float(columns["fvm_exact"][-1] / columns["fvm_trained"][-1])
    if "min_trained_fvm_gain" in acceptance:
        checks["min_trained_fvm_gain"] = metrics["trained_fvm_gain"] >= acceptance["min_trained_fvm_gain"]
    metrics["checks"] = checks

    largest = ratios[-1]
    meta = {"experiment": "advdiff", "seed": seed, "kind": "fvm", "dt": largest * dt_cfl}
    artifacts.append(trained_fvm[largest].net.save(os.path.join(out_dir, "checkpoint.json"), meta))
    artifacts.append(FileUtils.write_json(os.path.join(out_dir, "metrics.json"), metrics))
    return ExperimentResult(metrics, all(checks.values()), artifacts)
