import logging
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Tuple

import numpy as np

from gmls_nets.geometry.basis import MonomialBasis
from gmls_nets.geometry.point_cloud import (
    PointCloud,
    WeightKernel,
    jittered_cloud,
    random_cloud,
    subsample_cloud,
    uniform_cloud,
)
from gmls_nets.models.models import GeometryParams, LayerSpec, NetworkParams, OptimizerParams
from gmls_nets.nets.layer import (
    Activation,
    AffineHead,
    FunctionalMap,
    GlobalMeanReadout,
    GMLSLayer,
    GMLSNetwork,
    PoolingLayer,
)
from gmls_nets.nets.training import Dataset, Optimizer, fit_linear_least_squares
from gmls_nets.utils.constants import DATASET_SCHEMA_VERSION, DEFAULT_BATCH_SIZE
from gmls_nets.utils.errors_utils import ConfigError, DataGenError, GeometryError
from gmls_nets.utils.file_utils import FileUtils

logger = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    """
    Outcome of one experiment run.

    Parameters
    ----------
    metrics : Dict[str, Any]
        Everything written to metrics.json.
    passed : bool
        Whether every acceptance threshold of the config was met.
    artifacts : List[str]
        Paths of the files written.
    """

    metrics: Dict[str, Any]
    passed: bool
    artifacts: List[str] = field(default_factory=list)


def grid_side(n_points: int, dim: int) -> int:
    side = int(round(n_points ** (1.0 / dim)))
    if side**dim != n_points:
        raise ConfigError(f"geometry.n_points={n_points} is not a perfect {'square' if dim == 2 else 'power'}")
    return side


def build_cloud(geometry: GeometryParams, seed: int) -> PointCloud:
    """Point cloud of a geometry section; n_points counts all points."""
    dim = geometry["dim"]
    n_points = geometry["n_points"]
    length = geometry.get("length", 1.0)
    periodic = geometry.get("periodic", True)
    layout = geometry.get("layout", "uniform")
    if layout == "uniform":
        return uniform_cloud(grid_side(n_points, dim), dim, length, periodic)
    if layout == "jittered":
        if not periodic:
            raise ConfigError("geometry.layout 'jittered' requires a periodic geometry")
        return jittered_cloud(grid_side(n_points, dim), dim, length, seed)
    return random_cloud(n_points, dim, length, seed, periodic)


def make_functional_map(
    kind: str,
    in_width: int,
    out_channels: int,
    rng: np.random.Generator,
    hidden: List[int] | None = None,
    activation: str = "relu",
    init: str = "random",
) -> FunctionalMap:
    if kind == "linear":
        return FunctionalMap.linear(in_width, out_channels, rng if init == "random" else None)
    if init == "least_squares":
        raise ConfigError("network.init 'least_squares' needs linear functional maps")
    fmap = FunctionalMap.mlp(in_width, out_channels, hidden or [], rng, activation)
    if init == "zeros":
        fmap.scale_output(0.0)
    return fmap


def time_model_map(network: NetworkParams, width: int, seed: int, default_init: str = "random") -> FunctionalMap:
    """Linear functional map of a trainable time-stepping model, built per `network.init`."""
    if network.get("kind", "linear") != "linear":
        raise ConfigError("time-stepping models need network.kind 'linear'")
    init = network.get("init", default_init)
    return make_functional_map("linear", width, 1, np.random.default_rng([seed, 1]), init=init)


def initialize_weights(net: GMLSNetwork, network: NetworkParams, inputs: np.ndarray, targets: np.ndarray) -> float | None:
    """
    Applies the data-driven part of `network.init`.

    With "least_squares" the first-layer weights, built at zero, are set to the
    direct least-squares fit on the given training data and the fitted MSE is
    returned. Other init kinds are fixed at construction and return None.

    Raises
    ------
    ConfigError
        "least_squares" on a network whose output is not linear in its first layer.
    """
    if network.get("init", "random") != "least_squares":
        return None
    try:
        return fit_linear_least_squares(net, inputs, targets)
    except GeometryError as e:
        raise ConfigError(f"network.init 'least_squares': {e}") from e


def build_network(
    network: NetworkParams,
    cloud: PointCloud,
    kernel: WeightKernel,
    basis: MonomialBasis,
    in_channels: int,
    out_channels: int,
    seed: int,
    readout: bool = False,
) -> GMLSNetwork:
    """
    Builds the network described by a config section.

    Without `layers`, the network is one GMLS layer on `cloud` whose map is
    `network.kind`. With `layers`, every spec adds a GMLS layer (optionally
    strided to `n_targets` random points and followed by `post_activation`);
    `pool` inserts a pooling stage after the first layer. `readout` appends a
    global mean and an affine head producing `out_channels` scalars.

    `network.init` "least_squares" builds zero weights; call
    `initialize_weights` with the training data to fit them.
    """
    rng = np.random.default_rng([seed, 1])
    init = network.get("init", "random")
    specs: List[LayerSpec] = network.get("layers") or [
        {
            "kind": network["kind"],
            "out_channels": out_channels,
            "hidden": network.get("hidden", []),
            "activation": network.get("activation", "relu"),
        }
    ]
    stages: List[Any] = []
    current, channels = cloud, in_channels
    for index, spec in enumerate(specs):
        eps = spec.get("epsilon", kernel.epsilon)
        layer_kernel = WeightKernel(eps, kernel.power)
        layer_basis = MonomialBasis(cloud.dim, spec.get("order", basis.order), eps)
        target = current
        if "n_targets" in spec:
            target = subsample_cloud(current, spec["n_targets"], seed + 101 * (index + 1))
        fmap = make_functional_map(
            spec["kind"],
            channels * layer_basis.size,
            spec["out_channels"],
            rng,
            spec.get("hidden", []),
            spec.get("activation", "relu"),
            init,
        )
        stages.append(GMLSLayer(current, target, layer_kernel, layer_basis, fmap))
        current, channels = target, spec["out_channels"]
        if "post_activation" in spec:
            stages.append(Activation(spec["post_activation"]))
        if index == 0 and "pool" in network:
            pool = network["pool"]
            pooled = subsample_cloud(current, pool["n_points"], seed + 7)
            stages.append(PoolingLayer(pool["reducer"], current, pooled, pool["epsilon"], channels))
            current = pooled
    if readout:
        stages.append(GlobalMeanReadout(current, channels))
        stages.append(AffineHead.create(channels, out_channels, rng))
    elif channels != out_channels:
        raise ConfigError(f"network produces {channels} channels, the experiment needs {out_channels}")
    return GMLSNetwork(stages)


def make_optimizer(params: OptimizerParams) -> Optimizer:
    return Optimizer(params["kind"], params["lr"])


def batch_size_of(params: OptimizerParams) -> int:
    return params.get("batch_size", DEFAULT_BATCH_SIZE)


def split_ids(n_train: int, n_test: int) -> Tuple[List[int], List[int]]:
    """Train samples use indices 0..n_train-1, test samples the following ones."""
    return list(range(n_train)), list(range(n_train, n_train + n_test))


def check_thresholds(metrics: Dict[str, float], rules: Dict[str, Tuple[str, Callable[[float, float], bool]]], acceptance: Dict[str, Any]) -> Dict[str, bool]:
    """
    Evaluates every configured threshold.

    Parameters
    ----------
    metrics : Dict[str, float]
        Computed metrics.
    rules : Dict[str, Tuple[str, Callable]]
        Acceptance key -> (metric name, comparison(metric, threshold)).
    acceptance : Dict[str, Any]
        The config's acceptance section.
    """
    checks = {}
    for key, (metric, compare) in rules.items():
        if key in acceptance:
            checks[key] = bool(compare(metrics[metric], acceptance[key]))
    return checks


def output_dir(config: Dict[str, Any], override: str | None) -> str:
    if override:
        return FileUtils.ensure_dir(override)
    default = os.path.join("runs", FileUtils.clean_filename(config["experiment"]))
    return FileUtils.ensure_dir(config.get("output", {}).get("dir", default))


def _field_header(prefix: str, shape: Tuple[int, ...]) -> List[str]:
    if len(shape) == 1:
        return [f"{prefix}{k}" for k in range(shape[0])]
    return [f"p{j}c{c}" for j in range(shape[0]) for c in range(shape[1])]


def write_dataset_bundle(dataset: Dataset, cloud: PointCloud, directory: str, config: Dict[str, Any]) -> str:
    """
    Writes a dataset as CSV matrices (one row per sample) plus the input cloud
    and a JSON manifest holding the config, seeds, sample ids and SHA-256 hashes.

    Returns
    -------
    str
        Path of the manifest.
    """
    FileUtils.ensure_dir(directory)
    files = {"cloud": cloud.to_csv(os.path.join(directory, "cloud.csv"))}
    for name in ("train_inputs", "train_targets", "test_inputs", "test_targets"):
        array = getattr(dataset, name)
        header = _field_header("y", array.shape[1:])
        files[name] = FileUtils.write_csv(
            os.path.join(directory, f"{name}.csv"), header, array.reshape(array.shape[0], -1)
        )
    manifest = {
        "version": DATASET_SCHEMA_VERSION,
        "config": config,
        "seed": dataset.seed,
        "train_ids": dataset.train_ids,
        "test_ids": dataset.test_ids,
        "shapes": {
            name: list(getattr(dataset, name).shape)
            for name in ("train_inputs", "train_targets", "test_inputs", "test_targets")
        },
        "periodic_box": None if cloud.periodic_box is None else cloud.periodic_box.tolist(),
        "metadata": dataset.metadata,
        "files": {name: {"path": os.path.basename(path), "sha256": FileUtils.sha256(path)} for name, path in files.items()},
    }
    return FileUtils.write_json(os.path.join(directory, "manifest.json"), manifest)


def read_dataset_bundle(directory: str) -> Tuple[Dataset, PointCloud]:
    """
    Reads a bundle written by `write_dataset_bundle`, verifying every hash.

    Raises
    ------
    DataGenError
        A file is missing, altered, or of the wrong shape.
    """
    manifest_path = os.path.join(directory, "manifest.json")
    if not os.path.exists(manifest_path):
        raise DataGenError(f"No dataset manifest in {directory}")
    manifest = FileUtils.read_json(manifest_path)
    if manifest.get("version") != DATASET_SCHEMA_VERSION:
        raise DataGenError(f"Unsupported dataset version {manifest.get('version')}")
    paths = {}
    for name, entry in manifest["files"].items():
        path = os.path.join(directory, entry["path"])
        if not os.path.exists(path):
            raise DataGenError(f"Dataset file {path} is missing")
        if FileUtils.sha256(path) != entry["sha256"]:
            raise DataGenError(f"Dataset file {path} does not match its manifest hash")
        paths[name] = path
    arrays = {}
    for name, shape in manifest["shapes"].items():
        _, rows = FileUtils.read_csv(paths[name])
        arrays[name] = rows.reshape(shape)
    cloud = PointCloud.from_csv(paths["cloud"], manifest["periodic_box"])
    dataset = Dataset(
        arrays["train_inputs"],
        arrays["train_targets"],
        arrays["test_inputs"],
        arrays["test_targets"],
        list(manifest["train_ids"]),
        list(manifest["test_ids"]),
        int(manifest["seed"]),
        manifest.get("metadata", {}),
    )
    return dataset, cloud
