"""
GMLS layers, pooling and readout stages, and their composition into a network.

Fields travel between stages as arrays of shape (B, N, C): batch, points,
channels. Every stage's `forward` accepts an optional gradient tape and, when
given one, records whatever its backward rule (see `gmls_nets.nets.gradients`)
needs.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from gmls_nets.geometry.basis import MonomialBasis
from gmls_nets.geometry.point_cloud import PointCloud, WeightKernel, build_neighbors
from gmls_nets.gmls.estimator import GMLSGeometry, StencilMatrix, export_stencil
from gmls_nets.models.models import Activation as ActivationName
from gmls_nets.models.models import MapKind, Reducer
from gmls_nets.utils.constants import CHECKPOINT_SCHEMA_VERSION
from gmls_nets.utils.data_converter import DataConverter
from gmls_nets.utils.errors_utils import FieldErrors, GeometryError, StencilError
from gmls_nets.utils.file_utils import FileUtils

logger = logging.getLogger(__name__)


def activate(name: ActivationName, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "tanh":
        return np.tanh(x)
    if name == "identity":
        return x
    raise ValueError(f"Unknown activation '{name}'")


def activate_derivative(name: ActivationName, pre: np.ndarray) -> np.ndarray:
    """Derivative at the pre-activation; relu'(0) = 0."""
    if name == "relu":
        return (pre > 0).astype(float)
    if name == "tanh":
        return 1.0 - np.tanh(pre) ** 2
    if name == "identity":
        return np.ones_like(pre)
    raise ValueError(f"Unknown activation '{name}'")


@dataclass
class FunctionalMap:
    """
    The learnable map q from concatenated coefficient vectors to output channels.

    Parameters
    ----------
    kind : MapKind
        "linear": out = xi a, with `weights == [xi]` of shape (C_out, in_width).
        "mlp": dense layers W_l, b_l with `activation` between them and a
        linear last layer.
    in_width : int
        C_in * Q.
    out_channels : int
        C_out.
    weights : List[np.ndarray]
        Weight matrices, each (fan_out, fan_in).
    biases : List[np.ndarray]
        Bias vectors (empty for the linear kind).
    activation : ActivationName
        Hidden activation of the mlp kind.
    """

    kind: MapKind
    in_width: int
    out_channels: int
    weights: List[np.ndarray]
    biases: List[np.ndarray] = field(default_factory=list)
    activation: ActivationName = "relu"

    def __post_init__(self) -> None:
        if not self.weights or self.weights[0].shape[1] != self.in_width:
            raise GeometryError(f"First weight matrix must have {self.in_width} columns")
        if self.weights[-1].shape[0] != self.out_channels:
            raise GeometryError(f"Last weight matrix must have {self.out_channels} rows")
        if self.kind == "linear" and (len(self.weights) != 1 or self.biases):
            raise GeometryError("A linear functional map has exactly one weight matrix and no bias")
        if self.kind == "mlp" and len(self.biases) != len(self.weights):
            raise GeometryError("An mlp functional map needs one bias per weight matrix")
        for w_prev, w_next in zip(self.weights, self.weights[1:]):
            if w_prev.shape[0] != w_next.shape[1]:
                raise GeometryError(f"Incompatible mlp layer widths {w_prev.shape} -> {w_next.shape}")

    @staticmethod
    def linear(in_width: int, out_channels: int, rng: np.random.Generator | None = None) -> "FunctionalMap":
        """Linear map with xi ~ N(0, 1/in_width), or zeros when `rng` is None."""
        if rng is None:
            xi = np.zeros((out_channels, in_width))
        else:
            xi = rng.normal(0.0, np.sqrt(1.0 / in_width), size=(out_channels, in_width))
        return FunctionalMap("linear", in_width, out_channels, [xi])

    @staticmethod
    def mlp(
        in_width: int,
        out_channels: int,
        hidden: Sequence[int],
        rng: np.random.Generator,
        activation: ActivationName = "relu",
    ) -> "FunctionalMap":
        """MLP with W ~ N(0, 2/fan_in) and zero biases."""
        widths = [in_width, *hidden, out_channels]
        weights, biases = [], []
        for fan_in, fan_out in zip(widths, widths[1:]):
            weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return FunctionalMap("mlp", in_width, out_channels, weights, biases, activation)

    def parameters(self) -> Dict[str, np.ndarray]:
        if self.kind == "linear":
            return {"xi": self.weights[0]}
        params = {}
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"W{l}"] = w
            params[f"b{l}"] = b
        return params

    def forward(self, a: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """
        Parameters
        ----------
        a : np.ndarray
            Concatenated coefficients, shape (n, in_width).

        Returns
        -------
        Tuple[np.ndarray, List[np.ndarray]]
            Output (n, out_channels) and the layer inputs/pre-activations used by backward.
        """
        if self.kind == "linear":
            return a @ self.weights[0].T, [a]
        activations = [a]
        h = a
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            if l < last:
                activations.append(z)
                h = activate(self.activation, z)
            else:
                h = z
        return h, activations

    def as_linear(self) -> np.ndarray:
        """
        Weights of the equivalent linear map.

        Raises
        ------
        StencilError
            The map is not linear in the coefficients.
        """
        if self.kind == "linear":
            return self.weights[0]
        if len(self.weights) == 1 and not np.any(self.biases[0]):
            return self.weights[0]
        raise StencilError("Stencils exist only for linear functional maps")

    def scale_output(self, factor: float) -> None:
        self.weights[-1] *= factor
        if self.biases:
            self.biases[-1] *= factor

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "in_width": self.in_width,
            "out_channels": self.out_channels,
            "activation": self.activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "FunctionalMap":
        return FunctionalMap(
            data["kind"],
            int(data["in_width"]),
            int(data["out_channels"]),
            [np.asarray(w, dtype=float) for w in data["weights"]],
            [np.asarray(b, dtype=float) for b in data["biases"]],
            data.get("activation", "relu"),
        )


def _as_batch(values: np.ndarray) -> Tuple[np.ndarray, bool]:
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        return values[None], True
    if values.ndim != 3:
        raise GeometryError(f"Fields must have shape (N, C) or (B, N, C), got {values.shape}")
    return values, False


@dataclass
class LayerCache:
    field: np.ndarray | List[np.ndarray]
    coefficients: np.ndarray
    map_cache: List[np.ndarray]


class GMLSLayer:
    """
    A GMLS layer: encode each input channel into local polynomial coefficients
    on the target cloud, concatenate them and apply the functional map.

    Parameters
    ----------
    source : PointCloud
        Sampling sites of the input channels.
    target : PointCloud
        Sites where the output is produced; a smaller cloud gives a strided layer.
    kernel : WeightKernel
        Weight kernel.
    basis : MonomialBasis
        Polynomial basis.
    functional_map : FunctionalMap
        Map q; its input width must be in_channels * Q.
    channel_sources : List[PointCloud] | None
        Optional sampling cloud per input channel. When given, the input field
        is a list with one (N_c,) or (B, N_c) array per channel.
    """

    def __init__(
        self,
        source: PointCloud,
        target: PointCloud,
        kernel: WeightKernel,
        basis: MonomialBasis,
        functional_map: FunctionalMap,
        channel_sources: List[PointCloud] | None = None,
        method: Literal["grid", "brute"] = "grid",
    ) -> None:
        q = basis.size
        if functional_map.in_width % q:
            raise GeometryError(f"Functional map width {functional_map.in_width} is not a multiple of Q={q}")
        self.in_channels = functional_map.in_width // q
        if channel_sources is not None and len(channel_sources) != self.in_channels:
            raise GeometryError(f"{len(channel_sources)} channel clouds for {self.in_channels} input channels")
        self.source = source
        self.target = target
        self.kernel = kernel
        self.basis = basis
        self.functional_map = functional_map
        self.channel_sources = channel_sources
        self.method = method
        clouds = channel_sources or [source]
        self.geometries = [GMLSGeometry.build(c, target, kernel, basis, method) for c in clouds]

    @property
    def out_channels(self) -> int:
        return self.functional_map.out_channels

    @property
    def in_cloud(self) -> PointCloud:
        return self.source

    @property
    def out_cloud(self) -> PointCloud:
        return self.target

    def geometry_of(self, channel: int) -> GMLSGeometry:
        return self.geometries[channel] if self.channel_sources is not None else self.geometries[0]

    def parameters(self) -> Dict[str, np.ndarray]:
        return self.functional_map.parameters()

    def encode(self, values: np.ndarray | List[np.ndarray]) -> np.ndarray:
        """Coefficients of all input channels, shape (B, N_tgt, C_in, Q)."""
        if self.channel_sources is None:
            batch, _ = _as_batch(values)
            FieldErrors.throw_error(batch, self.source.size, "GMLS layer input")
            if batch.shape[2] != self.in_channels:
                raise GeometryError(f"GMLS layer expects {self.in_channels} channels, got {batch.shape[2]}")
            return self.geometries[0].coefficients(batch)
        if len(values) != self.in_channels:
            raise GeometryError(f"Expected {self.in_channels} per-channel fields, got {len(values)}")
        parts = []
        for c, channel in enumerate(values):
            channel = np.asarray(channel, dtype=float)
            if channel.ndim == 1:
                channel = channel[None]
            parts.append(self.geometries[c].coefficients(channel[:, :, None]))
        return np.concatenate(parts, axis=2)

    def forward(self, values: np.ndarray | List[np.ndarray], tape: Any = None) -> np.ndarray:
        """
        Parameters
        ----------
        values : np.ndarray | List[np.ndarray]
            Field of shape (N_src, C_in) or (B, N_src, C_in), or per-channel arrays.
        tape : GradientTape | None
            Records the forward cache when given.

        Returns
        -------
        np.ndarray
            Shape (N_tgt, C_out) or (B, N_tgt, C_out).
        """
        single = not isinstance(values, list) and np.ndim(values) == 2
        if isinstance(values, list):
            single = np.ndim(values[0]) == 1
        coefficients = self.encode(values)
        b, n_tgt, c, q = coefficients.shape
        out, map_cache = self.functional_map.forward(coefficients.reshape(b * n_tgt, c * q))
        out = out.reshape(b, n_tgt, self.out_channels)
        if tape is not None:
            tape.record(self, LayerCache(values, coefficients, map_cache))
        return out[0] if single else out

    def stencil(self) -> StencilMatrix:
        """Explicit stencil of the layer; linear maps on a shared source cloud only."""
        if self.channel_sources is not None and len(self.geometries) > 1:
            raise StencilError("Stencil export needs every channel sampled on the same cloud")
        return export_stencil(self.functional_map, self.geometries[0], self.in_channels)

    def scale_output(self, factor: float) -> None:
        self.functional_map.scale_output(factor)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "gmls",
            "source": self.source.to_dict(),
            "target": self.target.to_dict(),
            "kernel": {"epsilon": self.kernel.epsilon, "power": self.kernel.power},
            "basis": self.basis.to_dict(),
            "map": self.functional_map.to_dict(),
            "channel_sources": None
            if self.channel_sources is None
            else [c.to_dict() for c in self.channel_sources],
        }


class PoolingLayer:
    """
    Channel-wise max or mean over the epsilon-ball of every target point.

    Max pooling breaks ties by the lowest source index; mean pooling is a
    sparse averaging matrix.
    """

    def __init__(self, reducer: Reducer, source: PointCloud, target: PointCloud, epsilon: float, channels: int = 1) -> None:
        if reducer not in ("max", "mean"):
            raise GeometryError(f"Unknown pooling reducer '{reducer}'")
        self.reducer = reducer
        self.source = source
        self.target = target
        self.epsilon = float(epsilon)
        self.in_channels = channels
        self.neighbors = build_neighbors(source, target, epsilon)
        counts = self.neighbors.counts()
        width = int(counts.max())
        # padded[i, k] = k-th neighbor of i; padding repeats the first neighbor
        self.padded = np.empty((target.size, width), dtype=np.int64)
        self.mask = np.zeros((target.size, width), dtype=bool)
        for i, idx in enumerate(self.neighbors.indices):
            self.padded[i, : idx.size] = idx
            self.padded[i, idx.size :] = idx[0]
            self.mask[i, : idx.size] = True
        rows = np.repeat(np.arange(target.size), counts)
        cols = np.concatenate(self.neighbors.indices)
        self.averaging = sp.csr_matrix(
            (np.repeat(1.0 / counts, counts), (rows, cols)), shape=(target.size, source.size)
        )

    @property
    def out_channels(self) -> int:
        return self.in_channels

    @property
    def in_cloud(self) -> PointCloud:
        return self.source

    @property
    def out_cloud(self) -> PointCloud:
        return self.target

    def parameters(self) -> Dict[str, np.ndarray]:
        return {}

    def forward(self, values: np.ndarray, tape: Any = None) -> np.ndarray:
        batch, single = _as_batch(values)
        FieldErrors.throw_error(batch, self.source.size, "Pooling input")
        if self.reducer == "mean":
            b, n, c = batch.shape
            out = (self.averaging @ batch.transpose(1, 0, 2).reshape(n, b * c)).reshape(self.target.size, b, c)
            out = out.transpose(1, 0, 2)
            cache = None
        else:
            gathered = batch[:, self.padded, :]
            gathered = np.where(self.mask[None, :, :, None], gathered, -np.inf)
            position = np.argmax(gathered, axis=2)
            argmax = self.padded[np.arange(self.target.size)[None, :, None], position]
            out = np.take_along_axis(gathered, position[:, :, None, :], axis=2)[:, :, 0, :]
            cache = argmax
        if tape is not None:
            tape.record(self, cache)
        return out[0] if single else out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "pool",
            "reducer": self.reducer,
            "source": self.source.to_dict(),
            "target": self.target.to_dict(),
            "epsilon": self.epsilon,
            "channels": self.in_channels,
        }


class Activation:
    """Pointwise nonlinearity; keeps cloud and channels."""

    def __init__(self, kind: ActivationName) -> None:
        activate(kind, np.zeros(1))
        self.kind = kind

    def parameters(self) -> Dict[str, np.ndarray]:
        return {}

    def forward(self, values: np.ndarray, tape: Any = None) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if tape is not None:
            tape.record(self, values)
        return activate(self.kind, values)

    def to_dict(self) -> Dict[str, Any]:
        return {"type": "activation", "kind": self.kind}


class GlobalMeanReadout:
    """Average over the points of a cloud: (B, N, C) -> (B, C)."""

    def __init__(self, cloud: PointCloud, channels: int) -> None:
        self.cloud = cloud
        self.in_channels = channels

    @property
    def out_channels(self) -> int:
        return self.in_channels

    @property
    def in_cloud(self) -> PointCloud:
        return self.cloud

    def parameters(self) -> Dict[str, np.ndarray]:
        return {}

    def forward(self, values: np.ndarray, tape: Any = None) -> np.ndarray:
        batch, single = _as_batch(values)
        FieldErrors.throw_error(batch, self.cloud.size, "Readout input")
        if tape is not None:
            tape.record(self, batch.shape[1])
        out = batch.mean(axis=1)
        return out[0] if single else out

    def to_dict(self) -> Dict[str, Any]:
        return {"type": "readout", "cloud": self.cloud.to_dict(), "channels": self.in_channels}


class AffineHead:
    """Dense map on readout features: (B, C_in) -> (B, C_out), y = x W^T + b."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray) -> None:
        self.weight = np.asarray(weight, dtype=float)
        self.bias = np.asarray(bias, dtype=float)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise GeometryError("Affine head needs weight (C_out, C_in) and bias (C_out,)")

    @staticmethod
    def create(in_features: int, out_features: int, rng: np.random.Generator) -> "AffineHead":
        weight = rng.normal(0.0, np.sqrt(1.0 / in_features), size=(out_features, in_features))
        return AffineHead(weight, np.zeros(out_features))

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"W": self.weight, "b": self.bias}

    def forward(self, values: np.ndarray, tape: Any = None) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        single = values.ndim == 1
        x = values[None] if single else values
        if tape is not None:
            tape.record(self, x)
        out = x @ self.weight.T + self.bias
        return out[0] if single else out

    def scale_output(self, factor: float) -> None:
        self.weight *= factor
        self.bias *= factor

    def to_dict(self) -> Dict[str, Any]:
        return {"type": "affine", "weight": self.weight.tolist(), "bias": self.bias.tolist()}


class FixedLinearStage:
    """
    A fixed sparse linear map applied channel by channel, e.g. the face-flux
    divergence of a finite volume model. Not trainable.
    """

    def __init__(self, matrix: sp.spmatrix, source: PointCloud, target: PointCloud, channels: int = 1) -> None:
        self.matrix = sp.csr_matrix(matrix)
        if self.matrix.shape != (target.size, source.size):
            raise GeometryError(f"Matrix shape {self.matrix.shape} does not map {source.size} to {target.size} points")
        self.source = source
        self.target = target
        self.in_channels = channels

    @property
    def out_channels(self) -> int:
        return self.in_channels

    @property
    def in_cloud(self) -> PointCloud:
        return self.source

    @property
    def out_cloud(self) -> PointCloud:
        return self.target

    def parameters(self) -> Dict[str, np.ndarray]:
        return {}

    def forward(self, values: np.ndarray, tape: Any = None) -> np.ndarray:
        batch, single = _as_batch(values)
        b, n, c = batch.shape
        out = (self.matrix @ batch.transpose(1, 0, 2).reshape(n, b * c)).reshape(self.target.size, b, c)
        out = out.transpose(1, 0, 2)
        if tape is not None:
            tape.record(self, None)
        return out[0] if single else out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "fixed",
            "matrix": DataConverter.sparse_to_dict(self.matrix),
            "source": self.source.to_dict(),
            "target": self.target.to_dict(),
            "channels": self.in_channels,
        }


Stage = GMLSLayer | PoolingLayer | Activation | GlobalMeanReadout | AffineHead | FixedLinearStage


class GMLSNetwork:
    """
    An ordered stack of stages with a parameter registry.

    Parameter IDs are "s{stage index}.{name}", e.g. "s0.xi" or "s2.W1". The
    `generation` counter increases on every parameter update so gradient tapes
    recorded before an update can be detected as stale.

    Raises
    ------
    GeometryError
        At construction, when adjacent stages disagree on cloud or channel count.
    """

    def __init__(self, stages: Sequence[Stage]) -> None:
        if not stages:
            raise GeometryError("A network needs at least one stage")
        self.stages: List[Stage] = list(stages)
        self.generation = 0
        self._check_compatibility()

    def _check_compatibility(self) -> None:
        cloud: PointCloud | None = None
        channels: int | None = None
        pointwise = True
        for index, stage in enumerate(self.stages):
            where = f"stage {index} ({type(stage).__name__})"
            if isinstance(stage, Activation):
                continue
            if isinstance(stage, AffineHead):
                if pointwise:
                    raise GeometryError(f"{where}: an affine head must follow a global readout")
                if channels is not None and stage.in_channels != channels:
                    raise GeometryError(f"{where}: expects {stage.in_channels} features, previous stage gives {channels}")
                channels = stage.out_channels
                continue
            if not pointwise:
                raise GeometryError(f"{where}: point stages cannot follow a global readout")
            if cloud is not None and stage.in_cloud.fingerprint() != cloud.fingerprint():
                raise GeometryError(f"{where}: input cloud differs from the previous stage's output cloud")
            if channels is not None and stage.in_channels != channels:
                raise GeometryError(f"{where}: expects {stage.in_channels} channels, previous stage gives {channels}")
            if isinstance(stage, GMLSLayer) and stage.channel_sources is not None and index > 0:
                raise GeometryError(f"{where}: per-channel sampling clouds are only allowed in the first stage")
            channels = stage.out_channels
            if isinstance(stage, GlobalMeanReadout):
                pointwise = False
            else:
                cloud = stage.out_cloud

    @property
    def input_cloud(self) -> PointCloud:
        for stage in self.stages:
            if not isinstance(stage, Activation):
                return stage.in_cloud
        raise GeometryError("Network has no point stage")

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {}
        for index, stage in enumerate(self.stages):
            for name, value in stage.parameters().items():
                params[f"s{index}.{name}"] = value
        return params

    def bump_generation(self) -> None:
        self.generation += 1

    def forward(self, values: np.ndarray | List[np.ndarray], tape: Any = None) -> np.ndarray:
        """
        Applies every stage in order.

        Parameters
        ----------
        values : np.ndarray | List[np.ndarray]
            Input field, (N, C) or (B, N, C).
        tape : GradientTape | None
            Started for this network and filled with stage caches when given.
        """
        single = not isinstance(values, list) and np.ndim(values) == 2
        if isinstance(values, list):
            single = np.ndim(values[0]) == 1
        if tape is not None:
            tape.start(self)
        x = values
        if single and not isinstance(values, list):
            x = np.asarray(values, dtype=float)[None]
        elif single:
            x = [np.asarray(v, dtype=float)[None] for v in values]
        for stage in self.stages:
            x = stage.forward(x, tape)
        return x[0] if single else x

    def scale_output(self, factor: float) -> None:
        """
        Multiplies the network output by `factor` > 0 through the last
        trainable stage. Stages after it must be positively homogeneous
        (linear maps, pooling, relu).
        """
        if not factor > 0:
            raise ValueError("Output scale factor must be positive")
        for stage in reversed(self.stages):
            if isinstance(stage, (GMLSLayer, AffineHead)):
                stage.scale_output(factor)
                self.bump_generation()
                return
            if isinstance(stage, Activation) and stage.kind == "tanh":
                raise GeometryError("Cannot fold an output scale through a tanh activation")
        raise GeometryError("Network has no trainable stage to scale")

    def to_checkpoint(self, metadata: Dict[str, Any] | None = None) -> Dict[str, Any]:
        return {
            "version": CHECKPOINT_SCHEMA_VERSION,
            "stages": [stage.to_dict() for stage in self.stages],
            "metadata": metadata or {},
        }

    def save(self, path: str, metadata: Dict[str, Any] | None = None) -> str:
        return FileUtils.write_json(path, self.to_checkpoint(metadata))

    @staticmethod
    def from_checkpoint(data: Dict[str, Any]) -> "GMLSNetwork":
        if data.get("version") != CHECKPOINT_SCHEMA_VERSION:
            raise GeometryError(f"Unsupported checkpoint version {data.get('version')}")
        return GMLSNetwork([_stage_from_dict(s) for s in data["stages"]])

    @staticmethod
    def load(path: str) -> "GMLSNetwork":
        return GMLSNetwork.from_checkpoint(FileUtils.read_json(path))


def _stage_from_dict(data: Dict[str, Any]) -> Stage:
    kind = data["type"]
    if kind == "gmls":
        source = PointCloud.from_dict(data["source"])
        kernel = WeightKernel(float(data["kernel"]["epsilon"]), int(data["kernel"]["power"]))
        channel_sources = data.get("channel_sources")
        return GMLSLayer(
            source,
            PointCloud.from_dict(data["target"]),
            kernel,
            MonomialBasis.from_dict(data["basis"]),
            FunctionalMap.from_dict(data["map"]),
            None if channel_sources is None else [PointCloud.from_dict(c) for c in channel_sources],
        )
    if kind == "pool":
        return PoolingLayer(
            data["reducer"],
            PointCloud.from_dict(data["source"]),
            PointCloud.from_dict(data["target"]),
            float(data["epsilon"]),
            int(data["channels"]),
        )
    if kind == "activation":
        return Activation(data["kind"])
    if kind == "readout":
        return GlobalMeanReadout(PointCloud.from_dict(data["cloud"]), int(data["channels"]))
    if kind == "affine":
        return AffineHead(np.asarray(data["weight"], dtype=float), np.asarray(data["bias"], dtype=float))
    if kind == "fixed":
        return FixedLinearStage(
            DataConverter.sparse_from_dict(data["matrix"]),
            PointCloud.from_dict(data["source"]),
            PointCloud.from_dict(data["target"]),
            int(data["channels"]),
        )
    raise GeometryError(f"Unknown stage type '{kind}' in checkpoint")


def layer_forward(layer: GMLSLayer, values: np.ndarray) -> np.ndarray:
    return layer.forward(values)


def pool_forward(pool: PoolingLayer, values: np.ndarray) -> np.ndarray:
    return pool.forward(values)


def network_forward(net: GMLSNetwork, values: np.ndarray) -> np.ndarray:
    return net.forward(values)
