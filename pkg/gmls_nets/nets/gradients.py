"""
Reverse-mode gradients of GMLS layers and networks.

With a = M^-1 r, M = sum_j w_ij Phi_j Phi_j^T and r = sum_j w_ij Phi_j u_j, the
coefficients are linear in the field, so the field cotangent is the transpose of
the stacked solve operator. Position derivatives use the matrix-inverse identity
d(M^-1) = -M^-1 dM M^-1 in adjoint form: with lambda = M^-1 g for an upstream
coefficient cotangent g and residuals e_j = u_j - Phi_j . a,

    dL/dx_i = sum_j dw_j (lambda . Phi_j) e_j
              + w_j [ (lambda . dPhi_j) e_j - (lambda . Phi_j)(dPhi_j . a) ].

Neighbor membership is frozen while differentiating.
"""

import logging
from dataclasses import dataclass
from functools import singledispatch
from typing import Any, Dict, List, Tuple

import numpy as np

from gmls_nets.gmls.estimator import normal_solve
from gmls_nets.nets.layer import (
    Activation,
    AffineHead,
    FixedLinearStage,
    FunctionalMap,
    GlobalMeanReadout,
    GMLSLayer,
    GMLSNetwork,
    LayerCache,
    PoolingLayer,
    activate,
    activate_derivative,
)
from gmls_nets.utils.constants import KERNEL_KINK_TOLERANCE
from gmls_nets.utils.errors_utils import KernelKinkError, MissingCacheError, StaleTapeError

logger = logging.getLogger(__name__)


class GradientTape:
    """
    Forward caches of the stages of one pass and the accumulated parameter gradients.

    Methods
    -------
    start(net)
        Forget previous records and remember the network generation.
    record(stage, cache)
        Called by stages during forward.
    cache_of(stage)
        Latest cache recorded for a stage.
    accumulate(param_id, grad)
        Add a gradient contribution.
    """

    def __init__(self) -> None:
        self.records: List[Tuple[Any, Any]] = []
        self.generation: int | None = None
        self.grads: Dict[str, np.ndarray] = {}
        self.input_cotangent: Any = None

    def start(self, net: GMLSNetwork) -> None:
        self.records = []
        self.grads = {}
        self.generation = net.generation

    def record(self, stage: Any, cache: Any) -> None:
        self.records.append((stage, cache))

    def cache_of(self, stage: Any) -> Any:
        for recorded, cache in reversed(self.records):
            if recorded is stage:
                return cache
        raise MissingCacheError(f"No forward cache recorded for {type(stage).__name__}")

    def accumulate(self, param_id: str, grad: np.ndarray) -> None:
        if param_id in self.grads:
            self.grads[param_id] = self.grads[param_id] + grad
        else:
            self.grads[param_id] = np.array(grad, dtype=float)

    def clear(self) -> None:
        self.records = []
        self.grads = {}
        self.generation = None


def map_backward(functional_map: FunctionalMap, cache: List[np.ndarray], upstream: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """
    Backpropagates through q.

    Parameters
    ----------
    functional_map : FunctionalMap
        The map.
    cache : List[np.ndarray]
        Input followed by hidden pre-activations, as returned by `FunctionalMap.forward`.
    upstream : np.ndarray
        Cotangent of the output, shape (n, out_channels).

    Returns
    -------
    Tuple[Dict[str, np.ndarray], np.ndarray]
        Parameter gradients and the cotangent of the input coefficients (n, in_width).
    """
    if functional_map.kind == "linear":
        (a,) = cache
        xi = functional_map.weights[0]
        return {"xi": upstream.T @ a}, upstream @ xi
    grads = {}
    delta = upstream
    n_layers = len(functional_map.weights)
    for l in range(n_layers - 1, -1, -1):
        if l == 0:
            h_in = cache[0]
        else:
            h_in = activate(functional_map.activation, cache[l])
        grads[f"W{l}"] = delta.T @ h_in
        grads[f"b{l}"] = delta.sum(axis=0)
        delta = delta @ functional_map.weights[l]
        if l > 0:
            delta = delta * activate_derivative(functional_map.activation, cache[l])
    return dict(sorted(grads.items())), delta


def _layer_cache(layer: GMLSLayer, cache: LayerCache | None) -> LayerCache:
    if cache is None:
        raise MissingCacheError("GMLS layer backward needs the cache of a forward pass")
    return cache


def _batched_upstream(layer: GMLSLayer, upstream: np.ndarray, cache: LayerCache) -> np.ndarray:
    b, n_tgt = cache.coefficients.shape[:2]
    return np.asarray(upstream, dtype=float).reshape(b, n_tgt, layer.out_channels)


def coefficient_cotangent(layer: GMLSLayer, cache: LayerCache, upstream: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """Parameter gradients and the cotangent of the coefficients, shape (B, N_tgt, C_in, Q)."""
    cache = _layer_cache(layer, cache)
    b, n_tgt, c, q = cache.coefficients.shape
    upstream = _batched_upstream(layer, upstream, cache)
    grads, d_a = map_backward(layer.functional_map, cache.map_cache, upstream.reshape(b * n_tgt, -1))
    return grads, d_a.reshape(b, n_tgt, c, q)


def grad_wrt_q(layer: GMLSLayer, cache: LayerCache, upstream: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Gradients of the functional-map parameters.

    For the linear kind dL/dxi = sum over targets of upstream (outer) a.

    Raises
    ------
    MissingCacheError
        `cache` is None.
    """
    grads, _ = coefficient_cotangent(layer, cache, upstream)
    return grads


def grad_wrt_field(layer: GMLSLayer, cache: LayerCache, upstream: np.ndarray) -> np.ndarray | List[np.ndarray]:
    """
    Cotangent of the input field: the transpose of the coefficient operator
    applied to the coefficient cotangent. Same structure as the forward input.
    """
    _, d_a = coefficient_cotangent(layer, cache, upstream)
    if layer.channel_sources is None:
        d_field = layer.geometries[0].coefficients_adjoint(d_a)
        return d_field[0] if np.ndim(cache.field) == 2 else d_field
    parts = []
    for c in range(layer.in_channels):
        part = layer.geometries[c].coefficients_adjoint(d_a[:, :, c : c + 1, :])[:, :, 0]
        parts.append(part[0] if np.ndim(cache.field[c]) == 1 else part)
    return parts


@dataclass
class PositionGradient:
    """
    Cotangents of point positions.

    Parameters
    ----------
    target : np.ndarray
        Shape (N_tgt, dim).
    source : np.ndarray | List[np.ndarray]
        Shape (N_src, dim), summed over the channels sharing the source cloud.
        For a layer with per-channel clouds, a list with one (N_c, dim) array
        per entry of `channel_sources`.
    """

    target: np.ndarray
    source: np.ndarray | List[np.ndarray]


def grad_wrt_positions(layer: GMLSLayer, cache: LayerCache, upstream: np.ndarray) -> PositionGradient:
    """
    Derivative of the loss with respect to target and source positions with
    the neighbor topology frozen.

    Raises
    ------
    KernelKinkError
        A neighbor lies within 1e-12 * epsilon of the kernel support boundary.
    MissingCacheError
        `cache` is None.
    """
    _, d_a = coefficient_cotangent(layer, cache, upstream)
    b, n_tgt, n_channels, q = d_a.shape
    dim = layer.target.dim
    epsilon = layer.kernel.epsilon
    d_target = np.zeros((n_tgt, dim))
    clouds = layer.channel_sources or [layer.source]
    d_sources = [np.zeros((cloud.size, dim)) for cloud in clouds]
    for c in range(n_channels):
        geometry = layer.geometry_of(c)
        d_source = d_sources[c] if layer.channel_sources is not None else d_sources[0]
        if layer.channel_sources is None:
            values = np.asarray(cache.field, dtype=float)
            values = (values[None] if values.ndim == 2 else values)[:, :, c]
        else:
            values = np.asarray(cache.field[c], dtype=float)
            values = values[None] if values.ndim == 1 else values
        for problem in geometry.problems:
            i = problem.target_index
            idx = problem.neighbor_indices
            r = geometry.neighbors.distances[i]
            near_edge = epsilon - r < KERNEL_KINK_TOLERANCE * epsilon
            if np.any(near_edge):
                raise KernelKinkError(i, int(idx[np.argmax(near_edge)]))
            g = d_a[:, i, c, :].T
            if not np.any(g):
                continue
            a = cache.coefficients[:, i, c, :].T
            lam = normal_solve(problem, g)
            phi = problem.design
            d_phi = layer.basis.center_gradient(problem.displacements)
            residual = values[:, idx].T - phi @ a
            phi_lam = phi @ lam
            dphi_lam = np.einsum("kqd,qm->kmd", d_phi, lam)
            dphi_a = np.einsum("kqd,qm->kmd", d_phi, a)
            safe_r = np.where(r > 0, r, 1.0)
            dr = np.where((r > 0)[:, None], -problem.displacements / safe_r[:, None], 0.0)
            dw = layer.kernel.derivative(r)[:, None] * dr
            pair = (
                dw * np.sum(phi_lam * residual, axis=1)[:, None]
                + problem.weights[:, None]
                * (
                    np.einsum("kmd,km->kd", dphi_lam, residual)
                    - np.einsum("km,kmd->kd", phi_lam, dphi_a)
                )
            )
            d_target[i] += pair.sum(axis=0)
            np.add.at(d_source, idx, -pair)
    return PositionGradient(target=d_target, source=d_sources if layer.channel_sources is not None else d_sources[0])


def pool_backward(pool: PoolingLayer, argmax: np.ndarray | None, upstream: np.ndarray) -> np.ndarray:
    """
    Max pooling routes each cotangent to the recorded argmax source; mean
    pooling spreads it uniformly over the neighborhood.
    """
    upstream = np.asarray(upstream, dtype=float)
    single = upstream.ndim == 2
    batch = upstream[None] if single else upstream
    b, n_tgt, c = batch.shape
    if pool.reducer == "mean":
        out = (pool.averaging.T @ batch.transpose(1, 0, 2).reshape(n_tgt, b * c)).reshape(pool.source.size, b, c)
        out = out.transpose(1, 0, 2)
    else:
        if argmax is None:
            raise MissingCacheError("Max pooling backward needs the argmax of a forward pass")
        out = np.zeros((b, pool.source.size, c))
        bi, _, ci = np.meshgrid(np.arange(b), np.arange(n_tgt), np.arange(c), indexing="ij")
        np.add.at(out, (bi, argmax, ci), batch)
    return out[0] if single else out


@singledispatch
def stage_backward(stage: Any, cache: Any, upstream: np.ndarray) -> Tuple[Dict[str, np.ndarray], Any]:
    raise TypeError(f"No backward rule for {type(stage).__name__}")


@stage_backward.register
def _(stage: GMLSLayer, cache: LayerCache, upstream: np.ndarray):
    grads, d_a = coefficient_cotangent(stage, cache, upstream)
    if stage.channel_sources is None:
        return grads, stage.geometries[0].coefficients_adjoint(d_a)
    return grads, [
        stage.geometries[c].coefficients_adjoint(d_a[:, :, c : c + 1, :])[:, :, 0] for c in range(stage.in_channels)
    ]


@stage_backward.register
def _(stage: PoolingLayer, cache: Any, upstream: np.ndarray):
    return {}, pool_backward(stage, cache, upstream)


@stage_backward.register
def _(stage: Activation, cache: np.ndarray, upstream: np.ndarray):
    return {}, upstream * activate_derivative(stage.kind, cache)


@stage_backward.register
def _(stage: GlobalMeanReadout, cache: int, upstream: np.ndarray):
    return {}, np.repeat(upstream[:, None, :] / cache, cache, axis=1)


@stage_backward.register
def _(stage: AffineHead, cache: np.ndarray, upstream: np.ndarray):
    return {"W": upstream.T @ cache, "b": upstream.sum(axis=0)}, upstream @ stage.weight


@stage_backward.register
def _(stage: FixedLinearStage, cache: Any, upstream: np.ndarray):
    b, n, c = upstream.shape
    out = (stage.matrix.T @ upstream.transpose(1, 0, 2).reshape(n, b * c)).reshape(stage.source.size, b, c)
    return {}, out.transpose(1, 0, 2)


def network_backward(net: GMLSNetwork, tape: GradientTape, loss_cotangent: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Backpropagates a cotangent of the network output through every stage.

    Parameters
    ----------
    net : GMLSNetwork
        The network that recorded `tape`.
    tape : GradientTape
        Tape of the latest forward pass.
    loss_cotangent : np.ndarray
        dL/d(output), same shape as the forward output.

    Returns
    -------
    Dict[str, np.ndarray]
        Gradient of every registered parameter, keyed by parameter ID.

    Raises
    ------
    StaleTapeError
        Parameters changed since the tape was recorded.
    MissingCacheError
        A stage has no record on the tape.
    """
    if tape.generation is None or tape.generation != net.generation:
        raise StaleTapeError(
            f"Tape recorded at generation {tape.generation}, network is at generation {net.generation}"
        )
    if len(tape.records) != len(net.stages):
        raise MissingCacheError(f"Tape holds {len(tape.records)} records for {len(net.stages)} stages")
    upstream = np.asarray(loss_cotangent, dtype=float)
    pointwise_output = not any(isinstance(s, GlobalMeanReadout) for s in net.stages)
    batched_ndim = 3 if pointwise_output else 2
    if upstream.ndim == batched_ndim - 1:
        upstream = upstream[None]
    for index in range(len(net.stages) - 1, -1, -1):
        stage = net.stages[index]
        recorded, cache = tape.records[index]
        if recorded is not stage:
            raise MissingCacheError(f"Tape record {index} belongs to a different stage")
        grads, upstream = stage_backward(stage, cache, upstream)
        for name, grad in grads.items():
            tape.accumulate(f"s{index}.{name}", grad)
    for param_id, value in net.parameters().items():
        if param_id not in tape.grads:
            tape.grads[param_id] = np.zeros_like(value)
    tape.input_cotangent = upstream
    return tape.grads
