"""
Losses, optimizers and the training loop for GMLS networks, plus a direct
least-squares solver for networks whose output is linear in the weights of
their first layer.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Tuple

import numpy as np
import scipy.linalg as la

from gmls_nets.models.models import LossRecord
from gmls_nets.nets.gradients import GradientTape, network_backward
from gmls_nets.nets.layer import Activation, FixedLinearStage, GMLSLayer, GMLSNetwork
from gmls_nets.utils.constants import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPSILON,
    DEFAULT_BATCH_SIZE,
    DEFAULT_LEARNING_RATE,
    LEAST_SQUARES_CHUNK,
)
from gmls_nets.utils.errors_utils import GeometryError, TrainingDivergedError, check_disjoint
from gmls_nets.utils.file_utils import FileUtils

logger = logging.getLogger(__name__)


@dataclass
class Dataset:
    """
    Input/target pairs on fixed clouds, split into train and test.

    Parameters
    ----------
    train_inputs, test_inputs : np.ndarray
        Shape (n, N_in, C_in).
    train_targets, test_targets : np.ndarray
        Shape (n, N_out, C_out), or (n, k) for scalar outputs.
    train_ids, test_ids : List[int]
        Sample indices used to derive each sample's random stream; disjoint.
    seed : int
        Master seed.
    metadata : Dict[str, Any]
        Free-form description (operator, geometry, ...).
    """

    train_inputs: np.ndarray
    train_targets: np.ndarray
    test_inputs: np.ndarray
    test_targets: np.ndarray
    train_ids: List[int]
    test_ids: List[int]
    seed: int
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        check_disjoint(self.train_ids, self.test_ids)
        for split, inputs, targets, ids in (
            ("train", self.train_inputs, self.train_targets, self.train_ids),
            ("test", self.test_inputs, self.test_targets, self.test_ids),
        ):
            if not inputs.shape[0] == targets.shape[0] == len(ids):
                raise GeometryError(
                    f"{split} split: {inputs.shape[0]} inputs, {targets.shape[0]} targets, {len(ids)} ids"
                )
        if self.train_inputs.shape[1:] != self.test_inputs.shape[1:]:
            raise GeometryError("Train and test inputs live on different geometries")

    @property
    def n_train(self) -> int:
        return self.train_inputs.shape[0]

    @property
    def n_test(self) -> int:
        return self.test_inputs.shape[0]


def mse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean squared error and its cotangent 2 (pred - target) / n.

    Raises
    ------
    ValueError
        Shapes differ.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"Prediction shape {pred.shape} does not match target shape {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def relative_l2(pred: np.ndarray, target: np.ndarray) -> float:
    """||pred - target|| / ||target|| over all entries."""
    norm = np.linalg.norm(target)
    if norm == 0:
        return float(np.linalg.norm(pred))
    return float(np.linalg.norm(np.asarray(pred) - target) / norm)


def relative_rmse(pred: np.ndarray, target: np.ndarray) -> float:
    """RMS error divided by the RMS of the targets."""
    return float(np.sqrt(np.mean((np.asarray(pred) - target) ** 2) / np.mean(np.asarray(target) ** 2)))


class Optimizer:
    """
    Plain SGD or Adam over the parameter registry of a network. Updates are in
    place, so checkpoints and layers always hold the current parameters.

    Parameters
    ----------
    kind : Literal["sgd", "adam"]
        Update rule.
    lr : float
        Learning rate.
    beta1, beta2, eps : float
        Adam constants.
    """

    def __init__(
        self,
        kind: Literal["sgd", "adam"] = "adam",
        lr: float = DEFAULT_LEARNING_RATE,
        beta1: float = ADAM_BETA1,
        beta2: float = ADAM_BETA2,
        eps: float = ADAM_EPSILON,
    ) -> None:
        if kind not in ("sgd", "adam"):
            raise ValueError(f"Unknown optimizer '{kind}'")
        self.kind = kind
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.steps = 0
        self.state: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}

    def step(self, net: GMLSNetwork, grads: Dict[str, np.ndarray]) -> None:
        params = net.parameters()
        self.steps += 1
        for param_id, value in params.items():
            grad = grads[param_id]
            if grad.shape != value.shape:
                raise GeometryError(f"Gradient of {param_id} has shape {grad.shape}, parameter {value.shape}")
            if self.kind == "sgd":
                value -= self.lr * grad
                continue
            m, v = self.state.get(param_id, (np.zeros_like(value), np.zeros_like(value)))
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self.state[param_id] = (m, v)
            m_hat = m / (1.0 - self.beta1 ** self.steps)
            v_hat = v / (1.0 - self.beta2 ** self.steps)
            value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        net.bump_generation()


def predict(net: GMLSNetwork, inputs: np.ndarray, batch_size: int = 256) -> np.ndarray:
    chunks = [net.forward(inputs[start : start + batch_size]) for start in range(0, inputs.shape[0], batch_size)]
    return np.concatenate(chunks, axis=0)


def evaluate(net: GMLSNetwork, inputs: np.ndarray, targets: np.ndarray) -> Dict[str, float]:
    """MSE, relative l2 and relative RMSE of the network on a split."""
    pred = predict(net, inputs)
    loss, _ = mse_loss(pred, targets)
    return {"mse": loss, "rel_l2": relative_l2(pred, targets), "rel_rmse": relative_rmse(pred, targets)}


def train(
    net: GMLSNetwork,
    dataset: Dataset,
    optimizer: Optimizer,
    epochs: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
    seed: int = 0,
    log_every: int = 0,
    target_scaling: bool = False,
) -> Tuple[GMLSNetwork, List[LossRecord]]:
    """
    Minibatch training on the MSE loss.

    The first history entry (epoch 0) holds the losses before any update.
    With `target_scaling`, targets are divided by their training standard
    deviation while training and the scale is folded back into the network
    afterwards, so losses in the history are in scaled units but the returned
    network predicts physical values.

    Parameters
    ----------
    net : GMLSNetwork
        Network, updated in place.
    dataset : Dataset
        Training and test data.
    optimizer : Optimizer
        Update rule.
    epochs : int
        Number of passes over the training set.
    batch_size : int
        Samples per update.
    seed : int
        Seeds the shuffling order.
    log_every : int
        Log a summary every `log_every` epochs (0 disables).
    target_scaling : bool
        Train on standardized targets.

    Returns
    -------
    Tuple[GMLSNetwork, List[LossRecord]]
        The trained network and the loss history.

    Raises
    ------
    TrainingDivergedError
        The batch loss became non-finite.
    """
    scale = 1.0
    if target_scaling:
        scale = float(np.std(dataset.train_targets))
        if not scale > 0:
            scale = 1.0
        net.scale_output(1.0 / scale)
    train_targets = dataset.train_targets / scale
    test_targets = dataset.test_targets / scale
    rng = np.random.default_rng(seed)
    history: List[LossRecord] = []

    def record(epoch: int) -> None:
        train_loss, _ = mse_loss(predict(net, dataset.train_inputs), train_targets)
        test_loss, _ = mse_loss(predict(net, dataset.test_inputs), test_targets)
        history.append({"epoch": epoch, "train_loss": train_loss, "test_loss": test_loss})

    record(0)
    tape = GradientTape()
    for epoch in range(1, epochs + 1):
        order = rng.permutation(dataset.n_train)
        for batch, start in enumerate(range(0, dataset.n_train, batch_size)):
            idx = order[start : start + batch_size]
            pred = net.forward(dataset.train_inputs[idx], tape)
            loss, cotangent = mse_loss(pred, train_targets[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, batch, loss)
            optimizer.step(net, network_backward(net, tape, cotangent))
        record(epoch)
        if not np.isfinite(history[-1]["train_loss"]):
            raise TrainingDivergedError(epoch, -1, history[-1]["train_loss"])
        if log_every and epoch % log_every == 0:
            logger.info(
                "epoch %d: train %.4e, test %.4e", epoch, history[-1]["train_loss"], history[-1]["test_loss"]
            )
    if target_scaling:
        net.scale_output(scale)
    return net, history


def write_history(path: str, history: List[LossRecord]) -> str:
    rows = np.array([[h["epoch"], h["train_loss"], h["test_loss"]] for h in history], dtype=float)
    return FileUtils.write_csv(path, ("epoch", "train_loss", "test_loss"), rows.reshape(-1, 3))


def _linear_layer(net: GMLSNetwork) -> GMLSLayer:
    layer = net.stages[0]
    if not isinstance(layer, GMLSLayer) or layer.functional_map.kind != "linear":
        raise GeometryError("Least-squares oracle needs a linear GMLS layer as first stage")
    for stage in net.stages[1:]:
        linear = isinstance(stage, FixedLinearStage) or (isinstance(stage, Activation) and stage.kind == "identity")
        if not linear:
            raise GeometryError(f"Least-squares oracle cannot pass through {type(stage).__name__}")
    return layer


def solve_linear_least_squares(
    net: GMLSNetwork, inputs: np.ndarray, targets: np.ndarray, chunk_size: int = LEAST_SQUARES_CHUNK
) -> Tuple[np.ndarray, float]:
    """
    Direct least-squares fit of the weights of a linear network (a linear GMLS
    layer optionally followed by fixed linear stages).

    The network output is linear in xi, so the feature column of every weight
    entry xi[o, w] is the full network output at the unit weight e_(o, w). All
    entries are solved jointly, so later stages may mix output channels.
    Samples are processed in blocks of `chunk_size` and folded into the
    triangular factor of an incremental QR, which keeps memory at one block of
    features. The network's weights are restored before returning.

    Returns
    -------
    Tuple[np.ndarray, float]
        Optimal xi, shape (C_out, C_in * Q), and the optimal MSE.

    Raises
    ------
    GeometryError
        The network is not linear in its first layer, or the targets do not
        match the network output.
    """
    layer = _linear_layer(net)
    xi = layer.functional_map.weights[0]
    saved = xi.copy()
    n_weights = xi.size
    factor = np.zeros((0, n_weights + 1))
    n_entries = 0
    try:
        for start in range(0, len(inputs), chunk_size):
            block = inputs[start : start + chunk_size]
            rhs = np.asarray(targets[start : start + chunk_size], dtype=float).reshape(-1)
            columns = []
            for flat in range(n_weights):
                xi[...] = 0.0
                xi.flat[flat] = 1.0
                column = net.forward(block).reshape(-1)
                if column.size != rhs.size:
                    raise GeometryError(f"Network output has {column.size} entries per block, targets {rhs.size}")
                columns.append(column)
            n_entries += rhs.size
            stacked = np.vstack([factor, np.column_stack(columns + [rhs])])
            factor = la.qr(stacked, mode="r")[0][: n_weights + 1]
    finally:
        xi[...] = saved
    # Q is orthogonal, so the reduced system has the residual of the full one
    solution, *_ = la.lstsq(factor[:, :n_weights], factor[:, n_weights])
    residual = factor[:, :n_weights] @ solution - factor[:, n_weights]
    return solution.reshape(xi.shape), float(residual @ residual) / max(n_entries, 1)


def fit_linear_least_squares(net: GMLSNetwork, inputs: np.ndarray, targets: np.ndarray) -> float:
    """
    Sets the first-layer weights of a linear network to the least-squares
    optimum on the given data and returns the optimal MSE.
    """
    solution, mse = solve_linear_least_squares(net, inputs, targets)
    _linear_layer(net).functional_map.weights[0][...] = solution
    net.bump_generation()
    logger.info("least-squares fit of %d weights, train mse %.4e", solution.size, mse)
    return mse
