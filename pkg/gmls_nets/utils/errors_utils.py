from typing import Any, Dict, List

import numpy as np


class GMLSError(Exception):
    """
    Root of every numerical failure raised by gmls_nets.
    The CLI maps it to exit code 3.
    """


class GeometryError(GMLSError, ValueError):
    """Inconsistent point clouds, kernels or bases."""


class EmptyNeighborhoodError(GeometryError):
    """
    A target point has no source point inside the kernel support.

    Parameters
    ----------
    target_index : int
        Index of the offending target point.
    epsilon : float
        Support radius of the query.
    """

    def __init__(self, target_index: int, epsilon: float) -> None:
        self.target_index = target_index
        self.epsilon = epsilon
        super().__init__(
            f"Target {target_index} has no source neighbor within epsilon={epsilon:g}"
        )


class UnisolvencyError(GMLSError):
    """
    The local least-squares problem of a target cannot determine the polynomial
    coefficients.

    Parameters
    ----------
    target_index : int
        Index of the target point whose problem is singular.
    neighbor_count : int
        Number of neighbors available to that target.
    basis_size : int
        Number of polynomial terms Q.
    """

    def __init__(self, target_index: int, neighbor_count: int, basis_size: int) -> None:
        self.target_index = target_index
        self.neighbor_count = neighbor_count
        self.basis_size = basis_size
        super().__init__(
            f"Target {target_index} is not unisolvent: {neighbor_count} neighbors "
            f"for a basis of size {basis_size}"
        )


class StencilError(GMLSError):
    """Stencils only exist for linear functional maps on a shared source cloud."""


class GradientError(GMLSError):
    """Base class for reverse-mode failures."""


class MissingCacheError(GradientError):
    """Backward requested for a stage that has no forward cache."""


class StaleTapeError(GradientError):
    """The tape was recorded before the latest parameter update."""


class KernelKinkError(GradientError):
    """
    A neighbor sits on the kernel support boundary, where the weight is not
    differentiable.
    """

    def __init__(self, target_index: int, source_index: int) -> None:
        self.target_index = target_index
        self.source_index = source_index
        super().__init__(
            f"Neighbor {source_index} of target {target_index} lies on the kernel support boundary"
        )


class TrainingDivergedError(GMLSError):
    """
    The loss became non-finite during training.

    Parameters
    ----------
    epoch : int
        Epoch index (0-based) at which the loss diverged.
    batch : int
        Batch index inside that epoch.
    """

    def __init__(self, epoch: int, batch: int, loss: float) -> None:
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"Loss became non-finite ({loss}) at epoch {epoch}, batch {batch}")


class IntegratorError(GMLSError):
    """
    The implicit system of a time model could not be solved.

    Parameters
    ----------
    condition : float
        Condition number estimate of the system matrix.
    """

    def __init__(self, message: str, condition: float) -> None:
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})")


class DataGenError(GMLSError, ValueError):
    """Invalid data generation request."""


class ConfigError(Exception):
    """
    Invalid experiment configuration. The CLI maps it to exit code 2.

    Parameters
    ----------
    message : str
        Human readable description.
    line : int | None
        1-based line of the offending entry in the config file, if known.
    source : str | None
        Path of the config file.
    """

    def __init__(self, message: str, line: int | None = None, source: str | None = None) -> None:
        self.message = message
        self.line = line
        self.source = source
        super().__init__(self.__str__())

    def __str__(self) -> str:
        location = self.source or "<config>"
        if self.line is not None:
            location = f"{location}:{self.line}"
        return f"{location}: {self.message}"


class GeometryConfigErrors:
    """
    Cross-field checks of the geometry, kernel and basis sections.

    The static method `throw_error` validates:
    1. `epsilon`: strictly positive support radius.
    2. `dim`: 1 or 2.
    3. `order`: nonnegative polynomial order.
    4. `n_points`: at least one point.

    The first failing check raises a `ConfigError` naming the section path.
    """

    @staticmethod
    def throw_error(geometry: Dict[str, Any], kernel: Dict[str, Any], basis: Dict[str, Any]) -> None:
        if kernel["epsilon"] <= 0:
            raise ConfigError("kernel.epsilon must be > 0")
        if kernel.get("power", 0) < 0:
            raise ConfigError("kernel.power must be >= 0")
        if geometry["dim"] not in (1, 2):
            raise ConfigError("geometry.dim must be 1 or 2")
        if basis["order"] < 0:
            raise ConfigError("basis.order must be >= 0")
        if geometry["n_points"] < 1:
            raise ConfigError("geometry.n_points must be >= 1")


class TrainingConfigErrors:
    """
    Cross-field checks of the optimizer section.

    The static method `throw_error` validates learning rate, epochs and batch size.
    """

    @staticmethod
    def throw_error(optimizer: Dict[str, Any]) -> None:
        if optimizer["lr"] <= 0:
            raise ConfigError("optimizer.lr must be > 0")
        if optimizer["epochs"] < 0:
            raise ConfigError("optimizer.epochs must be >= 0")
        if optimizer.get("batch_size", 1) < 1:
            raise ConfigError("optimizer.batch_size must be >= 1")


class FieldErrors:
    """
    Checks applied to field arrays before they enter a stage.
    """

    @staticmethod
    def throw_error(values: np.ndarray, expected_rows: int, what: str) -> None:
        """
        Validate the row count and finiteness of a field.

        Parameters
        ----------
        values : np.ndarray
            Field array whose second-to-last axis indexes points.
        expected_rows : int
            Number of points the stage expects.
        what : str
            Label used in the error message.
        """
        if values.shape[-2] != expected_rows:
            raise GeometryError(
                f"{what}: expected {expected_rows} points, got {values.shape[-2]}"
            )
        if not np.all(np.isfinite(values)):
            raise GeometryError(f"{what}: field contains non-finite values")


def check_disjoint(train_ids: List[int], test_ids: List[int]) -> None:
    overlap = set(train_ids).intersection(test_ids)
    if overlap:
        raise DataGenError(f"Train and test splits overlap on {len(overlap)} samples")
