"""
Scattered sample sites, fixed-radius neighborhoods and the compactly supported
weight kernel W_eps(r) = (1 - r/eps)^p for r < eps.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import List, Literal

import numpy as np

from gmls_nets.utils.constants import DEFAULT_KERNEL_POWER, GRID_CELL_MARGIN
from gmls_nets.utils.data_converter import DataConverter
from gmls_nets.utils.errors_utils import EmptyNeighborhoodError, GeometryError
from gmls_nets.utils.file_utils import FileUtils

logger = logging.getLogger(__name__)

AXIS_NAMES = ("x", "y")


@dataclass(frozen=True, eq=False)
class PointCloud:
    """
    An ordered set of sample sites in 1 or 2 dimensions.

    Parameters
    ----------
    points : np.ndarray
        Coordinates, shape (N, dim). A 1D array is read as N points in 1D.
    periodic_box : np.ndarray | None
        Per-axis period lengths. When set, distances use the minimum-image
        convention and every coordinate must lie in [0, period).

    Methods
    -------
    displacements(source, target_index, source_indices)
        Vectors from a target site of this cloud to source sites.
    fingerprint()
        Content hash used to cache geometry.
    to_csv(path) / from_csv(path)
        CSV exchange with one row per point and an `x[,y]` header.
    """

    points: np.ndarray
    periodic_box: np.ndarray | None = None
    _fingerprint: List[str] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[1] not in (1, 2):
            raise GeometryError(f"Point cloud must have shape (N, 1) or (N, 2), got {points.shape}")
        if not np.all(np.isfinite(points)):
            raise GeometryError("Point cloud contains non-finite coordinates")
        box = self.periodic_box
        if box is not None:
            box = np.broadcast_to(np.asarray(box, dtype=float), (points.shape[1],)).copy()
            if np.any(box <= 0):
                raise GeometryError("Periodic box lengths must be positive")
            if np.any(points < 0) or np.any(points >= box):
                raise GeometryError("Periodic point cloud has coordinates outside [0, period)")
            box.setflags(write=False)
        points = points.copy()
        points.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "periodic_box", box)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.size

    def fingerprint(self) -> str:
        if not self._fingerprint:
            box = self.periodic_box if self.periodic_box is not None else np.zeros(0)
            self._fingerprint.append(DataConverter.array_fingerprint(self.points, box))
        return self._fingerprint[0]

    def wrap(self, delta: np.ndarray) -> np.ndarray:
        """Applies the minimum-image convention to difference vectors."""
        if self.periodic_box is None:
            return delta
        return delta - self.periodic_box * np.round(delta / self.periodic_box)

    def displacements(self, source: "PointCloud", target_index: int, source_indices: np.ndarray) -> np.ndarray:
        """
        Vectors x_j - x_i from target site i of this cloud to the given source sites.

        Returns
        -------
        np.ndarray
            Shape (len(source_indices), dim).
        """
        delta = source.points[source_indices] - self.points[target_index]
        return self.wrap(delta)

    def translated(self, shift: np.ndarray) -> "PointCloud":
        if self.periodic_box is not None:
            raise GeometryError("Rigid translation is only defined for non-periodic clouds")
        return PointCloud(self.points + np.asarray(shift, dtype=float))

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "periodic_box": None if self.periodic_box is None else self.periodic_box.tolist(),
        }

    @staticmethod
    def from_dict(data: dict) -> "PointCloud":
        return PointCloud(np.asarray(data["points"], dtype=float), data.get("periodic_box"))

    def to_csv(self, path: str) -> str:
        return FileUtils.write_csv(path, AXIS_NAMES[: self.dim], self.points)

    @staticmethod
    def from_csv(path: str, periodic_box: np.ndarray | None = None) -> "PointCloud":
        header, rows = FileUtils.read_csv(path)
        if header != list(AXIS_NAMES[: len(header)]) or len(header) not in (1, 2):
            raise GeometryError(f"Point cloud CSV {path} must have header 'x' or 'x,y', got {header}")
        return PointCloud(rows, periodic_box)


@dataclass(frozen=True)
class WeightKernel:
    """
    Compactly supported radial weight W(r) = (1 - r/epsilon)^power for r < epsilon.

    Parameters
    ----------
    epsilon : float
        Support radius, in coordinate units.
    power : int
        Kernel exponent p; the default 4 makes the cutoff C^3 smooth.
    """

    epsilon: float
    power: int = DEFAULT_KERNEL_POWER

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise GeometryError(f"Kernel epsilon must be positive, got {self.epsilon}")
        if self.power < 0 or int(self.power) != self.power:
            raise GeometryError(f"Kernel power must be a nonnegative integer, got {self.power}")

    def derivative(self, r: np.ndarray | float) -> np.ndarray:
        """
        dW/dr inside the support, zero outside. At r = 0 the one-sided slopes
        disagree in direction; the symmetric subgradient 0 is returned there.
        """
        r = np.asarray(r, dtype=float)
        inside = (r < self.epsilon) & (r > 0)
        if self.power == 0:
            return np.zeros_like(r)
        base = np.where(inside, 1.0 - r / self.epsilon, 0.0)
        return np.where(inside, -self.power / self.epsilon * base ** (self.power - 1), 0.0)


def weight(r: np.ndarray | float, kernel: WeightKernel) -> np.ndarray:
    """
    Evaluates the kernel at nonnegative radii.

    Parameters
    ----------
    r : np.ndarray | float
        Distances, r >= 0.
    kernel : WeightKernel
        Support radius and exponent.

    Returns
    -------
    np.ndarray
        (1 - r/epsilon)^power where r < epsilon, else 0.
    """
    r = np.asarray(r, dtype=float)
    base = np.where(r < kernel.epsilon, 1.0 - r / kernel.epsilon, 0.0)
    return np.where(r < kernel.epsilon, base ** kernel.power, 0.0)


@dataclass(frozen=True)
class NeighborList:
    """
    Source neighbors of every target point, sorted by source index.

    Parameters
    ----------
    indices : List[np.ndarray]
        For each target, the source indices j with r_ij < epsilon.
    distances : List[np.ndarray]
        Matching (periodic) Euclidean distances r_ij.
    epsilon : float
        Radius of the query that built the list.
    """

    indices: List[np.ndarray]
    distances: List[np.ndarray]
    epsilon: float

    @property
    def target_count(self) -> int:
        return len(self.indices)

    def counts(self) -> np.ndarray:
        return np.array([len(idx) for idx in self.indices], dtype=np.int64)

    def equals(self, other: "NeighborList") -> bool:
        if self.target_count != other.target_count:
            return False
        return all(
            np.array_equal(a, b) and np.array_equal(da, db)
            for a, b, da, db in zip(self.indices, other.indices, self.distances, other.distances)
        )


def _pair_distances(source: PointCloud, target_points: np.ndarray, source_indices: np.ndarray | slice) -> np.ndarray:
    # Shared by both search paths so distances are bitwise identical.
    delta = source.points[source_indices][None, :, :] - target_points[:, None, :]
    delta = source.wrap(delta)
    return np.sqrt(np.sum(delta * delta, axis=-1))


def _check_compatible(source: PointCloud, target: PointCloud, epsilon: float) -> None:
    if source.dim != target.dim:
        raise GeometryError(f"Source cloud is {source.dim}D but target cloud is {target.dim}D")
    source_box, target_box = source.periodic_box, target.periodic_box
    if (source_box is None) != (target_box is None) or (
        source_box is not None and not np.array_equal(source_box, target_box)
    ):
        raise GeometryError("Source and target clouds must share the same periodic box")
    if not epsilon > 0:
        raise GeometryError(f"Neighbor radius must be positive, got {epsilon}")


def _brute_force(source: PointCloud, target: PointCloud, epsilon: float, chunk: int = 256):
    indices, distances = [], []
    for start in range(0, target.size, chunk):
        r = _pair_distances(source, target.points[start : start + chunk], slice(None))
        for row in r:
            (idx,) = np.nonzero(row < epsilon)
            indices.append(idx.astype(np.int64))
            distances.append(row[idx])
    return indices, distances


def _grid_search(source: PointCloud, target: PointCloud, epsilon: float):
    dim = source.dim
    if source.periodic_box is not None:
        origin = np.zeros(dim)
        span = source.periodic_box
    else:
        everything = np.vstack([source.points, target.points])
        origin = everything.min(axis=0)
        span = np.maximum(everything.max(axis=0) - origin, epsilon)
    n_cells = np.maximum(1, np.floor(span / (epsilon * (1.0 + GRID_CELL_MARGIN)))).astype(np.int64)
    cell_size = span / n_cells

    def cell_of(points: np.ndarray) -> np.ndarray:
        cells = np.floor((points - origin) / cell_size).astype(np.int64)
        return np.clip(cells, 0, n_cells - 1)

    buckets: dict = {}
    for j, cell in enumerate(map(tuple, cell_of(source.points))):
        buckets.setdefault(cell, []).append(j)

    offsets = list(itertools.product((-1, 0, 1), repeat=dim))
    indices, distances = [], []
    for i, cell in enumerate(cell_of(target.points)):
        visited = set()
        candidates = []
        for offset in offsets:
            neighbor = np.asarray(cell) + offset
            if source.periodic_box is not None:
                neighbor = np.mod(neighbor, n_cells)
            elif np.any(neighbor < 0) or np.any(neighbor >= n_cells):
                continue
            key = tuple(int(c) for c in neighbor)
            if key in visited:
                continue
            visited.add(key)
            candidates.extend(buckets.get(key, ()))
        candidates = np.array(sorted(candidates), dtype=np.int64)
        if candidates.size == 0:
            indices.append(candidates)
            distances.append(np.zeros(0))
            continue
        r = _pair_distances(source, target.points[i : i + 1], candidates)[0]
        keep = r < epsilon
        indices.append(candidates[keep])
        distances.append(r[keep])
    return indices, distances


def build_neighbors(
    source: PointCloud,
    target: PointCloud,
    epsilon: float,
    method: Literal["grid", "brute"] = "grid",
    allow_empty: bool = False,
) -> NeighborList:
    """
    Finds, for every target point, the source points at distance < epsilon.

    Parameters
    ----------
    source, target : PointCloud
        Clouds sharing dimension and periodicity.
    epsilon : float
        Support radius.
    method : Literal["grid", "brute"]
        Uniform-grid bucketing or the O(N^2) reference scan; both return identical lists.
    allow_empty : bool
        Return empty neighborhoods instead of raising.

    Returns
    -------
    NeighborList
        Source indices sorted ascending with their distances.

    Raises
    ------
    GeometryError
        Mismatched dimension or periodicity, or epsilon <= 0.
    EmptyNeighborhoodError
        A target has no neighbor (unless `allow_empty`).
    """
    _check_compatible(source, target, epsilon)
    if method == "grid":
        indices, distances = _grid_search(source, target, epsilon)
    elif method == "brute":
        indices, distances = _brute_force(source, target, epsilon)
    else:
        raise GeometryError(f"Unknown neighbor search method '{method}'")
    if not allow_empty:
        for i, idx in enumerate(indices):
            if idx.size == 0:
                raise EmptyNeighborhoodError(i, epsilon)
    counts = np.array([len(idx) for idx in indices])
    if counts.size:
        logger.debug(
            "Neighbor search (%s): %d targets, neighbors min/mean/max = %d/%.1f/%d",
            method, len(indices), counts.min(), counts.mean(), counts.max(),
        )
    return NeighborList(indices=indices, distances=distances, epsilon=float(epsilon))


def uniform_cloud(n_per_axis: int, dim: int, length: float = 1.0, periodic: bool = True) -> PointCloud:
    """
    Tensor grid with spacing length/n_per_axis; periodic grids omit the far end.
    """
    if periodic:
        axis = np.arange(n_per_axis) * (length / n_per_axis)
    else:
        axis = np.linspace(0.0, length, n_per_axis)
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    return PointCloud(points, np.full(dim, length) if periodic else None)


def jittered_cloud(n_per_axis: int, dim: int, length: float, seed: int, amplitude: float = 0.3) -> PointCloud:
    """
    Periodic tensor grid with every site displaced uniformly by up to
    `amplitude` grid spacings per axis.
    """
    base = uniform_cloud(n_per_axis, dim, length, periodic=True)
    rng = np.random.default_rng(seed)
    h = length / n_per_axis
    jitter = rng.uniform(-amplitude * h, amplitude * h, size=base.points.shape)
    return PointCloud(np.mod(base.points + jitter, length), base.periodic_box)


def random_cloud(n_points: int, dim: int, length: float, seed: int, periodic: bool = True) -> PointCloud:
    rng = np.random.default_rng(seed)
    points = rng.uniform(0.0, length, size=(n_points, dim))
    return PointCloud(points, np.full(dim, length) if periodic else None)


def subsample_cloud(cloud: PointCloud, n_points: int, seed: int) -> PointCloud:
    """
    Random subset of `n_points` sites kept in their original order; used as
    target cloud of strided layers and pooling stages.
    """
    if not 0 < n_points <= cloud.size:
        raise GeometryError(f"Cannot subsample {n_points} points from a cloud of {cloud.size}")
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(cloud.size, size=n_points, replace=False))
    return PointCloud(cloud.points[keep], cloud.periodic_box)
