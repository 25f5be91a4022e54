import numpy as np
import pytest

from gmls_nets.geometry.basis import MonomialBasis
from gmls_nets.geometry.point_cloud import NeighborList, PointCloud, WeightKernel, random_cloud, uniform_cloud
from gmls_nets.gmls.estimator import GMLSGeometry
from gmls_nets.utils.tasks import TaskPool


@pytest.fixture(autouse=True)
def fresh_geometry_state():
    GMLSGeometry.clear_cache()
    TaskPool.set_max_workers(1)
    yield
    GMLSGeometry.clear_cache()
    TaskPool.set_max_workers(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def periodic_line():
    return uniform_cloud(100, 1)


@pytest.fixture
def scattered_plane():
    return random_cloud(300, 2, 1.0, seed=11, periodic=True)


def frozen_local_coefficients(
    source_points: np.ndarray,
    target_points: np.ndarray,
    neighbors: NeighborList,
    kernel: WeightKernel,
    basis: MonomialBasis,
    values: np.ndarray,
) -> np.ndarray:
    """
    Recomputes the weighted fits of a non-periodic layer from scratch with the
    neighbor lists held fixed, so positions can be perturbed by finite differences.

    Returns coefficients of shape (N_tgt, C, Q) for `values` of shape (N_src, C).
    """
    out = np.zeros((target_points.shape[0], values.shape[1], basis.size))
    for i, idx in enumerate(neighbors.indices):
        displacements = source_points[idx] - target_points[i]
        r = np.linalg.norm(displacements, axis=1)
        w = np.clip(1.0 - r / kernel.epsilon, 0.0, None) ** kernel.power
        sqrt_w = np.sqrt(w)[:, None]
        design = basis.evaluate(displacements)
        solution, *_ = np.linalg.lstsq(sqrt_w * design, sqrt_w * values[idx], rcond=None)
        out[i] = solution.T
    return out


def line_clouds(seed: int = 5):
    """Non-periodic 1D source cloud on [0, 1] and a separate interior target cloud."""
    generator = np.random.default_rng(seed)
    source = PointCloud(np.sort(generator.uniform(0.0, 1.0, 40)))
    target = PointCloud(np.sort(generator.uniform(0.2, 0.8, 10)))
    return source, target
