import numpy as np
import pytest

from gmls_nets.geometry.point_cloud import (
    PointCloud,
    WeightKernel,
    build_neighbors,
    jittered_cloud,
    random_cloud,
    subsample_cloud,
    uniform_cloud,
    weight,
)
from gmls_nets.utils.errors_utils import EmptyNeighborhoodError, GeometryError


@pytest.mark.parametrize("periodic", [True, False])
@pytest.mark.parametrize("dim,epsilon", [(1, 0.03), (2, 0.11)])
def test_grid_search_matches_brute_force(dim, epsilon, periodic):
    source = random_cloud(250, dim, 1.0, seed=3, periodic=periodic)
    target = random_cloud(80, dim, 1.0, seed=4, periodic=periodic)
    grid = build_neighbors(source, target, epsilon, method="grid", allow_empty=True)
    brute = build_neighbors(source, target, epsilon, method="brute", allow_empty=True)
    assert grid.equals(brute)


def test_neighbors_are_sorted_and_strictly_inside():
    cloud = random_cloud(200, 2, 1.0, seed=8)
    neighbors = build_neighbors(cloud, cloud, 0.15)
    for i, (idx, dist) in enumerate(zip(neighbors.indices, neighbors.distances)):
        assert np.all(np.diff(idx) > 0)
        assert np.all(dist < 0.15)
        assert i in idx


def test_periodic_neighbors_use_minimum_image():
    cloud = uniform_cloud(10, 1)
    neighbors = build_neighbors(cloud, cloud, 0.15)
    np.testing.assert_array_equal(neighbors.indices[0], [0, 1, 9])
    np.testing.assert_allclose(neighbors.distances[0], [0.0, 0.1, 0.1], atol=1e-15)


def test_empty_neighborhood_raises_with_target_index():
    source = PointCloud(np.array([0.0, 0.05]))
    target = PointCloud(np.array([0.02, 0.9]))
    with pytest.raises(EmptyNeighborhoodError) as info:
        build_neighbors(source, target, 0.1)
    assert info.value.target_index == 1
    relaxed = build_neighbors(source, target, 0.1, allow_empty=True)
    assert relaxed.counts().tolist() == [2, 0]


def test_incompatible_clouds_are_rejected():
    line = uniform_cloud(10, 1)
    plane = uniform_cloud(4, 2)
    with pytest.raises(GeometryError):
        build_neighbors(line, plane, 0.2)
    with pytest.raises(GeometryError):
        build_neighbors(line, PointCloud(line.points), 0.2)
    with pytest.raises(GeometryError):
        build_neighbors(line, line, 0.0)


def test_point_cloud_validation():
    with pytest.raises(GeometryError):
        PointCloud(np.zeros((3, 3)))
    with pytest.raises(GeometryError):
        PointCloud(np.array([0.5, 1.0]), periodic_box=1.0)
    with pytest.raises(GeometryError):
        PointCloud(np.array([0.5, np.nan]))
    with pytest.raises(GeometryError):
        uniform_cloud(5, 1).translated([0.1])


def test_fingerprint_tracks_content():
    a = uniform_cloud(20, 1)
    b = uniform_cloud(20, 1)
    c = uniform_cloud(20, 1, periodic=False)
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != c.fingerprint()


def test_csv_exchange_keeps_coordinates(tmp_path):
    cloud = random_cloud(30, 2, 1.0, seed=2)
    path = cloud.to_csv(str(tmp_path / "cloud.csv"))
    loaded = PointCloud.from_csv(path, cloud.periodic_box)
    np.testing.assert_array_equal(loaded.points, cloud.points)
    assert loaded.fingerprint() == cloud.fingerprint()


def test_kernel_values():
    kernel = WeightKernel(0.5)
    np.testing.assert_allclose(weight(np.array([0.0, 0.25, 0.5, 0.7]), kernel), [1.0, 0.5**4, 0.0, 0.0])
    assert WeightKernel(0.5, 0).power == 0
    with pytest.raises(GeometryError):
        WeightKernel(0.0)
    with pytest.raises(GeometryError):
        WeightKernel(1.0, 2.5)


def test_kernel_derivative_matches_finite_differences():
    kernel = WeightKernel(0.4, 4)
    r = np.array([0.03, 0.12, 0.25, 0.39])
    h = 1e-7
    fd = (weight(r + h, kernel) - weight(r - h, kernel)) / (2 * h)
    np.testing.assert_allclose(kernel.derivative(r), fd, rtol=1e-6)
    np.testing.assert_array_equal(kernel.derivative(np.array([0.0, 0.4, 0.5])), [0.0, 0.0, 0.0])


def test_cloud_makers():
    jittered = jittered_cloud(16, 2, 1.0, seed=0)
    assert jittered.size == 256
    assert np.all((jittered.points >= 0) & (jittered.points < 1))
    assert not np.array_equal(jittered.points, uniform_cloud(16, 2).points)

    grid = uniform_cloud(5, 1, length=2.0, periodic=False)
    np.testing.assert_allclose(grid.points[:, 0], [0.0, 0.5, 1.0, 1.5, 2.0])

    cloud = random_cloud(50, 1, 1.0, seed=1)
    subset = subsample_cloud(cloud, 20, seed=2)
    assert subset.size == 20
    assert set(map(float, subset.points[:, 0])) <= set(map(float, cloud.points[:, 0]))
    with pytest.raises(GeometryError):
        subsample_cloud(cloud, 51, seed=2)
