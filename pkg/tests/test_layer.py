import numpy as np
import pytest

from gmls_nets.geometry.basis import MonomialBasis, apply_operator_to_basis
from gmls_nets.geometry.point_cloud import PointCloud, WeightKernel, random_cloud, subsample_cloud, uniform_cloud
from gmls_nets.gmls.estimator import GMLSGeometry
from gmls_nets.nets.layer import (
    Activation,
    AffineHead,
    FunctionalMap,
    GlobalMeanReadout,
    GMLSLayer,
    GMLSNetwork,
    PoolingLayer,
    activate,
    activate_derivative,
    layer_forward,
    network_forward,
    pool_forward,
)
from gmls_nets.utils.errors_utils import GeometryError


def _pooled_network(rng) -> GMLSNetwork:
    cloud = uniform_cloud(64, 1)
    first_basis = MonomialBasis(1, 2, 0.05)
    first = GMLSLayer(
        cloud, cloud, WeightKernel(0.05), first_basis, FunctionalMap.mlp(first_basis.size, 4, [16], rng, "tanh")
    )
    pooled = subsample_cloud(cloud, 32, seed=7)
    second_basis = MonomialBasis(1, 1, 0.2)
    second = GMLSLayer(
        pooled, pooled, WeightKernel(0.2), second_basis, FunctionalMap.linear(4 * second_basis.size, 3, rng)
    )
    return GMLSNetwork(
        [
            first,
            Activation("relu"),
            PoolingLayer("mean", cloud, pooled, 0.04, channels=4),
            second,
            GlobalMeanReadout(pooled, 3),
            AffineHead.create(3, 1, rng),
        ]
    )


def test_linear_layer_applies_functional_to_coefficients(periodic_line, rng):
    epsilon = 0.035
    basis = MonomialBasis(1, 4, epsilon)
    xi = np.stack([apply_operator_to_basis(basis, "identity"), apply_operator_to_basis(basis, "laplacian")])
    layer = GMLSLayer(periodic_line, periodic_line, WeightKernel(epsilon), basis, FunctionalMap("linear", 5, 2, [xi]))
    u = rng.normal(size=(periodic_line.size, 1))
    out = layer_forward(layer, u)
    assert out.shape == (periodic_line.size, 2)
    coefficients = GMLSGeometry.build(periodic_line, periodic_line, WeightKernel(epsilon), basis).coefficients(u)
    np.testing.assert_allclose(out, coefficients[:, 0, :] @ xi.T, rtol=1e-13, atol=1e-10)
    assert layer.forward(u[None]).shape == (1, periodic_line.size, 2)


def test_strided_layer_outputs_on_target_cloud(rng):
    source = random_cloud(200, 2, 1.0, seed=1)
    target = subsample_cloud(source, 40, seed=2)
    basis = MonomialBasis(2, 2, 0.2)
    layer = GMLSLayer(source, target, WeightKernel(0.2), basis, FunctionalMap.mlp(basis.size, 3, [8], rng))
    out = layer.forward(rng.normal(size=(5, 200, 1)))
    assert out.shape == (5, 40, 3)
    assert (layer.in_cloud, layer.out_cloud) == (source, target)


def test_per_channel_sampling_clouds(rng):
    target = uniform_cloud(50, 1)
    first = uniform_cloud(50, 1)
    second = random_cloud(120, 1, 1.0, seed=9)
    epsilon = 0.1
    kernel = WeightKernel(epsilon)
    basis = MonomialBasis(1, 2, epsilon)
    fmap = FunctionalMap.linear(2 * basis.size, 1, rng)
    layer = GMLSLayer(first, target, kernel, basis, fmap, channel_sources=[first, second])
    u_first = rng.normal(size=50)
    u_second = rng.normal(size=120)
    out = layer.forward([u_first, u_second])
    xi = fmap.weights[0][0]
    expected = (
        GMLSGeometry.build(first, target, kernel, basis).coefficients(u_first[:, None])[:, 0, :] @ xi[:3]
        + GMLSGeometry.build(second, target, kernel, basis).coefficients(u_second[:, None])[:, 0, :] @ xi[3:]
    )
    np.testing.assert_allclose(out[:, 0], expected, rtol=1e-12, atol=1e-12)
    with pytest.raises(GeometryError):
        GMLSLayer(first, target, kernel, basis, fmap, channel_sources=[first])


def test_layer_rejects_bad_fields(periodic_line):
    basis = MonomialBasis(1, 2, 0.05)
    layer = GMLSLayer(periodic_line, periodic_line, WeightKernel(0.05), basis, FunctionalMap.linear(3, 1))
    with pytest.raises(GeometryError):
        layer.forward(np.zeros((99, 1)))
    with pytest.raises(GeometryError):
        layer.forward(np.zeros((100, 2)))
    broken = np.zeros((100, 1))
    broken[3] = np.nan
    with pytest.raises(GeometryError):
        layer.forward(broken)
    with pytest.raises(GeometryError):
        GMLSLayer(periodic_line, periodic_line, WeightKernel(0.05), basis, FunctionalMap.linear(4, 1))


def test_functional_map_validation(rng):
    with pytest.raises(GeometryError):
        FunctionalMap("linear", 3, 1, [np.zeros((1, 3)), np.zeros((1, 1))])
    with pytest.raises(GeometryError):
        FunctionalMap("mlp", 3, 1, [np.zeros((4, 3)), np.zeros((1, 5))], [np.zeros(4), np.zeros(1)])
    mlp = FunctionalMap.mlp(6, 2, [8, 8], rng)
    assert sorted(mlp.parameters()) == ["W0", "W1", "W2", "b0", "b1", "b2"]
    out, cache = mlp.forward(rng.normal(size=(7, 6)))
    assert out.shape == (7, 2)
    assert len(cache) == 3
    assert np.all(FunctionalMap.linear(6, 2).weights[0] == 0)


def test_max_and_mean_pooling():
    source = PointCloud(np.array([0.0, 0.1, 0.2, 0.3]))
    target = PointCloud(np.array([0.05, 0.25]))
    values = np.array([[1.0], [3.0], [2.0], [5.0]])
    np.testing.assert_allclose(pool_forward(PoolingLayer("max", source, target, 0.08), values), [[3.0], [5.0]])
    np.testing.assert_allclose(pool_forward(PoolingLayer("mean", source, target, 0.08), values), [[2.0], [3.5]])
    batch = np.stack([values, -values])
    assert PoolingLayer("max", source, target, 0.08).forward(batch).shape == (2, 2, 1)
    np.testing.assert_allclose(PoolingLayer("max", source, target, 0.08).forward(batch)[1], [[-1.0], [-2.0]])
    with pytest.raises(GeometryError):
        PoolingLayer("median", source, target, 0.08)


def test_network_stage_compatibility(rng):
    cloud = uniform_cloud(40, 1)
    other = uniform_cloud(30, 1)
    basis = MonomialBasis(1, 1, 0.1)
    kernel = WeightKernel(0.1)

    def layer(source, in_channels, out_channels):
        return GMLSLayer(source, source, kernel, basis, FunctionalMap.linear(in_channels * 2, out_channels, rng))

    with pytest.raises(GeometryError):
        GMLSNetwork([layer(cloud, 1, 1), layer(other, 1, 1)])
    with pytest.raises(GeometryError):
        GMLSNetwork([layer(cloud, 1, 2), layer(cloud, 1, 1)])
    with pytest.raises(GeometryError):
        GMLSNetwork([layer(cloud, 1, 2), AffineHead.create(2, 1, rng)])
    with pytest.raises(GeometryError):
        GMLSNetwork([layer(cloud, 1, 2), GlobalMeanReadout(cloud, 2), layer(cloud, 2, 1)])
    with pytest.raises(GeometryError):
        GMLSNetwork([])
    net = GMLSNetwork([layer(cloud, 1, 2), Activation("relu"), layer(cloud, 2, 1)])
    assert net.input_cloud is cloud
    assert sorted(net.parameters()) == ["s0.xi", "s2.xi"]


def test_pooled_network_forward_and_checkpoint(tmp_path, rng):
    net = _pooled_network(rng)
    fields = rng.normal(size=(6, 64, 1))
    out = network_forward(net, fields)
    assert out.shape == (6, 1)
    assert net.forward(fields[0]).shape == (1,)
    assert sorted(net.parameters()) == ["s0.W0", "s0.W1", "s0.b0", "s0.b1", "s3.xi", "s5.W", "s5.b"]

    path = net.save(str(tmp_path / "checkpoint.json"), {"seed": 3})
    restored = GMLSNetwork.load(path)
    np.testing.assert_allclose(restored.forward(fields), out, rtol=1e-14, atol=1e-14)
    assert [type(s).__name__ for s in restored.stages] == [type(s).__name__ for s in net.stages]


def test_scale_output_folds_into_last_trainable_stage(periodic_line, rng):
    basis = MonomialBasis(1, 2, 0.05)
    layer = GMLSLayer(periodic_line, periodic_line, WeightKernel(0.05), basis, FunctionalMap.linear(3, 1, rng))
    net = GMLSNetwork([layer, Activation("relu")])
    u = rng.normal(size=(periodic_line.size, 1))
    before = net.forward(u)
    generation = net.generation
    net.scale_output(2.5)
    np.testing.assert_allclose(net.forward(u), 2.5 * before, rtol=1e-12, atol=1e-12 * np.abs(before).max())
    assert net.generation == generation + 1

    squashed = GMLSNetwork([layer, Activation("tanh")])
    with pytest.raises(GeometryError):
        squashed.scale_output(2.0)
    with pytest.raises(ValueError):
        net.scale_output(0.0)


def test_activations():
    x = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_array_equal(activate("relu", x), [0.0, 0.0, 2.0])
    np.testing.assert_array_equal(activate_derivative("relu", x), [0.0, 0.0, 1.0])
    np.testing.assert_allclose(activate_derivative("tanh", x), 1 - np.tanh(x) ** 2)
    with pytest.raises(ValueError):
        Activation("softplus")
