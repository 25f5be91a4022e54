import numpy as np

from gmls_nets.geometry.basis import MonomialBasis
from gmls_nets.geometry.point_cloud import WeightKernel, uniform_cloud
from gmls_nets.gmls.estimator import reference_weights
from gmls_nets.nets.layer import FunctionalMap, GMLSLayer

if __name__ == "__main__":
    # 100 periodic nodes on [0, 1]
    cloud = uniform_cloud(100, dim=1, length=1.0, periodic=True)
    h = 1.0 / cloud.size
    kernel = WeightKernel(epsilon=2.5 * h)
    basis = MonomialBasis(dim=1, order=2, scale=kernel.epsilon)

    # Linear layer whose weights apply d2/dx2 to the local quadratic fit
    fmap = FunctionalMap.linear(basis.size, 1)
    fmap.weights[0][...] = reference_weights(basis, "laplacian")
    layer = GMLSLayer(cloud, cloud, kernel, basis, fmap)

    stencil = layer.stencil()
    row = stencil.matrix.getrow(50).toarray().ravel() * h**2
    print("Row 50 of the stencil times h^2:", np.round(row[row != 0], 6))
    print("Row sums (should vanish):", np.abs(stencil.row_sums()).max())

    u = np.sin(2 * np.pi * cloud.points[:, 0])
    estimate = layer.forward(u[:, None])[:, 0]
    exact = -4 * np.pi**2 * u
    print("Max relative error:", np.abs(estimate - exact).max() / np.abs(exact).max())
